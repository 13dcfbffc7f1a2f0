use rand::Rng;

use super::params::{ParamId, ParamStore};

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

/// Stride-1, size-preserving convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.push_he(
            format!("{name}.weight"),
            vec![cout, cin, kernel, kernel],
            cin * kernel * kernel,
            rng,
        );
        let bias = store.push(format!("{name}.bias"), vec![cout], vec![0.0; cout], true);
        Self {
            weight,
            bias,
            in_channels: cin,
            out_channels: cout,
            kernel,
        }
    }

    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels
    }
}

/// 2x2 stride-2 transposed convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.push_he(format!("{name}.weight"), vec![cin, cout, 2, 2], cin, rng);
        let bias = store.push(format!("{name}.bias"), vec![cout], vec![0.0; cout], true);
        Self {
            weight,
            bias,
            in_channels: cin,
            out_channels: cout,
        }
    }

    pub fn param_count(&self) -> usize {
        4 * self.in_channels * self.out_channels + self.out_channels
    }
}

/// Per-channel batch normalization with affine parameters and running statistics.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let gamma = store.push(
            format!("{name}.gamma"),
            vec![channels],
            vec![1.0; channels],
            true,
        );
        let beta = store.push(
            format!("{name}.beta"),
            vec![channels],
            vec![0.0; channels],
            true,
        );
        let running_mean = store.push(
            format!("{name}.running_mean"),
            vec![channels],
            vec![0.0; channels],
            false,
        );
        let running_var = store.push(
            format!("{name}.running_var"),
            vec![channels],
            vec![1.0; channels],
            false,
        );
        Self {
            gamma,
            beta,
            running_mean,
            running_var,
            channels,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }
}
