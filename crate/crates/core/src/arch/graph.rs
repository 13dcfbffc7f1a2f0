//! Model containers, layer bookkeeping and analytic complexity counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, ParamStore, Tape, Var};
use crate::tensor::Shape4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
    },
    BatchNorm {
        channels: usize,
    },
    MaxPool {
        kernel: usize,
    },
}

/// One parameterized (or pooling) layer with the spatial scale it runs at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    /// Output resolution divisor relative to the network input.
    pub scale: usize,
}

impl LayerRecord {
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
            } => kernel * kernel * in_channels * out_channels + out_channels,
            LayerKind::ConvTranspose {
                in_channels,
                out_channels,
            } => 4 * in_channels * out_channels + out_channels,
            LayerKind::BatchNorm { channels } => 2 * channels,
            LayerKind::MaxPool { .. } => 0,
        }
    }

    /// Multiply-accumulates for one `h x w` input image.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = (h / self.scale, w / self.scale);
        match self.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
            } => (oh * ow * kernel * kernel * in_channels * out_channels) as u64,
            LayerKind::ConvTranspose {
                in_channels,
                out_channels,
            } => ((oh / 2) * (ow / 2) * 4 * in_channels * out_channels) as u64,
            LayerKind::BatchNorm { .. } | LayerKind::MaxPool { .. } => 0,
        }
    }
}

/// Convolution, batch normalization and rectifier.
#[derive(Clone, Copy, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBlock {
    pub fn forward(&self, params: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.conv(params, self.conv, x)?;
        let y = tape.batch_norm(params, self.bn, y)?;
        Ok(tape.relu(y))
    }
}

/// Applies a sequence of blocks.
pub fn run_blocks(
    blocks: &[ConvBlock],
    params: &ParamStore,
    tape: &mut Tape,
    mut x: Var,
) -> Result<Var> {
    for b in blocks {
        x = b.forward(params, tape, x)?;
    }
    Ok(x)
}

/// Allocates parameters in a deterministic order from a seeded generator.
pub struct GraphBuilder {
    params: ParamStore,
    layers: Vec<LayerRecord>,
    rng: ChaCha8Rng,
}

impl GraphBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            params: ParamStore::new(),
            layers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        scale: usize,
    ) -> Conv2d {
        self.layers.push(LayerRecord {
            name: name.to_string(),
            kind: LayerKind::Conv {
                in_channels: cin,
                out_channels: cout,
                kernel,
            },
            scale,
        });
        Conv2d::new(&mut self.params, name, cin, cout, kernel, &mut self.rng)
    }

    /// `scale` is the output scale; the input is twice as coarse.
    pub fn conv_t(&mut self, name: &str, cin: usize, cout: usize, scale: usize) -> ConvTranspose2d {
        self.layers.push(LayerRecord {
            name: name.to_string(),
            kind: LayerKind::ConvTranspose {
                in_channels: cin,
                out_channels: cout,
            },
            scale,
        });
        ConvTranspose2d::new(&mut self.params, name, cin, cout, &mut self.rng)
    }

    pub fn batch_norm(&mut self, name: &str, channels: usize, scale: usize) -> BatchNorm2d {
        self.layers.push(LayerRecord {
            name: name.to_string(),
            kind: LayerKind::BatchNorm { channels },
            scale,
        });
        BatchNorm2d::new(&mut self.params, name, channels)
    }

    pub fn conv_block(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        scale: usize,
    ) -> ConvBlock {
        let conv = self.conv(&format!("{name}.conv"), cin, cout, kernel, scale);
        let bn = self.batch_norm(&format!("{name}.bn"), cout, scale);
        ConvBlock { conv, bn }
    }

    /// Records a `k x k` pooling whose output lands at `scale`.
    pub fn pool(&mut self, name: &str, kernel: usize, scale: usize) {
        self.layers.push(LayerRecord {
            name: name.to_string(),
            kind: LayerKind::MaxPool { kernel },
            scale,
        });
    }

    pub fn finish<N: Network>(self, net: N) -> ModelGraph<N> {
        ModelGraph {
            params: self.params,
            layers: self.layers,
            net,
        }
    }
}

/// Structure of a built network.
pub trait Network {
    /// Input height and width must be multiples of this.
    fn divisor(&self) -> usize;

    fn in_channels(&self) -> usize;
}

/// A built network: its parameters, an inventory of its layers, and its wiring.
#[derive(Clone, Debug)]
pub struct ModelGraph<N> {
    pub params: ParamStore,
    pub layers: Vec<LayerRecord>,
    pub net: N,
}

impl<N: Network> ModelGraph<N> {
    pub fn check_input(&self, shape: Shape4) -> Result<()> {
        check_divisible(shape, self.net.divisor())?;
        if shape.c != self.net.in_channels() {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {shape}",
                self.net.in_channels()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_divisible(shape: Shape4, divisor: usize) -> Result<()> {
    if shape.h == 0
        || shape.w == 0
        || !shape.h.is_multiple_of(divisor)
        || !shape.w.is_multiple_of(divisor)
    {
        return Err(Error::shape(format!(
            "input {}x{} is not divisible by {divisor}; height and width must be multiples of {divisor}",
            shape.h, shape.w
        )));
    }
    Ok(())
}

/// Trainable scalars: convolution weights and biases plus normalization affine parameters.
pub fn count_params<N>(model: &ModelGraph<N>) -> usize {
    model.params.trainable_count()
}

/// Multiply-accumulates of all convolutional and transposed-convolutional layers for the
/// whole batch in `input`. Pooling, normalization and activations are not counted.
pub fn count_flops<N: Network>(model: &ModelGraph<N>, input: Shape4) -> Result<u64> {
    if model.layers.is_empty() {
        return Ok(0);
    }
    check_divisible(input, model.net.divisor())?;
    Ok(model
        .layers
        .iter()
        .map(|l| l.macs(input.h, input.w))
        .sum::<u64>()
        * input.n as u64)
}

/// A graph with no layers; useful as a neutral element in tests and reports.
#[derive(Clone, Copy, Debug, Default)]
pub struct Empty;

impl Network for Empty {
    fn divisor(&self) -> usize {
        1
    }

    fn in_channels(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Single(#[allow(dead_code)] ConvBlock);

    impl Network for Single {
        fn divisor(&self) -> usize {
            1
        }
        fn in_channels(&self) -> usize {
            1
        }
    }

    #[test]
    fn single_block_counts() {
        let mut b = GraphBuilder::new(0);
        let blk = b.conv_block("c", 1, 8, 3, 1);
        let g = b.finish(Single(blk));
        assert_eq!(count_params(&g), 9 * 8 + 8 + 2 * 8);
        assert_eq!(
            count_flops(&g, Shape4::new(1, 1, 4, 4)).unwrap(),
            4 * 4 * 9 * 8
        );
        let records: usize = g.layers.iter().map(LayerRecord::param_count).sum();
        assert_eq!(records, count_params(&g));
    }

    #[test]
    fn empty_graph_counts_zero() {
        let g = GraphBuilder::new(0).finish(Empty);
        assert_eq!(count_params(&g), 0);
        assert_eq!(count_flops(&g, Shape4::new(1, 1, 7, 7)).unwrap(), 0);
    }
}
