//! Multi-out U-nets: nested encoder/decoders that refine one encoder stage and expose
//! their intermediate decoder outputs at every internal scale.

use super::config::MouConfig;
use super::graph::{run_blocks, ConvBlock, GraphBuilder, ModelGraph, Network};
use crate::error::Result;
use crate::nn::{ConvTranspose2d, ParamStore, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Mou {
    pub config: MouConfig,
    encoder: Vec<ConvBlock>,
    bottom: ConvBlock,
    up: Vec<ConvTranspose2d>,
    decoder: Vec<Vec<ConvBlock>>,
}

/// Outputs of one nested U-net pass.
pub struct MouOutput {
    /// Refined features at the input scale.
    pub final_out: Var,
    /// `intermediates[k - 1]` is the decoder output at internal scale `k` (resolution / 2^k).
    pub intermediates: Vec<Var>,
}

impl Mou {
    /// Adds the module's layers to `b`; `base_scale` is the absolute scale of its input.
    pub fn build(
        b: &mut GraphBuilder,
        cfg: MouConfig,
        base_scale: usize,
        name: &str,
    ) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let n = cfg.downsamplings();
        let mut encoder = Vec::with_capacity(n);
        for k in 0..n {
            encoder.push(b.conv_block(&format!("{name}.enc{k}"), c, c, 3, base_scale << k));
            b.pool(&format!("{name}.pool{k}"), 2, base_scale << (k + 1));
        }
        let bottom = b.conv_block(&format!("{name}.bottom"), c, c, 3, base_scale << n);
        let mut up = Vec::with_capacity(n);
        let mut decoder = Vec::with_capacity(n);
        for k in 0..n {
            let scale = base_scale << k;
            up.push(b.conv_t(&format!("{name}.up{k}"), c, c, scale));
            let mut stage = vec![b.conv_block(&format!("{name}.dec{k}.0"), 2 * c, c, 3, scale)];
            for j in 1..cfg.decoder_convs {
                stage.push(b.conv_block(&format!("{name}.dec{k}.{j}"), c, c, 3, scale));
            }
            decoder.push(stage);
        }
        Ok(Self {
            config: cfg,
            encoder,
            bottom,
            up,
            decoder,
        })
    }

    pub fn forward(&self, params: &ParamStore, tape: &mut Tape, x: Var) -> Result<MouOutput> {
        let n = self.encoder.len();
        let mut skips = Vec::with_capacity(n);
        let mut cur = x;
        for blk in &self.encoder {
            cur = blk.forward(params, tape, cur)?;
            skips.push(cur);
            cur = tape.max_pool(cur, 2)?;
        }
        cur = self.bottom.forward(params, tape, cur)?;
        let mut intermediates = vec![cur; n];
        for k in (0..n).rev() {
            let up = tape.conv_t(params, self.up[k], cur)?;
            let cat = tape.concat(&[skips[k], up])?;
            cur = run_blocks(&self.decoder[k], params, tape, cat)?;
            if k >= 1 {
                intermediates[k - 1] = cur;
            }
        }
        Ok(MouOutput {
            final_out: cur,
            intermediates,
        })
    }
}

impl Network for Mou {
    fn divisor(&self) -> usize {
        1 << self.config.downsamplings()
    }

    fn in_channels(&self) -> usize {
        self.config.channels
    }
}

/// Builds a standalone nested U-net (input at scale 1).
pub fn build_mou(cfg: MouConfig, seed: u64) -> Result<ModelGraph<Mou>> {
    let mut b = GraphBuilder::new(seed);
    let mou = Mou::build(&mut b, cfg, 1, "mou")?;
    Ok(b.finish(mou))
}

impl ModelGraph<Mou> {
    /// Returns the final output and the intermediate outputs, coarsest last.
    pub fn forward(&self, x: &Tensor, training: bool) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_input(x.shape())?;
        let mut tape = Tape::new(training);
        let input = tape.input(x.clone());
        let out = self.net.forward(&self.params, &mut tape, input)?;
        let inter = out
            .intermediates
            .iter()
            .map(|v| tape.value(*v).clone())
            .collect();
        Ok((tape.value(out.final_out).clone(), inter))
    }
}
