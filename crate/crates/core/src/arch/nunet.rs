//! The backbone U-net and its nested/short-connected extension.

use super::config::{BackboneConfig, NuNetConfig, SkipFusion, MDSC_CHANNELS};
use super::graph::{check_divisible, run_blocks, ConvBlock, GraphBuilder, ModelGraph, Network};
use super::mou::Mou;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvTranspose2d, ParamStore, Tape, Var};
use crate::tensor::Tensor;

/// 1x1 projection of a nested U-net's intermediate output into a deeper decoder skip.
#[derive(Clone, Copy, Debug)]
struct Projection {
    from_level: usize,
    /// Internal scale of the source intermediate (1-based).
    internal_scale: usize,
    to_level: usize,
    conv: Conv2d,
}

#[derive(Clone, Copy, Debug)]
struct ShortConnection {
    source: usize,
    target: usize,
    block: ConvBlock,
}

#[derive(Clone, Debug)]
pub struct NuNet {
    pub config: NuNetConfig,
    /// `encoder[i - 1]` is stage `i`.
    encoder: Vec<Vec<ConvBlock>>,
    bottleneck: Vec<ConvBlock>,
    /// `up[i - 1]` upsamples into decoder level `i`.
    up: Vec<ConvTranspose2d>,
    decoder: Vec<Vec<ConvBlock>>,
    head: Conv2d,
    /// Nested U-nets indexed by stage (`None` where absent).
    mous: Vec<Option<Mou>>,
    projections: Vec<Projection>,
    shortcuts: Vec<ShortConnection>,
}

impl Network for NuNet {
    fn divisor(&self) -> usize {
        self.config.divisor()
    }

    fn in_channels(&self) -> usize {
        self.config.backbone.in_channels
    }
}

fn double_conv(
    b: &mut GraphBuilder,
    name: &str,
    cin: usize,
    cout: usize,
    scale: usize,
) -> Vec<ConvBlock> {
    vec![
        b.conv_block(&format!("{name}.0"), cin, cout, 3, scale),
        b.conv_block(&format!("{name}.1"), cout, cout, 3, scale),
    ]
}

/// Builds the network described by `cfg`.
pub fn build_nunet(cfg: &NuNetConfig) -> Result<ModelGraph<NuNet>> {
    cfg.validate()?;
    let levels = cfg.levels();
    let ch = cfg.backbone.channels;
    let scale = |level: usize| 1usize << (level - 1);
    let mut b = GraphBuilder::new(cfg.seed);

    let mut encoder = Vec::with_capacity(levels);
    for i in 1..=levels {
        if i > 1 {
            b.pool(&format!("enc{i}.pool"), 2, scale(i));
        }
        let incoming = cfg.mdscs.iter().filter(|s| s.target == i).count();
        let cin = if i == 1 {
            cfg.backbone.in_channels
        } else {
            ch.at(i - 1)
        } + incoming * MDSC_CHANNELS;
        encoder.push(double_conv(
            &mut b,
            &format!("enc{i}"),
            cin,
            ch.at(i),
            scale(i),
        ));
    }
    b.pool("bottleneck.pool", 2, scale(levels + 1));
    let incoming = cfg.mdscs.iter().filter(|s| s.target == levels + 1).count();
    let bottleneck = double_conv(
        &mut b,
        "bottleneck",
        ch.at(levels) + incoming * MDSC_CHANNELS,
        ch.at(levels + 1),
        scale(levels + 1),
    );

    let mut shortcuts = Vec::with_capacity(cfg.mdscs.len());
    for s in &cfg.mdscs {
        let name = format!("mdsc{}to{}", s.source, s.target);
        b.pool(&format!("{name}.pool"), 4, scale(s.target));
        let block = b.conv_block(
            &name,
            ch.at(s.source),
            MDSC_CHANNELS,
            s.kernel,
            scale(s.target),
        );
        shortcuts.push(ShortConnection {
            source: s.source,
            target: s.target,
            block,
        });
    }

    let mut mous: Vec<Option<Mou>> = (0..=levels).map(|_| None).collect();
    let mut by_level = cfg.mous.clone();
    by_level.sort_by_key(|m| m.level);
    for m in &by_level {
        mous[m.level] = Some(Mou::build(
            &mut b,
            *m,
            scale(m.level),
            &format!("mou{}", m.level),
        )?);
    }
    let mut projections = Vec::new();
    if cfg.skip_fusion == SkipFusion::ProjectSum {
        for m in &by_level {
            for k in 1..=m.downsamplings() {
                let to = m.level + k;
                let conv = b.conv(
                    &format!("mou{}.proj{}to{}", m.level, k, to),
                    m.channels,
                    ch.at(to),
                    1,
                    scale(to),
                );
                projections.push(Projection {
                    from_level: m.level,
                    internal_scale: k,
                    to_level: to,
                    conv,
                });
            }
        }
    }

    let mut up = Vec::with_capacity(levels);
    let mut decoder = Vec::with_capacity(levels);
    for (i, mou) in mous.iter().enumerate().take(levels + 1).skip(1) {
        up.push(b.conv_t(&format!("up{i}"), ch.at(i + 1), ch.at(i), scale(i)));
        let skip = if mou.is_some() {
            2 * ch.at(i)
        } else {
            ch.at(i)
        };
        decoder.push(double_conv(
            &mut b,
            &format!("dec{i}"),
            ch.at(i) + skip,
            ch.at(i),
            scale(i),
        ));
    }
    let head = b.conv("head", ch.at(1), 1, 1, 1);

    Ok(b.finish(NuNet {
        config: cfg.clone(),
        encoder,
        bottleneck,
        up,
        decoder,
        head,
        mous,
        projections,
        shortcuts,
    }))
}

/// Builds a plain U-net of the given odd depth.
pub fn build_backbone(cfg: &BackboneConfig) -> Result<ModelGraph<NuNet>> {
    cfg.validate()?;
    let mut full = NuNetConfig::backbone(cfg.depth);
    full.backbone = *cfg;
    full.input_size = 256usize.next_multiple_of(cfg.divisor());
    build_nunet(&full)
}

impl NuNet {
    /// Records the forward pass and returns the pre-sigmoid logits `(B, 1, H, W)`.
    pub fn forward_logits(&self, params: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        check_divisible(shape, self.divisor())?;
        if shape.c != self.in_channels() {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {shape}",
                self.in_channels()
            )));
        }
        let levels = self.encoder.len();
        let mut enc_out: Vec<Var> = Vec::with_capacity(levels);
        let stage_input =
            |tape: &mut Tape, enc_out: &[Var], base: Var, target: usize| -> Result<Var> {
                let mut parts = vec![base];
                for s in self.shortcuts.iter().filter(|s| s.target == target) {
                    let pooled = tape.max_pool(enc_out[s.source - 1], 4)?;
                    parts.push(s.block.forward(params, tape, pooled)?);
                }
                if parts.len() == 1 {
                    Ok(base)
                } else {
                    tape.concat(&parts)
                }
            };
        for i in 1..=levels {
            let base = if i == 1 {
                x
            } else {
                tape.max_pool(enc_out[i - 2], 2)?
            };
            let input = stage_input(tape, &enc_out, base, i)?;
            enc_out.push(run_blocks(&self.encoder[i - 1], params, tape, input)?);
        }
        let pooled = tape.max_pool(enc_out[levels - 1], 2)?;
        let input = stage_input(tape, &enc_out, pooled, levels + 1)?;
        let mut cur = run_blocks(&self.bottleneck, params, tape, input)?;

        let mut mou_final: Vec<Option<Var>> = vec![None; levels + 1];
        let mut mou_inter: Vec<Vec<Var>> = vec![Vec::new(); levels + 1];
        for (level, m) in self.mous.iter().enumerate() {
            if let Some(m) = m {
                let out = m.forward(params, tape, enc_out[level - 1])?;
                mou_final[level] = Some(out.final_out);
                mou_inter[level] = out.intermediates;
            }
        }
        let mut routed: Vec<Vec<Var>> = vec![Vec::new(); levels + 1];
        for p in &self.projections {
            let src = mou_inter[p.from_level][p.internal_scale - 1];
            routed[p.to_level].push(tape.conv(params, p.conv, src)?);
        }

        for i in (1..=levels).rev() {
            let up = tape.conv_t(params, self.up[i - 1], cur)?;
            let mut parts = Vec::with_capacity(3);
            match mou_final[i] {
                Some(m) => {
                    parts.push(enc_out[i - 1]);
                    parts.push(sum_into(tape, m, &routed[i])?);
                }
                None => parts.push(sum_into(tape, enc_out[i - 1], &routed[i])?),
            }
            parts.push(up);
            let cat = tape.concat(&parts)?;
            cur = run_blocks(&self.decoder[i - 1], params, tape, cat)?;
        }
        tape.conv(params, self.head, cur)
    }
}

fn sum_into(tape: &mut Tape, base: Var, extra: &[Var]) -> Result<Var> {
    if extra.is_empty() {
        return Ok(base);
    }
    let mut parts = vec![base];
    parts.extend_from_slice(extra);
    tape.add(&parts)
}

impl ModelGraph<NuNet> {
    /// Inference-mode probability map `(B, 1, H, W)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(false);
        let input = tape.input(x.clone());
        let logits = self.net.forward_logits(&self.params, &mut tape, input)?;
        let probs = tape.sigmoid(logits);
        Ok(tape.value(probs).clone())
    }

    pub fn config(&self) -> &NuNetConfig {
        &self.net.config
    }
}
