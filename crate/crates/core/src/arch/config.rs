//! Architecture descriptions and their key-value file format.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Output channels of every multi-step down-sampling branch.
pub const MDSC_CHANNELS: usize = 32;

/// Per-level channel counts `C_i = min(base_width * 2^(i-1), cap)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelSchedule {
    pub base_width: usize,
    pub cap: usize,
}

impl Default for ChannelSchedule {
    fn default() -> Self {
        Self {
            base_width: 32,
            cap: 512,
        }
    }
}

impl ChannelSchedule {
    pub fn new(base_width: usize, cap: usize) -> Result<Self> {
        if base_width == 0 || cap == 0 {
            return Err(Error::config("channel counts must be positive"));
        }
        if cap < base_width {
            return Err(Error::config(format!(
                "cap {cap} is below base width {base_width}"
            )));
        }
        Ok(Self { base_width, cap })
    }

    /// Channel count at 1-based level `i`.
    pub fn at(&self, level: usize) -> usize {
        assert!(level >= 1, "levels are 1-based");
        let mut c = self.base_width;
        for _ in 1..level {
            if c >= self.cap {
                break;
            }
            c *= 2;
        }
        c.min(self.cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    /// Total stage count `2L + 1`.
    pub depth: usize,
    pub channels: ChannelSchedule,
    pub in_channels: usize,
}

impl BackboneConfig {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            channels: ChannelSchedule::default(),
            in_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 3 || self.depth.is_multiple_of(2) {
            return Err(Error::config(format!(
                "backbone depth must be odd and >= 3, got {}",
                self.depth
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels must be positive"));
        }
        ChannelSchedule::new(self.channels.base_width, self.channels.cap)?;
        Ok(())
    }

    /// Number of encoder stages `L`.
    pub fn levels(&self) -> usize {
        (self.depth - 1) / 2
    }

    /// Input height and width must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels()
    }
}

/// Depths `2(L - i) - 1` of the nested U-nets attached to encoder stages `1..L-1`.
pub fn mou_depth_schedule(levels: usize) -> Result<Vec<usize>> {
    if levels < 2 {
        return Err(Error::config(format!(
            "nested U-nets need at least 2 encoder stages, got {levels}"
        )));
    }
    Ok((1..levels).map(|i| 2 * (levels - i) - 1).collect())
}

/// A multi-out U-net refining the features of one encoder stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MouConfig {
    /// 1-based encoder stage it is attached to.
    pub level: usize,
    pub depth: usize,
    pub channels: usize,
    /// Convolutions per decoder stage; encoder and bottom stages use one.
    pub decoder_convs: usize,
}

impl MouConfig {
    pub fn new(level: usize, depth: usize, channels: usize) -> Self {
        Self {
            level,
            depth,
            channels,
            decoder_convs: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth.is_multiple_of(2) || self.depth == 0 {
            return Err(Error::config(format!(
                "MOU depth must be odd and >= 1, got {}",
                self.depth
            )));
        }
        if self.channels == 0 {
            return Err(Error::config("MOU channels must be positive"));
        }
        if self.decoder_convs == 0 {
            return Err(Error::config(
                "MOU decoder stages need at least one convolution",
            ));
        }
        Ok(())
    }

    /// Internal down-samplings, `(D - 1) / 2`.
    pub fn downsamplings(&self) -> usize {
        (self.depth - 1) / 2
    }
}

/// A 4x4 pool + 32-filter convolution bridging encoder stage `source` to `source + 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MdscConfig {
    pub source: usize,
    pub target: usize,
    pub kernel: usize,
}

impl MdscConfig {
    pub fn new(source: usize) -> Self {
        Self {
            source,
            target: source + 2,
            kernel: 1,
        }
    }
}

/// How nested U-net outputs enter the decoder skips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SkipFusion {
    /// Final MOU output is concatenated with the encoder features; intermediate outputs are
    /// projected by 1x1 convolutions and summed into the deeper skips.
    #[default]
    ProjectSum,
    /// Final MOU output is concatenated; intermediate outputs are not routed.
    ConcatOnly,
}

impl SkipFusion {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipFusion::ProjectSum => "project_sum",
            SkipFusion::ConcatOnly => "concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "project_sum" => Ok(SkipFusion::ProjectSum),
            "concat" => Ok(SkipFusion::ConcatOnly),
            other => Err(Error::config(format!(
                "unknown skip_fusion '{other}' (expected project_sum or concat)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NuNetConfig {
    pub backbone: BackboneConfig,
    pub mous: Vec<MouConfig>,
    pub mdscs: Vec<MdscConfig>,
    pub skip_fusion: SkipFusion,
    /// Square training/evaluation resolution.
    pub input_size: usize,
    pub seed: u64,
}

impl NuNetConfig {
    /// A plain backbone U-net without nested modules or short-connections.
    pub fn backbone(depth: usize) -> Self {
        Self {
            backbone: BackboneConfig::new(depth),
            mous: Vec::new(),
            mdscs: Vec::new(),
            skip_fusion: SkipFusion::default(),
            input_size: 256,
            seed: 0,
        }
    }

    /// Depth-15 backbone, six nested U-nets and three short-connections.
    pub fn canonical() -> Self {
        let mut cfg = Self::backbone(15);
        cfg.set_default_mous().expect("depth 15 has nested U-nets");
        cfg.set_default_mdscs();
        cfg
    }

    /// Attaches nested U-nets following [`mou_depth_schedule`].
    pub fn set_default_mous(&mut self) -> Result<()> {
        let levels = self.backbone.levels();
        let ch = self.backbone.channels;
        self.mous = mou_depth_schedule(levels)?
            .into_iter()
            .enumerate()
            .map(|(i, d)| MouConfig::new(i + 1, d, ch.at(i + 1)))
            .collect();
        Ok(())
    }

    /// Short-connections 1->3, 3->5, 5->7 (truncated to the available stages).
    pub fn set_default_mdscs(&mut self) {
        let levels = self.backbone.levels();
        self.mdscs = [1, 3, 5]
            .into_iter()
            .filter(|s| s + 2 <= levels)
            .map(MdscConfig::new)
            .collect();
    }

    pub fn levels(&self) -> usize {
        self.backbone.levels()
    }

    pub fn divisor(&self) -> usize {
        self.backbone.divisor()
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        let levels = self.levels();
        let schedule = if self.mous.is_empty() {
            Vec::new()
        } else {
            mou_depth_schedule(levels)?
        };
        let mut seen = vec![false; levels + 1];
        for m in &self.mous {
            m.validate()?;
            if m.level == 0 || m.level >= levels {
                return Err(Error::config(format!(
                    "MOU attached to stage {} but nested U-nets live on stages 1..{}",
                    m.level,
                    levels - 1
                )));
            }
            if std::mem::replace(&mut seen[m.level], true) {
                return Err(Error::config(format!(
                    "two MOUs attached to stage {}",
                    m.level
                )));
            }
            let max_depth = schedule[m.level - 1];
            if m.depth > max_depth {
                return Err(Error::config(format!(
                    "MOU on stage {} has depth {} but the schedule allows at most {max_depth}",
                    m.level, m.depth
                )));
            }
            let expected = self.backbone.channels.at(m.level);
            if m.channels != expected {
                return Err(Error::config(format!(
                    "MOU on stage {} must have {expected} channels, got {}",
                    m.level, m.channels
                )));
            }
        }
        for s in &self.mdscs {
            if s.source == 0 || s.target != s.source + 2 || s.target > levels + 1 {
                return Err(Error::config(format!(
                    "short-connection {}->{} invalid: targets must be source + 2 and at most stage {}",
                    s.source,
                    s.target,
                    levels + 1
                )));
            }
            if s.kernel % 2 == 0 {
                return Err(Error::config(format!(
                    "short-connection kernel must be odd, got {}",
                    s.kernel
                )));
            }
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(self.divisor()) {
            return Err(Error::config(format!(
                "input_size {} must be a positive multiple of {}",
                self.input_size,
                self.divisor()
            )));
        }
        Ok(())
    }

    /// Serializes to the key-value text format read by [`NuNetConfig::parse`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let b = &self.backbone;
        let _ = writeln!(out, "depth = {}", b.depth);
        let _ = writeln!(out, "base_width = {}", b.channels.base_width);
        let _ = writeln!(out, "cap = {}", b.channels.cap);
        let _ = writeln!(out, "in_channels = {}", b.in_channels);
        let mou = if self.mous.is_empty() {
            "none".to_string()
        } else {
            let mut by_level = self.mous.clone();
            by_level.sort_by_key(|m| m.level);
            by_level
                .iter()
                .map(|m| format!("{}:{}", m.level, m.depth))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "mou = {mou}");
        let dec = self.mous.first().map_or(2, |m| m.decoder_convs);
        let _ = writeln!(out, "mou_decoder_convs = {dec}");
        let mdsc = if self.mdscs.is_empty() {
            "none".to_string()
        } else {
            self.mdscs
                .iter()
                .map(|s| format!("{}>{}", s.source, s.target))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "mdsc = {mdsc}");
        let kernel = self.mdscs.first().map_or(1, |s| s.kernel);
        let _ = writeln!(out, "mdsc_kernel = {kernel}");
        let _ = writeln!(out, "skip_fusion = {}", self.skip_fusion.as_str());
        let _ = writeln!(out, "input_size = {}", self.input_size);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    /// Parses the key-value format. Missing keys take canonical defaults; `mou = auto`
    /// applies the depth schedule and `mdsc = auto` the 1->3, 3->5, 5->7 placement.
    pub fn parse(text: &str) -> Result<Self> {
        let mut depth = 15;
        let mut base_width = 32;
        let mut cap = 512;
        let mut in_channels = 1;
        let mut mou = "auto".to_string();
        let mut mou_decoder_convs = 2;
        let mut mdsc = "auto".to_string();
        let mut mdsc_kernel = 1;
        let mut skip_fusion = SkipFusion::default();
        let mut input_size = None;
        let mut seed = 0u64;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| {
                    Error::config(format!(
                        "line {}: {key} expects an integer, got '{v}'",
                        lineno + 1
                    ))
                })
            };
            match key {
                "depth" => depth = int(value)?,
                "base_width" => base_width = int(value)?,
                "cap" => cap = int(value)?,
                "in_channels" => in_channels = int(value)?,
                "mou" => mou = value.to_string(),
                "mou_decoder_convs" => mou_decoder_convs = int(value)?,
                "mdsc" => mdsc = value.to_string(),
                "mdsc_kernel" => mdsc_kernel = int(value)?,
                "skip_fusion" => skip_fusion = SkipFusion::parse(value)?,
                "input_size" => input_size = Some(int(value)?),
                "seed" => seed = int(value)? as u64,
                other => {
                    return Err(Error::config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::config(format!("expected an integer in '{v}'")))
        };
        let mut cfg = Self::backbone(depth);
        cfg.backbone.channels = ChannelSchedule::new(base_width, cap)?;
        cfg.backbone.in_channels = in_channels;
        cfg.backbone.validate()?;
        cfg.skip_fusion = skip_fusion;
        cfg.seed = seed;
        cfg.input_size = input_size.unwrap_or_else(|| 256usize.next_multiple_of(cfg.divisor()));
        match mou.as_str() {
            "none" => {}
            "auto" => cfg.set_default_mous()?,
            list => {
                let levels = cfg.levels();
                let items: Vec<&str> = list.split(',').map(str::trim).collect();
                for (idx, item) in items.iter().enumerate() {
                    let (level, depth) = match item.split_once(':') {
                        Some((l, d)) => (int(l)?, int(d)?),
                        None if items.len() == levels.saturating_sub(1) => (idx + 1, int(item)?),
                        None => {
                            return Err(Error::config(format!(
                            "mou list '{list}' needs {} depths or explicit 'stage:depth' entries",
                            levels.saturating_sub(1)
                        )))
                        }
                    };
                    if level == 0 {
                        return Err(Error::config("MOU stages are 1-based"));
                    }
                    cfg.mous.push(MouConfig::new(
                        level,
                        depth,
                        cfg.backbone.channels.at(level),
                    ));
                }
            }
        }
        for m in &mut cfg.mous {
            m.decoder_convs = mou_decoder_convs;
        }
        match mdsc.as_str() {
            "none" => {}
            "auto" => cfg.set_default_mdscs(),
            list => {
                for item in list.split(',').map(str::trim) {
                    let (s, t) = item.split_once('>').ok_or_else(|| {
                        Error::config(format!(
                            "mdsc entry '{item}' must look like 'source>target'"
                        ))
                    })?;
                    cfg.mdscs.push(MdscConfig {
                        source: int(s.trim())?,
                        target: int(t.trim())?,
                        kernel: 1,
                    });
                }
            }
        }
        for s in &mut cfg.mdscs {
            s.kernel = mdsc_kernel;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }

    /// Short stable hash of the serialized configuration.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.to_kv())
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(mou_depth_schedule(7).unwrap(), vec![11, 9, 7, 5, 3, 1]);
        assert_eq!(mou_depth_schedule(2).unwrap(), vec![1]);
        assert_eq!(mou_depth_schedule(5).unwrap(), vec![7, 5, 3, 1]);
        assert!(mou_depth_schedule(1).is_err());
    }

    #[test]
    fn channel_schedule_caps() {
        let s = ChannelSchedule::default();
        let got: Vec<usize> = (1..=9).map(|i| s.at(i)).collect();
        assert_eq!(got, vec![32, 64, 128, 256, 512, 512, 512, 512, 512]);
        assert_eq!(s.at(200), 512);
    }

    #[test]
    fn canonical_shape() {
        let cfg = NuNetConfig::canonical();
        cfg.validate().unwrap();
        assert_eq!(cfg.mous.len(), 6);
        assert_eq!(cfg.mdscs.len(), 3);
        assert_eq!(
            cfg.mous.iter().map(|m| m.depth).collect::<Vec<_>>(),
            vec![11, 9, 7, 5, 3, 1]
        );
        assert_eq!(
            cfg.mdscs
                .iter()
                .map(|m| (m.source, m.target))
                .collect::<Vec<_>>(),
            vec![(1, 3), (3, 5), (5, 7)]
        );
        assert_eq!(cfg.divisor(), 128);
    }

    #[test]
    fn kv_roundtrip_and_defaults() {
        let cfg = NuNetConfig::canonical();
        assert_eq!(NuNetConfig::parse(&cfg.to_kv()).unwrap(), cfg);
        assert_eq!(NuNetConfig::parse("").unwrap(), cfg);
        let plain = NuNetConfig::parse("depth = 9\nmou = none\nmdsc = none # plain\n").unwrap();
        assert_eq!(plain, NuNetConfig::backbone(9));
    }

    #[test]
    fn kv_errors() {
        assert!(NuNetConfig::parse("depth = 8").is_err());
        assert!(NuNetConfig::parse("depth = 1").is_err());
        assert!(NuNetConfig::parse("colour = red").is_err());
        assert!(NuNetConfig::parse("depth 15").is_err());
        assert!(NuNetConfig::parse("mou = 11,9,8,5,3,1").is_err());
        assert!(NuNetConfig::parse("mdsc = 1>4").is_err());
        assert!(NuNetConfig::parse("input_size = 200").is_err());
    }

    #[test]
    fn explicit_mou_list() {
        let cfg =
            NuNetConfig::parse("mou = 1,1,1,1,1,1\nskip_fusion = concat\nmdsc = none").unwrap();
        assert!(cfg.mous.iter().all(|m| m.depth == 1));
        assert_eq!(cfg.skip_fusion, SkipFusion::ConcatOnly);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = NuNetConfig::canonical();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
