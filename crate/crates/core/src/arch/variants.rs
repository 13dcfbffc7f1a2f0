//! Named architecture variants (the ablation ladder), selectable at runtime.

use super::config::{ChannelSchedule, NuNetConfig};
use super::graph::ModelGraph;
use super::nunet::{build_nunet, NuNet};
use crate::error::{Error, Result};

/// Hyperparameters shared by every variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantSettings {
    pub base_width: usize,
    pub cap: usize,
    pub in_channels: usize,
    /// Defaults to the smallest multiple of the network divisor that is at least 256.
    pub input_size: Option<usize>,
    pub seed: u64,
}

impl Default for VariantSettings {
    fn default() -> Self {
        Self {
            base_width: 32,
            cap: 512,
            in_channels: 1,
            input_size: None,
            seed: 0,
        }
    }
}

impl VariantSettings {
    fn apply(&self, mut cfg: NuNetConfig) -> Result<NuNetConfig> {
        cfg.backbone.channels = ChannelSchedule::new(self.base_width, self.cap)?;
        cfg.backbone.in_channels = self.in_channels;
        for m in &mut cfg.mous {
            m.channels = cfg.backbone.channels.at(m.level);
        }
        cfg.input_size = self
            .input_size
            .unwrap_or_else(|| 256usize.next_multiple_of(cfg.divisor()));
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub trait ArchVariant: Send + Sync {
    fn name(&self) -> &'static str;

    fn summary(&self) -> &'static str;

    fn config(&self, settings: &VariantSettings) -> Result<NuNetConfig>;
}

struct Unet;
struct Deeper;
struct DeeperMou;
struct DeeperMouMdsc;

impl ArchVariant for Unet {
    fn name(&self) -> &'static str {
        "unet"
    }
    fn summary(&self) -> &'static str {
        "U-net"
    }
    fn config(&self, s: &VariantSettings) -> Result<NuNetConfig> {
        s.apply(NuNetConfig::backbone(9))
    }
}

impl ArchVariant for Deeper {
    fn name(&self) -> &'static str {
        "deeper"
    }
    fn summary(&self) -> &'static str {
        "Deeper U-net"
    }
    fn config(&self, s: &VariantSettings) -> Result<NuNetConfig> {
        s.apply(NuNetConfig::backbone(15))
    }
}

impl ArchVariant for DeeperMou {
    fn name(&self) -> &'static str {
        "deeper_mou"
    }
    fn summary(&self) -> &'static str {
        "Deeper U-net + MOU"
    }
    fn config(&self, s: &VariantSettings) -> Result<NuNetConfig> {
        let mut cfg = NuNetConfig::backbone(15);
        cfg.set_default_mous()?;
        s.apply(cfg)
    }
}

impl ArchVariant for DeeperMouMdsc {
    fn name(&self) -> &'static str {
        "deeper_mou_mdsc"
    }
    fn summary(&self) -> &'static str {
        "Deeper U-net + MOU + MDSC"
    }
    fn config(&self, s: &VariantSettings) -> Result<NuNetConfig> {
        s.apply(NuNetConfig::canonical())
    }
}

/// Variants in registration order.
pub struct VariantRegistry {
    entries: Vec<Box<dyn ArchVariant>>,
}

impl Default for VariantRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl VariantRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// The four-row ablation ladder, simplest first.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Unet));
        r.register(Box::new(Deeper));
        r.register(Box::new(DeeperMou));
        r.register(Box::new(DeeperMouMdsc));
        r
    }

    /// Registers a variant, replacing any existing one with the same name.
    pub fn register(&mut self, variant: Box<dyn ArchVariant>) {
        match self.entries.iter().position(|v| v.name() == variant.name()) {
            Some(i) => self.entries[i] = variant,
            None => self.entries.push(variant),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|v| v.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ArchVariant> {
        self.entries
            .iter()
            .find(|v| v.name() == name)
            .map(|v| v.as_ref())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown variant '{name}'; valid variants: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn config(&self, name: &str, settings: &VariantSettings) -> Result<NuNetConfig> {
        self.get(name)?.config(settings)
    }

    pub fn build(&self, name: &str, settings: &VariantSettings) -> Result<ModelGraph<NuNet>> {
        build_nunet(&self.config(name, settings)?)
    }
}

/// Builds a default-registry variant with canonical hyperparameters.
pub fn build_variant(name: &str) -> Result<ModelGraph<NuNet>> {
    VariantRegistry::with_defaults().build(name, &VariantSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_variant_lists_names() {
        let err = build_variant("resnet").unwrap_err().to_string();
        assert!(
            err.contains("unet, deeper, deeper_mou, deeper_mou_mdsc"),
            "{err}"
        );
    }

    #[test]
    fn full_variant_is_canonical() {
        let cfg = VariantRegistry::with_defaults()
            .config("deeper_mou_mdsc", &VariantSettings::default())
            .unwrap();
        assert_eq!(cfg, NuNetConfig::canonical());
    }

    #[test]
    fn ladder_configs() {
        let r = VariantRegistry::with_defaults();
        let s = VariantSettings::default();
        let unet = r.config("unet", &s).unwrap();
        assert_eq!(unet.backbone.depth, 9);
        assert_eq!(unet.input_size, 256);
        let deeper = r.config("deeper", &s).unwrap();
        assert_eq!(deeper.backbone.depth, 15);
        assert!(deeper.mous.is_empty() && deeper.mdscs.is_empty());
        let mou = r.config("deeper_mou", &s).unwrap();
        assert_eq!(mou.mous.len(), 6);
        assert!(mou.mdscs.is_empty());
    }

    #[test]
    fn narrow_settings_rescale_mous() {
        let s = VariantSettings {
            base_width: 8,
            ..Default::default()
        };
        let cfg = VariantRegistry::with_defaults()
            .config("deeper_mou_mdsc", &s)
            .unwrap();
        assert_eq!(cfg.mous[0].channels, 8);
        assert_eq!(cfg.mous[5].channels, 256);
    }
}
