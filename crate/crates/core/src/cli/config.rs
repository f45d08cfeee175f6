use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decompose::{MatchConfig, OlsConfig};
use crate::error::{Error, Result};
use crate::eval::{EvenMedian, VariationConfig};
use crate::ica::IcaConfig;
use crate::io::Dtype;
use crate::lstm::{AdamConfig, Architecture, TrainConfig};
use crate::preprocess::PreprocessConfig;
use crate::sbc::SeedSpec;
use crate::synth::SynthSpec;
use crate::types::AtlasFrame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Session catalog; `None` uses the cohort written by `synth`.
    pub catalog: Option<PathBuf>,
    pub output: PathBuf,
    /// Optional K×N `.fbm` of nonnegative reference intensities, one row per
    /// seed in seed-table order, used by `eval dice`.
    pub reference: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            catalog: None,
            output: PathBuf::from("fbn-out"),
            reference: None,
        }
    }
}

/// Atlas frame and seed table for SBC and template building. Both default
/// to values derived from the synthetic cohort when no catalog is given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedTable {
    pub frame: Option<AtlasFrame>,
    pub seeds: Option<Vec<SeedSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmSettings {
    pub architecture: Architecture,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub window: Option<usize>,
    /// Storage precision of latent time courses and maps.
    pub precision: Dtype,
}

impl Default for LstmSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        LstmSettings {
            architecture: t.architecture,
            epochs: t.epochs,
            adam: t.adam,
            seed: t.seed,
            window: t.window,
            precision: Dtype::F64,
        }
    }
}

impl LstmSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            architecture: self.architecture.clone(),
            epochs: self.epochs,
            adam: self.adam,
            seed: self.seed,
            window: self.window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub variation: VariationConfig,
    pub even_median: EvenMedian,
    /// Epoch lengths in seconds for `eval epochs` and `sweep-epochs`; the
    /// full session length is appended when missing.
    pub epoch_lengths_s: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            variation: VariationConfig::default(),
            even_median: EvenMedian::default(),
            epoch_lengths_s: vec![10.0, 20.0, 30.0, 40.0, 50.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub seeds: SeedTable,
    pub ica: IcaConfig,
    pub lstm: LstmSettings,
    pub ols: OlsConfig,
    pub matching: MatchConfig,
    pub eval: EvalConfig,
    /// Added to every module seed.
    pub seed: u64,
}

impl RunConfig {
    /// Parses a config; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.paths.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.architecture.validate()?;
        if self.lstm.epochs == 0 {
            return Err(Error::Config("lstm.epochs must be >= 1".into()));
        }
        if self.ica.components == 0 {
            return Err(Error::Config("ica.components must be >= 1".into()));
        }
        if let Some(bad) = self.eval.epoch_lengths_s.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("eval.epoch_lengths_s must be positive, found {bad}")));
        }
        if !(self.matching.floor.is_finite()) {
            return Err(Error::Config("matching.floor must be finite".into()));
        }
        if let Some(seeds) = &self.seeds.seeds {
            crate::sbc::validate_seeds(seeds)?;
        }
        if let Some(frame) = &self.seeds.frame {
            frame.validate()?;
        }
        Ok(())
    }

    /// Applies a global seed: it replaces `seed` and is added to the seed
    /// of every randomized module.
    pub fn with_global_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        let g = self.seed;
        self.synth.seed = self.synth.seed.wrapping_add(g);
        self.ica.seed = self.ica.seed.wrapping_add(g);
        self.lstm.seed = self.lstm.seed.wrapping_add(g);
        self.eval.variation.tsne.seed = self.eval.variation.tsne.seed.wrapping_add(g);
        self.seed = 0;
        self
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.output);
        if let Some(p) = self.catalog.as_mut() {
            abs(p);
        }
        if let Some(p) = self.reference.as_mut() {
            abs(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg = RunConfig::parse("{}", Path::new("/base")).unwrap();
        let mut want = RunConfig::default();
        want.paths.output = PathBuf::from("/base/fbn-out");
        assert_eq!(cfg, want);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"ica": {"components": 4, "tolerance": 1}}"#,
            r#"{"lstm": {"epochs": 3, "lr": 0.1}}"#,
            r#"{"paths": {"out": "x"}}"#,
        ] {
            let err = RunConfig::parse(text, Path::new(".")).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
            assert!(err.to_string().contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn nested_settings_parse() {
        let text = r#"{
            "paths": {"output": "out", "catalog": "/data/catalog.json"},
            "lstm": {"epochs": 7, "precision": "f32", "architecture": {"fc_size": 8, "encoder": [8, 4], "decoder": [8]}},
            "matching": {"abs": true, "floor": 0.2},
            "seed": 5
        }"#;
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.paths.output, PathBuf::from("/cfg/out"));
        assert_eq!(cfg.paths.catalog, Some(PathBuf::from("/data/catalog.json")));
        assert_eq!(cfg.lstm.epochs, 7);
        assert_eq!(cfg.lstm.precision, Dtype::F32);
        assert_eq!(cfg.lstm.architecture.latent(), 4);
        assert!(cfg.matching.abs);
        let eff = cfg.with_global_seed(None);
        assert_eq!((eff.synth.seed, eff.ica.seed, eff.lstm.seed, eff.seed), (5, 5, 5, 0));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(RunConfig::parse(r#"{"lstm": {"epochs": 0}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"eval": {"epoch_lengths_s": [10, -1]}}"#, Path::new(".")).is_err());
        assert!(RunConfig::parse(r#"{"ica": {"components": "many"}}"#, Path::new(".")).is_err());
    }

    #[test]
    fn global_seed_override() {
        let cfg = RunConfig::default().with_global_seed(Some(3));
        assert_eq!(cfg.synth.seed, 3);
        assert_eq!(cfg.eval.variation.tsne.seed, 3);
    }
}
