//! Run configuration: defaults, an optional TOML file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use v2model::pipeline::{GridConfig, ModelSpec, V2Kind};
use v2model::{Error, Result};

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub grid: Option<String>,
    pub v2: Option<String>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub patches: Option<usize>,
    pub batch: Option<usize>,
    pub components: Option<usize>,
    pub units: Option<usize>,
    pub dict_step: Option<f64>,
    pub ica_step: Option<f64>,
    pub infer_tol: Option<f64>,
    pub infer_max_iter: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// Resolved settings for training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub v2: V2Kind,
    pub lambda: f64,
    pub epochs: usize,
    pub patches: usize,
    pub batch: usize,
    pub components: usize,
    pub units: usize,
    pub dict_step: f64,
    pub ica_step: f64,
    pub infer_tol: f64,
    pub infer_max_iter: usize,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub v2: Option<String>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub patches: Option<usize>,
}

/// Desk-scale training size; the published runs used 400,000.
pub const DEFAULT_PATCHES: usize = 20_000;
pub const DEFAULT_EPOCHS: usize = 4;

impl RunConfig {
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> Result<Self> {
        let grid: GridConfig = flags.grid.as_deref().or(file.grid.as_deref()).unwrap_or("6x6").parse()?;
        let v2: V2Kind = flags.v2.as_deref().or(file.v2.as_deref()).unwrap_or("sc").parse()?;
        let base = ModelSpec::new(grid, v2, 0.5, 0);
        let cfg = RunConfig {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            grid,
            v2,
            lambda: flags.lambda.or(file.lambda).unwrap_or(0.5),
            epochs: flags.epochs.or(file.epochs).unwrap_or(DEFAULT_EPOCHS),
            patches: flags.patches.or(file.patches).unwrap_or(DEFAULT_PATCHES),
            batch: file.batch.unwrap_or(base.sc.batch),
            components: file.components.unwrap_or(grid.pca_components()),
            units: file.units.unwrap_or(grid.v2_units()),
            dict_step: file.dict_step.unwrap_or(base.sc.dict_step),
            ica_step: file.ica_step.unwrap_or(base.ica.step),
            infer_tol: file.infer_tol.unwrap_or(base.sc.infer_tol),
            infer_max_iter: file.infer_max_iter.unwrap_or(base.sc.infer_max_iter),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidInput("epochs and batch must be ≥ 1".into()));
        }
        if self.units <= self.components {
            return Err(Error::InvalidInput(format!(
                "V2 must be overcomplete: {} units for {} components",
                self.units, self.components
            )));
        }
        if self.patches <= self.components || self.patches < self.batch {
            return Err(Error::InvalidInput(format!(
                "{} training patches cannot support {} components with batch {}",
                self.patches, self.components, self.batch
            )));
        }
        let d = v2model::frontend::GaborBank::new(self.grid.gabor())?.complex_len();
        if self.components > d {
            return Err(Error::InvalidInput(format!(
                "{} PCA components exceed the V1 complex length {d}",
                self.components
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.grid, self.v2, self.lambda, self.seed).with_epochs(self.epochs);
        spec.components = self.components;
        spec.units = self.units;
        spec.sc.batch = self.batch;
        spec.sc.dict_step = self.dict_step;
        spec.sc.infer_tol = self.infer_tol;
        spec.sc.infer_max_iter = self.infer_max_iter;
        spec.ica.batch = self.batch;
        spec.ica.step = self.ica_step;
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_published_geometry() {
        let c = RunConfig::resolve(&ConfigFile::default(), &Overrides::default()).unwrap();
        assert_eq!((c.components, c.units, c.lambda), (100, 800, 0.5));
        let s = c.spec();
        assert_eq!(s.sc.epochs, DEFAULT_EPOCHS);
        let big = Overrides { grid: Some("11x11".into()), ..Overrides::default() };
        let c = RunConfig::resolve(&ConfigFile::default(), &big).unwrap();
        assert_eq!((c.components, c.units), (350, 2800));
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = toml::from_str("lambda = 2.0\nepochs = 9\nv2 = \"ica\"\nseed = 4").unwrap();
        let flags = Overrides { lambda: Some(4.0), ..Overrides::default() };
        let c = RunConfig::resolve(&file, &flags).unwrap();
        assert_eq!((c.lambda, c.epochs, c.v2, c.seed), (4.0, 9, V2Kind::Ica, 4));
    }

    #[test]
    fn bad_configs_fail_before_compute() {
        assert!(toml::from_str::<ConfigFile>("lamda = 1").is_err());
        let file = ConfigFile { units: Some(50), ..ConfigFile::default() };
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let file = ConfigFile { components: Some(5000), units: Some(9000), ..ConfigFile::default() };
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let flags = Overrides { grid: Some("9x9".into()), ..Overrides::default() };
        assert!(RunConfig::resolve(&ConfigFile::default(), &flags).is_err());
    }
}
