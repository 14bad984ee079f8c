//! TOML configuration of an analysis run.
//!
//! ```toml
//! seed = 20240501
//!
//! [data]
//! level1 = "ratings.csv"        # relative paths resolve against this file
//! level2 = "teachers.csv"
//! schema = "schema.toml"        # or an inline [schema] table
//!
//! [imputation]
//! m = 10
//! burn_in = 10
//! visit_order = "increasing-missingness"   # or "as-given"
//!
//! [lasso]
//! n_grid = 100
//! ratio = 1e-4
//! weight_cap = 1e6
//!
//! [selection]
//! k_percent = 50
//! alpha = 0.05
//! max_rounds = 10
//!
//! [output]
//! dir = "results"
//! write_imputations = true
//! write_paths = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::error::{Error, Result};
use crate::imputation::{ImputationConfig, VisitOrder};
use crate::pipeline::PipelineSettings;
use crate::pooling::RefineConfig;
use crate::regularization::LassoSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub level1: PathBuf,
    pub level2: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputationSection {
    pub m: usize,
    pub burn_in: usize,
    pub visit_order: VisitOrder,
}

impl Default for ImputationSection {
    fn default() -> Self {
        let d = ImputationConfig::default();
        Self {
            m: d.m,
            burn_in: d.burn_in,
            visit_order: d.visit_order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub k_percent: f64,
    pub alpha: f64,
    pub max_rounds: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let r = RefineConfig::default();
        Self {
            k_percent: 50.0,
            alpha: r.alpha,
            max_rounds: r.max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub write_imputations: bool,
    pub write_paths: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            write_imputations: true,
            write_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    #[serde(default)]
    pub schema: Option<Schema>,
    #[serde(default)]
    pub imputation: ImputationSection,
    #[serde(default)]
    pub lasso: LassoSettings,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parse and validate; relative paths are joined onto `base_dir`.
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.data.level1 = resolve(base_dir, &cfg.data.level1);
        cfg.data.level2 = resolve(base_dir, &cfg.data.level2);
        cfg.data.schema = cfg.data.schema.as_deref().map(|p| resolve(base_dir, p));
        cfg.output.dir = resolve(base_dir, &cfg.output.dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::from_toml_str(text, base)?, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.schema, &self.data.schema) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either data.schema or a [schema] table, not both".into()));
            }
            (None, None) => return Err(Error::Config("missing schema: set data.schema or add a [schema] table".into())),
            (Some(s), None) => s.validate()?,
            (None, Some(_)) => {}
        }
        self.settings().validate()
    }

    /// The schema, read from its file when not inline.
    pub fn schema(&self) -> Result<Schema> {
        if let Some(s) = &self.schema {
            return Ok(s.clone());
        }
        let path = self.data.schema.as_ref().expect("validated");
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::from_toml_str(&text)
    }

    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            imputation: ImputationConfig {
                m: self.imputation.m,
                burn_in: self.imputation.burn_in,
                seed: self.seed,
                visit_order: self.imputation.visit_order,
            },
            lasso: self.lasso,
            k_percent: self.selection.k_percent,
            refine: RefineConfig {
                alpha: self.selection.alpha,
                max_rounds: self.selection.max_rounds,
            },
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        self.imputation.validate()?;
        let l = &self.lasso;
        if l.n_grid == 0 || !(l.ratio > 0.0 && l.ratio < 1.0) || !(l.weight_cap > 0.0) {
            return Err(Error::Config(format!(
                "lasso settings need n_grid >= 1, 0 < ratio < 1, weight_cap > 0 (got {}, {}, {})",
                l.n_grid, l.ratio, l.weight_cap
            )));
        }
        if !(0.0..=100.0).contains(&self.k_percent) {
            return Err(Error::Config(format!("k_percent must be in [0, 100], got {}", self.k_percent)));
        }
        if !(self.refine.alpha > 0.0 && self.refine.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.refine.alpha)));
        }
        if self.refine.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}
