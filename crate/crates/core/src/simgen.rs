//! Synthetic two-level data with known coefficients.
//!
//! Per cluster `j`: size uniform on `[min, max]`, `u_j ~ N(0, s2_u)`, level-2
//! covariates `z ~ N(0, 1)`, and items from a discretized latent Gaussian
//! `l_jk = r f_j + sqrt(1 - r^2) e_jk` (common factor `f_j`, so items
//! correlate at `r^2`). Ordinal thresholds are `Phi^-1(c/C)`, giving equally
//! likely categories; binary items split at 0.
//! Per row: `x ~ N(0, 1)`, `y = b0 + x'a + z'd + sum_k g_k[q_jk] + u_j + e_ij`.
//!
//! Missingness is applied per item cell afterwards: MCAR with the given rate,
//! or MAR with `logit P(miss) = a_k + s * std(ybar_j)` where `a_k` is solved
//! so the expected rate over clusters equals the target.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::data::{
    write_dataset, HierarchicalDataset, ItemKind, ItemSpec, ItemTable, Level1Row, Level2Row, Schema, VariableNames,
};
use crate::error::{Error, Result};
use crate::glm::logistic;
use crate::seeds::stage_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMechanism {
    Mcar,
    /// Driven by the cluster's mean response.
    Mar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimItem {
    pub name: String,
    pub categories: u8,
    /// Effect of each category (length `categories`, first entry 0). Empty
    /// means no effect.
    #[serde(default)]
    pub effects: Vec<f64>,
    #[serde(default)]
    pub missing_rate: f64,
}

impl SimItem {
    pub fn spec(&self) -> Result<ItemSpec> {
        let kind = if self.categories == 2 {
            ItemKind::Binary
        } else {
            ItemKind::Ordinal
        };
        ItemSpec::new(self.name.clone(), self.categories, kind)
    }

    pub fn dummy_effects(&self) -> Vec<f64> {
        if self.effects.is_empty() {
            vec![0.0; self.categories as usize]
        } else {
            self.effects.clone()
        }
    }

    /// Adjacent-category contrasts `g_c - g_{c-1}`, `c = 2..=C`.
    pub fn contrasts(&self) -> Vec<f64> {
        self.dummy_effects().windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_clusters: usize,
    pub cluster_size_min: usize,
    pub cluster_size_max: usize,
    pub intercept: f64,
    /// One entry per level-1 covariate.
    pub x_effects: Vec<f64>,
    /// One entry per fully observed level-2 covariate.
    pub z_effects: Vec<f64>,
    pub items: Vec<SimItem>,
    pub sigma2_e: f64,
    pub sigma2_u: f64,
    pub mechanism: MissingMechanism,
    /// Slope of the missingness logit on the standardized cluster mean response.
    pub mar_strength: f64,
    /// Loading of every item's latent variable on the common factor.
    pub item_correlation: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    /// 500 clusters of 10 to 30 rows, five 4-point items of which two carry a
    /// single step of size 0.5 between categories 2 and 3, and 40%
    /// missingness driven by the cluster mean.
    fn default() -> Self {
        let step = |at: usize, size: f64| -> Vec<f64> { (1..=4).map(|c| if c >= at { size } else { 0.0 }).collect() };
        let mut items: Vec<SimItem> = (1..=5)
            .map(|k| SimItem {
                name: format!("q{k}"),
                categories: 4,
                effects: Vec::new(),
                missing_rate: 0.4,
            })
            .collect();
        items[0].effects = step(3, 0.5);
        items[1].effects = step(3, -0.5);
        Self {
            n_clusters: 500,
            cluster_size_min: 10,
            cluster_size_max: 30,
            intercept: 1.0,
            x_effects: vec![0.5, -0.3],
            z_effects: vec![0.4],
            items,
            sigma2_e: 1.0,
            sigma2_u: 0.2,
            mechanism: MissingMechanism::Mar,
            mar_strength: 4.0,
            item_correlation: 0.5,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_clusters == 0 {
            return bad("n_clusters must be positive".into());
        }
        if self.cluster_size_min == 0 || self.cluster_size_min > self.cluster_size_max {
            return bad(format!(
                "cluster sizes need 1 <= min <= max (got {}..{})",
                self.cluster_size_min, self.cluster_size_max
            ));
        }
        if !(self.sigma2_e > 0.0 && self.sigma2_e.is_finite()) {
            return bad(format!("sigma2_e must be positive, got {}", self.sigma2_e));
        }
        if !(self.sigma2_u >= 0.0 && self.sigma2_u.is_finite()) {
            return bad(format!("sigma2_u must be non-negative, got {}", self.sigma2_u));
        }
        if !(self.item_correlation >= 0.0 && self.item_correlation < 1.0) {
            return bad(format!("item_correlation must be in [0, 1), got {}", self.item_correlation));
        }
        if !self.mar_strength.is_finite() {
            return bad("mar_strength must be finite".into());
        }
        let coefs = self.x_effects.iter().chain(&self.z_effects).chain(std::iter::once(&self.intercept));
        if coefs.into_iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        let mut names: Vec<&str> = self.items.iter().map(|i| i.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("item names must be unique".into());
        }
        for item in &self.items {
            item.spec().map_err(|e| Error::Config(e.to_string()))?;
            if !(item.missing_rate >= 0.0 && item.missing_rate < 1.0) {
                return bad(format!("{}: missing_rate must be in [0, 1), got {}", item.name, item.missing_rate));
            }
            if !item.effects.is_empty() {
                if item.effects.len() != item.categories as usize {
                    return bad(format!(
                        "{}: {} effects for {} categories",
                        item.name,
                        item.effects.len(),
                        item.categories
                    ));
                }
                if item.effects[0] != 0.0 || item.effects.iter().any(|v| !v.is_finite()) {
                    return bad(format!("{}: effects must be finite with the first category at 0", item.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub config: SimConfig,
    /// Adjacent-category contrasts per item.
    pub contrasts: Vec<Vec<f64>>,
    pub cluster_effects: Vec<f64>,
    /// Item codes before missingness was applied.
    pub complete_items: ItemTable,
    pub n_missing_cells: usize,
}

pub struct Simulation {
    pub dataset: HierarchicalDataset,
    pub truth: SimTruth,
}

fn latent_thresholds(categories: u8) -> Vec<f64> {
    let std = StatNormal::standard();
    (1..categories).map(|c| std.inverse_cdf(c as f64 / categories as f64)).collect()
}

/// Intercept `a` with `mean_j logistic(a + s t_j) = rate`.
fn calibrate_intercept(rate: f64, slope: f64, t: &[f64]) -> f64 {
    let mean_p = |a: f64| t.iter().map(|&v| logistic(a + slope * v)).sum::<f64>() / t.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, "simulate", 0);
    let specs: Vec<ItemSpec> = cfg.items.iter().map(SimItem::spec).collect::<Result<_>>()?;
    let effects: Vec<Vec<f64>> = cfg.items.iter().map(SimItem::dummy_effects).collect();
    let thresholds: Vec<Vec<f64>> = cfg.items.iter().map(|i| latent_thresholds(i.categories)).collect();
    let u_dist = Normal::new(0.0, cfg.sigma2_u.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let e_dist = Normal::new(0.0, cfg.sigma2_e.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let r = cfg.item_correlation;
    let r_c = (1.0 - r * r).sqrt();

    let n_x = cfg.x_effects.len();
    let mut level1 = Vec::new();
    let mut level2 = Vec::with_capacity(cfg.n_clusters);
    let mut complete_items = Vec::with_capacity(cfg.n_clusters);
    let mut cluster_effects = Vec::with_capacity(cfg.n_clusters);
    let mut cluster_means = Vec::with_capacity(cfg.n_clusters);
    for j in 0..cfg.n_clusters {
        let id = format!("c{:04}", j + 1);
        let size = rng.random_range(cfg.cluster_size_min..=cfg.cluster_size_max);
        let u = u_dist.sample(&mut rng);
        let z: Vec<f64> = (0..cfg.z_effects.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f: f64 = StandardNormal.sample(&mut rng);
        let items: Vec<u8> = thresholds
            .iter()
            .map(|th| {
                let e: f64 = StandardNormal.sample(&mut rng);
                let l = r * f + r_c * e;
                1 + th.iter().filter(|&&t| l > t).count() as u8
            })
            .collect();
        let level2_part = cfg.intercept
            + z.iter().zip(&cfg.z_effects).map(|(a, b)| a * b).sum::<f64>()
            + items.iter().zip(&effects).map(|(&q, g)| g[q as usize - 1]).sum::<f64>()
            + u;
        let mut sum_y = 0.0;
        for _ in 0..size {
            let x: Vec<f64> = (0..n_x).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = level2_part + x.iter().zip(&cfg.x_effects).map(|(a, b)| a * b).sum::<f64>() + e_dist.sample(&mut rng);
            sum_y += y;
            level1.push(Level1Row {
                cluster_id: id.clone(),
                response: y,
                covariates: x,
            });
        }
        cluster_means.push(sum_y / size as f64);
        cluster_effects.push(u);
        level2.push(Level2Row {
            cluster_id: id,
            full_covariates: z,
            items: items.iter().map(|&q| Some(q)).collect(),
            cluster_size: size,
        });
        complete_items.push(items);
    }

    // Missingness.
    let t: Vec<f64> = match cfg.mechanism {
        MissingMechanism::Mcar => vec![0.0; cfg.n_clusters],
        MissingMechanism::Mar => {
            let n = cluster_means.len() as f64;
            let mean = cluster_means.iter().sum::<f64>() / n;
            let sd = (cluster_means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            cluster_means.iter().map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }).collect()
        }
    };
    let slope = match cfg.mechanism {
        MissingMechanism::Mcar => 0.0,
        MissingMechanism::Mar => cfg.mar_strength,
    };
    let mut n_missing_cells = 0;
    for (k, item) in cfg.items.iter().enumerate() {
        if item.missing_rate == 0.0 {
            continue;
        }
        let a = calibrate_intercept(item.missing_rate, slope, &t);
        for (j, row) in level2.iter_mut().enumerate() {
            let p = logistic(a + slope * t[j]);
            if rng.random::<f64>() < p {
                row.items[k] = None;
                n_missing_cells += 1;
            }
        }
    }

    let names = VariableNames {
        cluster: "cluster".into(),
        response: "y".into(),
        x: (1..=n_x).map(|i| format!("x{i}")).collect(),
        z: (1..=cfg.z_effects.len()).map(|i| format!("z{i}")).collect(),
    };
    let dataset = HierarchicalDataset::new(level1, level2, specs, names)?;
    let truth = SimTruth {
        config: cfg.clone(),
        contrasts: cfg.items.iter().map(SimItem::contrasts).collect(),
        cluster_effects,
        complete_items,
        n_missing_cells,
    };
    Ok(Simulation { dataset, truth })
}

pub struct SimulationFiles {
    pub level1: PathBuf,
    pub level2: PathBuf,
    pub schema: PathBuf,
    pub truth: PathBuf,
}

/// Write `level1.csv`, `level2.csv`, `schema.toml` and `truth.json` into `dir`.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<SimulationFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SimulationFiles {
        level1: dir.join("level1.csv"),
        level2: dir.join("level2.csv"),
        schema: dir.join("schema.toml"),
        truth: dir.join("truth.json"),
    };
    write_dataset(&sim.dataset, &files.level1, &files.level2)?;
    let schema = Schema::for_dataset(&sim.dataset);
    let text = toml::to_string(&schema).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&files.schema, text).map_err(|e| Error::io(&files.schema, e))?;
    let f = File::create(&files.truth).map_err(|e| Error::io(&files.truth, e))?;
    serde_json::to_writer_pretty(f, &sim.truth).map_err(|e| Error::Data(e.to_string()))?;
    Ok(files)
}
