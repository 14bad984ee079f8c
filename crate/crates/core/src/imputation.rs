//! Chained-equations (fully conditional specification) imputation of the
//! level-2 items.
//!
//! Each item with missing answers gets its own conditional model: a binary
//! logit for binary items, a proportional-odds cumulative logit for ordinal
//! items. Predictors are the level-2 covariates, the cluster size, the cluster
//! means of every level-1 covariate and of the response, and the current
//! values of all other items (split coded, empty categories merged). At every
//! visit the model is refit on the rows where the item is observed, parameters
//! are drawn from the normal approximation around the estimate, and the
//! missing cells are redrawn.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    cluster_means, item_frequencies, write_level2, HierarchicalDataset, ItemKind, ItemTable, Level1Column,
};
use crate::error::{Error, Result};
use crate::glm::{fit_binary_logit, fit_cumulative_logit, sample_category, CategoryModel, CumulativeLogitFit, LogitFit};
use crate::linalg::cholesky_with_jitter;
use crate::seeds::stage_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisitOrder {
    AsGiven,
    IncreasingMissingness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// Number of completed datasets.
    pub m: usize,
    /// Sweeps over all items before a chain's table is stored.
    pub burn_in: usize,
    pub seed: u64,
    pub visit_order: VisitOrder,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 10,
            burn_in: 10,
            seed: 0,
            visit_order: VisitOrder::IncreasingMissingness,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("need at least 2 imputations, got {}", self.m)));
        }
        if self.burn_in < 1 {
            return Err(Error::Config("burn-in must be at least 1 sweep".into()));
        }
        Ok(())
    }
}

/// Per sweep, per item: category frequencies among the imputed cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainTrace {
    pub sweeps: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub completed: Vec<ItemTable>,
    pub observed_mask: Vec<Vec<bool>>,
    pub chain_stats: Vec<ChainTrace>,
    pub warnings: Vec<String>,
}

impl ImputationResult {
    pub fn m(&self) -> usize {
        self.completed.len()
    }
}

/// `[z | cluster size | cluster means of x | cluster mean of y]`, one row per cluster.
pub fn build_imputation_covariates(ds: &HierarchicalDataset) -> DMatrix<f64> {
    let mut cols: Vec<Level1Column> = (0..ds.n_x()).map(Level1Column::Covariate).collect();
    cols.push(Level1Column::Response);
    let means = cluster_means(ds, &cols).expect("selector is never empty");
    let n_z = ds.n_z();
    let width = n_z + 1 + cols.len();
    DMatrix::from_fn(ds.n_clusters(), width, |j, c| {
        let row = &ds.level2()[j];
        if c < n_z {
            row.full_covariates[c]
        } else if c == n_z {
            row.cluster_size as f64
        } else {
            means[(j, c - n_z - 1)]
        }
    })
}

/// Standardize columns; constant columns are dropped.
fn standardize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut keep = Vec::new();
    for c in 0..m.ncols() {
        let col = m.column(c);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var > 1e-12 * (1.0 + mean * mean) {
            keep.push((c, mean, var.sqrt()));
        }
    }
    DMatrix::from_fn(m.nrows(), keep.len(), |r, k| {
        let (c, mean, sd) = keep[k];
        (m[(r, c)] - mean) / sd
    })
}

/// How the other items enter item `target`'s model: for each other item, the
/// category boundaries `c` giving columns `[code >= c]`.
#[derive(Debug, Clone, PartialEq)]
struct PredictorLayout {
    target: usize,
    boundaries: Vec<(usize, Vec<u8>)>,
}

impl PredictorLayout {
    fn new(target: usize, table: &ItemTable, fit_rows: &[usize], n_items: usize) -> Self {
        let boundaries = (0..n_items)
            .filter(|&j| j != target)
            .map(|j| {
                let mut present: Vec<u8> = fit_rows.iter().map(|&r| table[r][j]).collect();
                present.sort_unstable();
                present.dedup();
                (j, present.into_iter().skip(1).collect())
            })
            .collect();
        Self { target, boundaries }
    }

    fn row(&self, base: &DMatrix<f64>, table: &ItemTable, cluster: usize, intercept: bool) -> Vec<f64> {
        let mut v = Vec::with_capacity(base.ncols() + 1 + 6 * self.boundaries.len());
        if intercept {
            v.push(1.0);
        }
        v.extend(base.row(cluster).iter().copied());
        for (j, cuts) in &self.boundaries {
            let code = table[cluster][*j];
            v.extend(cuts.iter().map(|&c| f64::from(u8::from(code >= c))));
        }
        v
    }

    fn matrix(&self, base: &DMatrix<f64>, table: &ItemTable, rows: &[usize], intercept: bool) -> DMatrix<f64> {
        let first = self.row(base, table, rows[0], intercept);
        let mut m = DMatrix::zeros(rows.len(), first.len());
        for (i, &r) in rows.iter().enumerate() {
            let v = if i == 0 { first.clone() } else { self.row(base, table, r, intercept) };
            for (c, x) in v.into_iter().enumerate() {
                m[(i, c)] = x;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
enum Conditional {
    Binary(LogitFit),
    Ordinal(CumulativeLogitFit),
}

/// A fitted conditional model together with the predictor layout it was fit on.
#[derive(Debug, Clone)]
struct ItemModel {
    layout: PredictorLayout,
    fit: Conditional,
}

fn draw_normal<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    match cholesky_with_jitter(cov, 1e-10) {
        Some((chol, _)) => mean + chol.l() * z,
        None => mean.clone(),
    }
}

impl ItemModel {
    /// Model with parameters drawn from the estimate's normal approximation.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Conditional {
        match &self.fit {
            Conditional::Binary(f) => {
                Conditional::Binary(f.with_coefficients(draw_normal(&f.coefficients, &f.covariance, rng)))
            }
            Conditional::Ordinal(f) => {
                let params = draw_normal(&f.parameters(), &f.covariance, rng);
                Conditional::Ordinal(f.with_parameters(&params))
            }
        }
    }
}

struct ItemRows {
    observed: Vec<usize>,
    missing: Vec<usize>,
}

fn fit_item(
    ds: &HierarchicalDataset,
    k: usize,
    rows: &ItemRows,
    base: &DMatrix<f64>,
    table: &ItemTable,
) -> Result<ItemModel> {
    let spec = &ds.item_specs()[k];
    let layout = PredictorLayout::new(k, table, &rows.observed, ds.n_items());
    let y: Vec<u8> = rows.observed.iter().map(|&r| table[r][k]).collect();
    let fit = match spec.kind {
        ItemKind::Binary => {
            let x = layout.matrix(base, table, &rows.observed, true);
            let yb: Vec<bool> = y.iter().map(|&c| c == 2).collect();
            Conditional::Binary(fit_binary_logit(&x, &yb)?)
        }
        ItemKind::Ordinal => {
            let x = layout.matrix(base, table, &rows.observed, false);
            Conditional::Ordinal(fit_cumulative_logit(&x, &y, spec.n_categories)?)
        }
    };
    Ok(ItemModel { layout, fit })
}

fn initial_draw<R: Rng + ?Sized>(ds: &HierarchicalDataset, rng: &mut R) -> ItemTable {
    let specs = ds.item_specs();
    let marginals: Vec<Vec<f64>> = specs
        .iter()
        .enumerate()
        .map(|(k, s)| item_frequencies(ds.level2().iter().filter_map(|r| r.items[k]), s.n_categories).1)
        .collect();
    ds.level2()
        .iter()
        .map(|row| {
            row.items
                .iter()
                .enumerate()
                .map(|(k, c)| match c {
                    Some(c) => *c,
                    None => sample_category(&marginals[k], rng),
                })
                .collect()
        })
        .collect()
}

struct ChainOutput {
    table: ItemTable,
    trace: ChainTrace,
    warnings: Vec<String>,
}

fn run_chain(
    ds: &HierarchicalDataset,
    cfg: &ImputationConfig,
    chain: usize,
    base: &DMatrix<f64>,
    order: &[usize],
    rows: &[ItemRows],
) -> ChainOutput {
    let mut rng = stage_rng(cfg.seed, "mice", chain as u64);
    let specs = ds.item_specs();
    let mut table = initial_draw(ds, &mut rng);
    let mut last_good: Vec<Option<ItemModel>> = vec![None; specs.len()];
    let mut warnings = Vec::new();
    let mut sweeps = Vec::with_capacity(cfg.burn_in);

    for sweep in 0..cfg.burn_in {
        for &k in order {
            let r = &rows[k];
            match fit_item(ds, k, r, base, &table) {
                Ok(model) => last_good[k] = Some(model),
                Err(e) => {
                    let msg = format!(
                        "chain {}, sweep {}: conditional model for item '{}' failed ({e}); keeping parameters from the last successful sweep",
                        chain + 1,
                        sweep + 1,
                        specs[k].name
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            let Some(model) = &last_good[k] else {
                continue;
            };
            let drawn = model.draw(&mut rng);
            let intercept = matches!(drawn, Conditional::Binary(_));
            for &j in &r.missing {
                let x = model.layout.row(base, &table, j, intercept);
                let probs = match &drawn {
                    Conditional::Binary(f) => f.category_probs(&x),
                    Conditional::Ordinal(f) => f.category_probs(&x),
                };
                table[j][k] = sample_category(&probs, &mut rng);
            }
        }
        sweeps.push(
            specs
                .iter()
                .enumerate()
                .map(|(k, s)| item_frequencies(rows[k].missing.iter().map(|&j| table[j][k]), s.n_categories).1)
                .collect(),
        );
    }
    ChainOutput {
        table,
        trace: ChainTrace { sweeps },
        warnings,
    }
}

/// Produce `cfg.m` completed item tables. Chains are independent (own RNG
/// stream derived from `cfg.seed`) and run in parallel; output order and
/// values do not depend on the number of worker threads.
pub fn mice_impute(ds: &HierarchicalDataset, cfg: &ImputationConfig) -> Result<ImputationResult> {
    cfg.validate()?;
    let observed_mask = ds.observed_mask();
    let specs = ds.item_specs();
    let rows: Vec<ItemRows> = (0..specs.len())
        .map(|k| {
            let (observed, missing): (Vec<usize>, Vec<usize>) =
                (0..ds.n_clusters()).partition(|&j| observed_mask[j][k]);
            ItemRows { observed, missing }
        })
        .collect();

    for (k, spec) in specs.iter().enumerate() {
        if rows[k].missing.is_empty() {
            continue;
        }
        if rows[k].observed.is_empty() {
            return Err(Error::Data(format!("item '{}' has no observed values", spec.name)));
        }
        let first = ds.level2()[rows[k].observed[0]].items[k];
        if rows[k].observed.iter().all(|&j| ds.level2()[j].items[k] == first) {
            return Err(Error::Data(format!(
                "item '{}' has a single observed category; it cannot be imputed",
                spec.name
            )));
        }
    }

    let mut order: Vec<usize> = (0..specs.len()).filter(|&k| !rows[k].missing.is_empty()).collect();
    if cfg.visit_order == VisitOrder::IncreasingMissingness {
        order.sort_by_key(|&k| rows[k].missing.len());
    }

    if order.is_empty() {
        let table = ds.complete_items().expect("no missing cells");
        return Ok(ImputationResult {
            completed: vec![table; cfg.m],
            observed_mask,
            chain_stats: vec![ChainTrace { sweeps: Vec::new() }; cfg.m],
            warnings: Vec::new(),
        });
    }

    let base = standardize_columns(&build_imputation_covariates(ds));
    let outputs: Vec<ChainOutput> = (0..cfg.m)
        .into_par_iter()
        .map(|m| run_chain(ds, cfg, m, &base, &order, &rows))
        .collect();

    let mut completed = Vec::with_capacity(cfg.m);
    let mut chain_stats = Vec::with_capacity(cfg.m);
    let mut warnings = Vec::new();
    for out in outputs {
        completed.push(out.table);
        chain_stats.push(out.trace);
        warnings.extend(out.warnings);
    }
    Ok(ImputationResult {
        completed,
        observed_mask,
        chain_stats,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemCategoryReport {
    pub name: String,
    pub pct_missing: f64,
    /// Relative frequencies among observed answers.
    pub observed: Vec<f64>,
    /// Relative frequencies in the completed tables, averaged over imputations.
    pub mi_average: Vec<f64>,
}

/// Observed versus imputation-averaged category frequencies per item.
pub fn mi_category_report(res: &ImputationResult, ds: &HierarchicalDataset) -> Vec<ItemCategoryReport> {
    ds.item_specs()
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let n_missing = ds.level2().iter().filter(|r| r.items[k].is_none()).count();
            let observed = item_frequencies(ds.level2().iter().filter_map(|r| r.items[k]), spec.n_categories).1;
            let mut mi_average = vec![0.0; spec.n_categories as usize];
            for table in &res.completed {
                let f = item_frequencies(table.iter().map(|row| row[k]), spec.n_categories).1;
                for (a, b) in mi_average.iter_mut().zip(f) {
                    *a += b;
                }
            }
            let m = res.completed.len().max(1) as f64;
            mi_average.iter_mut().for_each(|a| *a /= m);
            ItemCategoryReport {
                name: spec.name.clone(),
                pct_missing: 100.0 * n_missing as f64 / ds.n_clusters() as f64,
                observed,
                mi_average,
            }
        })
        .collect()
}

/// Write each completed level-2 table as `{stem}_imp{m}.csv` (m from 1).
pub fn write_completed_tables(
    ds: &HierarchicalDataset,
    res: &ImputationResult,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(res.completed.len());
    for (m, table) in res.completed.iter().enumerate() {
        let path = dir.join(format!("{stem}_imp{}.csv", m + 1));
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_level2(ds, Some(table), "NA", f)?;
        paths.push(path);
    }
    Ok(paths)
}
