//! Combining estimates across imputations, selection frequencies, and the
//! backward refinement of the retained contrasts.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::coding::{build_design, ColumnRole, SplitCodedDesign};
use crate::data::HierarchicalDataset;
use crate::error::{Error, Result};
use crate::imputation::ImputationResult;
use crate::mixed_model::{fit_random_intercept, MixedModelFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledParameter {
    pub estimate: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub se: f64,
    /// Degrees of freedom of the reference t distribution; infinite when the
    /// between-imputation variance vanishes.
    pub df: f64,
    pub p_value: f64,
    /// Fraction of missing information.
    pub fmi: f64,
    /// Relative efficiency of `m` imputations against infinitely many.
    pub re: f64,
}

pub fn fraction_missing_information(between: f64, total: f64, m: usize) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    (between + between / m as f64) / total
}

pub fn relative_efficiency(fmi: f64, m: usize) -> f64 {
    1.0 / (1.0 + fmi / m as f64)
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    // Beyond ~1e7 degrees of freedom the t tail is the normal tail to double
    // precision, and the t CDF loses accuracy there.
    let tail = if df > 1e7 {
        Normal::standard().sf(t.abs())
    } else {
        match StudentsT::new(0.0, 1.0, df) {
            Ok(d) => d.sf(t.abs()),
            Err(_) => return f64::NAN,
        }
    };
    if tail.is_nan() {
        return f64::NAN;
    }
    (2.0 * tail).min(1.0)
}

/// Rubin's rules for one scalar parameter.
pub fn pool_scalar(estimates: &[f64], ses: &[f64]) -> Result<PooledParameter> {
    let m = estimates.len();
    if m < 2 || ses.len() != m {
        return Err(Error::InvalidArgument(format!(
            "pooling needs at least 2 imputations with matching standard errors (got {m} estimates, {} SEs)",
            ses.len()
        )));
    }
    if estimates.iter().chain(ses).any(|v| !v.is_finite()) || ses.iter().any(|&s| s < 0.0) {
        return Err(Error::Numerical("pooling: non-finite estimate or standard error".into()));
    }
    let mf = m as f64;
    let estimate = estimates.iter().sum::<f64>() / mf;
    let within = ses.iter().map(|s| s * s).sum::<f64>() / mf;
    let between = estimates.iter().map(|e| (e - estimate).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + between + between / mf;
    let se = total.sqrt();
    let df = if between == 0.0 {
        f64::INFINITY
    } else {
        (mf - 1.0) * (1.0 + within * mf / ((mf + 1.0) * between)).powi(2)
    };
    let p_value = if se == 0.0 {
        if estimate == 0.0 { 1.0 } else { 0.0 }
    } else {
        two_sided_p(estimate / se, df)
    };
    let fmi = fraction_missing_information(between, total, m);
    Ok(PooledParameter {
        estimate,
        within,
        between,
        total,
        se,
        df,
        p_value,
        fmi,
        re: relative_efficiency(fmi, m),
    })
}

/// Rubin's rules applied parameter-wise; `estimates[m][k]` is parameter `k`
/// in imputation `m`.
pub fn rubin_pool(estimates: &[Vec<f64>], ses: &[Vec<f64>]) -> Result<Vec<PooledParameter>> {
    if estimates.len() != ses.len() {
        return Err(Error::InvalidArgument("estimate and SE tables differ in length".into()));
    }
    let k = estimates.first().map_or(0, Vec::len);
    if estimates.iter().chain(ses).any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("ragged estimate table".into()));
    }
    (0..k)
        .map(|j| {
            let e: Vec<f64> = estimates.iter().map(|r| r[j]).collect();
            let s: Vec<f64> = ses.iter().map(|r| r[j]).collect();
            pool_scalar(&e, &s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionSummary {
    pub m: usize,
    /// Times each column was selected.
    pub counts: Vec<usize>,
    pub retained: Vec<bool>,
    pub k_percent: f64,
}

impl SelectionSummary {
    pub fn fraction(&self, j: usize) -> f64 {
        self.counts[j] as f64 / self.m as f64
    }
}

/// Keep a column when it is selected in at least `k%` of the imputations
/// (and at least once).
pub fn threshold_selection(active: &[Vec<bool>], k_percent: f64) -> Result<SelectionSummary> {
    if !(0.0..=100.0).contains(&k_percent) {
        return Err(Error::InvalidArgument(format!("k must be in 0..=100, got {k_percent}")));
    }
    let m = active.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no selection results".into()));
    }
    let p = active[0].len();
    if active.iter().any(|a| a.len() != p) {
        return Err(Error::InvalidArgument("selection vectors differ in length".into()));
    }
    let counts: Vec<usize> = (0..p).map(|j| active.iter().filter(|a| a[j]).count()).collect();
    let retained = counts
        .iter()
        .map(|&c| c >= 1 && (c * 100) as f64 >= k_percent * m as f64)
        .collect();
    Ok(SelectionSummary {
        m,
        counts,
        retained,
        k_percent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub alpha: f64,
    pub max_rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedContrast {
    pub round: usize,
    pub name: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineResult {
    /// Columns of the final model in design order.
    pub columns: Vec<ColumnRole>,
    pub names: Vec<String>,
    pub pooled: Vec<PooledParameter>,
    /// Final fit per imputation.
    #[serde(skip)]
    pub fits: Vec<MixedModelFit>,
    pub pooled_sigma2_u: f64,
    pub pooled_sigma2_e: f64,
    pub rounds: usize,
    pub dropped: Vec<DroppedContrast>,
    /// Stopped because `max_rounds` was reached with candidates left to drop.
    pub hit_round_limit: bool,
}

impl RefineResult {
    pub fn retained_contrasts(&self) -> Vec<ColumnRole> {
        self.columns.iter().copied().filter(ColumnRole::is_penalized).collect()
    }
}

/// Fit the mixed model on each design in parallel; any failure is reported
/// with its (1-based) imputation number.
pub fn fit_each(designs: &[SplitCodedDesign], y: &[f64], groups: &[usize], round: usize) -> Result<Vec<MixedModelFit>> {
    designs
        .par_iter()
        .enumerate()
        .map(|(m, d)| {
            let fail = |reason: String| Error::ImputationFit {
                imputation: m + 1,
                round,
                reason,
            };
            let fit = fit_random_intercept(&d.matrix, y, groups).map_err(|e| fail(e.to_string()))?;
            if !fit.converged {
                return Err(fail("variance-component optimisation did not converge".into()));
            }
            Ok(fit)
        })
        .collect()
}

/// Backward elimination: refit on every completed dataset, pool, and drop
/// the single contrast with the largest pooled p-value above `alpha`.
/// Unpenalized columns always stay.
pub fn refine_designs(
    designs: &[SplitCodedDesign],
    y: &[f64],
    groups: &[usize],
    initial: &[ColumnRole],
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    if designs.len() < 2 {
        return Err(Error::InvalidArgument("refinement needs at least 2 imputations".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {}", cfg.alpha)));
    }
    let mut current: Vec<ColumnRole> = initial.iter().copied().filter(ColumnRole::is_penalized).collect();
    let mut dropped = Vec::new();
    let mut round = 0;
    loop {
        round += 1;
        let restricted: Vec<SplitCodedDesign> = designs.iter().map(|d| d.restrict_to_contrasts(&current)).collect();
        let fits = fit_each(&restricted, y, groups, round)?;
        let est: Vec<Vec<f64>> = fits.iter().map(|f| f.fixed_effects.clone()).collect();
        let ses: Vec<Vec<f64>> = fits.iter().map(|f| f.se.clone()).collect();
        let pooled = rubin_pool(&est, &ses)?;
        let layout = &restricted[0];

        let worst = (0..layout.n_cols())
            .filter(|&j| layout.penalized[j] && pooled[j].p_value > cfg.alpha)
            .max_by(|&a, &b| pooled[a].p_value.total_cmp(&pooled[b].p_value).then(b.cmp(&a)));

        let finish = |hit_round_limit| {
            let mf = fits.len() as f64;
            RefineResult {
                columns: layout.columns.clone(),
                names: layout.names.clone(),
                pooled_sigma2_u: fits.iter().map(|f| f.sigma2_u).sum::<f64>() / mf,
                pooled_sigma2_e: fits.iter().map(|f| f.sigma2_e).sum::<f64>() / mf,
                pooled: pooled.clone(),
                fits: fits.clone(),
                rounds: round,
                dropped: dropped.clone(),
                hit_round_limit,
            }
        };
        match worst {
            None => return Ok(finish(false)),
            Some(_) if round >= cfg.max_rounds => {
                log::warn!("refinement stopped after {} rounds with non-significant contrasts left", cfg.max_rounds);
                return Ok(finish(true));
            }
            Some(j) => {
                let role = layout.columns[j];
                log::info!("round {round}: dropping {} (p = {:.4})", layout.names[j], pooled[j].p_value);
                dropped.push(DroppedContrast {
                    round,
                    name: layout.names[j].clone(),
                    p_value: pooled[j].p_value,
                });
                current.retain(|r| *r != role);
            }
        }
    }
}

/// Design matrices for every completed dataset.
pub fn imputed_designs(ds: &HierarchicalDataset, imputations: &ImputationResult) -> Result<Vec<SplitCodedDesign>> {
    imputations.completed.par_iter().map(|t| build_design(ds, t)).collect()
}

pub fn refine_loop(
    ds: &HierarchicalDataset,
    imputations: &ImputationResult,
    initial: &[ColumnRole],
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    let designs = imputed_designs(ds, imputations)?;
    refine_designs(&designs, &ds.responses(), ds.cluster_of_row(), initial, cfg)
}
