//! The full analysis: impute, select per completed dataset, threshold the
//! selection frequencies, refine with pooled tests, summarize.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{back_transform, build_design, collapse_report, format_group, ColumnRole, SplitCodedDesign};
use crate::data::HierarchicalDataset;
use crate::error::{Error, Result};
use crate::imputation::{mi_category_report, mice_impute, ImputationConfig, ImputationResult, ItemCategoryReport};
use crate::mixed_model::{fit_random_intercept, variance_reduction, MixedModelFit};
use crate::pooling::{imputed_designs, refine_designs, threshold_selection, RefineConfig, RefineResult, SelectionSummary};
use crate::regularization::{adaptive_lasso, LassoPathFit, LassoSettings, PenaltySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub imputation: ImputationConfig,
    pub lasso: LassoSettings,
    /// Minimum selection frequency, in percent of imputations.
    pub k_percent: f64,
    pub refine: RefineConfig,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            imputation: ImputationConfig::default(),
            lasso: LassoSettings::default(),
            k_percent: 50.0,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Impute,
    Select,
    Threshold,
    Refine,
    Summarize,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Impute => "impute",
            Stage::Select => "select",
            Stage::Threshold => "threshold",
            Stage::Refine => "refine",
            Stage::Summarize => "summarize",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub model: String,
    pub n_fixed: usize,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub pct_vs_null: f64,
    pub pct_vs_previous: f64,
}

/// One category of a retained item on the dummy scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub item: String,
    pub category: u8,
    /// Effect relative to category 1.
    pub gamma: f64,
    /// Categories sharing this effect, e.g. `{1,2,3}`.
    pub group: String,
}

/// Per-imputation lasso output.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFit {
    pub penalty: PenaltySpec,
    pub path: LassoPathFit,
}

/// Whatever the run produced; later fields stay `None` after a failure.
#[derive(Debug, Default)]
pub struct PipelineRun {
    pub imputation: Option<ImputationResult>,
    pub category_report: Option<Vec<ItemCategoryReport>>,
    /// Columns and names of the full split-coded design.
    pub columns: Option<(Vec<ColumnRole>, Vec<String>)>,
    pub selection_fits: Option<Vec<SelectionFit>>,
    pub selection: Option<SelectionSummary>,
    pub refine: Option<RefineResult>,
    pub variance: Option<Vec<VarianceRow>>,
    pub profiles: Option<Vec<ProfileRow>>,
    pub warnings: Vec<String>,
    pub failure: Option<StageFailure>,
}

impl PipelineRun {
    fn fail(mut self, stage: Stage, error: Error) -> Self {
        log::error!("stage '{stage}' failed: {error}");
        self.failure = Some(StageFailure { stage, error });
        self
    }
}

/// Adaptive lasso on each completed dataset, in parallel.
pub fn select_per_imputation(designs: &[SplitCodedDesign], y: &[f64], settings: &LassoSettings) -> Result<Vec<SelectionFit>> {
    designs
        .par_iter()
        .enumerate()
        .map(|(m, d)| {
            adaptive_lasso(d, y, settings)
                .map(|(penalty, path)| SelectionFit { penalty, path })
                .map_err(|e| Error::ImputationFit {
                    imputation: m + 1,
                    round: 0,
                    reason: format!("lasso path: {e}"),
                })
        })
        .collect()
}

/// Random-intercept fits of the intercept-only model, the covariate model,
/// and the final model (pooled over imputations).
pub fn variance_summary(design: &SplitCodedDesign, y: &[f64], groups: &[usize], refine: &RefineResult) -> Result<Vec<VarianceRow>> {
    let covariates = design.restrict_to_contrasts(&[]);
    let null = covariates.select(&[0]);
    let fit_null = fit_random_intercept(&null.matrix, y, groups)?;
    let fit_cov = fit_random_intercept(&covariates.matrix, y, groups)?;
    let rows = [
        ("null", null.n_cols(), fit_null.sigma2_u, fit_null.sigma2_e),
        ("covariates", covariates.n_cols(), fit_cov.sigma2_u, fit_cov.sigma2_e),
        ("final", refine.columns.len(), refine.pooled_sigma2_u, refine.pooled_sigma2_e),
    ];
    let red = variance_reduction(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    Ok(rows
        .iter()
        .zip(red)
        .map(|(r, v)| VarianceRow {
            model: r.0.to_string(),
            n_fixed: r.1,
            sigma2_u: r.2,
            sigma2_e: r.3,
            pct_vs_null: v.pct_vs_null,
            pct_vs_previous: v.pct_vs_previous,
        })
        .collect())
}

/// Category profiles of every item with at least one retained contrast.
pub fn coefficient_profiles(ds: &HierarchicalDataset, refine: &RefineResult) -> Vec<ProfileRow> {
    let specs = ds.item_specs();
    let mut rows = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let mut tilde = vec![0.0; spec.n_categories as usize - 1];
        let mut any = false;
        for (j, role) in refine.columns.iter().enumerate() {
            if let ColumnRole::Contrast { item, category } = *role {
                if item == k {
                    tilde[category as usize - 2] = refine.pooled[j].estimate;
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        let dummy = back_transform(&[tilde]);
        let groups = &collapse_report(&dummy)[0];
        for (c, &gamma) in dummy.gamma[0].iter().enumerate() {
            let code = c as u8 + 1;
            let group = groups.iter().find(|g| g.contains(&code)).expect("every category is in a group");
            rows.push(ProfileRow {
                item: spec.name.clone(),
                category: code,
                gamma,
                group: format_group(group),
            });
        }
    }
    rows
}

/// Run every stage, stopping at the first failure.
pub fn run_pipeline(ds: &HierarchicalDataset, settings: &PipelineSettings) -> PipelineRun {
    let mut run = PipelineRun::default();

    let imputation = match mice_impute(ds, &settings.imputation) {
        Ok(r) => r,
        Err(e) => return run.fail(Stage::Impute, e),
    };
    run.warnings.extend(imputation.warnings.iter().cloned());
    run.category_report = Some(mi_category_report(&imputation, ds));

    let y = ds.responses();
    let groups = ds.cluster_of_row();
    let designs = match imputed_designs(ds, &imputation) {
        Ok(d) => d,
        Err(e) => {
            run.imputation = Some(imputation);
            return run.fail(Stage::Select, e);
        }
    };
    run.imputation = Some(imputation);
    run.columns = Some((designs[0].columns.clone(), designs[0].names.clone()));

    let fits = match select_per_imputation(&designs, &y, &settings.lasso) {
        Ok(f) => f,
        Err(e) => return run.fail(Stage::Select, e),
    };
    for (m, f) in fits.iter().enumerate() {
        let bad = f.path.converged.iter().filter(|c| !**c).count();
        if bad > 0 {
            let msg = format!("imputation {}: coordinate descent hit the sweep limit at {bad} grid points", m + 1);
            log::warn!("{msg}");
            run.warnings.push(msg);
        }
    }
    let active: Vec<Vec<bool>> = fits.iter().zip(&designs).map(|(f, d)| f.path.selected_active(d)).collect();
    run.selection_fits = Some(fits);

    let selection = match threshold_selection(&active, settings.k_percent) {
        Ok(s) => s,
        Err(e) => return run.fail(Stage::Threshold, e),
    };
    let initial: Vec<ColumnRole> = designs[0]
        .columns
        .iter()
        .zip(&selection.retained)
        .filter(|(_, &keep)| keep)
        .map(|(r, _)| *r)
        .collect();
    run.selection = Some(selection);

    let refine = match refine_designs(&designs, &y, groups, &initial, &settings.refine) {
        Ok(r) => r,
        Err(e) => return run.fail(Stage::Refine, e),
    };
    if refine.hit_round_limit {
        run.warnings.push(format!(
            "refinement stopped at the limit of {} rounds",
            settings.refine.max_rounds
        ));
    }

    match variance_summary(&designs[0], &y, groups, &refine) {
        Ok(v) => run.variance = Some(v),
        Err(e) => {
            run.refine = Some(refine);
            return run.fail(Stage::Summarize, e);
        }
    }
    run.profiles = Some(coefficient_profiles(ds, &refine));
    run.refine = Some(refine);
    run
}

/// Listwise deletion: drop every cluster with a missing item, then fit the
/// mixed model with the given contrasts.
pub fn complete_case_fit(ds: &HierarchicalDataset, contrasts: &[ColumnRole]) -> Result<(SplitCodedDesign, MixedModelFit)> {
    let cc = ds.complete_cases()?;
    let table = cc.complete_items().expect("complete cases have no missing items");
    let design = build_design(&cc, &table)?.restrict_to_contrasts(contrasts);
    let fit = fit_random_intercept(&design.matrix, &cc.responses(), cc.cluster_of_row())?;
    Ok((design, fit))
}
