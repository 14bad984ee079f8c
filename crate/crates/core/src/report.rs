//! Output tables and the run manifest.
//!
//! | file | columns |
//! |---|---|
//! | `pooled_estimates.csv` | parameter, coefficient, se, df, p_value, fmi, re |
//! | `selection_frequency.csv` | parameter, selected, m, fraction, retained |
//! | `refinement.csv` | round, dropped, p_value |
//! | `variance_summary.csv` | model, n_fixed, sigma2_u, sigma2_e, pct_vs_null, pct_vs_previous |
//! | `mi_category_report.csv` | item, category, pct_missing, observed, mi_average |
//! | `coefficient_profiles.csv` | item, category, gamma, group |
//! | `lasso_paths/imputation_{m}.csv` | lambda, s, rss, ebic, converged |
//! | `variables.csv` | variable, level, count, mean, sd, min, max |
//! | `item_frequencies.csv` | item, category, count, frequency, pct_missing |
//!
//! Numbers are written in shortest round-trip form, so identical runs give
//! identical bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{DescriptiveReport, Level};
use crate::error::{Error, Result};
use crate::imputation::ItemCategoryReport;
use crate::pipeline::{PipelineRun, PipelineSettings, ProfileRow, VarianceRow};
use crate::pooling::{RefineResult, SelectionSummary};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_pooled_estimates(path: &Path, refine: &RefineResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "coefficient", "se", "df", "p_value", "fmi", "re"])?;
    for (name, p) in refine.names.iter().zip(&refine.pooled) {
        w.write_record([name.clone(), num(p.estimate), num(p.se), num(p.df), num(p.p_value), num(p.fmi), num(p.re)])?;
    }
    finish(w, path)
}

/// Penalized columns only.
pub fn write_selection_frequency(path: &Path, names: &[String], penalized: &[bool], sel: &SelectionSummary) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "selected", "m", "fraction", "retained"])?;
    for j in (0..names.len()).filter(|&j| penalized[j]) {
        w.write_record([
            names[j].clone(),
            sel.counts[j].to_string(),
            sel.m.to_string(),
            num(sel.fraction(j)),
            sel.retained[j].to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_refinement(path: &Path, refine: &RefineResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["round", "dropped", "p_value"])?;
    for d in &refine.dropped {
        w.write_record([d.round.to_string(), d.name.clone(), num(d.p_value)])?;
    }
    finish(w, path)
}

pub fn write_variance_summary(path: &Path, rows: &[VarianceRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["model", "n_fixed", "sigma2_u", "sigma2_e", "pct_vs_null", "pct_vs_previous"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.n_fixed.to_string(),
            num(r.sigma2_u),
            num(r.sigma2_e),
            num(r.pct_vs_null),
            num(r.pct_vs_previous),
        ])?;
    }
    finish(w, path)
}

pub fn write_category_report(path: &Path, report: &[ItemCategoryReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["item", "category", "pct_missing", "observed", "mi_average"])?;
    for item in report {
        for (c, (o, m)) in item.observed.iter().zip(&item.mi_average).enumerate() {
            w.write_record([item.name.clone(), (c + 1).to_string(), num(item.pct_missing), num(*o), num(*m)])?;
        }
    }
    finish(w, path)
}

pub fn write_profiles(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["item", "category", "gamma", "group"])?;
    for r in rows {
        w.write_record([r.item.clone(), r.category.to_string(), num(r.gamma), r.group.clone()])?;
    }
    finish(w, path)
}

pub fn write_descriptives(dir: &Path, report: &DescriptiveReport) -> Result<Vec<PathBuf>> {
    let vars = dir.join("variables.csv");
    let mut w = writer(&vars)?;
    w.write_record(["variable", "level", "count", "mean", "sd", "min", "max"])?;
    for v in &report.variables {
        let level = match v.level {
            Level::One => "1",
            Level::Two => "2",
        };
        w.write_record([
            v.name.clone(),
            level.to_string(),
            v.count.to_string(),
            num(v.mean),
            num(v.sd),
            num(v.min),
            num(v.max),
        ])?;
    }
    finish(w, &vars)?;
    let items = dir.join("item_frequencies.csv");
    let mut w = writer(&items)?;
    w.write_record(["item", "category", "count", "frequency", "pct_missing"])?;
    for it in &report.items {
        for (c, (n, f)) in it.counts.iter().zip(&it.frequencies).enumerate() {
            w.write_record([it.name.clone(), (c + 1).to_string(), n.to_string(), num(*f), num(it.pct_missing)])?;
        }
    }
    finish(w, &items)?;
    Ok(vec![vars, items])
}

pub fn describe_text(report: &DescriptiveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} level-1 rows in {} clusters\n", report.n, report.n_clusters);
    let _ = writeln!(s, "{:<20} {:>5} {:>10} {:>10} {:>10} {:>10}", "variable", "level", "mean", "sd", "min", "max");
    for v in &report.variables {
        let level = if v.level == Level::One { 1 } else { 2 };
        let _ = writeln!(
            s,
            "{:<20} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            v.name, level, v.mean, v.sd, v.min, v.max
        );
    }
    let _ = writeln!(s, "\n{:<20} {:>9}  category frequencies", "item", "% missing");
    for it in &report.items {
        let freqs: Vec<String> = it.frequencies.iter().map(|f| format!("{f:.3}")).collect();
        let _ = writeln!(s, "{:<20} {:>9.1}  {}", it.name, it.pct_missing, freqs.join(" "));
    }
    s
}

/// Human-readable summary of a (possibly partial) run.
pub fn summary_text(run: &PipelineRun, settings: &PipelineSettings) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "imputations: {}  burn-in: {}  seed: {}",
        settings.imputation.m, settings.imputation.burn_in, settings.imputation.seed
    );
    let _ = writeln!(
        s,
        "selection threshold: {}%  alpha: {}  max rounds: {}",
        settings.k_percent, settings.refine.alpha, settings.refine.max_rounds
    );
    if let (Some(sel), Some((cols, _))) = (&run.selection, &run.columns) {
        let total = cols.iter().filter(|c| c.is_penalized()).count();
        let kept = sel.retained.iter().filter(|&&r| r).count();
        let _ = writeln!(s, "contrasts retained after thresholding: {kept} of {total}");
    }
    if let Some(r) = &run.refine {
        let _ = writeln!(
            s,
            "refinement: {} round(s), {} contrast(s) dropped, {} retained\n",
            r.rounds,
            r.dropped.len(),
            r.retained_contrasts().len()
        );
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>9} {:>9} {:>7} {:>7}",
            "parameter", "coef", "se", "p", "FMI", "RE"
        );
        for (name, p) in r.names.iter().zip(&r.pooled) {
            let _ = writeln!(
                s,
                "{:<24} {:>10.4} {:>9.4} {:>9.4} {:>7.4} {:>7.4}",
                name, p.estimate, p.se, p.p_value, p.fmi, p.re
            );
        }
    }
    if let Some(v) = &run.variance {
        let _ = writeln!(s, "\n{:<12} {:>10} {:>10} {:>9} {:>9}", "model", "sigma2_u", "sigma2_e", "%null", "%prev");
        for r in v {
            let _ = writeln!(
                s,
                "{:<12} {:>10.4} {:>10.4} {:>9.0} {:>9.0}",
                r.model, r.sigma2_u, r.sigma2_e, r.pct_vs_null, r.pct_vs_previous
            );
        }
    }
    if let Some(p) = &run.profiles {
        let _ = writeln!(s);
        let mut current = "";
        for row in p {
            if row.item != current {
                current = &row.item;
                let _ = write!(s, "\n{current}:");
            }
            let _ = write!(s, " {}={:.3}", row.category, row.gamma);
        }
        let _ = writeln!(s);
    }
    if !run.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings:");
        for w in &run.warnings {
            let _ = writeln!(s, "  {w}");
        }
    }
    if let Some(f) = &run.failure {
        let _ = writeln!(s, "\nFAILED at stage '{}': {}", f.stage, f.error);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: Option<String>,
    pub settings: Option<PipelineSettings>,
    pub n: usize,
    pub n_clusters: usize,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub retained: Vec<String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: None,
            settings: None,
            n: 0,
            n_clusters: 0,
            completed_stages: Vec::new(),
            failed_stage: None,
            error: None,
            retained: Vec::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::Data(e.to_string()))?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

/// Write every table the run produced into `dir`; returns file names
/// relative to `dir`.
pub fn write_run_outputs(dir: &Path, run: &PipelineRun, settings: &PipelineSettings, write_paths: bool) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let mut note = |name: &str| out.push(name.to_string());
    if let Some(r) = &run.category_report {
        write_category_report(&dir.join("mi_category_report.csv"), r)?;
        note("mi_category_report.csv");
    }
    if let (Some(fits), true) = (&run.selection_fits, write_paths) {
        let sub = dir.join("lasso_paths");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (m, f) in fits.iter().enumerate() {
            let name = format!("lasso_paths/imputation_{}.csv", m + 1);
            let path = dir.join(&name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.path.write_csv(file)?;
            note(&name);
        }
    }
    if let (Some(sel), Some((cols, names))) = (&run.selection, &run.columns) {
        let penalized: Vec<bool> = cols.iter().map(|c| c.is_penalized()).collect();
        write_selection_frequency(&dir.join("selection_frequency.csv"), names, &penalized, sel)?;
        note("selection_frequency.csv");
    }
    if let Some(r) = &run.refine {
        write_pooled_estimates(&dir.join("pooled_estimates.csv"), r)?;
        note("pooled_estimates.csv");
        write_refinement(&dir.join("refinement.csv"), r)?;
        note("refinement.csv");
    }
    if let Some(v) = &run.variance {
        write_variance_summary(&dir.join("variance_summary.csv"), v)?;
        note("variance_summary.csv");
    }
    if let Some(p) = &run.profiles {
        write_profiles(&dir.join("coefficient_profiles.csv"), p)?;
        note("coefficient_profiles.csv");
    }
    let summary = dir.join("summary.txt");
    fs::write(&summary, summary_text(run, settings)).map_err(|e| Error::io(&summary, e))?;
    note("summary.txt");
    Ok(out)
}
