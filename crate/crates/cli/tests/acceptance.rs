//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! verdicts always reach the console.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ordmi::coding::{back_transform, build_design, collapse_report, format_group, ColumnRole, SplitCodedDesign};
use ordmi::data::{HierarchicalDataset, ItemSpec, Level1Row, Level2Row, VariableNames};
use ordmi::imputation::{mice_impute, ImputationConfig};
use ordmi::mixed_model::{fit_random_intercept, marginal_loglik};
use ordmi::pipeline::{complete_case_fit, run_pipeline, PipelineSettings};
use ordmi::pooling::{imputed_designs, refine_designs, relative_efficiency, RefineConfig};
use ordmi::regularization::{adaptive_weights, coordinate_descent_with, lambda_max, objective, pilot_ols, CdOptions};
use ordmi::simgen::{generate, MissingMechanism, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

// Tolerances.
const RE_TOL: f64 = 5e-4;
const SUM_TOL: f64 = 1e-12;
const LASSO_Q_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-6;
const OLS_TOL: f64 = 1e-6;
const ANOVA_TOL: f64 = 1e-6;
const WOODBURY_TOL: f64 = 1e-8;
const MARGINAL_TOL: f64 = 0.05;
const RECOVERY_MIN: usize = 8;
const SE_MULTIPLE: f64 = 3.0;
const BIAS_RATIO: f64 = 2.0;
/// Refinement level for the recovery scenario. With the default 0.05 each
/// noise contrast that reaches refinement survives about 5% of the time.
const RECOVERY_ALPHA: f64 = 0.01;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// 1 ---------------------------------------------------------------------------

/// (FMI, RE) pairs reported for the case study with M = 10.
const FMI_RE: &[(f64, f64)] = &[
    (0.1817, 0.9822),
    (0.0000, 1.0000),
    (0.0002, 1.0000),
    (0.0001, 1.0000),
    (0.01332, 0.9987),
    (0.1084, 0.9893),
    (0.0785, 0.9922),
    (0.0526, 0.9948),
    (0.1662, 0.9837),
    (0.1544, 0.9848),
    (0.0987, 0.9902),
    (0.1266, 0.9875),
    (0.4287, 0.9589),
    (0.4194, 0.9598),
    (0.3140, 0.9696),
    (0.4455, 0.9574),
    (0.4209, 0.9596),
    (0.4890, 0.9534),
    (0.2705, 0.9737),
    (0.3781, 0.9636),
];

fn fmi_re_identity() -> Verdict {
    let worst = FMI_RE
        .iter()
        .map(|&(fmi, re)| (relative_efficiency(fmi, 10) - re).abs())
        .fold(0.0, f64::max);
    verdict(worst <= RE_TOL, format!("{} pairs, max |RE - reported| = {worst:.2e}", FMI_RE.len()))
}

// 2 ---------------------------------------------------------------------------

fn back_transform_arithmetic() -> Verdict {
    let mut c12 = vec![0.0; 6];
    c12[3] = 0.3204; // category 5
    c12[5] = 0.2688; // category 7
    let mut c15 = vec![0.0; 6];
    c15[4] = -0.2338;
    let mut c17 = vec![0.0; 6];
    c17[3] = 0.3891;
    c17[4] = 0.3190;
    c17[5] = 0.2340;
    let mut c27 = vec![0.0; 6];
    c27[1] = -0.2974;
    let dummy = back_transform(&[c12, c15, c17, c27]);
    let top = dummy.gamma[0][6];
    let groups: Vec<String> = collapse_report(&dummy)
        .iter()
        .map(|g| g.iter().map(|x| format_group(x)).collect::<Vec<_>>().join(" "))
        .collect();
    let expected = [
        "{1,2,3,4} {5,6} {7}",
        "{1,2,3,4,5} {6,7}",
        "{1,2,3,4} {5} {6} {7}",
        "{1,2} {3,4,5,6,7}",
    ];
    let ok_sum = (top - 0.5892).abs() <= SUM_TOL;
    let ok_groups = groups.iter().zip(expected).all(|(g, e)| g == e);
    verdict(
        ok_sum && ok_groups,
        format!("top-vs-baseline {top:.12}; groups {}", groups.join(" | ")),
    )
}

// 3 ---------------------------------------------------------------------------

fn design_width() -> Verdict {
    let specs: Vec<ItemSpec> = (1..=20).map(|k| ItemSpec::ordinal(format!("q{k}"), 7)).collect();
    let mut level1 = Vec::new();
    let mut level2 = Vec::new();
    for j in 0..10 {
        let id = format!("c{j}");
        for i in 0..3 {
            level1.push(Level1Row {
                cluster_id: id.clone(),
                response: (i + j) as f64,
                covariates: vec![],
            });
        }
        level2.push(Level2Row {
            cluster_id: id,
            full_covariates: vec![],
            items: (0..20).map(|k| Some(((j + k) % 7 + 1) as u8)).collect(),
            cluster_size: 0,
        });
    }
    let names = VariableNames {
        cluster: "id".into(),
        response: "y".into(),
        x: vec![],
        z: vec![],
    };
    let ds = HierarchicalDataset::new(level1, level2, specs, names).expect("valid dataset");
    let design = build_design(&ds, &ds.complete_items().unwrap()).expect("design");
    let p = design.p_penalized();
    verdict(p == 120, format!("{p} contrast columns for 20 seven-point items"))
}

// 4, 5 ------------------------------------------------------------------------

/// Small split-coded problem: intercept (+ optional covariate) unpenalized,
/// contrasts of one ordinal item penalized.
fn tiny_instance(rng: &mut ChaCha20Rng) -> (SplitCodedDesign, Vec<f64>) {
    let n = rng.random_range(12..=40);
    let n_unpen = rng.random_range(1..=2);
    let n_pen = rng.random_range(1..=(6 - n_unpen).min(4));
    let effects: Vec<f64> = (0..n_pen).map(|_| if rng.random_bool(0.5) { rng.random_range(-1.5..1.5) } else { 0.0 }).collect();
    let mut data = Vec::with_capacity(n * (n_unpen + n_pen));
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let code = rng.random_range(1..=(n_pen + 1));
        let x: f64 = rng.random_range(-1.0..1.0);
        let mut yi = 0.3 + 0.7 * x + rng.random_range(-1.0..1.0);
        data.push(1.0);
        if n_unpen == 2 {
            data.push(x);
        }
        for (c, effect) in effects.iter().enumerate() {
            let v = f64::from(u8::from(code >= c + 2));
            data.push(v);
            yi += effect * v;
        }
        y.push(yi);
    }
    let p = n_unpen + n_pen;
    let columns: Vec<ColumnRole> = (0..p)
        .map(|j| match j {
            0 => ColumnRole::Intercept,
            j if j < n_unpen => ColumnRole::X(0),
            j => ColumnRole::Contrast {
                item: 0,
                category: (j - n_unpen + 2) as u8,
            },
        })
        .collect();
    let design = SplitCodedDesign {
        matrix: DMatrix::from_row_slice(n, p, &data),
        penalized: columns.iter().map(ColumnRole::is_penalized).collect(),
        names: (0..p).map(|j| format!("c{j}")).collect(),
        columns,
    };
    (design, y)
}

/// Minimum of the criterion over every sign pattern of the penalized block:
/// on a fixed pattern the criterion is a smooth quadratic whose stationary
/// point solves a linear system; patterns whose solution disagrees in sign
/// are discarded.
fn enumeration_oracle(d: &SplitCodedDesign, y: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let p = d.n_cols();
    let pen: Vec<usize> = (0..p).filter(|&j| d.penalized[j]).collect();
    let xtx = d.matrix.transpose() * &d.matrix;
    let xty = d.matrix.transpose() * DVector::from_column_slice(y);
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(pen.len() as u32) {
        let mut sign = vec![0.0; p];
        let mut c = code;
        for &j in &pen {
            sign[j] = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let free: Vec<usize> = (0..p).filter(|&j| !d.penalized[j] || sign[j] != 0.0).collect();
        let mut beta = vec![0.0; p];
        let a = xtx.select_rows(&free).select_columns(&free);
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| xty[j] - 0.5 * lambda * w[j] * sign[j]));
        let Some(sol) = a.full_piv_lu().solve(&rhs) else {
            continue;
        };
        for (k, &j) in free.iter().enumerate() {
            beta[j] = sol[k];
        }
        if pen.iter().any(|&j| sign[j] != 0.0 && beta[j] * sign[j] <= 0.0) {
            continue;
        }
        best = best.min(objective(d, y, lambda, w, &beta));
    }
    best
}

fn kkt_from_residuals(d: &SplitCodedDesign, y: &[f64], lambda: f64, w: &[f64], beta: &[f64]) -> f64 {
    let b = DVector::from_column_slice(beta);
    let r = DVector::from_column_slice(y) - &d.matrix * &b;
    let g = d.matrix.transpose() * r;
    (0..d.n_cols())
        .map(|j| {
            let t = if d.penalized[j] { 0.5 * lambda * w[j] } else { 0.0 };
            if beta[j] == 0.0 {
                (g[j].abs() - t).max(0.0)
            } else {
                (g[j] - t * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_oracle() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (mut worst_q, mut worst_kkt, mut cases) = (0.0_f64, 0.0_f64, 0);
    let mut all_converged = true;
    for _ in 0..25 {
        let (d, y) = tiny_instance(&mut rng);
        let w = adaptive_weights(&pilot_ols(&d, &y).unwrap(), &d, 1e6);
        let lmax = lambda_max(&d, &y, &w).unwrap();
        for frac in [0.0, 0.02, 0.2, 0.6, 1.1] {
            let lambda = frac * lmax;
            let sol = coordinate_descent_with(&d, &y, lambda, &w, None, &CdOptions::default()).unwrap();
            all_converged &= sol.converged;
            let q = objective(&d, &y, lambda, &w, &sol.coefficients);
            let q_star = enumeration_oracle(&d, &y, lambda, &w);
            worst_q = worst_q.max(q - q_star);
            worst_kkt = worst_kkt.max(kkt_from_residuals(&d, &y, lambda, &w, &sol.coefficients));
            cases += 1;
        }
    }
    verdict(
        all_converged && worst_q <= LASSO_Q_TOL && worst_kkt <= KKT_TOL,
        format!("{cases} cases on 25 instances; max Q - Q* = {worst_q:.2e}, max KKT violation = {worst_kkt:.2e}"),
    )
}

fn unpenalized_limit() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut worst_ols, mut nonzero_above) = (0.0_f64, 0usize);
    for _ in 0..20 {
        let (d, y) = tiny_instance(&mut rng);
        let ols = pilot_ols(&d, &y).unwrap();
        let w = adaptive_weights(&ols, &d, 1e6);
        let sol = coordinate_descent_with(&d, &y, 0.0, &w, None, &CdOptions::default()).unwrap();
        for (a, b) in ols.iter().zip(&sol.coefficients) {
            worst_ols = worst_ols.max((a - b).abs());
        }
        let lmax = lambda_max(&d, &y, &w).unwrap();
        for lambda in [lmax, 2.0 * lmax] {
            let sol = coordinate_descent_with(&d, &y, lambda, &w, None, &CdOptions::default()).unwrap();
            nonzero_above += sol
                .coefficients
                .iter()
                .zip(&d.penalized)
                .filter(|(&b, &p)| p && b != 0.0)
                .count();
        }
    }
    verdict(
        worst_ols <= OLS_TOL && nonzero_above == 0,
        format!("max |lambda=0 - OLS| = {worst_ols:.2e}; nonzero penalized at lambda >= lambda_max: {nonzero_above}"),
    )
}

// 6 ---------------------------------------------------------------------------

fn mixed_model_oracle() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut worst_ml = 0.0_f64;
    let mut fits = 0;
    for rep in 0..5 {
        let (j, m) = (20 + 5 * rep, 4 + rep);
        let mut y = Vec::new();
        let mut g = Vec::new();
        for c in 0..j {
            let u: f64 = 1.2 * (rng.random::<f64>() - 0.5) * 3.0;
            for _ in 0..m {
                y.push(1.0 + u + 2.0 * (rng.random::<f64>() - 0.5));
                g.push(c);
            }
        }
        // One-way ANOVA moments.
        let grand = y.iter().sum::<f64>() / y.len() as f64;
        let (mut ssw, mut ssb) = (0.0, 0.0);
        for c in 0..j {
            let ys = &y[c * m..(c + 1) * m];
            let mean = ys.iter().sum::<f64>() / m as f64;
            ssw += ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            ssb += m as f64 * (mean - grand).powi(2);
        }
        let s2e = ssw / (j * (m - 1)) as f64;
        let s2u = (ssb / j as f64 - s2e) / m as f64;
        assert!(s2u > 0.0, "oracle needs an interior optimum");
        let x = DMatrix::from_element(j * m, 1, 1.0);
        let fit = fit_random_intercept(&x, &y, &g).unwrap();
        worst_ml = worst_ml
            .max((fit.fixed_effects[0] - grand).abs())
            .max((fit.sigma2_e - s2e).abs())
            .max((fit.sigma2_u - s2u).abs());
        fits += 1;
    }

    let mut worst_ll = 0.0_f64;
    for _ in 0..10 {
        let n: usize = rng.random_range(10..=50);
        let n_groups = rng.random_range(2..=8);
        let groups: Vec<usize> = (0..n).map(|i| if i < n_groups { i } else { rng.random_range(0..n_groups) }).collect();
        let x = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta = [0.2, -0.4, 0.9];
        let (s2e, s2u) = (rng.random_range(0.2..2.0), rng.random_range(0.0..2.0));
        let fast = marginal_loglik(&x, &y, &groups, &beta, s2e, s2u).unwrap();
        let mut v = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if groups[a] == groups[b] {
                    v[(a, b)] = s2u + if a == b { s2e } else { 0.0 };
                }
            }
        }
        let r = DVector::from_column_slice(&y) - &x * DVector::from_column_slice(&beta);
        let chol = v.cholesky().unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dense = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + r.dot(&chol.solve(&r)));
        worst_ll = worst_ll.max((fast - dense).abs());
    }
    verdict(
        worst_ml <= ANOVA_TOL && worst_ll <= WOODBURY_TOL,
        format!("{fits} balanced fits, max |ML - ANOVA| = {worst_ml:.2e}; max |Woodbury - dense| loglik = {worst_ll:.2e}"),
    )
}

// 7 ---------------------------------------------------------------------------

fn imputation_correctness() -> Verdict {
    let mut cfg = SimConfig {
        n_clusters: 1000,
        mechanism: MissingMechanism::Mcar,
        seed: 7,
        ..SimConfig::default()
    };
    for it in &mut cfg.items {
        it.missing_rate = 0.4;
    }
    let sim = generate(&cfg).unwrap();
    let ds = &sim.dataset;
    let res = mice_impute(
        ds,
        &ImputationConfig {
            m: 10,
            seed: 7,
            ..ImputationConfig::default()
        },
    )
    .unwrap();
    let mut altered = 0usize;
    let mut checked = 0usize;
    for table in &res.completed {
        for (j, row) in ds.level2().iter().enumerate() {
            for (k, cell) in row.items.iter().enumerate() {
                if let Some(v) = cell {
                    checked += 1;
                    altered += usize::from(table[j][k] != *v);
                }
            }
        }
    }
    let mut worst = 0.0_f64;
    for (k, spec) in ds.item_specs().iter().enumerate() {
        let c = spec.n_categories as usize;
        let mut observed = vec![0.0; c];
        let mut n_obs = 0.0;
        for row in ds.level2() {
            if let Some(v) = row.items[k] {
                observed[v as usize - 1] += 1.0;
                n_obs += 1.0;
            }
        }
        let mut completed = vec![0.0; c];
        for table in &res.completed {
            for row in table {
                completed[row[k] as usize - 1] += 1.0;
            }
        }
        let total = (res.completed.len() * ds.n_clusters()) as f64;
        for i in 0..c {
            worst = worst.max((observed[i] / n_obs - completed[i] / total).abs());
        }
    }
    verdict(
        altered == 0 && worst <= MARGINAL_TOL,
        format!("{checked} observed cells checked, {altered} altered; max marginal gap = {worst:.4}"),
    )
}

// 8, 9 ------------------------------------------------------------------------

struct Replication {
    seed: u64,
    retained: Vec<String>,
    selection_ok: bool,
    estimates_ok: bool,
    /// Per true contrast: (MICE estimate, listwise estimate, truth).
    effects: Vec<(f64, f64, f64)>,
}

fn replication(seed: u64) -> Replication {
    let sim = generate(&SimConfig {
        seed,
        ..SimConfig::default()
    })
    .unwrap();
    let ds = &sim.dataset;
    let truth: Vec<(ColumnRole, f64)> = sim
        .truth
        .contrasts
        .iter()
        .enumerate()
        .flat_map(|(item, cs)| {
            cs.iter().enumerate().filter(|(_, &v)| v != 0.0).map(move |(c, &v)| {
                (
                    ColumnRole::Contrast {
                        item,
                        category: c as u8 + 2,
                    },
                    v,
                )
            })
        })
        .collect();
    let signal_items: Vec<usize> = (0..ds.n_items()).filter(|&k| sim.truth.contrasts[k].iter().any(|&v| v != 0.0)).collect();

    let settings = PipelineSettings {
        imputation: ImputationConfig {
            seed,
            ..ImputationConfig::default()
        },
        refine: RefineConfig {
            alpha: RECOVERY_ALPHA,
            ..RefineConfig::default()
        },
        ..PipelineSettings::default()
    };
    let run = run_pipeline(ds, &settings);
    let refine = run.refine.as_ref().expect("pipeline completes");
    let retained = refine.retained_contrasts();
    let item_of = |r: &ColumnRole| match r {
        ColumnRole::Contrast { item, .. } => *item,
        _ => unreachable!(),
    };
    let selection_ok = signal_items.iter().all(|k| retained.iter().any(|r| item_of(r) == *k))
        && retained.iter().all(|r| signal_items.contains(&item_of(r)));

    let mut estimates_ok = true;
    let mut model = retained.clone();
    for (role, _) in &truth {
        if !model.contains(role) {
            model.push(*role);
        }
    }
    // MICE estimates in the final model, or in the final model augmented by
    // the true contrasts when one of them was dropped.
    let pooled_in = |columns: &[ColumnRole]| {
        let designs = imputed_designs(ds, run.imputation.as_ref().unwrap()).unwrap();
        let cfg = RefineConfig {
            alpha: 1.0 - 1e-12,
            max_rounds: 1,
        };
        refine_designs(&designs, &ds.responses(), ds.cluster_of_row(), columns, &cfg).unwrap()
    };
    let augmented;
    let mice = if model.len() == retained.len() {
        refine
    } else {
        augmented = pooled_in(&model);
        &augmented
    };
    let (cc_design, cc_fit) = complete_case_fit(ds, &model).unwrap();

    let mut effects = Vec::new();
    for (role, value) in &truth {
        match refine.columns.iter().position(|c| c == role) {
            Some(j) => {
                let p = &refine.pooled[j];
                estimates_ok &= (p.estimate - value).abs() <= SE_MULTIPLE * p.se;
            }
            None => estimates_ok = false,
        }
        let jm = mice.columns.iter().position(|c| c == role).unwrap();
        let jl = cc_design.column_of(*role).unwrap();
        effects.push((mice.pooled[jm].estimate, cc_fit.fixed_effects[jl], *value));
    }
    let retained = refine
        .names
        .iter()
        .zip(&refine.columns)
        .filter(|(_, c)| c.is_penalized())
        .map(|(n, _)| n.clone())
        .collect();
    Replication {
        seed,
        retained,
        selection_ok,
        estimates_ok,
        effects,
    }
}

fn recovery(reps: &[Replication]) -> Verdict {
    let sel = reps.iter().filter(|r| r.selection_ok).count();
    let est = reps.iter().filter(|r| r.estimates_ok).count();
    let both = reps.iter().filter(|r| r.selection_ok && r.estimates_ok).count();
    for r in reps.iter().filter(|r| !(r.selection_ok && r.estimates_ok)) {
        println!("    seed {} missed: retained [{}]", r.seed, r.retained.join(", "));
    }
    verdict(
        both >= RECOVERY_MIN,
        format!(
            "{both}/{} replications with exact item recovery and true steps within {SE_MULTIPLE} pooled SE (selection {sel}, estimates {est}; alpha {RECOVERY_ALPHA})",
            reps.len()
        ),
    )
}

fn mar_vs_listwise(reps: &[Replication]) -> Verdict {
    // The first true effect is the one judged; the rest are reported.
    let n = reps.len() as f64;
    let mut ratios = Vec::new();
    let mut parts = Vec::new();
    for e in 0..reps[0].effects.len() {
        let bias_mi = reps.iter().map(|r| r.effects[e].0 - r.effects[e].2).sum::<f64>() / n;
        let bias_cc = reps.iter().map(|r| r.effects[e].1 - r.effects[e].2).sum::<f64>() / n;
        ratios.push(bias_cc.abs() / bias_mi.abs());
        parts.push(format!("effect {}: bias MI {bias_mi:+.4}, listwise {bias_cc:+.4}, ratio {:.2}", e + 1, ratios[e]));
    }
    verdict(ratios[0] >= BIAS_RATIO, parts.join("; "))
}

// 10 --------------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_ordmi");
    let sim_dir = dir.path().join("sim");
    let ok = Command::new(exe)
        .args(["simulate", "--seed", "3", "--out"])
        .arg(&sim_dir)
        .status()
        .unwrap()
        .success();
    if !ok {
        return verdict(false, "simulate failed");
    }
    let run = |threads: &str, out: &Path| {
        Command::new(exe)
            .args(["--threads", threads, "run", "--config"])
            .arg(sim_dir.join("run.toml"))
            .arg("--out")
            .arg(out)
            .output()
            .unwrap()
            .status
            .success()
    };
    let outs: Vec<_> = ["1", "4", "4"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let out = dir.path().join(format!("run{i}"));
            (run(t, &out), out)
        })
        .collect();
    if outs.iter().any(|(ok, _)| !ok) {
        return verdict(false, "a run failed");
    }
    let read = |p: &Path, f: &str| std::fs::read(p.join(f)).unwrap();
    let tables = ["pooled_estimates.csv", "selection_frequency.csv", "variance_summary.csv", "level2_imp10.csv"];
    let same = tables
        .iter()
        .all(|f| outs.iter().all(|(_, o)| read(o, f) == read(&outs[0].1, f)));
    verdict(same, format!("runs at --threads 1, 4, 4 compared on {}", tables.join(", ")))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        println!(
            "acceptance {id:>2} {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    };
    report(1, "FMI to RE identity", &fmi_re_identity);
    report(2, "back-transform and collapsing", &back_transform_arithmetic);
    report(3, "design width", &design_width);
    report(4, "lasso against enumeration oracle", &lasso_oracle);
    report(5, "unpenalized limits", &unpenalized_limit);
    report(6, "mixed model against closed forms", &mixed_model_oracle);
    report(7, "imputation correctness", &imputation_correctness);
    let t = Instant::now();
    let reps: Vec<Replication> = (1..=10).map(replication).collect();
    println!("(10 simulated replications in {:.1}s)", t.elapsed().as_secs_f64());
    report(8, "end-to-end recovery", &|| recovery(&reps));
    report(9, "MAR bias against listwise deletion", &|| mar_vs_listwise(&reps));
    report(10, "determinism across thread counts", &determinism);
    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria FAILED");
        ExitCode::FAILURE
    }
}
