//! Random-intercept linear model `y_ij = x_ij'b + u_j + e_ij` by maximum
//! likelihood.
//!
//! The likelihood is profiled over the variance ratio `tau = s2_u / s2_e`:
//! for fixed `tau` the fixed effects and `s2_e` have closed forms, and the
//! cluster-level covariance `s2_e (I + tau 11')` inverts per cluster as
//! `I - c_j 11'` with `c_j = tau / (1 + n_j tau)`. A coarse log-grid scan
//! over `tau` brackets the maximum, which is then located as the root of the
//! profile score. `tau = 0` is admissible (variance at the boundary).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;

pub const MAX_ITER: usize = 500;
pub const GRADIENT_TOL: f64 = 1e-6;
const RIDGE_JITTER: f64 = 1e-8;
const MIN_SIGMA2_E: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedModelFit {
    pub fixed_effects: Vec<f64>,
    pub se: Vec<f64>,
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub sigma2_e: f64,
    pub sigma2_u: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `s2_u` sits at zero.
    pub boundary: bool,
    /// False when every cluster has a single row and `s2_u` cannot be
    /// separated from `s2_e`.
    pub identifiable: bool,
    /// A ridge was needed to factor `X'V^-1 X`.
    pub rank_deficient: bool,
    /// Predicted random intercepts, one per cluster.
    pub blups: Vec<f64>,
    /// Derivative of the log-likelihood in `s2_u` at the returned point.
    pub gradient_sigma2_u: f64,
}

impl MixedModelFit {
    pub fn icc(&self) -> f64 {
        self.sigma2_u / (self.sigma2_u + self.sigma2_e)
    }
}

/// Data reduced to what the profile likelihood needs.
struct Suff {
    n: usize,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    sizes: Vec<f64>,
    col_sums: Vec<DVector<f64>>,
    y_sums: Vec<f64>,
}

struct Profile {
    tau: f64,
    beta: DVector<f64>,
    a_inv: DMatrix<f64>,
    sigma2_e: f64,
    loglik: f64,
    score: f64,
    jittered: bool,
}

fn validate(x: &DMatrix<f64>, y: &[f64], groups: &[usize]) -> Result<usize> {
    if x.nrows() != y.len() || groups.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "mixed model: {} design rows, {} responses, {} group labels",
            x.nrows(),
            y.len(),
            groups.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("mixed model: no observations".into()));
    }
    if x.ncols() >= y.len() {
        return Err(Error::InvalidArgument(format!(
            "mixed model: {} columns for {} observations",
            x.ncols(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("mixed model: non-finite input".into()));
    }
    let j = groups.iter().max().map_or(0, |m| m + 1);
    Ok(j)
}

impl Suff {
    fn new(x: &DMatrix<f64>, y: &[f64], groups: &[usize], n_groups: usize) -> Self {
        let p = x.ncols();
        let yv = DVector::from_column_slice(y);
        let mut sizes = vec![0.0; n_groups];
        let mut col_sums = vec![DVector::zeros(p); n_groups];
        let mut y_sums = vec![0.0; n_groups];
        for (i, &g) in groups.iter().enumerate() {
            sizes[g] += 1.0;
            y_sums[g] += y[i];
            for k in 0..p {
                col_sums[g][k] += x[(i, k)];
            }
        }
        Self {
            n: y.len(),
            gram: x.tr_mul(x),
            xty: x.tr_mul(&yv),
            yty: yv.dot(&yv),
            sizes,
            col_sums,
            y_sums,
        }
    }

    fn profile(&self, tau: f64) -> Result<Profile> {
        let mut a = self.gram.clone();
        let mut b = self.xty.clone();
        let mut q = self.yty;
        for g in 0..self.sizes.len() {
            let nj = self.sizes[g];
            if nj == 0.0 {
                continue;
            }
            let c = tau / (1.0 + nj * tau);
            if c == 0.0 {
                continue;
            }
            let s = &self.col_sums[g];
            a.ger(-c, s, s, 1.0);
            b.axpy(-c * self.y_sums[g], s, 1.0);
            q -= c * self.y_sums[g] * self.y_sums[g];
        }
        let (chol, jittered) = cholesky_with_jitter(&a, RIDGE_JITTER)
            .ok_or_else(|| Error::Numerical("mixed model: X'V^-1X cannot be factored".into()))?;
        let beta = chol.solve(&b);
        let rss = q - b.dot(&beta);
        let n = self.n as f64;
        let sigma2_e = rss / n;
        if !(sigma2_e >= MIN_SIGMA2_E) {
            return Err(Error::Numerical(format!(
                "mixed model: residual variance {sigma2_e:e} is below {MIN_SIGMA2_E:e}"
            )));
        }
        let mut logdet = 0.0;
        let mut score = 0.0;
        for g in 0..self.sizes.len() {
            let nj = self.sizes[g];
            if nj == 0.0 {
                continue;
            }
            let d = 1.0 + nj * tau;
            logdet += d.ln();
            let resid_sum = self.y_sums[g] - self.col_sums[g].dot(&beta);
            score += nj / d - resid_sum * resid_sum / (sigma2_e * d * d);
        }
        let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + sigma2_e.ln() + 1.0) - 0.5 * logdet;
        Ok(Profile {
            tau,
            a_inv: chol.inverse(),
            beta,
            sigma2_e,
            loglik,
            score: -0.5 * score,
            jittered,
        })
    }
}

/// ML fit of the random-intercept model. `groups[i]` is the cluster index
/// (0-based) of row `i`.
pub fn fit_random_intercept(x: &DMatrix<f64>, y: &[f64], groups: &[usize]) -> Result<MixedModelFit> {
    let n_groups = validate(x, y, groups)?;
    let suff = Suff::new(x, y, groups, n_groups);

    if suff.sizes.iter().all(|&s| s <= 1.0) {
        log::warn!("every cluster has one observation; random-intercept variance is not identifiable, fixing it at 0");
        let p = suff.profile(0.0)?;
        return Ok(finish(&suff, p, 0, true, false));
    }

    let mut evals = 0usize;
    let mut eval = |tau: f64| -> Result<Profile> {
        evals += 1;
        suff.profile(tau)
    };

    // Coarse scan: 0 and 10^-6 .. 10^4 in quarter decades.
    let mut grid = vec![0.0];
    grid.extend((0..=40).map(|k| 10f64.powf(-6.0 + 0.25 * k as f64)));
    let mut profiles = Vec::with_capacity(grid.len());
    for &t in &grid {
        profiles.push(eval(t)?);
    }
    let mut best = 0;
    for i in 1..profiles.len() {
        if profiles[i].loglik > profiles[best].loglik {
            best = i;
        }
    }

    if best == 0 && profiles[0].score <= 0.0 {
        let p = profiles.swap_remove(0);
        return Ok(finish(&suff, p, evals, true, true));
    }

    // Bracket the score root around the grid maximum.
    let mut lo = if best == 0 { 0 } else { best - 1 };
    while lo > 0 && profiles[lo].score <= 0.0 {
        lo -= 1;
    }
    let mut lo_p = suff.profile(grid[lo])?;
    let mut hi_p = if best + 1 < grid.len() {
        suff.profile(grid[best + 1])?
    } else {
        suff.profile(grid[best] * 10.0)?
    };
    while hi_p.score > 0.0 {
        if hi_p.tau > 1e12 {
            return Err(Error::Numerical(
                "mixed model: variance ratio diverges; residual variance is not identified".into(),
            ));
        }
        let t = hi_p.tau * 10.0;
        lo_p = hi_p;
        hi_p = eval(t)?;
    }
    if lo_p.score < 0.0 {
        // The maximum sits at the boundary after all.
        let p = suff.profile(0.0)?;
        return Ok(finish(&suff, p, evals, true, true));
    }

    // Safeguarded false position (Illinois) on the profile score.
    let mut converged = false;
    let mut best_p = if lo_p.score.abs() < hi_p.score.abs() {
        suff.profile(lo_p.tau)?
    } else {
        suff.profile(hi_p.tau)?
    };
    let mut side = 0i8;
    let (mut f_lo, mut f_hi) = (lo_p.score, hi_p.score);
    let (mut t_lo, mut t_hi) = (lo_p.tau, hi_p.tau);
    let mut prev_ll = best_p.loglik;
    for _ in 0..MAX_ITER {
        let mut t = (t_lo * f_hi - t_hi * f_lo) / (f_hi - f_lo);
        if !(t > t_lo && t < t_hi) {
            t = 0.5 * (t_lo + t_hi);
        }
        let p = eval(t)?;
        let rel = ((p.loglik - prev_ll) / prev_ll.abs().max(1.0)).abs();
        prev_ll = p.loglik;
        let grad_u = p.score / p.sigma2_e;
        let done = grad_u.abs() < GRADIENT_TOL && rel < 1e-9;
        let width_done = (t_hi - t_lo) <= 4.0 * f64::EPSILON * t_hi;
        if p.score > 0.0 {
            t_lo = t;
            f_lo = p.score;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            t_hi = t;
            f_hi = p.score;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
        best_p = p;
        if done || width_done {
            converged = (best_p.score / best_p.sigma2_e).abs() < GRADIENT_TOL;
            break;
        }
    }
    Ok(finish(&suff, best_p, evals, converged, true))
}

fn finish(suff: &Suff, p: Profile, iterations: usize, converged: bool, identifiable: bool) -> MixedModelFit {
    let covariance = &p.a_inv * p.sigma2_e;
    let se = (0..covariance.nrows()).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    let blups = (0..suff.sizes.len())
        .map(|g| {
            let nj = suff.sizes[g];
            let resid_sum = suff.y_sums[g] - suff.col_sums[g].dot(&p.beta);
            p.tau * resid_sum / (1.0 + nj * p.tau)
        })
        .collect();
    if p.jittered {
        log::warn!("mixed model design is rank deficient; a ridge of {RIDGE_JITTER:e} was added");
    }
    MixedModelFit {
        fixed_effects: p.beta.iter().copied().collect(),
        se,
        covariance,
        sigma2_e: p.sigma2_e,
        sigma2_u: p.tau * p.sigma2_e,
        loglik: p.loglik,
        converged,
        iterations,
        boundary: p.tau == 0.0,
        identifiable,
        rank_deficient: p.jittered,
        blups,
        gradient_sigma2_u: p.score / p.sigma2_e,
    }
}

/// Marginal log-likelihood at arbitrary parameters, evaluated cluster by
/// cluster through the closed-form inverse and determinant of
/// `s2_e I + s2_u 11'`.
pub fn marginal_loglik(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[usize],
    beta: &[f64],
    sigma2_e: f64,
    sigma2_u: f64,
) -> Result<f64> {
    let n_groups = validate(x, y, groups)?;
    if beta.len() != x.ncols() {
        return Err(Error::InvalidArgument("beta length does not match the design".into()));
    }
    if !(sigma2_e > 0.0) || !(sigma2_u >= 0.0) {
        return Err(Error::InvalidArgument("variances must satisfy s2_e > 0, s2_u >= 0".into()));
    }
    let fitted = x * DVector::from_column_slice(beta);
    let mut sizes = vec![0.0; n_groups];
    let mut sums = vec![0.0; n_groups];
    let mut sq = vec![0.0; n_groups];
    for (i, &g) in groups.iter().enumerate() {
        let r = y[i] - fitted[i];
        sizes[g] += 1.0;
        sums[g] += r;
        sq[g] += r * r;
    }
    let tau = sigma2_u / sigma2_e;
    let mut ll = 0.0;
    for g in 0..n_groups {
        let nj = sizes[g];
        if nj == 0.0 {
            continue;
        }
        let d = 1.0 + nj * tau;
        let quad = sq[g] - tau / d * sums[g] * sums[g];
        ll += -0.5 * (nj * (2.0 * std::f64::consts::PI).ln() + nj * sigma2_e.ln() + d.ln() + quad / sigma2_e);
    }
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReduction {
    pub sigma2_u: f64,
    /// Change relative to the first entry, in percent.
    pub pct_vs_null: f64,
    /// Change relative to the preceding entry, in percent (0 for the first).
    pub pct_vs_previous: f64,
}

/// Percent change of the random-intercept variance along a sequence of
/// nested models, the first being the reference.
pub fn variance_reduction(sigma2_u: &[f64]) -> Vec<VarianceReduction> {
    let pct = |new: f64, old: f64| if old == 0.0 { 0.0 } else { 100.0 * (new - old) / old };
    sigma2_u
        .iter()
        .enumerate()
        .map(|(i, &s)| VarianceReduction {
            sigma2_u: s,
            pct_vs_null: pct(s, sigma2_u[0]),
            pct_vs_previous: if i == 0 { 0.0 } else { pct(s, sigma2_u[i - 1]) },
        })
        .collect()
}

pub fn null_and_nested_variance_summary(fits: &[MixedModelFit]) -> Vec<VarianceReduction> {
    let s: Vec<f64> = fits.iter().map(|f| f.sigma2_u).collect();
    variance_reduction(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Joint Wald test that the listed fixed effects are all zero.
pub fn wald_test(fit: &MixedModelFit, columns: &[usize]) -> Result<WaldTest> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument("Wald test needs at least one coefficient".into()));
    }
    if let Some(&c) = columns.iter().find(|&&c| c >= fit.fixed_effects.len()) {
        return Err(Error::InvalidArgument(format!("no coefficient {c}")));
    }
    let b = DVector::from_iterator(columns.len(), columns.iter().map(|&c| fit.fixed_effects[c]));
    let v = fit.covariance.select_rows(columns).select_columns(columns);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Numerical("Wald test: covariance block is not positive definite".into()))?;
    let statistic = b.dot(&chol.solve(&b));
    let df = columns.len();
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(WaldTest {
        statistic,
        df,
        p_value: chi.sf(statistic),
    })
}
