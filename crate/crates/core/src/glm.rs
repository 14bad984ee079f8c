//! Maximum-likelihood binary logit and proportional-odds cumulative logit
//! models, used as the conditional models of the chained-equations imputer.
//!
//! Cumulative logit convention: `P(y <= c | x) = logistic(theta_c - x'beta)`,
//! so a larger `x'beta` moves mass towards higher categories. The design
//! passed to [`fit_cumulative_logit`] must not contain an intercept column;
//! the thresholds play that role.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, strict_cholesky, symmetrize};

pub const MAX_NEWTON_ITER: usize = 100;
pub const SCORE_TOL: f64 = 1e-6;
/// Added to the information diagonal when the plain fit breaks down.
pub const RIDGE_JITTER: f64 = 1e-6;
const MIN_THRESHOLD_GAP: f64 = 1e-8;

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + exp(t)) without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Damped Newton-Raphson

struct Evaluation {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NewtonStatus {
    Converged,
    Singular,
    Stalled,
    MaxIter,
}

struct NewtonOutcome {
    params: DVector<f64>,
    info: DMatrix<f64>,
    loglik: f64,
    n_iter: usize,
    status: NewtonStatus,
}

fn penalize(mut e: Evaluation, params: &DVector<f64>, ridge: f64) -> Evaluation {
    if ridge > 0.0 {
        e.loglik -= 0.5 * ridge * params.norm_squared();
        e.grad -= params * ridge;
        for i in 0..params.len() {
            e.hess[(i, i)] -= ridge;
        }
    }
    e
}

/// Maximize with Newton steps, halving the step until the (penalized)
/// log-likelihood does not decrease and the point is feasible.
fn newton_maximize<F>(eval: F, start: DVector<f64>, ridge: f64) -> Option<NewtonOutcome>
where
    F: Fn(&DVector<f64>) -> Option<Evaluation>,
{
    let mut params = start;
    let mut cur = penalize(eval(&params)?, &params, ridge);
    let mut status = NewtonStatus::MaxIter;
    let mut n_iter = 0;
    let mut polished = false;
    while n_iter < MAX_NEWTON_ITER {
        let converged = max_abs(&cur.grad) < SCORE_TOL;
        if converged && polished {
            status = NewtonStatus::Converged;
            break;
        }
        let info = -&cur.hess;
        let Some(chol) = strict_cholesky(&info) else {
            status = if converged {
                NewtonStatus::Converged
            } else {
                NewtonStatus::Singular
            };
            break;
        };
        let step = chol.solve(&cur.grad);
        n_iter += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &params + &step * t;
            if let Some(e) = eval(&cand) {
                let e = penalize(e, &cand, ridge);
                if e.loglik.is_finite() && e.loglik >= cur.loglik - 1e-12 * cur.loglik.abs().max(1.0) {
                    accepted = Some((cand, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, e)) => {
                params = p;
                cur = e;
            }
            None => {
                status = if converged {
                    NewtonStatus::Converged
                } else {
                    NewtonStatus::Stalled
                };
                break;
            }
        }
        // One extra full step after the score test passes tightens the
        // solution to near machine precision.
        if converged {
            polished = true;
        }
    }
    if status == NewtonStatus::MaxIter && max_abs(&cur.grad) < SCORE_TOL {
        status = NewtonStatus::Converged;
    }
    Some(NewtonOutcome {
        info: -&cur.hess,
        params,
        loglik: cur.loglik,
        n_iter,
        status,
    })
}

fn covariance_from_info(info: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = strict_cholesky(info)?;
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    Some(cov)
}

/// Run the plain fit; on failure refit with a small ridge on the information.
fn fit_with_fallback<F>(eval: F, start: DVector<f64>, what: &str) -> Result<(NewtonOutcome, DMatrix<f64>, bool)>
where
    F: Fn(&DVector<f64>) -> Option<Evaluation>,
{
    if let Some(out) = newton_maximize(&eval, start.clone(), 0.0) {
        if out.status == NewtonStatus::Converged {
            if let Some(cov) = covariance_from_info(&out.info) {
                return Ok((out, cov, false));
            }
        }
    }
    let out = newton_maximize(&eval, start, RIDGE_JITTER)
        .ok_or_else(|| Error::Numerical(format!("{what}: log-likelihood not finite at start")))?;
    if out.status != NewtonStatus::Converged {
        return Err(Error::Numerical(format!(
            "{what}: no convergence after ridge fallback ({:?}, {} iterations)",
            out.status, out.n_iter
        )));
    }
    let cov = covariance_from_info(&out.info)
        .ok_or_else(|| Error::Numerical(format!("{what}: information singular after ridge fallback")))?;
    Ok((out, cov, true))
}

// ---------------------------------------------------------------------------
// Binary logit

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub coefficients: DVector<f64>,
    /// Inverse observed information.
    pub covariance: DMatrix<f64>,
    /// False when the ridge fallback was needed.
    pub converged: bool,
    pub ridge_fallback: bool,
    pub n_iter: usize,
    pub loglik: f64,
}

impl LogitFit {
    pub fn with_coefficients(&self, coefficients: DVector<f64>) -> LogitFit {
        LogitFit {
            coefficients,
            ..self.clone()
        }
    }
}

pub fn binary_loglik(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi { -softplus(-e) } else { -softplus(e) })
        .sum()
}

/// Analytic score of the binary log-likelihood.
pub fn binary_score(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter().zip(y).map(|(&e, &yi)| f64::from(u8::from(yi)) - logistic(e)),
    );
    x.transpose() * resid
}

fn binary_eval(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> Option<Evaluation> {
    let eta = x * beta;
    let p = x.ncols();
    let mut loglik = 0.0;
    let mut resid = DVector::zeros(y.len());
    let mut weighted = x.clone();
    for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
        loglik += if yi { -softplus(-e) } else { -softplus(e) };
        let pi = logistic(e);
        resid[i] = f64::from(u8::from(yi)) - pi;
        let w = pi * (1.0 - pi);
        for j in 0..p {
            weighted[(i, j)] *= w;
        }
    }
    if !loglik.is_finite() {
        return None;
    }
    let grad = x.transpose() * resid;
    let hess = -(x.transpose() * weighted);
    Some(Evaluation { loglik, grad, hess })
}

/// Fit `P(y = 1 | x) = logistic(x'beta)`. Include an intercept column in `x`
/// if one is wanted.
pub fn fit_binary_logit(x: &DMatrix<f64>, y: &[bool]) -> Result<LogitFit> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let ones = y.iter().filter(|&&v| v).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::Data("binary logit needs both outcome classes".into()));
    }
    let start = DVector::zeros(x.ncols());
    let (out, covariance, fallback) = fit_with_fallback(|b| binary_eval(x, y, b), start, "binary logit")?;
    Ok(LogitFit {
        coefficients: out.params,
        covariance,
        converged: !fallback,
        ridge_fallback: fallback,
        n_iter: out.n_iter,
        loglik: out.loglik,
    })
}

// ---------------------------------------------------------------------------
// Cumulative logit

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLogitFit {
    /// Thresholds between consecutive observed categories.
    pub thresholds: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Covariance of `[thresholds, slopes]`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub ridge_fallback: bool,
    pub n_iter: usize,
    pub loglik: f64,
    pub n_categories: u8,
    /// Observed categories used in the fit. Unobserved categories are merged
    /// into these representatives and receive zero predicted probability.
    pub categories: Vec<u8>,
}

impl CumulativeLogitFit {
    /// `[thresholds, slopes]` stacked.
    pub fn parameters(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.thresholds.len() + self.slopes.len(),
            self.thresholds.iter().chain(&self.slopes).copied(),
        )
    }

    /// Copy with new stacked parameters; thresholds are sorted so the model
    /// stays valid for perturbed draws.
    pub fn with_parameters(&self, params: &DVector<f64>) -> CumulativeLogitFit {
        let j = self.thresholds.len();
        let mut thresholds: Vec<f64> = params.iter().take(j).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        CumulativeLogitFit {
            thresholds,
            slopes: params.iter().skip(j).copied().collect(),
            ..self.clone()
        }
    }
}

/// Probability of the interval `(a_l, a_u]` under the logistic CDF, computed
/// on whichever tail keeps precision.
#[inline]
fn interval_prob(a_l: f64, a_u: f64) -> f64 {
    if a_l > 0.0 {
        logistic(-a_l) - logistic(-a_u)
    } else {
        logistic(a_u) - logistic(a_l)
    }
}

#[inline]
fn density(a: f64) -> f64 {
    if a.is_infinite() {
        0.0
    } else {
        let f = logistic(a);
        f * (1.0 - f)
    }
}

#[inline]
fn density_slope(a: f64) -> f64 {
    if a.is_infinite() {
        0.0
    } else {
        let f = logistic(a);
        f * (1.0 - f) * (1.0 - 2.0 * f)
    }
}

/// Log-likelihood of ranks `r in 0..=J` with `J` thresholds.
pub fn cumulative_loglik(x: &DMatrix<f64>, ranks: &[usize], params: &DVector<f64>, n_thresholds: usize) -> f64 {
    let beta = params.rows(n_thresholds, x.ncols());
    let eta = x * beta;
    let mut ll = 0.0;
    for (i, &r) in ranks.iter().enumerate() {
        let a_u = if r < n_thresholds { params[r] - eta[i] } else { f64::INFINITY };
        let a_l = if r > 0 { params[r - 1] - eta[i] } else { f64::NEG_INFINITY };
        ll += interval_prob(a_l, a_u).ln();
    }
    ll
}

fn cumulative_eval(x: &DMatrix<f64>, ranks: &[usize], params: &DVector<f64>, nt: usize) -> Option<Evaluation> {
    for w in params.as_slice()[..nt].windows(2) {
        if w[1] - w[0] <= MIN_THRESHOLD_GAP {
            return None;
        }
    }
    let p = x.ncols();
    let dim = nt + p;
    let beta = params.rows(nt, p);
    let eta = x * beta;
    let mut loglik = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    let mut w_bb = DVector::zeros(x.nrows());
    for (i, &r) in ranks.iter().enumerate() {
        let a_u = if r < nt { params[r] - eta[i] } else { f64::INFINITY };
        let a_l = if r > 0 { params[r - 1] - eta[i] } else { f64::NEG_INFINITY };
        let prob = interval_prob(a_l, a_u);
        if !(prob > 0.0) {
            return None;
        }
        loglik += prob.ln();
        let gu = density(a_u) / prob;
        let gl = density(a_l) / prob;
        let huu = density_slope(a_u) / prob - gu * gu;
        let hll = -density_slope(a_l) / prob - gl * gl;
        let hul = gu * gl;
        let xi = x.row(i);
        if r < nt {
            grad[r] += gu;
            hess[(r, r)] += huu;
            for j in 0..p {
                hess[(r, nt + j)] -= xi[j] * (huu + hul);
            }
        }
        if r > 0 {
            grad[r - 1] -= gl;
            hess[(r - 1, r - 1)] += hll;
            for j in 0..p {
                hess[(r - 1, nt + j)] -= xi[j] * (hll + hul);
            }
        }
        if r > 0 && r < nt {
            hess[(r, r - 1)] += hul;
            hess[(r - 1, r)] += hul;
        }
        for j in 0..p {
            grad[nt + j] -= xi[j] * (gu - gl);
        }
        w_bb[i] = huu + hll + 2.0 * hul;
    }
    if !loglik.is_finite() {
        return None;
    }
    // beta-beta block: X' diag(w) X
    let mut weighted = x.clone();
    for i in 0..x.nrows() {
        for j in 0..p {
            weighted[(i, j)] *= w_bb[i];
        }
    }
    let bb = x.transpose() * weighted;
    for a in 0..p {
        for b in 0..p {
            hess[(nt + a, nt + b)] = bb[(a, b)];
        }
    }
    for a in 0..nt {
        for b in 0..p {
            hess[(nt + b, a)] = hess[(a, nt + b)];
        }
    }
    Some(Evaluation { loglik, grad, hess })
}

/// Analytic score of the cumulative log-likelihood at `[thresholds, slopes]`.
pub fn cumulative_score(x: &DMatrix<f64>, ranks: &[usize], params: &DVector<f64>, n_thresholds: usize) -> Option<DVector<f64>> {
    cumulative_eval(x, ranks, params, n_thresholds).map(|e| e.grad)
}

/// Fit the proportional-odds model to codes `1..=n_categories`.
pub fn fit_cumulative_logit(x: &DMatrix<f64>, y: &[u8], n_categories: u8) -> Result<CumulativeLogitFit> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if n_categories < 2 {
        return Err(Error::InvalidArgument("cumulative logit needs at least 2 categories".into()));
    }
    let mut counts = vec![0usize; n_categories as usize];
    for &c in y {
        if c < 1 || c > n_categories {
            return Err(Error::InvalidArgument(format!(
                "category code {c} outside [1, {n_categories}]"
            )));
        }
        counts[c as usize - 1] += 1;
    }
    let categories: Vec<u8> = (1..=n_categories).filter(|&c| counts[c as usize - 1] > 0).collect();
    if categories.len() < 2 {
        return Err(Error::Data("cumulative logit needs at least 2 observed categories".into()));
    }
    let ranks: Vec<usize> = y
        .iter()
        .map(|c| categories.binary_search(c).expect("observed category"))
        .collect();
    let nt = categories.len() - 1;

    // Start at the intercept-only MLE: thresholds at the empirical cumulative logits.
    let n = y.len() as f64;
    let mut start = DVector::zeros(nt + x.ncols());
    let mut cum = 0usize;
    for (r, &c) in categories.iter().take(nt).enumerate() {
        cum += counts[c as usize - 1];
        start[r] = logit(cum as f64 / n);
    }

    let (out, covariance, fallback) = fit_with_fallback(
        |p| cumulative_eval(x, &ranks, p, nt),
        start,
        "cumulative logit",
    )?;
    Ok(CumulativeLogitFit {
        thresholds: out.params.iter().take(nt).copied().collect(),
        slopes: out.params.iter().skip(nt).copied().collect(),
        covariance,
        converged: !fallback,
        ridge_fallback: fallback,
        n_iter: out.n_iter,
        loglik: out.loglik,
        n_categories,
        categories,
    })
}

// ---------------------------------------------------------------------------
// Prediction and sampling

/// A fitted model giving a distribution over category codes `1..=C`.
pub trait CategoryModel {
    fn n_categories(&self) -> usize;
    fn n_inputs(&self) -> usize;
    fn category_probs(&self, x: &[f64]) -> Vec<f64>;
}

impl CategoryModel for LogitFit {
    fn n_categories(&self) -> usize {
        2
    }

    fn n_inputs(&self) -> usize {
        self.coefficients.len()
    }

    /// `(P(code 1), P(code 2))`, where code 2 is the modelled outcome.
    fn category_probs(&self, x: &[f64]) -> Vec<f64> {
        let eta: f64 = x.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum();
        let p = logistic(eta);
        vec![1.0 - p, p]
    }
}

impl CategoryModel for CumulativeLogitFit {
    fn n_categories(&self) -> usize {
        self.n_categories as usize
    }

    fn n_inputs(&self) -> usize {
        self.slopes.len()
    }

    fn category_probs(&self, x: &[f64]) -> Vec<f64> {
        let eta: f64 = x.iter().zip(&self.slopes).map(|(a, b)| a * b).sum();
        let mut probs = vec![0.0; self.n_categories as usize];
        let mut prev = 0.0;
        for (r, &code) in self.categories.iter().enumerate() {
            let cum = if r < self.thresholds.len() {
                logistic(self.thresholds[r] - eta).max(prev)
            } else {
                1.0
            };
            probs[code as usize - 1] = cum - prev;
            prev = cum;
        }
        probs
    }
}

pub fn predict_category_probs<M: CategoryModel + ?Sized>(model: &M, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), model.n_inputs());
    model.category_probs(x)
}

/// Inverse-CDF draw of a code in `1..=probs.len()`.
pub fn sample_category<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        cum += p;
        if u < cum {
            return i as u8 + 1;
        }
    }
    last_positive as u8 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    #[test]
    fn intercept_only_binary_is_logit_of_mean() {
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let x = DMatrix::from_element(40, 1, 1.0);
        let fit = fit_binary_logit(&x, &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - logit(0.25)).abs() < 1e-10);
        assert!(max_abs(&binary_score(&x, &y, &fit.coefficients)) < 1e-6);
    }

    #[test]
    fn binary_sign_flip_symmetry() {
        let xs = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, -1.5, 1.5];
        let y = [false, true, false, true, false, true, false, true];
        let mut x = DMatrix::from_element(8, 2, 1.0);
        let mut xf = x.clone();
        for i in 0..8 {
            x[(i, 1)] = xs[i];
            xf[(i, 1)] = -xs[i];
        }
        let a = fit_binary_logit(&x, &y).unwrap();
        let b = fit_binary_logit(&xf, &y).unwrap();
        assert!((a.coefficients[1] + b.coefficients[1]).abs() < 1e-9);
        assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let x = DMatrix::from_element(5, 1, 1.0);
        assert!(fit_binary_logit(&x, &[true; 5]).is_err());
    }

    #[test]
    fn separated_data_falls_back() {
        let x = DMatrix::from_row_slice(6, 2, &[1., -3., 1., -2., 1., -1., 1., 1., 1., 2., 1., 3.]);
        let y = [false, false, false, true, true, true];
        let fit = fit_binary_logit(&x, &y).unwrap();
        if fit.ridge_fallback {
            assert!(!fit.converged);
        }
        assert!(fit.coefficients[1] > 0.0);
    }

    #[test]
    fn intercept_only_thresholds() {
        // cumulative proportions 0.25, 0.75
        let y = [1, 2, 2, 3, 1, 2, 2, 3];
        let x = DMatrix::<f64>::zeros(8, 0);
        let fit = fit_cumulative_logit(&x, &y, 3).unwrap();
        assert!((fit.thresholds[0] - logit(0.25)).abs() < 1e-10);
        assert!((fit.thresholds[1] - logit(0.75)).abs() < 1e-10);
    }

    #[test]
    fn two_categories_match_binary_logit() {
        let xs = [-1.2, 0.3, 0.8, -0.4, 1.5, -2.0, 0.1, 0.9, -0.7, 1.1];
        let codes = [1u8, 2, 2, 1, 2, 1, 1, 2, 2, 1];
        let cum = fit_cumulative_logit(&col(&xs), &codes, 2).unwrap();
        let mut xb = DMatrix::from_element(10, 2, 1.0);
        for i in 0..10 {
            xb[(i, 1)] = xs[i];
        }
        let y: Vec<bool> = codes.iter().map(|&c| c == 2).collect();
        let bin = fit_binary_logit(&xb, &y).unwrap();
        assert!((bin.coefficients[0] + cum.thresholds[0]).abs() < 1e-8);
        assert!((bin.coefficients[1] - cum.slopes[0]).abs() < 1e-8);
    }

    #[test]
    fn unobserved_category_is_merged() {
        let y = [1u8, 1, 3, 3, 4, 1, 4, 3];
        let x = col(&[0.1, -0.3, 0.5, 0.2, 1.0, -1.0, 0.7, 0.0]);
        let fit = fit_cumulative_logit(&x, &y, 5).unwrap();
        assert_eq!(fit.categories, vec![1, 3, 4]);
        let p = fit.category_probs(&[0.3]);
        assert_eq!(p.len(), 5);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[4], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(fit_cumulative_logit(&x, &[2; 8], 5).is_err());
    }

    #[test]
    fn zero_coefficient_binary_is_half() {
        let fit = LogitFit {
            coefficients: DVector::zeros(2),
            covariance: DMatrix::identity(2, 2),
            converged: true,
            ridge_fallback: false,
            n_iter: 0,
            loglik: 0.0,
        };
        assert_eq!(predict_category_probs(&fit, &[1.0, 3.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn saturated_thresholds_concentrate_mass() {
        let fit = CumulativeLogitFit {
            thresholds: vec![-30.0, 30.0],
            slopes: vec![1.0],
            covariance: DMatrix::identity(3, 3),
            converged: true,
            ridge_fallback: false,
            n_iter: 0,
            loglik: 0.0,
            n_categories: 3,
            categories: vec![1, 2, 3],
        };
        let p = predict_category_probs(&fit, &[2.0]);
        assert!(p[1] > 1.0 - 1e-10);
    }

    #[test]
    fn sampling_degenerate_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_category(&[1.0, 0.0], &mut rng), 1);
            assert_eq!(sample_category(&[0.0, 1.0], &mut rng), 2);
        }
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let p = [0.2, 0.3, 0.5];
        let da: Vec<u8> = (0..50).map(|_| sample_category(&p, &mut a)).collect();
        let db: Vec<u8> = (0..50).map(|_| sample_category(&p, &mut b)).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_category(&[0.5, 0.5], &mut rng) == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }
}
