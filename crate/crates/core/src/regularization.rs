//! Adaptive lasso over split-coded item contrasts.
//!
//! The criterion is `Q(b) = RSS(b)/n + (lambda/n) * sum_j w_j |b_j|` where the
//! sum runs over penalized (contrast) columns only; intercept and covariates
//! enter unpenalized. Weights are `1/|pilot OLS estimate|`, capped. The
//! penalty level is chosen on a log-spaced path by the extended BIC
//! `n log(RSS/n) + s log(n) + 2 s log(p)`.
//!
//! The random intercept is ignored here (flat linear model); the mixed model
//! is refit on the selected columns afterwards.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::coding::SplitCodedDesign;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, gram};

pub const DEFAULT_WEIGHT_CAP: f64 = 1e6;
pub const PILOT_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    /// One weight per design column; only penalized entries are used.
    pub weights: Vec<f64>,
    /// Strictly decreasing.
    pub lambda_grid: Vec<f64>,
    pub weight_cap: f64,
}

impl PenaltySpec {
    pub fn validate(&self, design: &SplitCodedDesign) -> Result<()> {
        if self.weights.len() != design.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} columns",
                self.weights.len(),
                design.n_cols()
            )));
        }
        for (j, (&w, &pen)) in self.weights.iter().zip(&design.penalized).enumerate() {
            if pen && !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "weight of penalized column {j} must be positive and finite, got {w}"
                )));
            }
        }
        if self.lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("lambda grid must be strictly decreasing".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidArgument("lambda grid values must be non-negative".into()));
        }
        Ok(())
    }
}

/// Least squares via the normal equations, with a small ridge when `X'X` is
/// numerically singular.
pub fn pilot_ols(design: &SplitCodedDesign, y: &[f64]) -> Result<Vec<f64>> {
    check_len(design, y)?;
    let (g, xy) = gram(&design.matrix, y);
    let (chol, _) = cholesky_with_jitter(&g, PILOT_JITTER)
        .ok_or_else(|| Error::Numerical("pilot OLS: X'X cannot be factored".into()))?;
    Ok(chol.solve(&xy).iter().copied().collect())
}

/// `min(1/|pilot|, cap)` on penalized columns, 0 elsewhere.
pub fn adaptive_weights(pilot: &[f64], design: &SplitCodedDesign, cap: f64) -> Vec<f64> {
    pilot
        .iter()
        .zip(&design.penalized)
        .map(|(&b, &pen)| if pen { (1.0 / b.abs()).min(cap) } else { 0.0 })
        .collect()
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    /// Stop when the largest coefficient change in a sweep falls below this
    /// (and the KKT check passes).
    pub tol: f64,
    /// Allowed violation of the optimality conditions on `x_j'r`.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Record `Q` after every sweep.
    pub trace_objective: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            kkt_tol: 1e-6,
            max_sweeps: 100_000,
            trace_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest violation of the optimality conditions at exit.
    pub kkt_violation: f64,
    pub objective_trace: Vec<f64>,
}

/// Sufficient statistics of a lasso problem; coordinate descent runs on the
/// Gram matrix so a sweep costs `O(p^2)` regardless of `n`.
struct LassoProblem {
    n: usize,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    penalized: Vec<bool>,
    weights: Vec<f64>,
    unpenalized: Vec<usize>,
    unpenalized_chol: Option<Cholesky<f64, Dyn>>,
}

impl LassoProblem {
    fn new(design: &SplitCodedDesign, y: &[f64], weights: &[f64]) -> Result<Self> {
        check_len(design, y)?;
        let (gram, xty) = gram(&design.matrix, y);
        let yty = y.iter().map(|v| v * v).sum();
        let unpenalized: Vec<usize> = (0..design.n_cols()).filter(|&j| !design.penalized[j]).collect();
        let unpenalized_chol = if unpenalized.is_empty() {
            None
        } else {
            let guu = gram.select_rows(&unpenalized).select_columns(&unpenalized);
            let (chol, _) = cholesky_with_jitter(&guu, PILOT_JITTER)
                .ok_or_else(|| Error::Numerical("unpenalized block cannot be factored".into()))?;
            Some(chol)
        };
        Ok(Self {
            n: y.len(),
            gram,
            xty,
            yty,
            penalized: design.penalized.clone(),
            weights: weights.to_vec(),
            unpenalized,
            unpenalized_chol,
        })
    }

    fn p(&self) -> usize {
        self.xty.len()
    }

    fn rss(&self, beta: &DVector<f64>) -> f64 {
        let gb = &self.gram * beta;
        (self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(&gb)).max(0.0)
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        beta.iter()
            .enumerate()
            .filter(|(j, _)| self.penalized[*j])
            .map(|(j, b)| self.weights[j] * b.abs())
            .sum()
    }

    fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        (self.rss(beta) + lambda * self.penalty(beta)) / self.n as f64
    }

    /// Largest violation of the subgradient conditions.
    fn kkt_violation(&self, beta: &DVector<f64>, gb: &DVector<f64>, lambda: f64) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.p() {
            if self.gram[(j, j)] == 0.0 {
                continue;
            }
            let g = self.xty[j] - gb[j];
            let v = if !self.penalized[j] {
                g.abs()
            } else {
                let t = 0.5 * lambda * self.weights[j];
                if beta[j] == 0.0 {
                    (g.abs() - t).max(0.0)
                } else {
                    (g - t * beta[j].signum()).abs()
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Exact least-squares update of the unpenalized block given the rest.
    fn update_unpenalized(&self, beta: &mut DVector<f64>, gb: &mut DVector<f64>) -> f64 {
        let Some(chol) = &self.unpenalized_chol else {
            return 0.0;
        };
        let u = &self.unpenalized;
        // rhs = X_U'y - G_U,P b_P  = X_U'y - (G b)_U + G_UU b_U
        let mut rhs = DVector::zeros(u.len());
        for (a, &j) in u.iter().enumerate() {
            let mut guu_bu = 0.0;
            for &k in u {
                guu_bu += self.gram[(j, k)] * beta[k];
            }
            rhs[a] = self.xty[j] - gb[j] + guu_bu;
        }
        let new = chol.solve(&rhs);
        let mut change = 0.0_f64;
        for (a, &j) in u.iter().enumerate() {
            let delta = new[a] - beta[j];
            if delta != 0.0 {
                change = change.max(delta.abs());
                beta[j] = new[a];
                for i in 0..self.p() {
                    gb[i] += self.gram[(i, j)] * delta;
                }
            }
        }
        change
    }

    fn solve(&self, lambda: f64, warm: Option<&[f64]>, opts: &CdOptions) -> CdSolution {
        let p = self.p();
        let mut beta = match warm {
            Some(w) if w.len() == p => DVector::from_column_slice(w),
            _ => DVector::zeros(p),
        };
        let mut gb = &self.gram * &beta;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        let mut violation = f64::INFINITY;
        let scale = self.xty.amax().max(1.0);
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut change = self.update_unpenalized(&mut beta, &mut gb);
            for j in 0..p {
                if !self.penalized[j] {
                    continue;
                }
                let gjj = self.gram[(j, j)];
                if gjj == 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let rho = self.xty[j] - gb[j] + gjj * beta[j];
                let new = soft_threshold(rho, 0.5 * lambda * self.weights[j]) / gjj;
                let delta = new - beta[j];
                if delta != 0.0 {
                    change = change.max(delta.abs());
                    beta[j] = new;
                    for i in 0..p {
                        gb[i] += self.gram[(i, j)] * delta;
                    }
                }
            }
            if opts.trace_objective {
                trace.push(self.objective(&beta, lambda));
            }
            if change < opts.tol {
                // Refresh Gb to shed accumulated rounding before the check.
                gb = &self.gram * &beta;
                violation = self.kkt_violation(&beta, &gb, lambda);
                let floor = 1e-13 * scale * p as f64;
                if violation <= opts.kkt_tol.max(floor) {
                    converged = true;
                    break;
                }
            }
        }
        if converged {
            if let Some((b, v)) = self.polish(&beta, lambda) {
                if v <= violation {
                    if opts.trace_objective {
                        trace.push(self.objective(&b, lambda));
                    }
                    beta = b;
                    violation = v;
                }
            }
        } else {
            gb = &self.gram * &beta;
            violation = self.kkt_violation(&beta, &gb, lambda);
        }
        CdSolution {
            coefficients: beta.iter().copied().collect(),
            converged,
            sweeps,
            kkt_violation: violation,
            objective_trace: trace,
        }
    }

    /// Solve the stationarity equations exactly on the active set and sign
    /// pattern of `beta`. Coordinate descent stops on step size, which can
    /// leave a small error along flat directions; this removes it. Returns
    /// `None` when the system is singular, a sign flips or the criterion
    /// gets worse.
    fn polish(&self, beta: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, f64)> {
        let free: Vec<usize> = (0..self.p())
            .filter(|&j| self.gram[(j, j)] != 0.0 && (!self.penalized[j] || beta[j] != 0.0))
            .collect();
        if free.is_empty() {
            return None;
        }
        let g = self.gram.select_rows(&free).select_columns(&free);
        let rhs = DVector::from_iterator(
            free.len(),
            free.iter().map(|&j| {
                let t = if self.penalized[j] { 0.5 * lambda * self.weights[j] * beta[j].signum() } else { 0.0 };
                self.xty[j] - t
            }),
        );
        let sol = g.cholesky()?.solve(&rhs);
        let mut out = beta.clone();
        for (a, &j) in free.iter().enumerate() {
            if self.penalized[j] && sol[a].signum() != beta[j].signum() {
                return None;
            }
            out[j] = sol[a];
        }
        if self.objective(&out, lambda) > self.objective(beta, lambda) {
            return None;
        }
        let gb = &self.gram * &out;
        let v = self.kkt_violation(&out, &gb, lambda);
        Some((out, v))
    }

    /// Smallest lambda with every penalized coefficient at zero.
    fn lambda_max(&self) -> f64 {
        let mut beta = DVector::zeros(self.p());
        let mut gb = DVector::zeros(self.p());
        self.update_unpenalized(&mut beta, &mut gb);
        let mut lmax = 0.0_f64;
        for j in 0..self.p() {
            if self.penalized[j] && self.gram[(j, j)] > 0.0 {
                let g = self.xty[j] - gb[j];
                lmax = lmax.max(2.0 * g.abs() / self.weights[j]);
            }
        }
        lmax
    }
}

fn check_len(design: &SplitCodedDesign, y: &[f64]) -> Result<()> {
    if design.n_rows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, response has {}",
            design.n_rows(),
            y.len()
        )));
    }
    Ok(())
}

/// The criterion `Q = RSS/n + (lambda/n) * sum w_j |b_j|`, evaluated directly
/// from the residuals.
pub fn objective(design: &SplitCodedDesign, y: &[f64], lambda: f64, weights: &[f64], beta: &[f64]) -> f64 {
    let rss = residual_sum_of_squares(design, y, beta);
    let pen: f64 = beta
        .iter()
        .zip(weights)
        .zip(&design.penalized)
        .filter(|(_, &p)| p)
        .map(|((b, w), _)| w * b.abs())
        .sum();
    (rss + lambda * pen) / y.len() as f64
}

pub fn residual_sum_of_squares(design: &SplitCodedDesign, y: &[f64], beta: &[f64]) -> f64 {
    let fitted = &design.matrix * DVector::from_column_slice(beta);
    y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Minimize `Q` at one penalty level by cyclic coordinate descent. Penalized
/// columns update by soft-thresholding; the unpenalized block is updated
/// jointly by exact least squares inside the same loop.
pub fn coordinate_descent(
    design: &SplitCodedDesign,
    y: &[f64],
    lambda: f64,
    spec: &PenaltySpec,
    warm_start: Option<&[f64]>,
) -> Result<CdSolution> {
    coordinate_descent_with(design, y, lambda, &spec.weights, warm_start, &CdOptions::default())
}

pub fn coordinate_descent_with(
    design: &SplitCodedDesign,
    y: &[f64],
    lambda: f64,
    weights: &[f64],
    warm_start: Option<&[f64]>,
    opts: &CdOptions,
) -> Result<CdSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let problem = LassoProblem::new(design, y, weights)?;
    Ok(problem.solve(lambda, warm_start, opts))
}

pub fn lambda_max(design: &SplitCodedDesign, y: &[f64], weights: &[f64]) -> Result<f64> {
    Ok(LassoProblem::new(design, y, weights)?.lambda_max())
}

/// Log-spaced grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_path(design: &SplitCodedDesign, y: &[f64], weights: &[f64], n_grid: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_grid == 0 {
        return Err(Error::InvalidArgument("lambda grid needs at least one point".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("grid ratio must be in (0, 1), got {ratio}")));
    }
    let lmax = lambda_max(design, y, weights)?;
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Ok(vec![0.0]);
    }
    if n_grid == 1 {
        return Ok(vec![lmax]);
    }
    let step = ratio.ln() / (n_grid - 1) as f64;
    let mut grid: Vec<f64> = (0..n_grid).map(|i| lmax * (step * i as f64).exp()).collect();
    grid[n_grid - 1] = lmax * ratio;
    Ok(grid)
}

/// Extended BIC: `n log(RSS/n) + s log(n) + 2 s log(p)`.
pub fn ebic(rss: f64, n: usize, s: usize, p: usize) -> Result<f64> {
    if !(rss > 0.0) {
        return Err(Error::Numerical(format!("EBIC undefined for RSS = {rss}")));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("EBIC needs n >= 1 and p >= 1 (n = {n}, p = {p})")));
    }
    let (n, s, p) = (n as f64, s as f64, p as f64);
    Ok(n * (rss / n).ln() + s * n.ln() + 2.0 * s * p.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoPathFit {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub rss: Vec<f64>,
    /// Nonzero penalized coefficients plus all unpenalized columns.
    pub active: Vec<usize>,
    pub ebic: Vec<f64>,
    pub converged: Vec<bool>,
    pub selected_index: usize,
}

impl LassoPathFit {
    pub fn selected(&self) -> &[f64] {
        &self.coefficients[self.selected_index]
    }

    /// Which penalized columns are nonzero at the selected point, indexed by column.
    pub fn selected_active(&self, design: &SplitCodedDesign) -> Vec<bool> {
        self.selected()
            .iter()
            .zip(&design.penalized)
            .map(|(&b, &p)| p && b != 0.0)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["lambda", "s", "rss", "ebic", "converged"])?;
        for i in 0..self.lambdas.len() {
            wtr.write_record([
                self.lambdas[i].to_string(),
                self.active[i].to_string(),
                self.rss[i].to_string(),
                self.ebic[i].to_string(),
                self.converged[i].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<lasso path output>", e))?;
        Ok(())
    }
}

/// Warm-started descent along the grid (largest lambda first) and selection
/// of the EBIC minimizer; ties go to the larger lambda.
pub fn fit_path_and_select(design: &SplitCodedDesign, y: &[f64], spec: &PenaltySpec) -> Result<LassoPathFit> {
    spec.validate(design)?;
    if spec.lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let problem = LassoProblem::new(design, y, &spec.weights)?;
    let opts = CdOptions::default();
    let n = y.len();
    let p = design.p_penalized().max(1);
    let n_unpen = design.n_cols() - design.p_penalized();

    let mut fit = LassoPathFit {
        lambdas: spec.lambda_grid.clone(),
        coefficients: Vec::with_capacity(spec.lambda_grid.len()),
        rss: Vec::new(),
        active: Vec::new(),
        ebic: Vec::new(),
        converged: Vec::new(),
        selected_index: 0,
    };
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in &spec.lambda_grid {
        let sol = problem.solve(lambda, warm.as_deref(), &opts);
        let rss = residual_sum_of_squares(design, y, &sol.coefficients);
        let s = n_unpen
            + sol
                .coefficients
                .iter()
                .zip(&design.penalized)
                .filter(|(&b, &pen)| pen && b != 0.0)
                .count();
        fit.ebic.push(ebic(rss, n, s, p)?);
        fit.rss.push(rss);
        fit.active.push(s);
        fit.converged.push(sol.converged);
        warm = Some(sol.coefficients.clone());
        fit.coefficients.push(sol.coefficients);
    }
    let mut best = 0;
    for i in 1..fit.ebic.len() {
        if fit.ebic[i] < fit.ebic[best] {
            best = i;
        }
    }
    fit.selected_index = best;
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoSettings {
    pub n_grid: usize,
    pub ratio: f64,
    pub weight_cap: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            n_grid: 100,
            ratio: 1e-4,
            weight_cap: DEFAULT_WEIGHT_CAP,
        }
    }
}

/// Pilot OLS, adaptive weights, grid, path and EBIC selection in one call.
pub fn adaptive_lasso(design: &SplitCodedDesign, y: &[f64], settings: &LassoSettings) -> Result<(PenaltySpec, LassoPathFit)> {
    let pilot = pilot_ols(design, y)?;
    let weights = adaptive_weights(&pilot, design, settings.weight_cap);
    let lambda_grid = lambda_path(design, y, &weights, settings.n_grid, settings.ratio)?;
    let spec = PenaltySpec {
        weights,
        lambda_grid,
        weight_cap: settings.weight_cap,
    };
    let path = fit_path_and_select(design, y, &spec)?;
    Ok((spec, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::ColumnRole;

    fn design(cols: usize, rows: usize, data: &[f64], n_unpen: usize) -> SplitCodedDesign {
        let matrix = DMatrix::from_row_slice(rows, cols, data);
        let columns: Vec<ColumnRole> = (0..cols)
            .map(|j| {
                if j < n_unpen {
                    ColumnRole::Z(j)
                } else {
                    ColumnRole::Contrast {
                        item: 0,
                        category: (j - n_unpen + 2) as u8,
                    }
                }
            })
            .collect();
        SplitCodedDesign {
            matrix,
            penalized: columns.iter().map(ColumnRole::is_penalized).collect(),
            names: (0..cols).map(|j| format!("c{j}")).collect(),
            columns,
        }
    }

    #[test]
    fn orthonormal_pilot_is_xty() {
        let d = design(2, 4, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5], 0);
        let y = [1.0, 2.0, 3.0, 4.0];
        let b = pilot_ols(&d, &y).unwrap();
        assert!((b[0] - 5.0).abs() < 1e-12);
        assert!((b[1] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn weights_examples() {
        let d = design(4, 1, &[1.0, 1.0, 1.0, 1.0], 1);
        let w = adaptive_weights(&[9.0, 2.0, 0.0, -0.25], &d, DEFAULT_WEIGHT_CAP);
        assert_eq!(w, vec![0.0, 0.5, 1e6, 4.0]);
    }

    #[test]
    fn ebic_examples() {
        assert_eq!(ebic(10.0, 10, 0, 5).unwrap(), 0.0);
        let want = 10.0 * 2.0_f64.ln() + 2.0 * 10.0_f64.ln() + 4.0 * 5.0_f64.ln();
        assert!((ebic(20.0, 10, 2, 5).unwrap() - want).abs() < 1e-12);
        assert!(ebic(0.0, 10, 1, 5).is_err());
    }

    #[test]
    fn grid_construction() {
        let d = design(3, 5, &[1., 0., 1., 1., 1., 0., 1., 0., 1., 1., 1., 1., 1., 0., 0.], 1);
        let y = [1.0, 2.0, 0.5, 3.0, 1.0];
        let w = vec![0.0, 1.0, 1.0];
        let grid = lambda_path(&d, &y, &w, 100, 1e-4).unwrap();
        assert_eq!(grid.len(), 100);
        assert!(grid.windows(2).all(|p| p[1] < p[0]));
        assert!((grid[99] / grid[0] - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn degenerate_grid_when_nothing_to_explain() {
        let d = design(2, 4, &[1., 0., 1., 1., 1., 0., 1., 1.], 1);
        // y orthogonal to the contrast after the intercept: constant y
        let y = [2.0; 4];
        assert_eq!(lambda_path(&d, &y, &[0.0, 1.0], 10, 1e-4).unwrap(), vec![0.0]);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
    }

    fn random_design(n: usize, n_unpen: usize, n_pen: usize, seed: u64) -> (SplitCodedDesign, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let cols = n_unpen + n_pen;
        let mut data = Vec::with_capacity(n * cols);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut yi = 0.0;
            for j in 0..cols {
                let v = if j == 0 { 1.0 } else if j < n_unpen { rng.random::<f64>() - 0.5 } else { f64::from(rng.random_bool(0.5)) };
                data.push(v);
                yi += v * if j % 2 == 0 { 0.8 } else { 0.0 };
            }
            y.push(yi + rng.random::<f64>() - 0.5);
        }
        (design(cols, n, &data, n_unpen), y)
    }

    /// Minimum of Q by enumerating sign patterns of the penalized block and
    /// solving the stationarity equations on each support.
    fn brute_force(d: &SplitCodedDesign, y: &[f64], lambda: f64, w: &[f64]) -> f64 {
        let p = d.n_cols();
        let pen: Vec<usize> = (0..p).filter(|&j| d.penalized[j]).collect();
        let xtx = d.matrix.tr_mul(&d.matrix);
        let xty = d.matrix.tr_mul(&DVector::from_column_slice(y));
        let mut best = f64::INFINITY;
        for code in 0..3usize.pow(pen.len() as u32) {
            let mut signs = vec![0.0; p];
            let mut c = code;
            for &j in &pen {
                signs[j] = (c % 3) as f64 - 1.0;
                c /= 3;
            }
            let free: Vec<usize> = (0..p).filter(|&j| !d.penalized[j] || signs[j] != 0.0).collect();
            let mut beta = vec![0.0; p];
            if !free.is_empty() {
                let a = xtx.select_rows(&free).select_columns(&free);
                let rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| xty[j] - 0.5 * lambda * w[j] * signs[j]));
                let Some(sol) = a.lu().solve(&rhs) else { continue };
                for (k, &j) in free.iter().enumerate() {
                    beta[j] = sol[k];
                }
            }
            if pen.iter().any(|&j| signs[j] != 0.0 && beta[j] * signs[j] <= 0.0) {
                continue;
            }
            best = best.min(objective(d, y, lambda, w, &beta));
        }
        best
    }

    #[test]
    fn cd_matches_enumeration_oracle() {
        for seed in 0..6 {
            let (d, y) = random_design(60, 2, 5, seed);
            let pilot = pilot_ols(&d, &y).unwrap();
            let w = adaptive_weights(&pilot, &d, DEFAULT_WEIGHT_CAP);
            let lmax = lambda_max(&d, &y, &w).unwrap();
            for frac in [0.9, 0.3, 0.05, 0.0] {
                let lambda = lmax * frac;
                let sol = coordinate_descent_with(&d, &y, lambda, &w, None, &CdOptions::default()).unwrap();
                assert!(sol.converged);
                let q = objective(&d, &y, lambda, &w, &sol.coefficients);
                let q_star = brute_force(&d, &y, lambda, &w);
                assert!((q - q_star).abs() < 1e-8, "seed {seed} frac {frac}: {q} vs {q_star}");
            }
        }
    }

    #[test]
    fn lambda_max_zeroes_penalized_block() {
        let (d, y) = random_design(50, 2, 4, 11);
        let w = vec![0.0, 0.0, 1.0, 2.0, 0.5, 1.0];
        let lmax = lambda_max(&d, &y, &w).unwrap();
        let sol = coordinate_descent_with(&d, &y, lmax * 1.0001, &w, None, &CdOptions::default()).unwrap();
        assert!(sol.coefficients[2..].iter().all(|&b| b == 0.0));
        let sol = coordinate_descent_with(&d, &y, lmax * 0.95, &w, None, &CdOptions::default()).unwrap();
        assert!(sol.coefficients[2..].iter().any(|&b| b != 0.0));
    }

    #[test]
    fn zero_lambda_recovers_ols() {
        let (d, y) = random_design(40, 2, 3, 5);
        let ols = pilot_ols(&d, &y).unwrap();
        let sol = coordinate_descent_with(&d, &y, 0.0, &[0.0, 0.0, 1.0, 1.0, 1.0], None, &CdOptions::default()).unwrap();
        for (a, b) in ols.iter().zip(&sol.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pilot_matches_svd_least_squares() {
        let (d, y) = random_design(30, 3, 3, 8);
        let svd = d.matrix.clone().svd(true, true);
        let b_svd = svd.solve(&DVector::from_column_slice(&y), 1e-12).unwrap();
        let b = pilot_ols(&d, &y).unwrap();
        for (a, c) in b.iter().zip(b_svd.iter()) {
            assert!((a - c).abs() < 1e-8);
        }
    }

    #[test]
    fn path_selects_minimum_ebic_and_prefers_larger_lambda() {
        let (d, y) = random_design(80, 2, 4, 21);
        let (_, fit) = adaptive_lasso(&d, &y, &LassoSettings::default()).unwrap();
        let min = fit.ebic.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(fit.ebic[fit.selected_index], min);
        assert!(fit.ebic[..fit.selected_index].iter().all(|&e| e > min));
        assert!(fit.converged.iter().all(|&c| c));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn objective_never_increases_across_sweeps(seed in 0u64..10_000, frac in 0.0f64..1.0) {
                let (d, y) = random_design(40, 2, 5, seed);
                let w = adaptive_weights(&pilot_ols(&d, &y).unwrap(), &d, DEFAULT_WEIGHT_CAP);
                let lambda = frac * lambda_max(&d, &y, &w).unwrap();
                let opts = CdOptions { trace_objective: true, ..CdOptions::default() };
                let sol = coordinate_descent_with(&d, &y, lambda, &w, None, &opts).unwrap();
                for pair in sol.objective_trace.windows(2) {
                    prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
                }
            }

            #[test]
            fn kkt_holds_at_convergence(seed in 0u64..10_000, frac in 0.0f64..1.2) {
                let (d, y) = random_design(40, 2, 5, seed);
                let w = adaptive_weights(&pilot_ols(&d, &y).unwrap(), &d, DEFAULT_WEIGHT_CAP);
                let lambda = frac * lambda_max(&d, &y, &w).unwrap();
                let sol = coordinate_descent_with(&d, &y, lambda, &w, None, &CdOptions::default()).unwrap();
                prop_assert!(sol.converged);
                // Recheck from scratch with the raw residuals.
                let beta = DVector::from_column_slice(&sol.coefficients);
                let r = DVector::from_column_slice(&y) - &d.matrix * &beta;
                let g = d.matrix.tr_mul(&r);
                for j in 0..d.n_cols() {
                    let t = if d.penalized[j] { 0.5 * lambda * w[j] } else { 0.0 };
                    if beta[j] == 0.0 {
                        prop_assert!(g[j].abs() <= t + 1e-5);
                    } else {
                        prop_assert!((g[j] - t * beta[j].signum()).abs() <= 1e-5);
                    }
                }
            }
        }
    }
}
