//! L1-penalized logistic regression by cyclic coordinate descent.
//!
//! The objective is the negative log-likelihood
//! `sum_i log(1 + exp(-y_i eta_i))` plus an `n * lambda * sum_j w_j |beta_j|`
//! penalty, with per-column weights `w_j >= 0` (weight 0 marks an unpenalized
//! column). The intercept is always unpenalized and is not a matrix column.
//!
//! Coordinate updates minimize a quadratic majorizer with the global logistic
//! curvature bound of 1/4 per observation, so every update is a closed-form
//! soft-threshold step and the penalized objective never increases. Paths are
//! fit on a decreasing geometric lambda grid with warm starts, beginning at
//! the smallest lambda whose optimum has every penalized coefficient at zero.

use crate::error::{Error, Result};
use crate::sparse::SparseColumnMatrix;

/// Per-column penalty weights. 0 = unpenalized, 1 = standard player column.
/// Weights are explicit inputs and never derived from column scale: duplicating
/// or rescaling data columns does not change any existing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    weights: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(weights: Vec<f64>) -> Result<PenaltySpec> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Invalid(format!("penalty weight {w} must be finite and >= 0")));
        }
        Ok(PenaltySpec { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, col: usize) -> f64 {
        self.weights[col]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_penalized(&self, col: usize) -> bool {
        self.weights[col] > 0.0
    }

    pub fn n_penalized(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn n_unpenalized(&self) -> usize {
        self.weights.len() - self.n_penalized()
    }
}

/// Solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of grid points on the regularization path.
    pub n_lambda: usize,
    /// Ratio of the last grid point to the first.
    pub lambda_min_ratio: f64,
    /// Relative penalized-objective-change convergence threshold. Also sets
    /// the KKT enforcement target `n * tol` (well inside the certified
    /// `1e-6 * n` optimality tolerance at the default).
    pub tol: f64,
    /// Sweep budget per lambda.
    pub max_sweeps: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_lambda: 100,
            lambda_min_ratio: 0.01,
            tol: 1e-9,
            max_sweeps: 10_000,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::Config("n_lambda must be >= 1".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Config(format!(
                "lambda_min_ratio must be in (0, 1), found {}",
                self.lambda_min_ratio
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fit at one lambda.
#[derive(Debug, Clone)]
pub struct SingleFit {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Negative log-likelihood at the solution.
    pub nll: f64,
    pub n_nonzero_penalized: usize,
    pub n_unpenalized: usize,
    /// False when the sweep budget ran out; the fit is the best iterate seen.
    pub converged: bool,
    /// Penalized objective after each sweep (nonincreasing).
    pub objective_trace: Vec<f64>,
}

impl SingleFit {
    /// Effective coefficient count: nonzero penalized coefficients plus all
    /// unpenalized coefficients plus the intercept.
    pub fn n_nonzero(&self) -> usize {
        self.n_nonzero_penalized + self.n_unpenalized + 1
    }

    pub fn deviance(&self) -> f64 {
        2.0 * self.nll
    }
}

/// Fits along a decreasing lambda grid.
#[derive(Debug, Clone)]
pub struct PathFit {
    pub lambdas: Vec<f64>,
    pub fits: Vec<SingleFit>,
}

impl PathFit {
    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    pub fn deviances(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.deviance()).collect()
    }
}

/// Numerically safe `log(1 + exp(t))`.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Compensated (Neumaier) summation; keeps objective traces stable enough to
/// assert monotonicity at 1e-12 slack.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Negative log-likelihood `sum_i log(1 + exp(-y_i eta_i))`, overflow-safe.
pub fn neg_log_lik(eta: &[f64], y: &[f64]) -> Result<f64> {
    if eta.len() != y.len() {
        return Err(Error::Dimension(format!(
            "eta length {} != y length {}",
            eta.len(),
            y.len()
        )));
    }
    Ok(compensated_sum(
        eta.iter().zip(y).map(|(&e, &yi)| log1p_exp(-yi * e)),
    ))
}

/// `sign(z) * max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn validate_problem(design: &SparseColumnMatrix, y: &[f64], penalty: &PenaltySpec) -> Result<()> {
    if y.len() != design.n_rows() {
        return Err(Error::Dimension(format!(
            "y length {} != {} rows",
            y.len(),
            design.n_rows()
        )));
    }
    if penalty.len() != design.n_cols() {
        return Err(Error::Dimension(format!(
            "penalty length {} != {} columns",
            penalty.len(),
            design.n_cols()
        )));
    }
    if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Invalid(format!("response values must be +1 or -1, found {v}")));
    }
    if design.n_rows() == 0 {
        return Err(Error::Invalid("design has no rows".into()));
    }
    Ok(())
}

/// Working state for coordinate descent.
struct CdState<'a> {
    m: &'a SparseColumnMatrix,
    y: &'a [f64],
    /// Responses mapped to {0, 1}.
    z: Vec<f64>,
    ones: Vec<f64>,
    alpha: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
    /// Working residual `z_i - sigmoid(eta_i)`.
    res: Vec<f64>,
}

impl<'a> CdState<'a> {
    fn new(m: &'a SparseColumnMatrix, y: &'a [f64], alpha: f64, beta: Vec<f64>) -> Result<CdState<'a>> {
        let n = m.n_rows();
        let z: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let mut eta = m.apply(&beta)?;
        for e in eta.iter_mut() {
            *e += alpha;
        }
        let res = z
            .iter()
            .zip(&eta)
            .map(|(&zi, &ei)| zi - sigmoid(ei))
            .collect();
        Ok(CdState {
            m,
            y,
            z,
            ones: vec![1.0; n],
            alpha,
            beta,
            eta,
            res,
        })
    }

    fn n(&self) -> f64 {
        self.m.n_rows() as f64
    }

    fn nll(&self) -> f64 {
        neg_log_lik(&self.eta, self.y).expect("state dimensions are consistent")
    }

    fn objective(&self, lambda: f64, penalty: &PenaltySpec) -> f64 {
        let n = self.n();
        let pen = compensated_sum(
            self.beta
                .iter()
                .zip(penalty.weights())
                .map(|(&b, &w)| w * b.abs()),
        );
        self.nll() + n * lambda * pen
    }

    fn shift_column(&mut self, col: usize, delta: f64) {
        for (&row, &v) in self.m.col_rows(col).iter().zip(self.m.col_values(col)) {
            self.eta[row] += v * delta;
            self.res[row] = self.z[row] - sigmoid(self.eta[row]);
        }
    }

    fn update_intercept(&mut self) {
        let num: f64 = compensated_sum(self.res.iter().copied());
        let h = 0.25 * self.n();
        let delta = num / h;
        if delta != 0.0 {
            self.alpha += delta;
            for i in 0..self.eta.len() {
                self.eta[i] += delta;
                self.res[i] = self.z[i] - sigmoid(self.eta[i]);
            }
        }
    }

    /// One majorized coordinate-descent pass over `cols` (intercept included).
    /// Returns true when any penalized coefficient entered or left the support.
    fn sweep(&mut self, cols: &[usize], lambda: f64, penalty: &PenaltySpec) -> bool {
        self.update_intercept();
        let n = self.n();
        let mut support_changed = false;
        for &j in cols {
            let (num, sq) = self
                .m
                .column_weighted_inner(j, &self.res, &self.ones)
                .expect("state dimensions are consistent");
            if sq == 0.0 {
                continue;
            }
            let h = 0.25 * sq;
            let old = self.beta[j];
            let target = h * old + num;
            let w = penalty.weight(j);
            let new = if w > 0.0 {
                soft_threshold(target, n * lambda * w) / h
            } else {
                target / h
            };
            if new != old {
                if w > 0.0 && ((old == 0.0) != (new == 0.0)) {
                    support_changed = true;
                }
                self.beta[j] = new;
                self.shift_column(j, new - old);
            }
        }
        support_changed
    }

    /// Max KKT violation over the intercept and all columns at `lambda`.
    fn max_kkt_violation(&self, lambda: f64, penalty: &PenaltySpec) -> f64 {
        let n = self.n();
        let g_alpha = -compensated_sum(self.res.iter().copied());
        let mut worst = g_alpha.abs();
        for j in 0..self.m.n_cols() {
            let (num, _) = self
                .m
                .column_weighted_inner(j, &self.res, &self.ones)
                .expect("state dimensions are consistent");
            let g = -num;
            let w = penalty.weight(j);
            let excess = if w > 0.0 {
                let t = n * lambda * w;
                if self.beta[j] == 0.0 {
                    (g.abs() - t).max(0.0)
                } else {
                    (g + t * self.beta[j].signum()).abs()
                }
            } else {
                g.abs()
            };
            worst = worst.max(excess);
        }
        worst
    }

    fn into_fit(self, lambda: f64, penalty: &PenaltySpec, converged: bool, trace: Vec<f64>) -> SingleFit {
        let n_nonzero_penalized = self
            .beta
            .iter()
            .zip(penalty.weights())
            .filter(|(b, w)| **w > 0.0 && **b != 0.0)
            .count();
        SingleFit {
            alpha: self.alpha,
            nll: self.nll(),
            beta: self.beta,
            lambda,
            n_nonzero_penalized,
            n_unpenalized: penalty.n_unpenalized(),
            converged,
            objective_trace: trace,
        }
    }
}

/// Intercept-plus-unpenalized-columns fit (the null model of the path).
#[derive(Debug, Clone)]
pub struct NullModel {
    pub alpha: f64,
    /// Full-length coefficient vector; penalized entries are exactly zero.
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
}

const NULL_GRAD_TOL: f64 = 1e-10;
const NULL_MAX_ITER: usize = 200;

/// Fits the unpenalized sub-model by damped Newton iteration to a max-abs
/// gradient of 1e-10. Fails when the iteration cannot make progress, which
/// signals separable data on the unpenalized covariates.
pub fn fit_unpenalized(
    design: &SparseColumnMatrix,
    y: &[f64],
    penalty: &PenaltySpec,
) -> Result<NullModel> {
    validate_problem(design, y, penalty)?;
    let n = design.n_rows();
    let unpen: Vec<usize> = (0..design.n_cols())
        .filter(|&j| !penalty.is_penalized(j))
        .collect();
    let z: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();

    // Row-major view of the unpenalized columns (position in `unpen`, value).
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (u, &j) in unpen.iter().enumerate() {
        for (&row, &v) in design.col_rows(j).iter().zip(design.col_values(j)) {
            rows[row].push((u, v));
        }
    }

    let k = unpen.len() + 1; // intercept first
    let mut coef = vec![0.0; k];
    let mut eta = vec![0.0; n];
    let eval_eta = |coef: &[f64], eta: &mut [f64]| {
        for i in 0..n {
            let mut e = coef[0];
            for &(u, v) in &rows[i] {
                e += coef[u + 1] * v;
            }
            eta[i] = e;
        }
    };
    let nll_of = |eta: &[f64]| neg_log_lik(eta, y).expect("lengths match");

    eval_eta(&coef, &mut eta);
    let mut obj = nll_of(&eta);

    for _ in 0..NULL_MAX_ITER {
        // Gradient and Hessian of the sub-model.
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for i in 0..n {
            let p = sigmoid(eta[i]);
            let r = p - z[i];
            let w = (p * (1.0 - p)).max(1e-12);
            grad[0] += r;
            hess[0] += w;
            for &(u, v) in &rows[i] {
                grad[u + 1] += r * v;
                hess[u + 1] += w * v; // column 0 of the Hessian
                for &(u2, v2) in &rows[i] {
                    if u2 >= u {
                        hess[(u + 1) * k + (u2 + 1)] += w * v * v2;
                    }
                }
            }
        }
        // Mirror the intercept row/column and the strict lower triangle.
        for a in 0..k {
            for b in (a + 1)..k {
                let v = if a == 0 { hess[b] } else { hess[a * k + b] };
                hess[b * k + a] = v;
                hess[a * k + b] = v;
            }
        }

        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= NULL_GRAD_TOL {
            let mut beta = vec![0.0; design.n_cols()];
            for (u, &j) in unpen.iter().enumerate() {
                beta[j] = coef[u + 1];
            }
            return Ok(NullModel {
                alpha: coef[0],
                beta,
                eta,
            });
        }

        let step = cholesky_solve(&mut hess, &grad, k).ok_or_else(|| {
            Error::Separable("singular Hessian in the unpenalized sub-model".into())
        })?;

        // Damped update: halve until the objective does not increase.
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = coef
                .iter()
                .zip(&step)
                .map(|(c, s)| c - scale * s)
                .collect();
            eval_eta(&trial, &mut eta);
            let trial_obj = nll_of(&eta);
            if trial_obj <= obj + 1e-12 * obj.abs().max(1.0) {
                coef = trial;
                obj = trial_obj;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::Separable(
                "Newton step cannot reduce the sub-model objective".into(),
            ));
        }
    }
    Err(Error::Separable(format!(
        "gradient did not reach {NULL_GRAD_TOL} in {NULL_MAX_ITER} Newton iterations"
    )))
}

/// Solves `A x = b` for symmetric positive-definite `A` (destroys `A`).
fn cholesky_solve(a: &mut [f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    // In-place lower Cholesky.
    for j in 0..k {
        let mut d = a[j * k + j];
        for l in 0..j {
            d -= a[j * k + l] * a[j * k + l];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in (j + 1)..k {
            let mut v = a[i * k + j];
            for l in 0..j {
                v -= a[i * k + l] * a[j * k + l];
            }
            a[i * k + j] = v / d;
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..k {
        for l in 0..i {
            let t = a[i * k + l] * x[l];
            x[i] -= t;
        }
        x[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for l in (i + 1)..k {
            let t = a[l * k + i] * x[l];
            x[i] -= t;
        }
        x[i] /= a[i * k + i];
    }
    Some(x)
}

/// Safety factor applied to the computed path start so that coordinate
/// descent provably leaves every penalized coefficient at exact zero there.
const LAMBDA_MAX_SAFETY: f64 = 1e-8;

fn lambda_max_from_null(
    design: &SparseColumnMatrix,
    null: &NullModel,
    y: &[f64],
    penalty: &PenaltySpec,
) -> Result<f64> {
    if penalty.n_penalized() == 0 {
        return Err(Error::Invalid(
            "lambda_max requires at least one penalized column".into(),
        ));
    }
    let n = design.n_rows() as f64;
    let res: Vec<f64> = null
        .eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| (if yi > 0.0 { 1.0 } else { 0.0 }) - sigmoid(e))
        .collect();
    let ones = vec![1.0; design.n_rows()];
    let mut raw: f64 = 0.0;
    for j in 0..design.n_cols() {
        if penalty.is_penalized(j) {
            let (num, _) = design.column_weighted_inner(j, &res, &ones)?;
            raw = raw.max(num.abs() / (n * penalty.weight(j)));
        }
    }
    Ok(raw * (1.0 + LAMBDA_MAX_SAFETY))
}

/// Smallest penalty at which the optimum keeps every penalized coefficient at
/// zero: the max over penalized columns of the sub-model gradient scaled by
/// `1 / (n * weight)`, with a 1e-8 relative safety factor.
pub fn lambda_max(design: &SparseColumnMatrix, y: &[f64], penalty: &PenaltySpec) -> Result<f64> {
    let null = fit_unpenalized(design, y, penalty)?;
    lambda_max_from_null(design, &null, y, penalty)
}

fn null_to_fit(
    null: &NullModel,
    y: &[f64],
    lambda: f64,
    penalty: &PenaltySpec,
) -> SingleFit {
    let nll = neg_log_lik(&null.eta, y).expect("lengths match");
    SingleFit {
        alpha: null.alpha,
        beta: null.beta.clone(),
        lambda,
        nll,
        n_nonzero_penalized: 0,
        n_unpenalized: penalty.n_unpenalized(),
        converged: true,
        // No penalized coefficient is active, so the penalty term is zero.
        objective_trace: vec![nll],
    }
}

fn rel_change(prev: f64, new: f64) -> f64 {
    (prev - new).abs() / prev.abs().max(1.0)
}

/// Core coordinate-descent loop at a fixed lambda, on an existing state.
fn cd_fit(
    state: &mut CdState<'_>,
    lambda: f64,
    penalty: &PenaltySpec,
    config: &FitConfig,
) -> (bool, Vec<f64>) {
    let all_cols: Vec<usize> = (0..state.m.n_cols()).collect();
    let kkt_target = state.n() * config.tol;
    let mut trace = vec![state.objective(lambda, penalty)];
    let mut sweeps = 0usize;
    let mut converged = false;

    'outer: while sweeps < config.max_sweeps {
        // Full sweep.
        let support_changed = state.sweep(&all_cols, lambda, penalty);
        sweeps += 1;
        let obj = state.objective(lambda, penalty);
        let full_rel = rel_change(*trace.last().unwrap(), obj);
        trace.push(obj);

        if full_rel < config.tol && !support_changed {
            // The confirming sweep changed nothing; certify optimality.
            if state.max_kkt_violation(lambda, penalty) <= kkt_target {
                converged = true;
                break 'outer;
            }
            continue 'outer;
        }

        // Active-set phase: nonzero penalized plus all unpenalized columns.
        let active: Vec<usize> = (0..state.m.n_cols())
            .filter(|&j| !penalty.is_penalized(j) || state.beta[j] != 0.0)
            .collect();
        while sweeps < config.max_sweeps {
            state.sweep(&active, lambda, penalty);
            sweeps += 1;
            let obj = state.objective(lambda, penalty);
            let rel = rel_change(*trace.last().unwrap(), obj);
            trace.push(obj);
            if rel < config.tol {
                continue 'outer;
            }
        }
    }
    (converged, trace)
}

/// Minimizes the penalized objective at one lambda by cyclic coordinate
/// descent with 1/4-curvature majorization, warm-started from `warm_start`
/// when given. Runs until the relative objective change drops below
/// `config.tol` and the KKT conditions hold at `n * config.tol`; if the sweep
/// budget runs out first, the best iterate is returned with `converged` false.
pub fn fit_at_lambda(
    design: &SparseColumnMatrix,
    y: &[f64],
    penalty: &PenaltySpec,
    lambda: f64,
    warm_start: Option<&SingleFit>,
    config: &FitConfig,
) -> Result<SingleFit> {
    validate_problem(design, y, penalty)?;
    config.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, found {lambda}")));
    }
    let (alpha, beta) = match warm_start {
        Some(f) => {
            if f.beta.len() != design.n_cols() {
                return Err(Error::Dimension(format!(
                    "warm start has {} coefficients, design has {} columns",
                    f.beta.len(),
                    design.n_cols()
                )));
            }
            (f.alpha, f.beta.clone())
        }
        None => (0.0, vec![0.0; design.n_cols()]),
    };
    let mut state = CdState::new(design, y, alpha, beta)?;
    let (converged, trace) = cd_fit(&mut state, lambda, penalty, config);
    Ok(state.into_fit(lambda, penalty, converged, trace))
}

/// Geometric grid of `n_lambda` points from `lambda_max` down to
/// `lambda_min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, config: &FitConfig) -> Vec<f64> {
    if config.n_lambda == 1 {
        return vec![lambda_max];
    }
    let log_ratio = config.lambda_min_ratio.ln();
    (0..config.n_lambda)
        .map(|t| {
            if t == 0 {
                lambda_max
            } else if t == config.n_lambda - 1 {
                lambda_max * config.lambda_min_ratio
            } else {
                lambda_max * (log_ratio * t as f64 / (config.n_lambda - 1) as f64).exp()
            }
        })
        .collect()
}

/// Fits a path on an explicit decreasing grid. Grid points at or above the
/// problem's own path start reuse the null-model solution directly (that is
/// the exact optimum there); the rest run warm-started coordinate descent.
pub fn fit_path_on_grid(
    design: &SparseColumnMatrix,
    y: &[f64],
    penalty: &PenaltySpec,
    config: &FitConfig,
    grid: &[f64],
) -> Result<PathFit> {
    validate_problem(design, y, penalty)?;
    config.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config("lambda grid must be strictly decreasing".into()));
        }
    }
    let null = fit_unpenalized(design, y, penalty)?;
    let own_start = lambda_max_from_null(design, &null, y, penalty)? / (1.0 + LAMBDA_MAX_SAFETY);

    let mut fits: Vec<SingleFit> = Vec::with_capacity(grid.len());
    let mut state: Option<CdState<'_>> = None;
    for &lambda in grid {
        if lambda >= own_start && state.is_none() {
            fits.push(null_to_fit(&null, y, lambda, penalty));
            continue;
        }
        let mut st = match state.take() {
            Some(st) => st,
            None => CdState::new(design, y, null.alpha, null.beta.clone())?,
        };
        let (converged, trace) = cd_fit(&mut st, lambda, penalty, config);
        let n_nonzero_penalized = st
            .beta
            .iter()
            .zip(penalty.weights())
            .filter(|(b, w)| **w > 0.0 && **b != 0.0)
            .count();
        fits.push(SingleFit {
            alpha: st.alpha,
            beta: st.beta.clone(),
            lambda,
            nll: st.nll(),
            n_nonzero_penalized,
            n_unpenalized: penalty.n_unpenalized(),
            converged,
            objective_trace: trace,
        });
        state = Some(st);
    }
    Ok(PathFit {
        lambdas: grid.to_vec(),
        fits,
    })
}

/// Fits the full regularization path: geometric grid from the computed path
/// start down to `lambda_min_ratio` times it, each fit warm-started from the
/// previous one.
pub fn fit_path(
    design: &SparseColumnMatrix,
    y: &[f64],
    penalty: &PenaltySpec,
    config: &FitConfig,
) -> Result<PathFit> {
    validate_problem(design, y, penalty)?;
    config.validate()?;
    let null = fit_unpenalized(design, y, penalty)?;
    let lmax = lambda_max_from_null(design, &null, y, penalty)?;
    let grid = lambda_grid(lmax, config);
    fit_path_on_grid(design, y, penalty, config, &grid)
}

/// One KKT condition failure.
#[derive(Debug, Clone)]
pub struct KktViolation {
    /// Column index, or `None` for the intercept.
    pub col: Option<usize>,
    pub beta: f64,
    pub gradient: f64,
    /// How far outside the allowed band the gradient sits.
    pub excess: f64,
}

/// Result of checking first-order optimality of a fit.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Largest excess over all coordinates (0 when optimal within tolerance).
    pub max_violation: f64,
    /// Coordinates whose excess exceeds the tolerance.
    pub violations: Vec<KktViolation>,
    pub tol: f64,
}

impl KktReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the subgradient optimality conditions of a fit at tolerance `tol`:
/// for penalized `j`, `|g_j| <= n*lambda*w_j + tol` at zero and
/// `|g_j + n*lambda*w_j*sign(beta_j)| <= tol` off zero; for unpenalized
/// coordinates and the intercept, `|g_j| <= tol`.
pub fn kkt_check(
    fit: &SingleFit,
    design: &SparseColumnMatrix,
    y: &[f64],
    penalty: &PenaltySpec,
    tol: f64,
) -> Result<KktReport> {
    validate_problem(design, y, penalty)?;
    if fit.beta.len() != design.n_cols() {
        return Err(Error::Dimension(format!(
            "fit has {} coefficients, design has {} columns",
            fit.beta.len(),
            design.n_cols()
        )));
    }
    let n = design.n_rows() as f64;
    let mut eta = design.apply(&fit.beta)?;
    for e in eta.iter_mut() {
        *e += fit.alpha;
    }
    let res: Vec<f64> = y
        .iter()
        .zip(&eta)
        .map(|(&yi, &ei)| (if yi > 0.0 { 1.0 } else { 0.0 }) - sigmoid(ei))
        .collect();
    let ones = vec![1.0; design.n_rows()];

    let mut report = KktReport {
        max_violation: 0.0,
        violations: Vec::new(),
        tol,
    };
    let mut push = |col: Option<usize>, beta: f64, gradient: f64, excess: f64| {
        report.max_violation = report.max_violation.max(excess);
        if excess > tol {
            report.violations.push(KktViolation {
                col,
                beta,
                gradient,
                excess,
            });
        }
    };

    let g_alpha = -compensated_sum(res.iter().copied());
    push(None, fit.alpha, g_alpha, g_alpha.abs());

    for j in 0..design.n_cols() {
        let (num, _) = design.column_weighted_inner(j, &res, &ones)?;
        let g = -num;
        let w = penalty.weight(j);
        let excess = if w > 0.0 {
            let t = n * fit.lambda * w;
            if fit.beta[j] == 0.0 {
                (g.abs() - t).max(0.0)
            } else {
                (g + t * fit.beta[j].signum()).abs()
            }
        } else {
            g.abs()
        };
        push(Some(j), fit.beta[j], g, excess);
    }
    Ok(report)
}
