//! Per-series classification labels from the accuracy/diversity QP.
//!
//! For each series the pool's error matrix yields a redundancy matrix `Q`
//! (Pearson correlation of the error columns) and a relevance vector `c`
//! (negated, min-max scaled sOWA). The convex program
//!
//! ```text
//! min  ½(1-α) xᵀQx - α xᵀc   s.t.  Σx = 1, x ≥ 0
//! ```
//!
//! is solved by projected gradient with an exact simplex projection, and
//! the solution is thresholded into binary labels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::matrix::{symmetric_eigen, Matrix};
use crate::metrics;

/// `E = F - F̂`: actual value minus each method's forecast.
pub fn error_matrix(forecasts: &Matrix, actual: &[f64]) -> Result<Matrix> {
    check_len(forecasts.rows(), actual.len())?;
    let mut e = forecasts.clone();
    for (h, &y) in actual.iter().enumerate() {
        for m in 0..e.cols() {
            e[(h, m)] = y - forecasts[(h, m)];
        }
    }
    Ok(e)
}

/// Pearson correlation of the error columns, unit diagonal. Pairs involving
/// a zero-variance column get 0.
pub fn correlation_matrix(errors: &Matrix) -> Result<Matrix> {
    let (h, m) = (errors.rows(), errors.cols());
    if h < 2 {
        return Err(Error::HorizonTooShort(h));
    }
    let centred: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let col = errors.column(j);
            let mu = math::mean(&col);
            col.into_iter().map(|v| v - mu).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| math::sqrt(c.iter().map(|v| v * v).sum()))
        .collect();
    let mut q = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            q[(i, j)] = r;
            q[(j, i)] = r;
        }
    }
    Ok(q)
}

/// Clamps negative eigenvalues to zero and rescales back to unit diagonal.
/// Matrices that are already PSD (to `1e-12`) are returned symmetrized but
/// otherwise untouched.
pub fn repair_psd(q: &Matrix) -> Matrix {
    let n = q.rows();
    let mut sym = q.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (q[(i, j)] + q[(j, i)]);
            sym[(i, j)] = avg;
            sym[(j, i)] = avg;
        }
    }
    let (vals, vecs) = symmetric_eigen(&sym);
    if vals.iter().all(|&v| v >= -1e-12) {
        return sym;
    }
    let clamped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n).map(|k| vecs[(i, k)] * clamped[k] * vecs[(j, k)]).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    let d: Vec<f64> = (0..n).map(|i| out[(i, i)]).collect();
    for i in 0..n {
        for j in 0..n {
            if d[i] > 0.0 && d[j] > 0.0 {
                out[(i, j)] /= math::sqrt(d[i] * d[j]);
            }
        }
    }
    out
}

/// Redundancy matrix `Q`: error correlations, symmetrized and PSD-repaired.
pub fn diversity_matrix(errors: &Matrix) -> Result<Matrix> {
    Ok(repair_psd(&correlation_matrix(errors)?))
}

/// Relevance `c`: each method's sOWA, negated and min-max scaled to [0, 1]
/// within the series. All-equal scores give 0.5 everywhere.
pub fn relevance_vector(
    forecasts: &Matrix,
    actual: &[f64],
    naive: &[f64],
    train: &[f64],
    period: usize,
) -> Result<Vec<f64>> {
    check_len(forecasts.rows(), actual.len())?;
    let neg: Vec<f64> = (0..forecasts.cols())
        .map(|m| metrics::sowa(actual, &forecasts.column(m), naive, train, period).map(|s| -s))
        .collect::<Result<_>>()?;
    Ok(min_max_scale(&neg))
}

pub(crate) fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Solves `(1-α)·mean(Q) = α·mean(c)` for α, clamped to [0, 1].
pub fn balance_alpha(q: &Matrix, c: &[f64]) -> Result<f64> {
    let q_bar = math::mean(q.as_slice());
    let c_bar = math::mean(c);
    let denom = q_bar + c_bar;
    if denom == 0.0 {
        return Err(Error::DegenerateBalance);
    }
    Ok((q_bar / denom).clamp(0.0, 1.0))
}

/// Euclidean projection onto the unit simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

pub const QP_TOLERANCE: f64 = 1e-9;
pub const QP_MAX_ITERATIONS: usize = 10_000;

/// Objective of the labeling QP.
pub fn qp_objective(q: &Matrix, c: &[f64], alpha: f64, x: &[f64]) -> f64 {
    0.5 * (1.0 - alpha) * q.quad_form(x) - alpha * x.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
}

fn qp_gradient(q: &Matrix, c: &[f64], alpha: f64, x: &[f64]) -> Vec<f64> {
    let qx = q.matvec(x).expect("square Q");
    qx.iter()
        .zip(c)
        .map(|(a, b)| (1.0 - alpha) * a - alpha * b)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Norm of `x - P(x - ∇f(x))` at the returned point.
    pub residual: f64,
    pub converged: bool,
}

impl QpSolution {
    /// Turns a non-converged run into [`Error::NotConverged`].
    pub fn check(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

fn pg_residual(x: &[f64], grad: &[f64]) -> f64 {
    let step: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    let p = project_simplex(&step);
    math::sqrt(x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Stationary point of the QP restricted to the support of `x`, from the
/// pseudo-inverse of the (symmetric, possibly singular) KKT matrix.
/// Returned only when it is feasible and certified by the residual test.
fn polish(q: &Matrix, c: &[f64], alpha: f64, x: &[f64]) -> Option<Vec<f64>> {
    [1e-12, 1e-9, 1e-6, 1e-4, 1e-3, 1e-2]
        .iter()
        .find_map(|&t| {
            let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] > t).collect();
            solve_on_support(q, c, alpha, &support)
        })
}

/// Largest pool for which every support is tried when projected gradient
/// stalls on a nearly singular `Q`.
const EXHAUSTIVE_MAX_M: usize = 12;

fn best_support(q: &Matrix, c: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let m = c.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        if let Some(x) = solve_on_support(q, c, alpha, &support) {
            let f = qp_objective(q, c, alpha, &x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

fn solve_on_support(q: &Matrix, c: &[f64], alpha: f64, support: &[usize]) -> Option<Vec<f64>> {
    if support.is_empty() {
        return None;
    }
    let k = support.len();
    let mut kkt = Matrix::zeros(k + 1, k + 1);
    let mut rhs = vec![0.0; k + 1];
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = (1.0 - alpha) * q[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = alpha * c[i];
    }
    rhs[k] = 1.0;
    let (values, vectors) = crate::matrix::symmetric_eigen(&kkt);
    let cutoff = 1e-12 * values.iter().fold(0.0, |m: f64, v| m.max(math::abs(*v)));
    let mut sol = vec![0.0; k + 1];
    for (e, &lambda) in values.iter().enumerate() {
        if math::abs(lambda) <= cutoff {
            continue;
        }
        let proj: f64 = (0..=k).map(|r| vectors[(r, e)] * rhs[r]).sum::<f64>() / lambda;
        for (r, s) in sol.iter_mut().enumerate() {
            *s += proj * vectors[(r, e)];
        }
    }
    let mut out = vec![0.0; c.len()];
    for (a, &i) in support.iter().enumerate() {
        if sol[a] < -1e-12 {
            return None;
        }
        out[i] = sol[a].max(0.0);
    }
    let total: f64 = out.iter().sum();
    if math::abs(total - 1.0) > 1e-9 {
        return None;
    }
    for v in &mut out {
        *v /= total;
    }
    (pg_residual(&out, &qp_gradient(q, c, alpha, &out)) <= QP_TOLERANCE).then_some(out)
}

/// Projected gradient with backtracking, started from the uniform point.
/// Every few iterations the current support is polished by an exact
/// equality-constrained solve; if that never certifies and `M` is small,
/// every support is tried.
///
/// With `α = 1` the objective is linear and the vertex at the first maximum
/// of `c` is returned directly.
pub fn solve_qp(q: &Matrix, c: &[f64], alpha: f64) -> Result<QpSolution> {
    let m = c.len();
    if q.rows() != m || q.cols() != m {
        return Err(Error::ShapeMismatch(alloc::format!(
            "Q is {}x{}, c has {m} entries",
            q.rows(),
            q.cols()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("empty QP".into()));
    }
    if alpha >= 1.0 {
        let best = (0..m).fold(0, |b, j| if c[j] > c[b] { j } else { b });
        let mut x = vec![0.0; m];
        x[best] = 1.0;
        return Ok(QpSolution {
            objective: qp_objective(q, c, alpha, &x),
            residual: pg_residual(&x, &qp_gradient(q, c, alpha, &x)),
            x,
            iterations: 0,
            converged: true,
        });
    }

    let mut x = vec![1.0 / m as f64; m];
    let mut f = qp_objective(q, c, alpha, &x);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut residual = pg_residual(&x, &qp_gradient(q, c, alpha, &x));
    while residual > QP_TOLERANCE && iterations < QP_MAX_ITERATIONS {
        iterations += 1;
        let grad = qp_gradient(q, c, alpha, &x);
        loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let candidate = project_simplex(&trial);
            let diff: Vec<f64> = candidate.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = grad.iter().zip(&diff).map(|(g, d)| g * d).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let f_new = qp_objective(q, c, alpha, &candidate);
            if f_new <= f + lin + sq / (2.0 * step) + 1e-15 * math::abs(f) || step < 1e-12 {
                x = candidate;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
        step = f64::min(step * 2.0, 1e6);
        residual = pg_residual(&x, &qp_gradient(q, c, alpha, &x));
        if residual > QP_TOLERANCE && iterations % 20 == 0 {
            if let Some(p) = polish(q, c, alpha, &x) {
                let fp = qp_objective(q, c, alpha, &p);
                if fp <= f + 1e-12 * (1.0 + math::abs(f)) {
                    residual = pg_residual(&p, &qp_gradient(q, c, alpha, &p));
                    x = p;
                    f = fp;
                }
            }
        }
    }
    if residual > QP_TOLERANCE && m <= EXHAUSTIVE_MAX_M {
        if let Some(p) = best_support(q, c, alpha) {
            let fp = qp_objective(q, c, alpha, &p);
            if fp <= f + 1e-12 * (1.0 + math::abs(f)) {
                residual = pg_residual(&p, &qp_gradient(q, c, alpha, &p));
                x = p;
            }
        }
    }
    for v in &mut x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    for v in &mut x {
        *v /= total;
    }
    Ok(QpSolution {
        objective: qp_objective(q, c, alpha, &x),
        converged: residual <= QP_TOLERANCE,
        x,
        iterations,
        residual,
    })
}

/// `label_j = 1` iff `x_j ≥ τ`.
pub fn labels_from_solution(x: &[f64], tau: f64) -> Vec<u8> {
    x.iter().map(|&v| u8::from(v >= tau)).collect()
}

/// Everything the labeling step produces for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBundle {
    pub q: Matrix,
    pub c: Vec<f64>,
    pub alpha: f64,
    pub x_star: Vec<f64>,
    pub labels: Vec<u8>,
    pub tau: f64,
}

/// Runs the full labeling chain for one series. `tau = None` uses `1/M`.
pub fn label_series(
    forecasts: &Matrix,
    actual: &[f64],
    naive: &[f64],
    train: &[f64],
    period: usize,
    tau: Option<f64>,
) -> Result<LabelBundle> {
    let m = forecasts.cols();
    let errors = error_matrix(forecasts, actual)?;
    let q = diversity_matrix(&errors)?;
    let c = relevance_vector(forecasts, actual, naive, train, period)?;
    let alpha = match balance_alpha(&q, &c) {
        Ok(a) => a,
        Err(Error::DegenerateBalance) => {
            log::warn!("degenerate alpha balance; using 0.5");
            0.5
        }
        Err(e) => return Err(e),
    };
    let solution = solve_qp(&q, &c, alpha)?;
    if !solution.converged {
        log::warn!(
            "labeling QP stopped after {} iterations (residual {:e})",
            solution.iterations,
            solution.residual
        );
    }
    let tau = tau.unwrap_or(1.0 / m as f64);
    Ok(LabelBundle {
        labels: labels_from_solution(&solution.x, tau),
        q,
        c,
        alpha,
        x_star: solution.x,
        tau,
    })
}
