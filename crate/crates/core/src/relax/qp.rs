//! Pairwise coordinate ascent for the SVM dual
//!
//! ```text
//! max  sum_i p_i a_i - 1/2 sum_ij a_i y_i a_j y_j K_ij
//! s.t. sum_i a_i y_i = 0,  0 <= a_i <= u_i
//! ```
//!
//! `p` is all-ones for the standard dual; `u_i` may be infinite, which is how
//! hard-margin rows are expressed. The working pair is the maximal violating
//! index `i` together with the second-order choice of `j` among the indices
//! violating against `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

const TAU: f64 = 1e-12;
/// Multipliers beyond this size mean the hard-margin rows cannot be separated.
const DIVERGENCE: f64 = 1e10;

/// The SVM dual over a precomputed kernel matrix.
#[derive(Debug, Clone)]
pub struct SvmQp<'a> {
    pub gram: &'a GramMatrix,
    pub y: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear: Vec<f64>,
    pub equality: bool,
}

impl<'a> SvmQp<'a> {
    /// Standard soft-margin dual with box `C/2` on every multiplier.
    pub fn standard(gram: &'a GramMatrix, y: &[f64], c: f64) -> Self {
        let n = y.len();
        SvmQp {
            gram,
            y: y.to_vec(),
            upper: vec![c / 2.0; n],
            linear: vec![1.0; n],
            equality: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.gram.n();
        for len in [self.y.len(), self.upper.len(), self.linear.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        if self.upper.iter().any(|&u| u.is_nan() || u < 0.0) {
            return Err(Error::InvalidArgument("negative box bound".into()));
        }
        if self.y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
        }
        Ok(())
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.gram.get(i, j)
    }

    /// Dual objective `p^T a - 1/2 a^T Q a`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = alpha.len();
        let mut quad = 0.0;
        for i in 0..n {
            if alpha[i] == 0.0 {
                continue;
            }
            let row = self.gram.row(i);
            let mut s = 0.0;
            for j in 0..n {
                if alpha[j] != 0.0 {
                    s += alpha[j] * self.y[j] * row[j];
                }
            }
            quad += alpha[i] * self.y[i] * s;
        }
        self.linear.iter().zip(alpha).map(|(p, a)| p * a).sum::<f64>() - 0.5 * quad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    IterationLimit,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: QpStatus,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub dual_objective: f64,
    /// Largest KKT violation `m(a) - M(a)` at exit.
    pub kkt_violation: f64,
    /// `|sum a_i y_i|` at exit.
    pub equality_residual: f64,
    /// Feasible interval for the bias implied by the bound multipliers.
    pub beta_interval: (f64, f64),
    pub iterations: usize,
}

pub fn default_iter_cap(n: usize) -> usize {
    (100 * n * n).max(10_000)
}

pub fn solve_svm_qp(q: &SvmQp, tol: f64, iter_cap: usize) -> Result<QpSolution> {
    solve_svm_qp_warm(q, tol, iter_cap, None)
}

/// As [`solve_svm_qp`], starting from `start` when it is feasible.
pub fn solve_svm_qp_warm(
    q: &SvmQp,
    tol: f64,
    iter_cap: usize,
    start: Option<&[f64]>,
) -> Result<QpSolution> {
    q.validate()?;
    let n = q.y.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty QP".into()));
    }
    if q.equality {
        let has = |s: f64| q.y.iter().any(|&v| v == s);
        let open = |s: f64| q.y.iter().zip(&q.upper).any(|(&v, &u)| v == s && u > 0.0);
        let any_open = open(1.0) || open(-1.0);
        if !has(1.0) || !has(-1.0) || (any_open && (!open(1.0) || !open(-1.0))) {
            return Ok(QpSolution {
                status: QpStatus::Infeasible,
                alpha: vec![0.0; n],
                beta: 0.0,
                dual_objective: 0.0,
                kkt_violation: f64::INFINITY,
                equality_residual: 0.0,
                beta_interval: (f64::NEG_INFINITY, f64::INFINITY),
                iterations: 0,
            });
        }
    }

    let mut alpha = match start {
        Some(a) if a.len() == n && warm_feasible(q, a) => a.to_vec(),
        _ => vec![0.0; n],
    };
    // Gradient of f(a) = 1/2 a^T Q a - p^T a.
    let mut grad: Vec<f64> = q.linear.iter().map(|p| -p).collect();
    for (j, &aj) in alpha.iter().enumerate() {
        if aj != 0.0 {
            for (k, g) in grad.iter_mut().enumerate() {
                *g += aj * q.q(j, k);
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| q.gram.get(i, i)).collect();

    // Variables stuck at a bound leave the working set; the gradient of
    // the others is only refreshed when the working set looks optimal.
    let mut active: Vec<usize> = (0..n).collect();
    let shrink_every = n.clamp(1, 1000);
    let mut countdown = shrink_every;
    let mut iterations = 0;
    let mut status = QpStatus::Optimal;
    let mut last_obj = if cfg!(debug_assertions) {
        objective_from_grad(q, &alpha, &grad)
    } else {
        0.0
    };
    loop {
        if q.equality {
            countdown -= 1;
            if countdown == 0 {
                countdown = shrink_every;
                shrink(q, &alpha, &grad, &mut active);
            }
        }
        let step = if q.equality {
            pair_step(q, &mut alpha, &grad, &diag, tol, &active)
        } else {
            single_step(q, &mut alpha, &grad, &diag, tol)
        };
        let Some([(i, di), (j, dj)]) = step else {
            if active.len() == n {
                break;
            }
            reconstruct_gradient(q, &alpha, &mut grad, &active);
            active = (0..n).collect();
            countdown = shrink_every;
            continue;
        };
        let (ri, rj) = (q.gram.row(i), q.gram.row(j));
        let (si, sj) = (di * q.y[i], dj * q.y[j]);
        if active.len() == n {
            for (k, g) in grad.iter_mut().enumerate() {
                *g += q.y[k] * (si * ri[k] + sj * rj[k]);
            }
        } else {
            for &k in &active {
                grad[k] += q.y[k] * (si * ri[k] + sj * rj[k]);
            }
        }
        iterations += 1;
        if cfg!(debug_assertions) && active.len() == n && iterations % 64 == 0 {
            let obj = objective_from_grad(q, &alpha, &grad);
            debug_assert!(
                obj >= last_obj - 1e-9 * (1.0 + last_obj.abs()),
                "dual objective decreased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
        if alpha[i] > DIVERGENCE || alpha[j] > DIVERGENCE {
            status = QpStatus::Infeasible;
            break;
        }
        if iterations >= iter_cap {
            status = QpStatus::IterationLimit;
            break;
        }
    }
    if active.len() < n {
        reconstruct_gradient(q, &alpha, &mut grad, &active);
    }

    let kkt_violation = if q.equality {
        violating_gap(q, &alpha, &grad)
    } else {
        single_violation(q, &alpha, &grad)
    };
    let (beta, beta_interval) = if q.equality {
        recover_bias(q, &alpha, &grad)
    } else {
        (0.0, (0.0, 0.0))
    };
    let equality_residual = alpha.iter().zip(&q.y).map(|(a, y)| a * y).sum::<f64>().abs();
    Ok(QpSolution {
        status,
        dual_objective: objective_from_grad(q, &alpha, &grad),
        alpha,
        beta,
        kkt_violation,
        equality_residual,
        beta_interval,
        iterations,
    })
}

/// Removes from `active` the bounded variables that cannot enter a
/// violating pair at the current gradient.
fn shrink(q: &SvmQp, alpha: &[f64], grad: &[f64], active: &mut Vec<usize>) {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = f64::INFINITY;
    for &t in active.iter() {
        let v = -q.y[t] * grad[t];
        if in_up(q.y[t], alpha[t], q.upper[t]) {
            gmax = gmax.max(v);
        }
        if in_low(q.y[t], alpha[t], q.upper[t]) {
            gmin = gmin.min(v);
        }
    }
    active.retain(|&t| {
        let (up, low) = (in_up(q.y[t], alpha[t], q.upper[t]), in_low(q.y[t], alpha[t], q.upper[t]));
        let v = -q.y[t] * grad[t];
        !((up && !low && v < gmin) || (low && !up && v > gmax))
    });
}

/// Recomputes the gradient of every variable outside `active`.
fn reconstruct_gradient(q: &SvmQp, alpha: &[f64], grad: &mut [f64], active: &[usize]) {
    let n = alpha.len();
    let mut inactive = vec![true; n];
    for &t in active {
        inactive[t] = false;
    }
    for k in 0..n {
        if inactive[k] {
            grad[k] = -q.linear[k];
        }
    }
    for j in 0..n {
        if alpha[j] == 0.0 {
            continue;
        }
        let row = q.gram.row(j);
        let s = alpha[j] * q.y[j];
        for k in 0..n {
            if inactive[k] {
                grad[k] += s * q.y[k] * row[k];
            }
        }
    }
}

fn warm_feasible(q: &SvmQp, a: &[f64]) -> bool {
    let box_ok = a.iter().zip(&q.upper).all(|(&v, &u)| v >= 0.0 && v <= u);
    let eq: f64 = a.iter().zip(&q.y).map(|(v, y)| v * y).sum();
    box_ok && (!q.equality || eq.abs() <= 1e-10 * (1.0 + a.iter().sum::<f64>()))
}

fn objective_from_grad(q: &SvmQp, alpha: &[f64], grad: &[f64]) -> f64 {
    // -f(a) = p^T a - 1/2 a^T (G + p)
    let mut v = 0.0;
    for i in 0..alpha.len() {
        v += alpha[i] * (q.linear[i] - 0.5 * (grad[i] + q.linear[i]));
    }
    v
}

#[inline]
fn in_up(y: f64, a: f64, u: f64) -> bool {
    (y > 0.0 && a < u) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, u: f64) -> bool {
    (y < 0.0 && a < u) || (y > 0.0 && a > 0.0)
}

fn violating_gap(q: &SvmQp, alpha: &[f64], grad: &[f64]) -> f64 {
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = f64::INFINITY;
    for t in 0..alpha.len() {
        let v = -q.y[t] * grad[t];
        if in_up(q.y[t], alpha[t], q.upper[t]) {
            gmax = gmax.max(v);
        }
        if in_low(q.y[t], alpha[t], q.upper[t]) {
            gmin = gmin.min(v);
        }
    }
    if gmax.is_finite() && gmin.is_finite() {
        (gmax - gmin).max(0.0)
    } else {
        0.0
    }
}

/// One SMO update. Returns the multiplier changes, or `None` at optimality.
fn pair_step(
    q: &SvmQp,
    alpha: &mut [f64],
    grad: &[f64],
    diag: &[f64],
    tol: f64,
    active: &[usize],
) -> Option<[(usize, f64); 2]> {
    let mut gmax = f64::NEG_INFINITY;
    let mut i = usize::MAX;
    let mut gmin = f64::INFINITY;
    for &t in active {
        let v = -q.y[t] * grad[t];
        if in_up(q.y[t], alpha[t], q.upper[t]) && v > gmax {
            gmax = v;
            i = t;
        }
        if in_low(q.y[t], alpha[t], q.upper[t]) {
            gmin = gmin.min(v);
        }
    }
    if i == usize::MAX || gmax - gmin < tol {
        return None;
    }
    let ki = q.gram.row(i);
    let mut j = usize::MAX;
    let mut best = f64::INFINITY;
    for &t in active {
        if !in_low(q.y[t], alpha[t], q.upper[t]) {
            continue;
        }
        let b = gmax + q.y[t] * grad[t];
        if b > 0.0 {
            let mut a = diag[i] + diag[t] - 2.0 * ki[t];
            if a <= 0.0 {
                a = TAU;
            }
            let score = -(b * b) / a;
            if score < best {
                best = score;
                j = t;
            }
        }
    }
    if j == usize::MAX {
        return None;
    }

    let (ci, cj) = (q.upper[i], q.upper[j]);
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let qij = q.y[i] * q.y[j] * ki[j];
    if q.y[i] != q.y[j] {
        let mut quad = diag[i] + diag[j] + 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > ci - cj {
            if alpha[i] > ci {
                alpha[i] = ci;
                alpha[j] = ci - diff;
            }
        } else if alpha[j] > cj {
            alpha[j] = cj;
            alpha[i] = cj + diff;
        }
    } else {
        let mut quad = diag[i] + diag[j] - 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > ci {
            if alpha[i] > ci {
                alpha[i] = ci;
                alpha[j] = sum - ci;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > cj {
            if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = sum - cj;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
    Some([(i, alpha[i] - old_i), (j, alpha[j] - old_j)])
}

fn single_violation(q: &SvmQp, alpha: &[f64], grad: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..alpha.len() {
        let g = grad[t];
        if (g < 0.0 && alpha[t] < q.upper[t]) || (g > 0.0 && alpha[t] > 0.0) {
            worst = worst.max(g.abs());
        }
    }
    worst
}

fn single_step(
    q: &SvmQp,
    alpha: &mut [f64],
    grad: &[f64],
    diag: &[f64],
    tol: f64,
) -> Option<[(usize, f64); 2]> {
    let mut best = tol;
    let mut pick = None;
    for t in 0..alpha.len() {
        let g = grad[t];
        if ((g < 0.0 && alpha[t] < q.upper[t]) || (g > 0.0 && alpha[t] > 0.0)) && g.abs() >= best {
            best = g.abs();
            pick = Some(t);
        }
    }
    let t = pick?;
    let old = alpha[t];
    let d = if diag[t] > 0.0 { diag[t] } else { TAU };
    alpha[t] = (old - grad[t] / d).clamp(0.0, q.upper[t]);
    Some([(t, alpha[t] - old), (t, 0.0)])
}

/// Bias from the free multipliers, else the midpoint of the interval
/// allowed by the multipliers at their bounds.
fn recover_bias(q: &SvmQp, alpha: &[f64], grad: &[f64]) -> (f64, (f64, f64)) {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..alpha.len() {
        let yg = q.y[t] * grad[t];
        if alpha[t] >= q.upper[t] {
            if q.y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if q.y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    // Decision values are sum a_j y_j K(x_j, x) - rho, so beta = -rho.
    let rho = if free > 0 {
        sum_free / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    (-rho, (-ub, -lb))
}
