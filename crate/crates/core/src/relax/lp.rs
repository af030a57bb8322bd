//! Bounded-variable revised primal simplex.
//!
//! Every row `a_i x (<=|>=|=) b_i` gets a logical variable `r_i = a_i x`
//! whose bounds encode the sense, so the working system is `A x - r = 0`
//! with bounds on all `n + m` variables. The basis inverse is kept dense
//! (column-major) and refreshed from scratch every few dozen pivots.
//! Phase 1 minimises the sum of bound violations of the basic variables;
//! phase 2 minimises the real objective from the feasible basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c^T x` subject to row constraints and variable bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// `n` variables with zero cost, bounds `[0, inf)`, and no rows.
    pub fn new(n: usize) -> Self {
        LpProblem {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LpRow { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u || l.is_nan() || u.is_nan() {
                return Err(Error::InvalidArgument(format!("variable {j}: bounds [{l}, {u}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite rhs")));
            }
            for &(j, v) in &row.coeffs {
                if j >= n {
                    return Err(Error::Dimension { expected: n, got: j + 1 });
                }
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("row {i}: non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let a = self.row_activity(i, x);
            let v = match row.sense {
                Sense::Le => a - row.rhs,
                Sense::Ge => row.rhs - a,
                Sense::Eq => (a - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap reached or the basis could not be kept nonsingular.
    Failed,
}

/// Final basis of a solve, reusable as a warm start when only bounds change.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    basic: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow prices `d objective / d rhs_i`.
    pub duals: Vec<f64>,
    /// Reduced costs of the structural variables.
    pub reduced_costs: Vec<f64>,
    /// Phase-1 optimum; strictly positive certifies infeasibility.
    pub infeasibility: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl LpSolution {
    /// Lagrangian dual bound `sum_i y_i b_i + sum_j d_j x_j^bound`; equals the
    /// objective at an optimal basis.
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        let mut v: f64 = p.rows.iter().zip(&self.duals).map(|(r, y)| y * r.rhs).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > 0.0 {
                v += d * p.lower[j];
            } else if d < 0.0 {
                v += d * p.upper[j];
            }
        }
        v
    }

    /// Sum of |multiplier * slack| over rows and bounded variables.
    pub fn complementarity_residual(&self, p: &LpProblem) -> f64 {
        let mut r = 0.0;
        for (i, row) in p.rows.iter().enumerate() {
            let slack = p.row_activity(i, &self.x) - row.rhs;
            r += (self.duals[i] * slack).abs();
        }
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            let gap = if d > 0.0 {
                self.x[j] - p.lower[j]
            } else {
                p.upper[j] - self.x[j]
            };
            if d != 0.0 {
                r += (d * gap).abs();
            }
        }
        r
    }
}

pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<LpSolution> {
    solve_lp_warm(p, tol, None)
}

/// Solves `p`, optionally starting from the basis of a previous solve of a
/// problem with the same rows and columns.
pub fn solve_lp_warm(p: &LpProblem, tol: f64, warm: Option<&Basis>) -> Result<LpSolution> {
    p.validate()?;
    let mut s = Simplex::new(p, tol);
    if let Some(b) = warm {
        s.load_basis(b);
    }
    Ok(s.run(p))
}

struct Simplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    feas_tol: f64,
    max_iter: usize,
}

const NONBASIC: usize = usize::MAX;

impl Simplex {
    fn new(p: &LpProblem, tol: f64) -> Self {
        let n = p.num_vars();
        let m = p.rows.len();
        let mut cols = vec![Vec::new(); n];
        let mut rows = vec![Vec::new(); m];
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                if v != 0.0 {
                    cols[j].push((i, v));
                    rows[i].push((j, v));
                }
            }
        }
        let mut lb = p.lower.clone();
        let mut ub = p.upper.clone();
        for row in &p.rows {
            let (l, u) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lb.push(l);
            ub.push(u);
        }
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = start_value(lb[j], ub[j]);
        }
        let mut s = Simplex {
            m,
            n,
            cols,
            rows,
            lb,
            ub,
            cost: p.objective.clone(),
            x,
            basis: (n..n + m).collect(),
            position: vec![NONBASIC; n + m],
            binv: Vec::new(),
            since_refactor: 0,
            feas_tol: tol.max(PRIMAL_TOL),
            max_iter: 200 * (n + m) + 10_000,
        };
        for (r, &v) in s.basis.iter().enumerate() {
            s.position[v] = r;
        }
        s.identity_basis_inverse();
        s.compute_basic_values();
        s
    }

    fn load_basis(&mut self, b: &Basis) {
        if b.basic.len() != self.m || b.values.len() != self.n + self.m {
            return;
        }
        let saved = (self.basis.clone(), self.position.clone(), self.x.clone());
        self.basis = b.basic.clone();
        self.position = vec![NONBASIC; self.n + self.m];
        for (r, &v) in self.basis.iter().enumerate() {
            self.position[v] = r;
        }
        for j in 0..self.n + self.m {
            if self.position[j] == NONBASIC {
                self.x[j] = b.values[j].clamp(self.lb[j], self.ub[j]);
                if !self.x[j].is_finite() {
                    self.x[j] = start_value(self.lb[j], self.ub[j]);
                }
            }
        }
        if self.refactor() {
            self.compute_basic_values();
        } else {
            (self.basis, self.position, self.x) = saved;
            self.identity_basis_inverse();
            self.compute_basic_values();
        }
    }

    fn column(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            ColIter::Structural(self.cols[j].iter())
        } else {
            ColIter::Logical(Some(j - self.n))
        }
    }

    fn identity_basis_inverse(&mut self) {
        // B = -I when every logical is basic in its own row.
        let m = self.m;
        self.binv = vec![0.0; m * m];
        for r in 0..m {
            self.basis[r] = self.n + r;
            self.binv[r * m + r] = -1.0;
        }
        self.position = vec![NONBASIC; self.n + m];
        for r in 0..m {
            self.position[self.n + r] = r;
        }
        for j in 0..self.n {
            if !(self.lb[j] <= self.x[j] && self.x[j] <= self.ub[j]) {
                self.x[j] = start_value(self.lb[j], self.ub[j]);
            }
        }
        self.since_refactor = 0;
    }

    /// Rebuilds the dense inverse. Returns false if the basis is singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let n = self.n;
        // Rows covered by a basic logical; the structural block lives on the rest.
        let mut logical_pos = vec![NONBASIC; m];
        let mut struct_pos = Vec::new();
        for (p, &v) in self.basis.iter().enumerate() {
            if v >= n {
                logical_pos[v - n] = p;
            } else {
                struct_pos.push(p);
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| logical_pos[i] == NONBASIC).collect();
        let s = struct_pos.len();
        if free_rows.len() != s {
            return false;
        }
        let mut row_slot = vec![NONBASIC; m];
        for (a, &i) in free_rows.iter().enumerate() {
            row_slot[i] = a;
        }
        // Dense S_R (s x s), row-major, with an identity appended for Gauss-Jordan.
        let mut sr = vec![0.0; s * s];
        for (b, &p) in struct_pos.iter().enumerate() {
            for &(i, v) in &self.cols[self.basis[p]] {
                if row_slot[i] != NONBASIC {
                    sr[row_slot[i] * s + b] = v;
                }
            }
        }
        let Some(sinv) = invert_dense(&mut sr, s) else {
            return false;
        };
        // sinv maps rhs on free rows -> structural values (indexed by b).
        let mut binv = vec![0.0; m * m];
        for (b, &p) in struct_pos.iter().enumerate() {
            for (a, &k) in free_rows.iter().enumerate() {
                binv[k * m + p] = sinv[b * s + a];
            }
        }
        for i in 0..m {
            let p = logical_pos[i];
            if p == NONBASIC {
                continue;
            }
            // x_logical_i = (row i of A restricted to basic structurals) x_S - b_i
            for &(j, v) in &self.rows[i] {
                let q = self.position[j];
                if q == NONBASIC {
                    continue;
                }
                for &k in &free_rows {
                    let e = binv[k * m + q];
                    if e != 0.0 {
                        binv[k * m + p] += v * e;
                    }
                }
            }
            binv[i * m + p] -= 1.0;
        }
        self.binv = binv;
        self.since_refactor = 0;
        true
    }

    fn compute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + m {
            if self.position[j] != NONBASIC {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j) {
                rhs[i] -= v * xj;
            }
        }
        for p in 0..m {
            self.x[self.basis[p]] = 0.0;
        }
        for (k, &r) in rhs.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let col = &self.binv[k * m..(k + 1) * m];
            for p in 0..m {
                self.x[self.basis[p]] += col[p] * r;
            }
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (k, v) in self.column(j) {
            let col = &self.binv[k * m..(k + 1) * m];
            for p in 0..m {
                alpha[p] += v * col[p];
            }
        }
        alpha
    }

    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let nz: Vec<usize> = (0..m).filter(|&p| cb[p] != 0.0).collect();
        let mut y = vec![0.0; m];
        if nz.is_empty() {
            return y;
        }
        for (k, yk) in y.iter_mut().enumerate() {
            let col = &self.binv[k * m..(k + 1) * m];
            *yk = nz.iter().map(|&p| cb[p] * col[p]).sum();
        }
        y
    }

    fn pivot(&mut self, r: usize, alpha: &[f64], entering: usize) {
        let m = self.m;
        let piv = alpha[r];
        let nz: Vec<usize> = (0..m).filter(|&p| p != r && alpha[p] != 0.0).collect();
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let v = col[r];
            if v == 0.0 {
                continue;
            }
            let v = v / piv;
            col[r] = v;
            for &p in &nz {
                col[p] -= alpha[p] * v;
            }
        }
        let leaving = self.basis[r];
        self.position[leaving] = NONBASIC;
        self.basis[r] = entering;
        self.position[entering] = r;
        self.since_refactor += 1;
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let x = self.x[v];
        if x < self.lb[v] - self.feas_tol {
            self.lb[v] - x
        } else if x > self.ub[v] + self.feas_tol {
            x - self.ub[v]
        } else {
            0.0
        }
    }

    fn run(&mut self, p: &LpProblem) -> LpSolution {
        let m = self.m;
        let mut iterations = 0;
        let mut degenerate_run = 0usize;
        let mut verified = false;
        let status = loop {
            if iterations >= self.max_iter {
                break LpStatus::Failed;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                if !self.refactor() {
                    self.identity_basis_inverse();
                }
                self.compute_basic_values();
            }
            let total_inf: f64 = self.basis.iter().map(|&v| self.infeasibility(v)).sum();
            let phase1 = total_inf > 0.0;
            let cb: Vec<f64> = self
                .basis
                .iter()
                .map(|&v| {
                    if phase1 {
                        if self.x[v] < self.lb[v] - self.feas_tol {
                            -1.0
                        } else if self.x[v] > self.ub[v] + self.feas_tol {
                            1.0
                        } else {
                            0.0
                        }
                    } else if v < self.n {
                        self.cost[v]
                    } else {
                        0.0
                    }
                })
                .collect();
            let y = self.btran(&cb);

            // Pricing.
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.n + m {
                if self.position[j] != NONBASIC || self.lb[j] == self.ub[j] {
                    continue;
                }
                let cj = if phase1 || j >= self.n { 0.0 } else { self.cost[j] };
                let d = cj - self.column(j).map(|(i, v)| y[i] * v).sum::<f64>();
                let can_up = self.x[j] < self.ub[j] - PRIMAL_TOL;
                let can_down = self.x[j] > self.lb[j] + PRIMAL_TOL;
                let score = if d < -DUAL_TOL && can_up {
                    -d
                } else if d > DUAL_TOL && can_down {
                    d
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if score > best {
                    best = score;
                    entering = Some((j, d));
                }
            }

            let Some((q, dq)) = entering else {
                if !verified && self.since_refactor > 0 {
                    // Confirm optimality on a fresh factorization.
                    verified = true;
                    if !self.refactor() {
                        self.identity_basis_inverse();
                    }
                    self.compute_basic_values();
                    continue;
                }
                break if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal };
            };
            verified = false;
            iterations += 1;

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let flip = if dir > 0.0 {
                self.ub[q] - self.x[q]
            } else {
                self.x[q] - self.lb[q]
            };

            // Harris two-pass ratio test.
            let amax = alpha.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let ptol = PIVOT_TOL * amax.max(1.0);
            let target = |slf: &Simplex, r: usize, rate: f64| -> Option<f64> {
                let v = slf.basis[r];
                let xv = slf.x[v];
                let (l, u) = (slf.lb[v], slf.ub[v]);
                if rate < 0.0 {
                    if phase1 && xv < l - slf.feas_tol {
                        None
                    } else if phase1 && xv > u + slf.feas_tol {
                        Some(u)
                    } else {
                        l.is_finite().then_some(l)
                    }
                } else if phase1 && xv > u + slf.feas_tol {
                    None
                } else if phase1 && xv < l - slf.feas_tol {
                    Some(l)
                } else {
                    u.is_finite().then_some(u)
                }
            };
            let mut theta_max = f64::INFINITY;
            for r in 0..m {
                if alpha[r].abs() <= ptol {
                    continue;
                }
                let rate = -dir * alpha[r];
                if let Some(t) = target(self, r, rate) {
                    let relaxed = if rate < 0.0 { t - self.feas_tol } else { t + self.feas_tol };
                    let ratio = (relaxed - self.x[self.basis[r]]) / rate;
                    theta_max = theta_max.min(ratio.max(0.0));
                }
            }
            let mut leave: Option<(usize, f64, f64)> = None;
            if theta_max.is_finite() {
                let mut best_piv = 0.0;
                for r in 0..m {
                    if alpha[r].abs() <= ptol {
                        continue;
                    }
                    let rate = -dir * alpha[r];
                    if let Some(t) = target(self, r, rate) {
                        let ratio = ((t - self.x[self.basis[r]]) / rate).max(0.0);
                        if ratio <= theta_max {
                            let better = if bland {
                                leave.is_none_or(|(lr, _, _)| self.basis[r] < self.basis[lr])
                            } else {
                                alpha[r].abs() > best_piv
                            };
                            if better {
                                best_piv = alpha[r].abs();
                                leave = Some((r, ratio, t));
                            }
                        }
                    }
                }
            }

            let step = match leave {
                Some((_, ratio, _)) if ratio < flip => ratio,
                _ if flip.is_finite() => flip,
                _ => {
                    if phase1 {
                        // Cannot happen in exact arithmetic: phase 1 is bounded.
                        if !self.refactor() {
                            self.identity_basis_inverse();
                        }
                        self.compute_basic_values();
                        degenerate_run = 0;
                        continue;
                    }
                    break LpStatus::Unbounded;
                }
            };
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            self.x[q] += dir * step;
            for r in 0..m {
                if alpha[r] != 0.0 {
                    let v = self.basis[r];
                    self.x[v] -= dir * step * alpha[r];
                }
            }
            match leave {
                Some((r, ratio, t)) if ratio < flip => {
                    let v = self.basis[r];
                    self.x[v] = t;
                    self.pivot(r, &alpha, q);
                }
                _ => {
                    // Bound flip of the entering variable.
                    self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                }
            }
        };

        self.finish(p, status, iterations)
    }

    fn finish(&mut self, p: &LpProblem, status: LpStatus, iterations: usize) -> LpSolution {
        let n = self.n;
        let infeasibility: f64 = self.basis.iter().map(|&v| self.infeasibility(v)).sum();
        let cb: Vec<f64> = self
            .basis
            .iter()
            .map(|&v| if v < n { self.cost[v] } else { 0.0 })
            .collect();
        let y = self.btran(&cb);
        let reduced_costs: Vec<f64> = (0..n)
            .map(|j| {
                if self.position[j] != NONBASIC {
                    0.0
                } else {
                    self.cost[j] - self.cols[j].iter().map(|&(i, v)| y[i] * v).sum::<f64>()
                }
            })
            .collect();
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status,
            x,
            objective,
            duals: y,
            reduced_costs,
            infeasibility: if status == LpStatus::Infeasible { infeasibility } else { 0.0 },
            iterations,
            basis: Some(Basis {
                basic: self.basis.clone(),
                values: self.x.clone(),
            }),
        }
    }
}

fn start_value(l: f64, u: f64) -> f64 {
    if l <= 0.0 && 0.0 <= u {
        0.0
    } else if l.is_finite() {
        l
    } else {
        u
    }
}

enum ColIter<'a> {
    Structural(std::slice::Iter<'a, (usize, f64)>),
    Logical(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Structural(it) => it.next().copied(),
            ColIter::Logical(slot) => slot.take().map(|i| (i, -1.0)),
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting of a row-major `s x s` matrix.
/// The input is overwritten.
pub(crate) fn invert_dense(a: &mut [f64], s: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; s * s];
    for i in 0..s {
        inv[i * s + i] = 1.0;
    }
    for c in 0..s {
        let (pr, pv) = (c..s)
            .map(|r| (r, a[r * s + c].abs()))
            .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pv < 1e-11 {
            return None;
        }
        if pr != c {
            for k in 0..s {
                a.swap(pr * s + k, c * s + k);
                inv.swap(pr * s + k, c * s + k);
            }
        }
        let d = a[c * s + c];
        for k in 0..s {
            a[c * s + k] /= d;
            inv[c * s + k] /= d;
        }
        for r in 0..s {
            if r == c {
                continue;
            }
            let f = a[r * s + c];
            if f == 0.0 {
                continue;
            }
            for k in 0..s {
                a[r * s + k] -= f * a[c * s + k];
                inv[r * s + k] -= f * inv[c * s + k];
            }
        }
    }
    Some(inv)
}
