//! Minimum-cost feature selection under per-class rate constraints.
//!
//! ```text
//! min  sum_k c_k z_k
//! s.t. y_i (w^T x_i + beta) >= 1 - M2 (1 - zeta_i)
//!      sum_i zeta_i (1 - y_i) >= lambda_neg* sum_i (1 - y_i)
//!      sum_i zeta_i (1 + y_i) >= lambda_pos* sum_i (1 + y_i)
//!      -M3 z_k <= w_k <= M3 z_k,  |beta| <= M2
//!      zeta, z binary
//! ```
//!
//! Variables are laid out as `w` (N), `beta`, `zeta` (|I|), `z` (N).

mod heuristic;
mod search;

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Thresholds;
use crate::relax::{LpProblem, Sense};

pub use search::solve_p1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    /// Margin relaxation for uncertified rows; also bounds `|beta|`.
    pub m2: f64,
    /// Coefficient bound `|w_k| <= M3 z_k`.
    pub m3: f64,
}

impl Default for BigM {
    fn default() -> Self {
        BigM { m2: 100.0, m3: 100.0 }
    }
}

/// Stopping rule for the branch-and-bound searches. The node limit makes
/// runs reproducible; the wall-clock limit does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBudget {
    pub seconds: f64,
    pub node_limit: Option<usize>,
}

impl TimeBudget {
    pub fn seconds(seconds: f64) -> Self {
        TimeBudget {
            seconds,
            node_limit: None,
        }
    }

    pub fn with_node_limit(mut self, nodes: usize) -> Self {
        self.node_limit = Some(nodes);
        self
    }
}

impl Default for TimeBudget {
    fn default() -> Self {
        TimeBudget::seconds(300.0)
    }
}

#[derive(Debug, Clone)]
pub struct FsModel {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub costs: Vec<f64>,
    pub thresholds: Thresholds,
    pub bigm: BigM,
    pub lp: LpProblem,
    pub k_pos: usize,
    pub k_neg: usize,
}

impl FsModel {
    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn w_var(&self, k: usize) -> usize {
        k
    }

    pub fn beta_var(&self) -> usize {
        self.n_features()
    }

    pub fn zeta_var(&self, i: usize) -> usize {
        self.n_features() + 1 + i
    }

    pub fn z_var(&self, k: usize) -> usize {
        self.n_features() + 1 + self.n_samples() + k
    }

    pub fn n_continuous(&self) -> usize {
        self.n_features() + 1
    }

    pub fn n_binary(&self) -> usize {
        self.n_samples() + self.n_features()
    }

    fn integral_costs(&self) -> bool {
        self.costs.iter().all(|c| c.fract() == 0.0)
    }

    /// Writes the model in CPLEX LP text format.
    pub fn write_lp<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let (n, m) = (self.n_features(), self.n_samples());
        let name = |j: usize| -> String {
            if j < n {
                format!("w_{j}")
            } else if j == n {
                "beta".into()
            } else if j < n + 1 + m {
                format!("zeta_{}", j - n - 1)
            } else {
                format!("z_{}", j - n - 1 - m)
            }
        };
        let terms = |coeffs: &[(usize, f64)]| -> String {
            let mut s = String::new();
            for (t, &(j, v)) in coeffs.iter().enumerate() {
                let sign = if v < 0.0 { " -" } else if t > 0 { " +" } else { "" };
                s.push_str(&format!("{sign} {} {}", v.abs(), name(j)));
            }
            if s.is_empty() {
                s.push_str(" 0 beta");
            }
            s
        };
        writeln!(out, "\\ minimum-cost feature selection")?;
        writeln!(out, "Minimize")?;
        let obj: Vec<(usize, f64)> = (0..n).map(|k| (self.z_var(k), self.costs[k])).collect();
        writeln!(out, " cost:{}", terms(&obj))?;
        writeln!(out, "Subject To")?;
        for (i, row) in self.lp.rows.iter().enumerate() {
            let sense = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            writeln!(out, " r_{i}:{} {sense} {}", terms(&row.coeffs), row.rhs)?;
        }
        writeln!(out, "Bounds")?;
        for j in 0..=n {
            writeln!(out, " {} <= {} <= {}", self.lp.lower[j], name(j), self.lp.upper[j])?;
        }
        writeln!(out, "Binaries")?;
        for j in n + 1..self.lp.num_vars() {
            writeln!(out, " {}", name(j))?;
        }
        writeln!(out, "End")
    }
}

pub fn build_p1(d: &Dataset, th: &Thresholds, bigm: BigM, costs: &[f64]) -> Result<FsModel> {
    let (m, n) = d.x.dim();
    if costs.len() != n {
        return Err(Error::Dimension { expected: n, got: costs.len() });
    }
    if costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument("feature costs must be positive".into()));
    }
    if !(bigm.m2 > 0.0 && bigm.m3 > 0.0) {
        return Err(Error::InvalidArgument("big-M constants must be positive".into()));
    }
    for v in [th.pos, th.neg] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("threshold {v} outside [0, 1]")));
        }
    }
    let nvar = 2 * n + 1 + m;
    let mut lp = LpProblem::new(nvar);
    let zeta = |i: usize| n + 1 + i;
    let z = |k: usize| n + 1 + m + k;
    for k in 0..n {
        lp.lower[k] = -bigm.m3;
        lp.upper[k] = bigm.m3;
        lp.upper[z(k)] = 1.0;
        lp.objective[z(k)] = costs[k];
    }
    lp.lower[n] = -bigm.m2;
    lp.upper[n] = bigm.m2;
    for i in 0..m {
        lp.upper[zeta(i)] = 1.0;
    }
    for i in 0..m {
        let yi = d.y[i];
        let mut coeffs: Vec<(usize, f64)> = (0..n)
            .filter(|&k| d.x[[i, k]] != 0.0)
            .map(|k| (k, yi * d.x[[i, k]]))
            .collect();
        coeffs.push((n, yi));
        coeffs.push((zeta(i), -bigm.m2));
        lp.add_row(coeffs, Sense::Ge, 1.0 - bigm.m2);
    }
    for (sign, lambda) in [(-1.0, th.neg), (1.0, th.pos)] {
        let coeffs: Vec<(usize, f64)> = (0..m)
            .filter(|&i| d.y[i] == sign)
            .map(|i| (zeta(i), 2.0))
            .collect();
        let total = 2.0 * coeffs.len() as f64;
        lp.add_row(coeffs, Sense::Ge, lambda * total);
    }
    for k in 0..n {
        lp.add_row(vec![(k, 1.0), (z(k), -bigm.m3)], Sense::Le, 0.0);
        lp.add_row(vec![(k, -1.0), (z(k), -bigm.m3)], Sense::Le, 0.0);
    }
    Ok(FsModel {
        x: d.x.clone(),
        y: d.y.clone(),
        costs: costs.to_vec(),
        thresholds: *th,
        bigm,
        lp,
        k_pos: th.required_pos(d.n_pos()),
        k_neg: th.required_neg(d.n_neg()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FsStatus {
    Optimal,
    FeasibleAtTimeout,
    Infeasible,
    TimeoutNoIncumbent,
}

impl FsStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, FsStatus::Optimal | FsStatus::FeasibleAtTimeout)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FsStatus::Optimal => "optimal",
            FsStatus::FeasibleAtTimeout => "feasible-at-timeout",
            FsStatus::Infeasible => "infeasible",
            FsStatus::TimeoutNoIncumbent => "timeout-no-incumbent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsSolution {
    pub status: FsStatus,
    pub z: Vec<bool>,
    pub zeta: Vec<bool>,
    pub w: Vec<f64>,
    pub beta: f64,
    pub objective: f64,
    /// Best proven lower bound on the optimal cost.
    pub bound: f64,
    pub nodes: usize,
    pub wall_time: f64,
    /// `(objective - bound) / objective`; zero when proven optimal.
    pub gap: f64,
}

impl FsSolution {
    pub fn selected(&self) -> Vec<usize> {
        self.z.iter().enumerate().filter_map(|(k, &on)| on.then_some(k)).collect()
    }

    pub fn n_selected(&self) -> usize {
        self.z.iter().filter(|&&on| on).count()
    }
}

/// Largest violation of each constraint family of a claimed solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CertificateReport {
    pub margin: f64,
    pub rate_pos: f64,
    pub rate_neg: f64,
    pub coefficient: f64,
    pub bias: f64,
    pub objective: f64,
}

impl CertificateReport {
    pub fn max_violation(&self) -> f64 {
        [self.margin, self.rate_pos, self.rate_neg, self.coefficient, self.bias, self.objective]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Re-evaluates every constraint of the feature-selection model at `sol`
/// directly from the data.
pub fn check_p1_certificate(d: &Dataset, th: &Thresholds, sol: &FsSolution, bigm: BigM) -> CertificateReport {
    let (m, n) = d.x.dim();
    let mut r = CertificateReport::default();
    for i in 0..m {
        let score: f64 = (0..n).map(|k| sol.w[k] * d.x[[i, k]]).sum::<f64>() + sol.beta;
        let zeta = if sol.zeta[i] { 1.0 } else { 0.0 };
        let need = 1.0 - bigm.m2 * (1.0 - zeta);
        r.margin = r.margin.max(need - d.y[i] * score);
    }
    let (mut num_pos, mut den_pos, mut num_neg, mut den_neg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let zeta = if sol.zeta[i] { 1.0 } else { 0.0 };
        num_pos += zeta * (1.0 + d.y[i]);
        den_pos += 1.0 + d.y[i];
        num_neg += zeta * (1.0 - d.y[i]);
        den_neg += 1.0 - d.y[i];
    }
    r.rate_pos = (th.pos * den_pos - num_pos).max(0.0);
    r.rate_neg = (th.neg * den_neg - num_neg).max(0.0);
    for k in 0..n {
        let cap = if sol.z[k] { bigm.m3 } else { 0.0 };
        r.coefficient = r.coefficient.max(sol.w[k].abs() - cap);
    }
    r.bias = (sol.beta.abs() - bigm.m2).max(0.0);
    let cost: f64 = (0..n).filter(|&k| sol.z[k]).map(|k| d.costs[k]).sum();
    r.objective = (cost - sol.objective).abs();
    r
}
