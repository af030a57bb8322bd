//! Cost-sensitive SVM on a fixed feature mask.
//!
//! ```text
//! min  sum_j w_j^2 + C sum_i xi_i
//! s.t. y_i (w^T phi_z(x_i) + beta) >= 1 - xi_i
//!      0 <= xi_i <= M1 (1 - zeta_i)
//!      per-class counts of zeta reach lambda* n_class
//! ```
//!
//! Solved by branch-and-bound on `zeta`. A node keeps some rows hard
//! (`zeta = 1`, no slack), some soft (`zeta = 0`) and the rest free; its
//! relaxation treats free rows as soft and drops the rate rows and the
//! `M1` cap, which leaves an ordinary SVM dual with unbounded boxes on the
//! hard rows.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use log::debug;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::fs_milp::{FsStatus, TimeBudget};
use crate::kernels::{cross_kernel, gram, GramMatrix, KernelKind, KernelSpec};
use crate::metrics::Thresholds;
use crate::relax::qp::default_iter_cap;
use crate::relax::{solve_lp, solve_svm_qp_warm, LpProblem, LpStatus, QpStatus, Sense, SvmQp};

/// Margin shortfall tolerated on rows counted as certified.
pub const MARGIN_TOL: f64 = 1e-6;
const QP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CsSvmSpec {
    pub kernel: KernelSpec,
    pub c: f64,
    pub thresholds: Thresholds,
    pub m1: f64,
    pub budget: TimeBudget,
    /// Rows known to be jointly separable on the mask, such as the
    /// certified rows of a feature-selection solution. Used to seed the
    /// incumbent.
    pub hint: Option<Vec<bool>>,
}

impl CsSvmSpec {
    pub fn new(kernel: KernelSpec, c: f64, thresholds: Thresholds) -> Self {
        CsSvmSpec {
            kernel,
            c,
            thresholds,
            m1: 100.0,
            budget: TimeBudget::default(),
            hint: None,
        }
    }

    pub fn with_budget(mut self, budget: TimeBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_hint(mut self, hint: Vec<bool>) -> Self {
        self.hint = Some(hint);
        self
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if !(self.c > 0.0) || !(self.m1 > 0.0) {
            return Err(Error::InvalidArgument("C and M1 must be positive".into()));
        }
        if !(self.budget.seconds > 0.0) {
            return Err(Error::InvalidArgument("time limit must be positive".into()));
        }
        if self.kernel.dim() != n_features {
            return Err(Error::Dimension {
                expected: n_features,
                got: self.kernel.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Linear {
        w: Vec<f64>,
    },
    Kernel {
        alpha: Vec<f64>,
        support: Vec<Vec<f64>>,
        labels: Vec<f64>,
        kernel: KernelSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub status: FsStatus,
    /// `sum w^2 + C sum xi` at the returned solution.
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub zeta: Vec<bool>,
    /// Certified count minus required count, positives then negatives.
    pub rate_slack: (i64, i64),
    pub nodes: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub mask: Vec<bool>,
    pub c: f64,
    pub beta: f64,
    pub params: ModelParams,
    pub diagnostics: TrainDiagnostics,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.mask.len()
    }

    pub fn decision_values(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.mask.len() {
            return Err(Error::Dimension {
                expected: self.mask.len(),
                got: x.ncols(),
            });
        }
        match &self.params {
            ModelParams::Linear { w } => Ok(x
                .rows()
                .into_iter()
                .map(|r| {
                    let mut s = self.beta;
                    for k in 0..w.len() {
                        if self.mask[k] {
                            s += w[k] * r[k];
                        }
                    }
                    s
                })
                .collect()),
            ModelParams::Kernel {
                alpha,
                support,
                labels,
                kernel,
            } => {
                let ns = support.len();
                if ns == 0 {
                    return Ok(vec![self.beta; x.nrows()]);
                }
                let flat: Vec<f64> = support.iter().flatten().copied().collect();
                let sv = Array2::from_shape_vec((ns, self.mask.len()), flat)
                    .map_err(|e| Error::Data(e.to_string()))?;
                let k = cross_kernel(kernel, x, sv.view())?;
                Ok((0..x.nrows())
                    .map(|i| {
                        let row = &k[i * ns..(i + 1) * ns];
                        let mut s = self.beta;
                        for j in 0..ns {
                            s += alpha[j] * labels[j] * row[j];
                        }
                        s
                    })
                    .collect())
            }
        }
    }

    /// Labels with the `score >= 0 => +1` convention.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision_values(x)?
            .into_iter()
            .map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
            .collect())
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        let v = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Data(e.to_string()))?;
        Ok(self.predict(v)?[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict(m: &SvmModel, x: &[f64]) -> Result<f64> {
    m.predict_one(x)
}

pub fn decision_values(m: &SvmModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    m.decision_values(x)
}

/// Linear-kernel model with `w` zero off the mask.
pub fn train_p2(d: &Dataset, mask: &[bool], spec: &CsSvmSpec) -> Result<SvmModel> {
    if spec.kernel.kind != KernelKind::Linear {
        return Err(Error::InvalidArgument("train_p2 needs a linear kernel".into()));
    }
    train(d, mask, spec)
}

/// Masked radial-kernel model in dual form.
pub fn train_p3(d: &Dataset, mask: &[bool], spec: &CsSvmSpec) -> Result<SvmModel> {
    if !matches!(spec.kernel.kind, KernelKind::Radial { .. }) {
        return Err(Error::InvalidArgument("train_p3 needs a radial kernel".into()));
    }
    train(d, mask, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Free,
    Hard,
    Soft,
}

struct Relax {
    alpha: Vec<f64>,
    beta: f64,
    /// `y_i f(x_i)` for every row.
    margin: Vec<f64>,
    bound: f64,
    converged: bool,
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    rows: Vec<Row>,
    relax: Option<Rc<Relax>>,
    warm: Option<Rc<Relax>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Incumbent {
    relax: Rc<Relax>,
    zeta: Vec<bool>,
    objective: f64,
}

struct Trainer<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    mask: &'a [bool],
    gram: GramMatrix,
    c: f64,
    m1: f64,
    kind: KernelKind,
    need: [usize; 2],
    size: [usize; 2],
    iter_cap: usize,
}

fn class(y: f64) -> usize {
    usize::from(y < 0.0)
}

impl Trainer<'_> {
    fn solve(&self, rows: &[Row], warm: Option<&Relax>) -> Result<Option<Relax>> {
        let n = self.y.len();
        let upper: Vec<f64> = rows
            .iter()
            .map(|r| if *r == Row::Hard { f64::INFINITY } else { self.c / 2.0 })
            .collect();
        let q = SvmQp {
            gram: &self.gram,
            y: self.y.to_vec(),
            upper,
            linear: vec![1.0; n],
            equality: true,
        };
        let sol = solve_svm_qp_warm(&q, QP_TOL, self.iter_cap, warm.map(|r| r.alpha.as_slice()))?;
        if sol.status == QpStatus::Infeasible {
            return Ok(None);
        }
        let mut margin = vec![0.0; n];
        for i in 0..n {
            let row = self.gram.row(i);
            let mut f = sol.beta;
            for j in 0..n {
                if sol.alpha[j] != 0.0 {
                    f += sol.alpha[j] * self.y[j] * row[j];
                }
            }
            margin[i] = self.y[i] * f;
        }
        Ok(Some(Relax {
            bound: 2.0 * sol.dual_objective,
            alpha: sol.alpha,
            beta: sol.beta,
            margin,
            converged: sol.status == QpStatus::Optimal,
        }))
    }

    /// Primal objective `w^T w + C sum xi` with `xi` zero on `zeta` rows.
    fn objective(&self, r: &Relax, zeta: &[bool]) -> f64 {
        let n = self.y.len();
        let mut ww = 0.0;
        for i in 0..n {
            if r.alpha[i] == 0.0 {
                continue;
            }
            let row = self.gram.row(i);
            for j in 0..n {
                if r.alpha[j] != 0.0 {
                    ww += r.alpha[i] * r.alpha[j] * self.y[i] * self.y[j] * row[j];
                }
            }
        }
        let xi: f64 = (0..n)
            .filter(|&i| !zeta[i])
            .map(|i| (1.0 - r.margin[i]).max(0.0))
            .sum();
        ww.max(0.0) + self.c * xi
    }

    /// Whether the hard rows admit any separator with margin one.
    fn hard_feasible(&self, rows: &[Row]) -> Result<bool> {
        let hard: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] == Row::Hard).collect();
        let active: Vec<usize> = (0..self.mask.len()).filter(|&k| self.mask[k]).collect();
        match self.kind {
            KernelKind::Linear => {
                let d = active.len();
                let mut lp = LpProblem::new(d + 1);
                for v in 0..=d {
                    lp.lower[v] = f64::NEG_INFINITY;
                }
                for &i in &hard {
                    let mut coeffs: Vec<(usize, f64)> =
                        active.iter().enumerate().map(|(v, &k)| (v, self.y[i] * self.x[[i, k]])).collect();
                    coeffs.push((d, self.y[i]));
                    lp.add_row(coeffs, Sense::Ge, 1.0);
                }
                let sol = solve_lp(&lp, 1e-9)?;
                Ok(sol.status != LpStatus::Infeasible)
            }
            KernelKind::Radial { .. } => {
                let mut seen: HashMap<Vec<u64>, f64> = HashMap::new();
                for &i in &hard {
                    let key: Vec<u64> = active.iter().map(|&k| self.x[[i, k]].to_bits()).collect();
                    if let Some(&label) = seen.get(&key) {
                        if label != self.y[i] {
                            return Ok(false);
                        }
                    } else {
                        seen.insert(key, self.y[i]);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Rows certified by the relaxation, per-class counts, and whether
    /// every soft row stays within the slack cap.
    fn certify(&self, rows: &[Row], r: &Relax) -> (Vec<bool>, [usize; 2], bool) {
        let mut zeta = vec![false; rows.len()];
        let mut count = [0usize; 2];
        let mut capped = true;
        for i in 0..rows.len() {
            let ok = match rows[i] {
                Row::Hard | Row::Free => r.margin[i] >= 1.0 - MARGIN_TOL,
                Row::Soft => {
                    if 1.0 - r.margin[i] > self.m1 {
                        capped = false;
                    }
                    false
                }
            };
            if ok {
                zeta[i] = true;
                count[class(self.y[i])] += 1;
            }
        }
        (zeta, count, capped)
    }
}

fn train(d: &Dataset, mask: &[bool], spec: &CsSvmSpec) -> Result<SvmModel> {
    let start = Instant::now();
    let n_feat = d.n_features();
    spec.validate(n_feat)?;
    if mask.len() != n_feat {
        return Err(Error::Dimension {
            expected: n_feat,
            got: mask.len(),
        });
    }
    let deadline = start + Duration::from_secs_f64(spec.budget.seconds);
    let kernel = KernelSpec {
        kind: spec.kernel.kind,
        mask: mask.to_vec(),
    };
    let n = d.n_samples();
    let size = [d.n_pos(), d.n_neg()];
    let t = Trainer {
        x: d.x.view(),
        y: &d.y,
        mask,
        gram: gram(&kernel, d.x.view())?,
        c: spec.c,
        m1: spec.m1,
        kind: spec.kernel.kind,
        need: [
            spec.thresholds.required_pos(size[0]),
            spec.thresholds.required_neg(size[1]),
        ],
        size,
        iter_cap: default_iter_cap(n),
    };

    let mut incumbent: Option<Incumbent> = None;
    let offer = |inc: &mut Option<Incumbent>, r: Rc<Relax>, zeta: Vec<bool>| {
        let objective = t.objective(&r, &zeta);
        if inc.as_ref().is_none_or(|b| objective < b.objective) {
            debug!("svm incumbent {objective}");
            *inc = Some(Incumbent { relax: r, zeta, objective });
        }
    };

    if let Some(hint) = &spec.hint {
        if hint.len() == n {
            let rows: Vec<Row> = hint.iter().map(|&h| if h { Row::Hard } else { Row::Free }).collect();
            if t.hard_feasible(&rows)? {
                if let Some(r) = t.solve(&rows, None)? {
                    let (zeta, count, capped) = t.certify(&rows, &r);
                    if capped && count[0] >= t.need[0] && count[1] >= t.need[1] {
                        offer(&mut incumbent, Rc::new(r), zeta);
                    }
                }
            }
        }
    }

    let prune = |inc: &Option<Incumbent>, bound: f64| {
        inc.as_ref()
            .is_some_and(|b| bound >= b.objective - 1e-9 * b.objective.abs().max(1.0))
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: 0.0,
        depth: 0,
        seq: 0,
        rows: vec![Row::Free; n],
        relax: None,
        warm: None,
    });
    let mut seq = 0;
    let mut nodes = 0;
    let mut unresolved = 0;
    let mut stopped = false;

    while let Some(mut node) = heap.pop() {
        if prune(&incumbent, node.bound) {
            continue;
        }
        if Instant::now() >= deadline || spec.budget.node_limit.is_some_and(|l| nodes >= l) {
            heap.push(node);
            stopped = true;
            break;
        }
        nodes += 1;

        // Once a class has spent its soft allowance, its free rows are hard.
        let mut soft = [0usize; 2];
        for i in 0..n {
            if node.rows[i] == Row::Soft {
                soft[class(d.y[i])] += 1;
            }
        }
        if (0..2).any(|c| soft[c] + t.need[c] > t.size[c]) {
            continue;
        }
        let mut forced = false;
        for i in 0..n {
            let c = class(d.y[i]);
            if node.rows[i] == Row::Free && soft[c] + t.need[c] == t.size[c] {
                node.rows[i] = Row::Hard;
                let slack = node.relax.as_ref().is_none_or(|r| r.margin[i] < 1.0 - MARGIN_TOL);
                forced |= slack;
            }
        }
        if forced {
            node.relax = None;
        }

        let relax = match node.relax.take() {
            Some(r) => r,
            None => {
                if !t.hard_feasible(&node.rows)? {
                    continue;
                }
                let warm = node.warm.as_deref();
                match t.solve(&node.rows, warm)? {
                    Some(r) => Rc::new(r),
                    None => continue,
                }
            }
        };
        let bound = node.bound.max(relax.bound);
        if prune(&incumbent, bound) {
            continue;
        }

        let (zeta, count, capped) = t.certify(&node.rows, &relax);
        if capped && count[0] >= t.need[0] && count[1] >= t.need[1] {
            if !relax.converged {
                unresolved += 1;
            }
            offer(&mut incumbent, relax, zeta);
            continue;
        }

        let branch = (0..n)
            .filter(|&i| node.rows[i] == Row::Free && !zeta[i] && count[class(d.y[i])] < t.need[class(d.y[i])])
            .max_by(|&a, &b| relax.margin[b].total_cmp(&relax.margin[a]).then(b.cmp(&a)));
        let Some(i) = branch else {
            unresolved += 1;
            continue;
        };

        let mut hard = node.rows.clone();
        hard[i] = Row::Hard;
        let mut soft_rows = node.rows;
        soft_rows[i] = Row::Soft;
        seq += 1;
        heap.push(Node {
            bound,
            depth: node.depth + 1,
            seq,
            rows: hard,
            relax: None,
            warm: Some(relax.clone()),
        });
        seq += 1;
        heap.push(Node {
            bound,
            depth: node.depth + 1,
            seq,
            rows: soft_rows,
            relax: Some(relax.clone()),
            warm: None,
        });
    }

    let open = heap
        .iter()
        .filter(|nd| !prune(&incumbent, nd.bound))
        .map(|nd| nd.bound)
        .fold(f64::INFINITY, f64::min);
    let complete = !stopped && unresolved == 0;
    let wall_time = start.elapsed().as_secs_f64();
    let y = &d.y;

    let Some(inc) = incumbent else {
        return Ok(SvmModel {
            mask: mask.to_vec(),
            c: spec.c,
            beta: 0.0,
            params: match spec.kernel.kind {
                KernelKind::Linear => ModelParams::Linear { w: vec![0.0; n_feat] },
                _ => ModelParams::Kernel {
                    alpha: Vec::new(),
                    support: Vec::new(),
                    labels: Vec::new(),
                    kernel,
                },
            },
            diagnostics: TrainDiagnostics {
                status: if complete { FsStatus::Infeasible } else { FsStatus::TimeoutNoIncumbent },
                objective: f64::NAN,
                bound: if complete { f64::INFINITY } else { open },
                gap: f64::INFINITY,
                zeta: vec![false; n],
                rate_slack: (-(t.need[0] as i64), -(t.need[1] as i64)),
                nodes,
                wall_time,
            },
        });
    };

    let bound = if complete { inc.objective } else { open.min(inc.objective) };
    let proven = complete || bound >= inc.objective - 1e-9 * inc.objective.abs().max(1.0);
    let mut cert = [0i64; 2];
    for i in 0..n {
        if inc.zeta[i] {
            cert[class(y[i])] += 1;
        }
    }
    let r = &inc.relax;
    let params = match spec.kernel.kind {
        KernelKind::Linear => {
            let mut w = vec![0.0; n_feat];
            for i in 0..n {
                if r.alpha[i] != 0.0 {
                    for k in 0..n_feat {
                        if mask[k] {
                            w[k] += r.alpha[i] * y[i] * d.x[[i, k]];
                        }
                    }
                }
            }
            ModelParams::Linear { w }
        }
        _ => {
            let sv: Vec<usize> = (0..n).filter(|&i| r.alpha[i] > 0.0).collect();
            ModelParams::Kernel {
                alpha: sv.iter().map(|&i| r.alpha[i]).collect(),
                support: sv.iter().map(|&i| d.x.row(i).to_vec()).collect(),
                labels: sv.iter().map(|&i| y[i]).collect(),
                kernel,
            }
        }
    };
    Ok(SvmModel {
        mask: mask.to_vec(),
        c: spec.c,
        beta: r.beta,
        params,
        diagnostics: TrainDiagnostics {
            status: if proven { FsStatus::Optimal } else { FsStatus::FeasibleAtTimeout },
            objective: inc.objective,
            bound: if proven { inc.objective } else { bound },
            gap: if proven || inc.objective == 0.0 {
                0.0
            } else {
                (inc.objective - bound) / inc.objective
            },
            zeta: inc.zeta,
            rate_slack: (cert[0] - t.need[0] as i64, cert[1] - t.need[1] as i64),
            nodes,
            wall_time,
        },
    })
}
