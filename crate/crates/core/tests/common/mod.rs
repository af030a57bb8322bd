//! Slow, independent reference solvers and instance generators shared by
//! the integration tests.

#![allow(dead_code)]

use csfs::cssvm::{train_p2, train_p3, CsSvmSpec, SvmModel};
use csfs::dataio::Dataset;
use csfs::fs_milp::TimeBudget;
use csfs::kernels::{gram, KernelSpec};
use csfs::metrics::Thresholds;
use csfs::relax::qp::default_iter_cap;
use csfs::relax::{solve_svm_qp, LpProblem, QpStatus, Sense, SvmQp};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIG_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl Outcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            Outcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

const EPS: f64 = 1e-9;

/// Full-tableau two-phase simplex with Bland's rule.
pub fn tableau_solve(p: &LpProblem) -> Outcome {
    let n = p.num_vars();
    // x_j = offset_j + sum coef * x'_col, x' >= 0.
    let mut map: Vec<(f64, Vec<(usize, f64)>)> = Vec::with_capacity(n);
    let mut caps: Vec<(usize, f64)> = Vec::new();
    let mut cols = 0;
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l.is_finite() {
            map.push((l, vec![(cols, 1.0)]));
            if u.is_finite() {
                caps.push((cols, u - l));
            }
            cols += 1;
        } else if u.is_finite() {
            map.push((u, vec![(cols, -1.0)]));
            cols += 1;
        } else {
            map.push((0.0, vec![(cols, 1.0), (cols + 1, -1.0)]));
            cols += 2;
        }
    }
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for r in &p.rows {
        let mut a = vec![0.0; cols];
        let mut rhs = r.rhs;
        for &(j, v) in &r.coeffs {
            rhs -= v * map[j].0;
            for &(c, s) in &map[j].1 {
                a[c] += v * s;
            }
        }
        rows.push((a, r.sense, rhs));
    }
    for &(c, ub) in &caps {
        let mut a = vec![0.0; cols];
        a[c] = 1.0;
        rows.push((a, Sense::Le, ub));
    }
    let mut cost = vec![0.0; cols];
    let mut constant = 0.0;
    for j in 0..n {
        constant += p.objective[j] * map[j].0;
        for &(c, s) in &map[j].1 {
            cost[c] += p.objective[j] * s;
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let width = cols + n_slack + m;
    let art0 = cols + n_slack;
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut slack = cols;
    for (i, (a, sense, rhs)) in rows.iter().enumerate() {
        t[i][..cols].copy_from_slice(a);
        match sense {
            Sense::Le => {
                t[i][slack] = 1.0;
                slack += 1;
            }
            Sense::Ge => {
                t[i][slack] = -1.0;
                slack += 1;
            }
            Sense::Eq => {}
        }
        t[i][width] = *rhs;
        if *rhs < 0.0 {
            for v in t[i].iter_mut() {
                *v = -*v;
            }
        }
        t[i][art0 + i] = 1.0;
    }
    let mut basis: Vec<usize> = (0..m).map(|i| art0 + i).collect();

    let mut phase1 = vec![0.0; width];
    for c in phase1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    if run_simplex(&mut t, &mut basis, &phase1, width).is_err() {
        return Outcome::Infeasible;
    }
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= art0).map(|i| t[i][width]).sum();
    if infeas > 1e-7 {
        return Outcome::Infeasible;
    }
    for i in 0..m {
        if basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t[i][j].abs() > 1e-7) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut phase2 = vec![0.0; width];
    phase2[..cols].copy_from_slice(&cost);
    if run_simplex(&mut t, &mut basis, &phase2, art0).is_err() {
        return Outcome::Unbounded;
    }
    let mut xp = vec![0.0; width];
    for i in 0..m {
        xp[basis[i]] = t[i][width];
    }
    let x: Vec<f64> = map
        .iter()
        .map(|(off, terms)| off + terms.iter().map(|&(c, s)| s * xp[c]).sum::<f64>())
        .collect();
    let objective = constant + (0..cols).map(|c| cost[c] * xp[c]).sum::<f64>();
    Outcome::Optimal { objective, x }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pr = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                for (v, q) in row.iter_mut().zip(&pr) {
                    *v -= f * q;
                }
            }
        }
    }
    basis[r] = c;
}

/// Minimizes `cost` over the columns below `limit`; `Err` when unbounded.
fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], limit: usize) -> Result<(), ()> {
    let m = t.len();
    let width = cost.len();
    loop {
        let mut enter = None;
        for j in 0..limit {
            if basis.contains(&j) {
                continue;
            }
            let r = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            if r < -EPS {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { return Ok(()) };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > EPS {
                let ratio = t[i][width] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i, _)) = leave else { return Err(()) };
        pivot(t, basis, i, j);
    }
}

/// `y_i y_j K_ij` as a dense matrix.
pub fn signed_gram(k: &[Vec<f64>], y: &[f64]) -> Vec<Vec<f64>> {
    let n = y.len();
    (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect()
}

pub fn dual_objective(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * q[i][j] * alpha[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= upper, y^T a = 0}` by bisection on
/// the multiplier of the equality.
fn project(v: &[f64], y: &[f64], upper: &[f64], out: &mut [f64]) {
    let h = |nu: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            s += y[i] * (v[i] - nu * y[i]).clamp(0.0, upper[i]);
        }
        s
    };
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1.0;
    let (mut lo, mut hi) = (-big, big);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    for i in 0..v.len() {
        out[i] = (v[i] - nu * y[i]).clamp(0.0, upper[i]);
    }
}

fn mat_vec(q: &[Vec<f64>], a: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(q) {
        *o = row.iter().zip(a).map(|(x, y)| x * y).sum();
    }
}

/// Largest eigenvalue of a PSD matrix by power iteration, padded upward.
fn spectral_bound(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..200 {
        mat_vec(q, &v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1e-12;
        }
        lambda = norm;
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    1.01 * lambda + 1e-12
}

/// Largest violation of the first-order conditions over index pairs.
fn kkt_gap(q: &[Vec<f64>], y: &[f64], upper: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut g = vec![0.0; n];
    mat_vec(q, a, &mut g);
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let v = -y[i] * (g[i] - 1.0);
        let below = a[i] < upper[i] - 1e-12;
        let above = a[i] > 1e-12;
        if (y[i] > 0.0 && below) || (y[i] < 0.0 && above) {
            up = up.max(v);
        }
        if (y[i] > 0.0 && above) || (y[i] < 0.0 && below) {
            low = low.min(v);
        }
    }
    (up - low).max(0.0)
}

/// Accelerated projected gradient with restarts on the SVM dual; stops
/// once the pairwise optimality gap drops below `1e-10`.
pub fn pg_svm_dual(q: &[Vec<f64>], y: &[f64], upper: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let step = 1.0 / spectral_bound(q);
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut next = vec![0.0; n];
    let mut qz = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut tk = 1.0f64;
    let mut best = dual_objective(q, &a);
    for it in 0..max_iter {
        mat_vec(q, &z, &mut qz);
        for i in 0..n {
            v[i] = z[i] + step * (1.0 - qz[i]);
        }
        project(&v, y, upper, &mut next);
        let obj = dual_objective(q, &next);
        if obj < best && tk > 1.0 {
            // Momentum overshot: restart from the last iterate.
            z.copy_from_slice(&a);
            tk = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        for i in 0..n {
            z[i] = next[i] + (tk - 1.0) / t_next * (next[i] - a[i]);
        }
        a.copy_from_slice(&next);
        tk = t_next;
        best = obj;
        if it % 25 == 0 && kkt_gap(q, y, upper, &a) < 1e-10 {
            break;
        }
    }
    (a, best)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points on a two-decimal grid in `[0, 1]^n_features`, labelled by a
/// sparse linear rule with some flipped labels. Both classes appear.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, n_features: usize, flip: f64) -> Dataset {
    loop {
        let mut x = Array2::zeros((n, n_features));
        for v in x.iter_mut() {
            *v = (r.random::<f64>() * 100.0).round() / 100.0;
        }
        let support = r.random_range(1..=n_features.min(3));
        let mut w = vec![0.0; n_features];
        for _ in 0..support {
            let k = r.random_range(0..n_features);
            w[k] = r.random_range(-1.0..1.0);
        }
        let offset: f64 = r.random_range(-0.5..0.5);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = (0..n_features).map(|k| w[k] * (x[[i, k]] - 0.5)).sum::<f64>() + 0.2 * offset;
                let lab = if s >= 0.0 { 1.0 } else { -1.0 };
                if r.random::<f64>() < flip {
                    -lab
                } else {
                    lab
                }
            })
            .collect();
        let pos = y.iter().filter(|&&v| v > 0.0).count();
        if pos >= 2 && n - pos >= 2 {
            let names = (0..n_features).map(|k| format!("f{k}")).collect();
            return Dataset::new(x, y, names).unwrap();
        }
    }
}

fn count_needed(lambda: f64, n: usize) -> usize {
    let k = (lambda * n as f64 - 1e-9).ceil();
    k.clamp(0.0, n as f64) as usize
}

/// Whether some `w` supported on `mask` and some `beta` give margin one on
/// `hard` rows and margin `1 - M` on the rest, within the big-M boxes.
pub fn separable(d: &Dataset, mask: &[bool], hard: &[bool]) -> bool {
    let active: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let nv = active.len() + 1;
    let mut lp = LpProblem::new(nv);
    for v in 0..nv {
        lp.lower[v] = -BIG_M;
        lp.upper[v] = BIG_M;
    }
    for i in 0..d.n_samples() {
        let mut coeffs: Vec<(usize, f64)> = active
            .iter()
            .enumerate()
            .map(|(v, &k)| (v, d.y[i] * d.x[[i, k]]))
            .collect();
        coeffs.push((nv - 1, d.y[i]));
        let rhs = if hard[i] { 1.0 } else { 1.0 - BIG_M };
        lp.add_row(coeffs, Sense::Ge, rhs);
    }
    matches!(tableau_solve(&lp), Outcome::Optimal { .. })
}

/// Depth-first search for a certifiable row set meeting both counts.
fn mask_feasible(d: &Dataset, mask: &[bool], k_pos: usize, k_neg: usize) -> bool {
    let n = d.n_samples();
    let order: Vec<usize> = (0..n).collect();
    let mut hard = vec![false; n];
    let class_total = [d.n_pos(), d.n_neg()];
    fn dfs(
        d: &Dataset,
        mask: &[bool],
        order: &[usize],
        pos: usize,
        hard: &mut Vec<bool>,
        have: [usize; 2],
        left: [usize; 2],
        need: [usize; 2],
    ) -> bool {
        if have[0] >= need[0] && have[1] >= need[1] {
            return true;
        }
        if have[0] + left[0] < need[0] || have[1] + left[1] < need[1] || pos == order.len() {
            return false;
        }
        let i = order[pos];
        let c = usize::from(d.y[i] < 0.0);
        let mut left2 = left;
        left2[c] -= 1;
        if have[c] < need[c] {
            hard[i] = true;
            if separable(d, mask, hard) {
                let mut have2 = have;
                have2[c] += 1;
                if dfs(d, mask, order, pos + 1, hard, have2, left2, need) {
                    return true;
                }
            }
            hard[i] = false;
        }
        dfs(d, mask, order, pos + 1, hard, have, left2, need)
    }
    if !separable(d, mask, &hard) {
        return false;
    }
    dfs(d, mask, &order, 0, &mut hard, [0, 0], class_total, [k_pos, k_neg])
}

/// Cheapest mask over all `2^N` masks admitting a certificate, or `None`.
pub fn brute_force_p1(d: &Dataset, lambda_pos: f64, lambda_neg: f64, costs: &[f64]) -> Option<f64> {
    let nf = d.n_features();
    let k_pos = count_needed(lambda_pos, d.n_pos());
    let k_neg = count_needed(lambda_neg, d.n_neg());
    let mut masks: Vec<(f64, u32)> = (0..1u32 << nf)
        .map(|b| ((0..nf).filter(|&k| b >> k & 1 == 1).map(|k| costs[k]).sum(), b))
        .collect();
    masks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let full: Vec<bool> = vec![true; nf];
    if !mask_feasible(d, &full, k_pos, k_neg) {
        return None;
    }
    for (cost, b) in masks {
        let mask: Vec<bool> = (0..nf).map(|k| b >> k & 1 == 1).collect();
        if mask_feasible(d, &mask, k_pos, k_neg) {
            return Some(cost);
        }
    }
    None
}

/// Exact-count subsets of `0..n` restricted to `idx`.
pub fn subsets_of_size(idx: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(idx: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for s in start..idx.len() {
            if idx.len() - s < k - cur.len() {
                break;
            }
            cur.push(idx[s]);
            rec(idx, k, s + 1, cur, out);
            cur.pop();
        }
    }
    rec(idx, k, 0, &mut cur, &mut out);
    out
}

pub struct P1Case {
    pub data: Dataset,
    pub lambda_pos: f64,
    pub lambda_neg: f64,
    pub costs: Vec<f64>,
}

pub const LAMBDAS: [f64; 4] = [0.0, 0.5, 0.8, 1.0];

/// Random selection instance: up to 8 features and 40 rows, unit costs on
/// even seeds and integer costs in `1..=5` on odd ones.
pub fn p1_case(seed: u64) -> P1Case {
    let mut r = rng(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let nf = r.random_range(2..=8);
    let lambda_pos = LAMBDAS[r.random_range(0..4)];
    let lambda_neg = LAMBDAS[r.random_range(0..4)];
    let extreme = |l: f64| l == 0.0 || l == 1.0;
    let n = if extreme(lambda_pos) && extreme(lambda_neg) {
        r.random_range(20..=40)
    } else {
        r.random_range(10..=20)
    };
    let flip = if r.random::<f64>() < 0.5 { 0.0 } else { 0.1 };
    let data = random_dataset(&mut r, n, nf, flip);
    let costs = if seed % 2 == 0 {
        vec![1.0; nf]
    } else {
        (0..nf).map(|_| r.random_range(1..=5) as f64).collect()
    };
    let data = data.with_costs(costs.clone()).unwrap();
    P1Case {
        data,
        lambda_pos,
        lambda_neg,
        costs,
    }
}

pub struct SvmCase {
    pub data: Dataset,
    pub lambda_pos: f64,
    pub lambda_neg: f64,
    pub c: f64,
    /// `None` for the linear kernel.
    pub gamma: Option<f64>,
    pub mask: Vec<bool>,
}

/// Random training instance with at most 16 rows.
pub fn svm_case(seed: u64) -> SvmCase {
    let mut r = rng(seed.wrapping_mul(0x2545_F491).wrapping_add(3));
    let n = r.random_range(6..=16);
    let nf = r.random_range(1..=3);
    let data = random_dataset(&mut r, n, nf, 0.15);
    let ls = [0.0, 0.5, 0.75, 1.0];
    let mut mask: Vec<bool> = (0..nf).map(|_| r.random::<f64>() < 0.8).collect();
    mask[r.random_range(0..nf)] = true;
    SvmCase {
        data,
        lambda_pos: ls[r.random_range(0..4)],
        lambda_neg: ls[r.random_range(0..4)],
        c: [0.25, 1.0, 4.0][r.random_range(0..3)],
        gamma: (seed % 2 == 1).then(|| [0.5, 2.0, 8.0][r.random_range(0..3)]),
        mask,
    }
}

/// Whether the hard rows admit a linear separator with margin one on the
/// masked features; no bounds on `w` or `beta`.
pub fn hard_margin_separable(d: &Dataset, mask: &[bool], hard: &[usize]) -> bool {
    let active: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let nv = active.len() + 1;
    let mut lp = LpProblem::new(nv);
    for v in 0..nv {
        lp.lower[v] = f64::NEG_INFINITY;
    }
    for &i in hard {
        let mut coeffs: Vec<(usize, f64)> = active
            .iter()
            .enumerate()
            .map(|(v, &k)| (v, d.y[i] * d.x[[i, k]]))
            .collect();
        coeffs.push((nv - 1, d.y[i]));
        lp.add_row(coeffs, Sense::Ge, 1.0);
    }
    matches!(tableau_solve(&lp), Outcome::Optimal { .. })
}

pub fn needed(lambda: f64, n: usize) -> usize {
    count_needed(lambda, n)
}

pub fn svm_kernel(case: &SvmCase) -> KernelSpec {
    match case.gamma {
        None => KernelSpec::linear(case.mask.clone()),
        Some(g) => KernelSpec::radial(g, case.mask.clone()).unwrap(),
    }
}

/// `sum w^2 + C sum xi` with the rows in `hard` held at margin one, or
/// `None` when they cannot be. The value is evaluated in the primal from
/// the dual solution.
fn assignment_value(case: &SvmCase, hard: &[usize]) -> Option<f64> {
    let d = &case.data;
    if case.gamma.is_none() && !hard_margin_separable(d, &case.mask, hard) {
        return None;
    }
    let g = gram(&svm_kernel(case), d.x.view()).unwrap();
    let n = d.n_samples();
    let mut upper = vec![case.c / 2.0; n];
    for &i in hard {
        upper[i] = f64::INFINITY;
    }
    let qp = SvmQp {
        gram: &g,
        y: d.y.clone(),
        upper,
        linear: vec![1.0; n],
        equality: true,
    };
    let sol = solve_svm_qp(&qp, 1e-10, 100 * default_iter_cap(n)).unwrap();
    // Absolute 1e-10 is below float resolution once the objective is large.
    assert!(
        sol.status == QpStatus::Optimal || sol.kkt_violation <= 1e-12 * sol.dual_objective.abs().max(1.0),
        "{:?} with violation {}",
        sol.status,
        sol.kkt_violation
    );
    let mut ww = 0.0;
    for i in 0..n {
        for j in 0..n {
            ww += sol.alpha[i] * sol.alpha[j] * d.y[i] * d.y[j] * g.get(i, j);
        }
    }
    let mut xi = 0.0;
    for i in 0..n {
        let f: f64 = sol.beta + (0..n).map(|j| sol.alpha[j] * d.y[j] * g.get(i, j)).sum::<f64>();
        let slack = (1.0 - d.y[i] * f).max(0.0);
        if hard.contains(&i) {
            assert!(slack <= 1e-6, "hard row {i} violated by {slack}");
        } else {
            xi += slack;
        }
    }
    Some(ww + case.c * xi)
}

/// Minimum over every rate-feasible `zeta`. Certifying more rows than
/// required only adds constraints, so exact-count sets suffice.
pub fn enumerate_svm(case: &SvmCase) -> Option<f64> {
    let d = &case.data;
    let pos: Vec<usize> = (0..d.n_samples()).filter(|&i| d.y[i] > 0.0).collect();
    let neg: Vec<usize> = (0..d.n_samples()).filter(|&i| d.y[i] < 0.0).collect();
    let kp = needed(case.lambda_pos, pos.len());
    let kn = needed(case.lambda_neg, neg.len());
    let mut best: Option<f64> = None;
    for a in subsets_of_size(&pos, kp) {
        for b in subsets_of_size(&neg, kn) {
            let hard: Vec<usize> = a.iter().chain(&b).copied().collect();
            if let Some(v) = assignment_value(case, &hard) {
                if best.is_none_or(|x| v < x) {
                    best = Some(v);
                }
            }
        }
    }
    best
}

pub fn train_svm(case: &SvmCase) -> SvmModel {
    let th = Thresholds::plain(case.lambda_pos, case.lambda_neg);
    let spec = CsSvmSpec::new(svm_kernel(case), case.c, th).with_budget(TimeBudget::seconds(60.0));
    match case.gamma {
        None => train_p2(&case.data, &case.mask, &spec).unwrap(),
        Some(_) => train_p3(&case.data, &case.mask, &spec).unwrap(),
    }
}

pub struct QpInstance {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub c: f64,
}

pub fn qp_instance(seed: u64) -> QpInstance {
    let mut r = rng(seed);
    let n = r.random_range(4..=30);
    let d = r.random_range(1..=4);
    let separable = seed % 3 == 0;
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let lab = if i % 2 == 0 { 1.0 } else { -1.0 };
        for k in 0..d {
            let shift = if separable && k == 0 { 1.5 * lab } else { 0.0 };
            x[[i, k]] = r.random_range(-1.0..1.0) + shift;
        }
        y.push(lab);
    }
    let c = 2f64.powi(r.random_range(-5..=5));
    QpInstance { x, y, c }
}

/// Compares the crate QP solver with the projected-gradient oracle and
/// checks the recovery identities; panics on a mismatch.
pub fn check_qp(inst: &QpInstance, tag: &str) {
    let n = inst.y.len();
    let g = gram(&KernelSpec::linear(vec![true; inst.x.ncols()]), inst.x.view()).unwrap();
    let qp = SvmQp::standard(&g, &inst.y, inst.c);
    let sol = solve_svm_qp(&qp, 1e-9, default_iter_cap(n)).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal, "{tag}");

    let k: Vec<Vec<f64>> = (0..n).map(|i| g.row(i).to_vec()).collect();
    let q = signed_gram(&k, &inst.y);
    let (_, oracle) = pg_svm_dual(&q, &inst.y, &vec![inst.c / 2.0; n], 400_000);
    assert!(
        (sol.dual_objective - oracle).abs() <= 1e-5,
        "{tag}: smo {} vs oracle {oracle}",
        sol.dual_objective
    );
    assert!((dual_objective(&q, &sol.alpha) - sol.dual_objective).abs() <= 1e-8 * sol.dual_objective.abs().max(1.0));

    // w = sum alpha_i y_i x_i reproduces the quadratic term and the scores.
    let d = inst.x.ncols();
    let mut w = vec![0.0; d];
    for i in 0..n {
        for kk in 0..d {
            w[kk] += sol.alpha[i] * inst.y[i] * inst.x[[i, kk]];
        }
    }
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += sol.alpha[i] * sol.alpha[j] * q[i][j];
        }
    }
    assert!((ww - quad).abs() <= 1e-8 * quad.abs().max(1.0), "{tag}: {ww} vs {quad}");
    for i in 0..n {
        let direct: f64 = (0..d).map(|kk| w[kk] * inst.x[[i, kk]]).sum();
        let via_kernel: f64 = (0..n).map(|j| sol.alpha[j] * inst.y[j] * k[j][i]).sum();
        assert!((direct - via_kernel).abs() <= 1e-8 * direct.abs().max(1.0), "{tag}");
    }

    let eq: f64 = sol.alpha.iter().zip(&inst.y).map(|(a, y)| a * y).sum();
    assert!(eq.abs() <= 1e-8, "{tag}");
    assert!(sol.alpha.iter().all(|&a| (0.0..=inst.c / 2.0).contains(&a)), "{tag}");
    assert!(sol.kkt_violation <= 1e-6, "{tag}");
}
