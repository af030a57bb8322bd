//! Best-first branch-and-bound over LP relaxations of the selection model.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use log::debug;

use super::heuristic::{Candidate, Probe, SubsetSearch};
use super::{FsModel, FsSolution, FsStatus, TimeBudget};
use crate::error::{Error, Result};
use crate::relax::{solve_lp_warm, Basis, LpProblem, LpStatus};

const INT_TOL: f64 = 1e-6;
const LP_TOL: f64 = 1e-9;
/// Node heuristics run at most this often once the root is done.
const HEURISTIC_EVERY: usize = 16;

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
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
    /// Max-heap order: lowest bound first, then deepest, then newest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Search<'m> {
    model: &'m FsModel,
    base: LpProblem,
    integral: bool,
    incumbent: Option<Candidate>,
}

impl<'m> Search<'m> {
    /// Bound used for pruning; rounded up when every cost is an integer.
    fn effective(&self, bound: f64) -> f64 {
        if self.integral {
            (bound - INT_TOL).ceil().max(0.0)
        } else {
            bound
        }
    }

    fn pruned(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some(inc) if self.integral => self.effective(bound) > inc.cost - 0.5,
            Some(inc) => bound >= inc.cost - 1e-9,
        }
    }

    fn offer(&mut self, cand: Candidate) {
        if self.incumbent.as_ref().is_none_or(|b| cand.cost < b.cost - 1e-9) {
            debug!("new incumbent with cost {}", cand.cost);
            self.incumbent = Some(cand);
        }
    }

    /// Cost that any completion of the fixings must pay: the selected
    /// features, plus the cheapest free one when neither class can be
    /// certified by a constant score.
    fn combinatorial_bound(&self, fixings: &[(usize, f64)]) -> Option<f64> {
        let m = self.model;
        let n = m.n_features();
        let mut state = vec![None; n];
        let mut zeta_zero = [0usize; 2];
        for &(j, v) in fixings {
            if j >= m.z_var(0) {
                state[j - m.z_var(0)] = Some(v > 0.5);
            } else if j >= m.zeta_var(0) && v < 0.5 {
                let i = j - m.zeta_var(0);
                zeta_zero[usize::from(m.y[i] < 0.0)] += 1;
            }
        }
        let n_pos = m.y.iter().filter(|&&v| v > 0.0).count();
        let n_neg = m.y.len() - n_pos;
        if n_pos - zeta_zero[0] < m.k_pos || n_neg - zeta_zero[1] < m.k_neg {
            return None;
        }
        let fixed: f64 = (0..n).filter(|&k| state[k] == Some(true)).map(|k| m.costs[k]).sum();
        if fixed > 0.0 || m.k_pos == 0 || m.k_neg == 0 {
            return Some(fixed);
        }
        let cheapest = (0..n)
            .filter(|&k| state[k].is_none())
            .map(|k| m.costs[k])
            .fold(f64::INFINITY, f64::min);
        if cheapest.is_finite() {
            Some(cheapest)
        } else {
            None
        }
    }

    fn node_lp(&self, fixings: &[(usize, f64)]) -> LpProblem {
        let mut lp = self.base.clone();
        for &(j, v) in fixings {
            lp.lower[j] = v;
            lp.upper[j] = v;
            if j >= self.model.z_var(0) && v == 0.0 {
                let k = j - self.model.z_var(0);
                lp.lower[k] = 0.0;
                lp.upper[k] = 0.0;
            }
        }
        lp
    }
}

/// Solves the feature-selection model by branch-and-bound.
///
/// `seed` only permutes the order in which the subset heuristic visits
/// equal-cost features; the search itself is deterministic.
pub fn solve_p1(model: &FsModel, budget: &TimeBudget, seed: u64) -> Result<FsSolution> {
    let start = Instant::now();
    if !(budget.seconds > 0.0) {
        return Err(Error::InvalidArgument("time limit must be positive".into()));
    }
    let deadline = start + std::time::Duration::from_secs_f64(budget.seconds);
    let (m, n) = (model.n_samples(), model.n_features());

    // Rate rows in count form: sum over the class of zeta >= k.
    let mut base = model.lp.clone();
    base.rows[m].rhs = 2.0 * model.k_neg as f64;
    base.rows[m + 1].rhs = 2.0 * model.k_pos as f64;

    let mut s = Search {
        model,
        base,
        integral: model.integral_costs(),
        incumbent: None,
    };

    let probe = Probe::new(model.x.view(), &model.y, &model.costs, model.k_pos, model.k_neg, model.bigm);
    let mut subsets = SubsetSearch::new(&probe, Some(deadline));
    let n_pos = model.y.iter().filter(|&&v| v > 0.0).count();
    let counts_ok = model.k_pos <= n_pos && model.k_neg <= m - n_pos;
    if counts_ok {
        subsets.run(&vec![true; n], seed);
        if let Some(c) = subsets.best.clone() {
            s.offer(c);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    let mut nodes = 0;
    let mut unresolved = 0;
    let mut stopped = false;
    if let Some(root_bound) = s.combinatorial_bound(&[]) {
        heap.push(Node {
            bound: root_bound,
            depth: 0,
            seq,
            fixings: Vec::new(),
            basis: None,
        });
    }

    while let Some(node) = heap.pop() {
        if s.pruned(node.bound) {
            continue;
        }
        if Instant::now() >= deadline || budget.node_limit.is_some_and(|l| nodes >= l) {
            heap.push(node);
            stopped = true;
            break;
        }
        nodes += 1;
        let Some(comb) = s.combinatorial_bound(&node.fixings) else { continue };
        if s.pruned(comb) {
            continue;
        }
        let lp = s.node_lp(&node.fixings);
        let mut sol = solve_lp_warm(&lp, LP_TOL, node.basis.as_deref())?;
        if sol.status == LpStatus::Failed && node.basis.is_some() {
            sol = solve_lp_warm(&lp, LP_TOL, None)?;
        }
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded | LpStatus::Failed => {
                unresolved += 1;
                continue;
            }
        }
        let bound = sol.objective.max(comb).max(node.bound);
        if s.pruned(bound) {
            continue;
        }

        let z_val = |k: usize| sol.x[model.z_var(k)];
        let zeta_val = |i: usize| sol.x[model.zeta_var(i)];
        let fixed = |j: usize| node.fixings.iter().any(|&(v, _)| v == j);

        if nodes == 1 || nodes % HEURISTIC_EVERY == 0 {
            let mut mask = vec![false; n];
            for k in 0..n {
                mask[k] = z_val(k) > INT_TOL || sol.x[model.w_var(k)].abs() > 1e-9;
                if lp.upper[model.z_var(k)] == 0.0 {
                    mask[k] = false;
                }
            }
            subsets.evaluate(&mask);
            subsets.shrink();
            if let Some(c) = subsets.best.clone() {
                s.offer(c);
            }
            if s.pruned(bound) {
                continue;
            }
        }

        let frac = |v: f64| v.min(1.0 - v);
        let mut branch: Option<(usize, f64)> = None;
        for k in 0..n {
            let j = model.z_var(k);
            let f = frac(z_val(k));
            if !fixed(j) && f > INT_TOL && branch.is_none_or(|(_, b)| f > b) {
                branch = Some((j, f));
            }
        }
        if branch.is_none() {
            for i in 0..m {
                let j = model.zeta_var(i);
                let f = frac(zeta_val(i));
                if !fixed(j) && f > INT_TOL && branch.is_none_or(|(_, b)| f > b) {
                    branch = Some((j, f));
                }
            }
        }

        if branch.is_none() {
            // Integral relaxation: confirm it with z and zeta pinned.
            let mut polish = lp.clone();
            let mut pins = node.fixings.clone();
            for k in 0..n {
                pins.push((model.z_var(k), z_val(k).round()));
            }
            for i in 0..m {
                pins.push((model.zeta_var(i), zeta_val(i).round()));
            }
            for &(j, v) in &pins {
                polish.lower[j] = v;
                polish.upper[j] = v;
                if j >= model.z_var(0) && v == 0.0 {
                    polish.lower[j - model.z_var(0)] = 0.0;
                    polish.upper[j - model.z_var(0)] = 0.0;
                }
            }
            let p = solve_lp_warm(&polish, LP_TOL, sol.basis.as_ref())?;
            if p.status == LpStatus::Optimal {
                let mask: Vec<bool> = (0..n).map(|k| z_val(k) > 0.5).collect();
                let w = (0..n).map(|k| if mask[k] { p.x[model.w_var(k)] } else { 0.0 }).collect();
                if let Some(c) = probe.finalize(&mask, w, p.x[model.beta_var()]) {
                    s.offer(c);
                    continue;
                }
            }
            // Numerically integral but not confirmed: split on a free z in use,
            // else on a free zeta below one.
            branch = (0..n)
                .map(|k| model.z_var(k))
                .find(|&j| !fixed(j) && sol.x[j] > 0.0)
                .or_else(|| (0..m).map(|i| model.zeta_var(i)).find(|&j| !fixed(j) && sol.x[j] < 1.0))
                .map(|j| (j, 0.0));
            if branch.is_none() {
                unresolved += 1;
                continue;
            }
        }

        let (j, _) = branch.expect("branch variable");
        let basis = sol.basis.map(Rc::new);
        let is_z = j >= model.z_var(0);
        // Pushed last is popped first among equal bounds.
        let order: [f64; 2] = if is_z { [1.0, 0.0] } else { [0.0, 1.0] };
        for v in order {
            let mut fixings = node.fixings.clone();
            fixings.push((j, v));
            let child_bound = if is_z && v == 1.0 {
                bound.max(s.combinatorial_bound(&fixings).unwrap_or(f64::INFINITY))
            } else {
                bound
            };
            seq += 1;
            heap.push(Node {
                bound: child_bound,
                depth: node.depth + 1,
                seq,
                fixings,
                basis: basis.clone(),
            });
        }
    }

    let open_bound = heap
        .iter()
        .filter(|nd| !s.pruned(nd.bound))
        .map(|nd| nd.bound)
        .fold(f64::INFINITY, f64::min);
    let complete = !stopped && unresolved == 0;
    let wall_time = start.elapsed().as_secs_f64();
    let eff_open = s.effective(open_bound.min(f64::MAX));
    let integral = s.integral;
    Ok(match s.incumbent {
        Some(c) => {
            let bound = if complete || open_bound == f64::INFINITY {
                c.cost
            } else {
                eff_open.min(c.cost)
            };
            let proven = complete || bound >= c.cost - 1e-9 || (integral && bound > c.cost - 0.5);
            FsSolution {
                status: if proven { FsStatus::Optimal } else { FsStatus::FeasibleAtTimeout },
                gap: if proven || c.cost == 0.0 { 0.0 } else { (c.cost - bound) / c.cost },
                bound: if proven { c.cost } else { bound },
                z: c.mask,
                zeta: c.zeta,
                w: c.w,
                beta: c.beta,
                objective: c.cost,
                nodes,
                wall_time,
            }
        }
        None => FsSolution {
            status: if complete { FsStatus::Infeasible } else { FsStatus::TimeoutNoIncumbent },
            z: vec![false; n],
            zeta: vec![false; m],
            w: vec![0.0; n],
            beta: 0.0,
            objective: f64::NAN,
            bound: if complete { f64::INFINITY } else { eff_open },
            nodes,
            wall_time,
            gap: f64::INFINITY,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Dataset;
    use crate::fs_milp::{build_p1, check_p1_certificate, BigM};
    use crate::metrics::Thresholds;
    use ndarray::array;

    fn solve(d: &Dataset, lp: f64, ln: f64) -> FsSolution {
        let th = Thresholds::plain(lp, ln);
        let m = build_p1(d, &th, BigM::default(), &d.costs).unwrap();
        solve_p1(&m, &TimeBudget::seconds(30.0), 0).unwrap()
    }

    #[test]
    fn forced_single_feature() {
        let d = Dataset::new(
            array![[-1.0, 0.0], [-2.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let sol = solve(&d, 1.0, 1.0);
        assert_eq!(sol.status, FsStatus::Optimal);
        assert_eq!(sol.z, [true, false]);
        assert_eq!(sol.objective, 1.0);
        let th = Thresholds::plain(1.0, 1.0);
        assert!(check_p1_certificate(&d, &th, &sol, BigM::default()).max_violation() <= 1e-6);
    }

    #[test]
    fn xor_is_infeasible() {
        let d = Dataset::new(
            array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]],
            vec![1.0, 1.0, -1.0, -1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(solve(&d, 1.0, 1.0).status, FsStatus::Infeasible);
        let relaxed = solve(&d, 0.5, 0.5);
        assert_eq!(relaxed.status, FsStatus::Optimal);
        assert_eq!(relaxed.objective, 1.0);
    }

    #[test]
    fn vacuous_thresholds_select_nothing() {
        let d = Dataset::new(
            array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]],
            vec![1.0, 1.0, -1.0, -1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let sol = solve(&d, 0.0, 0.0);
        assert_eq!(sol.status, FsStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
    }
}
