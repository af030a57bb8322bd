//! Primal heuristics: decide heuristically whether a fixed feature subset can
//! meet both rate requirements, and build subsets that do.
//!
//! A subset is probed with a weighted hinge-loss LP restricted to its
//! features. Rows already satisfied with margin 1 are certified; when too few
//! are, the worst violators are dropped from the loss (within each class's
//! allowance) and the LP is solved again.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::BigM;
use crate::relax::{solve_lp, LpProblem, LpStatus, Sense};

const CERTIFY_TOL: f64 = 1e-7;
const MAX_ROUNDS: usize = 40;
/// Subset sizes are enumerated exhaustively while they have at most this many members.
const ENUM_CAP: usize = 500;

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub mask: Vec<bool>,
    pub w: Vec<f64>,
    pub beta: f64,
    pub zeta: Vec<bool>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Score {
    deficit: usize,
    hinge: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        (self.deficit, self.hinge) < (other.deficit, other.hinge)
    }
}

pub(crate) struct Probe<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [f64],
    pub costs: &'a [f64],
    pub k_pos: usize,
    pub k_neg: usize,
    pub bigm: BigM,
    n_pos: usize,
    n_neg: usize,
}

impl<'a> Probe<'a> {
    pub fn new(
        x: ArrayView2<'a, f64>,
        y: &'a [f64],
        costs: &'a [f64],
        k_pos: usize,
        k_neg: usize,
        bigm: BigM,
    ) -> Self {
        let n_pos = y.iter().filter(|&&v| v > 0.0).count();
        Probe {
            x,
            y,
            costs,
            k_pos,
            k_neg,
            bigm,
            n_pos,
            n_neg: y.len() - n_pos,
        }
    }

    fn score_of(&self, w: &[f64], beta: f64, i: usize) -> f64 {
        let row = self.x.row(i);
        let s: f64 = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
        self.y[i] * (s + beta)
    }

    /// Checks a full `(w, beta)` against the model and returns the candidate
    /// with every row of margin at least one certified.
    pub fn finalize(&self, mask: &[bool], w: Vec<f64>, beta: f64) -> Option<Candidate> {
        if w.iter().zip(mask).any(|(&v, &on)| !on && v != 0.0 || v.abs() > self.bigm.m3) {
            return None;
        }
        if beta.abs() > self.bigm.m2 {
            return None;
        }
        let m = self.y.len();
        let mut zeta = vec![false; m];
        let (mut cp, mut cn) = (0, 0);
        for i in 0..m {
            let margin = self.score_of(&w, beta, i);
            if margin < 1.0 - self.bigm.m2 - CERTIFY_TOL {
                return None;
            }
            if margin >= 1.0 - CERTIFY_TOL {
                zeta[i] = true;
                if self.y[i] > 0.0 {
                    cp += 1;
                } else {
                    cn += 1;
                }
            }
        }
        if cp < self.k_pos || cn < self.k_neg {
            return None;
        }
        let cost = mask.iter().zip(self.costs).filter(|(&on, _)| on).map(|(_, c)| c).sum();
        Some(Candidate {
            mask: mask.to_vec(),
            w,
            beta,
            zeta,
            cost,
        })
    }

    /// Weighted hinge-loss fit on `features`, solved through its dual so the
    /// basis has only `|features| + 1` rows. Rows with zero weight are left
    /// out of the loss. Returns the full-length `w` and `beta`.
    fn hinge_fit(&self, features: &[usize], weights: &[f64]) -> Option<(Vec<f64>, f64)> {
        let d = features.len();
        let active: Vec<usize> = (0..self.y.len()).filter(|&i| weights[i] > 0.0).collect();
        let nu = active.len();
        let mut lp = LpProblem::new(nu + 2 * (d + 1));
        for (t, &i) in active.iter().enumerate() {
            lp.objective[t] = -1.0;
            lp.upper[t] = weights[i];
        }
        for r in 0..=d {
            let bound = if r < d { self.bigm.m3 } else { self.bigm.m2 };
            let (p, q) = (nu + 2 * r, nu + 2 * r + 1);
            lp.objective[p] = bound;
            lp.objective[q] = bound;
            let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(nu + 2);
            for (t, &i) in active.iter().enumerate() {
                let v = if r < d { self.x[[i, features[r]]] } else { 1.0 };
                if v != 0.0 {
                    coeffs.push((t, self.y[i] * v));
                }
            }
            coeffs.push((p, -1.0));
            coeffs.push((q, 1.0));
            lp.add_row(coeffs, Sense::Eq, 0.0);
        }
        let sol = solve_lp(&lp, 1e-9).ok()?;
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let mut w = vec![0.0; self.x.ncols()];
        for (r, &k) in features.iter().enumerate() {
            w[k] = (-sol.duals[r]).clamp(-self.bigm.m3, self.bigm.m3);
        }
        let beta = (-sol.duals[d]).clamp(-self.bigm.m2, self.bigm.m2);
        Some((w, beta))
    }

    /// Tries to certify enough rows with the features in `mask`.
    fn probe(&self, mask: &[bool]) -> (Option<Candidate>, Score) {
        let features: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
        let m = self.y.len();
        let mut weights = vec![1.0; m];
        let mut dropped = [0usize; 2];
        let budget = [self.n_pos - self.k_pos.min(self.n_pos), self.n_neg - self.k_neg.min(self.n_neg)];
        let mut first: Option<Score> = None;
        let mut best_deficit = usize::MAX;
        for _ in 0..MAX_ROUNDS {
            let Some((w, beta)) = self.hinge_fit(&features, &weights) else { break };
            let margins: Vec<f64> = (0..m).map(|i| self.score_of(&w, beta, i)).collect();
            let cp = (0..m).filter(|&i| self.y[i] > 0.0 && margins[i] >= 1.0 - CERTIFY_TOL).count();
            let cn = (0..m).filter(|&i| self.y[i] < 0.0 && margins[i] >= 1.0 - CERTIFY_TOL).count();
            let deficit = self.k_pos.saturating_sub(cp) + self.k_neg.saturating_sub(cn);
            best_deficit = best_deficit.min(deficit);
            if first.is_none() {
                let hinge = margins.iter().map(|&s| (1.0 - s).max(0.0)).sum();
                first = Some(Score { deficit, hinge });
            }
            if deficit == 0 {
                if let Some(c) = self.finalize(mask, w, beta) {
                    let score = Score {
                        deficit: 0,
                        hinge: first.map_or(0.0, |s| s.hinge),
                    };
                    return (Some(c), score);
                }
                break;
            }
            let mut any = false;
            for (c, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                let left = budget[c] - dropped[c];
                if left == 0 {
                    continue;
                }
                let mut violators: Vec<usize> = (0..m)
                    .filter(|&i| self.y[i] == sign && weights[i] > 0.0 && margins[i] < 1.0 - CERTIFY_TOL)
                    .collect();
                if violators.is_empty() {
                    continue;
                }
                violators.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
                let take = (violators.len() / 4).max(1).min(left);
                for &i in &violators[..take] {
                    weights[i] = 0.0;
                }
                dropped[c] += take;
                any = true;
            }
            if !any {
                break;
            }
        }
        let mut score = first.unwrap_or(Score {
            deficit: usize::MAX,
            hinge: f64::INFINITY,
        });
        score.deficit = score.deficit.min(best_deficit);
        (None, score)
    }
}

/// Heuristic search over feature subsets, used before and during branching.
pub(crate) struct SubsetSearch<'p, 'a> {
    pub probe: &'p Probe<'a>,
    tried: HashMap<Vec<bool>, Score>,
    pub deadline: Option<Instant>,
    pub best: Option<Candidate>,
}

impl<'p, 'a> SubsetSearch<'p, 'a> {
    pub fn new(probe: &'p Probe<'a>, deadline: Option<Instant>) -> Self {
        SubsetSearch {
            probe,
            tried: HashMap::new(),
            deadline,
            best: None,
        }
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn cost(&self, mask: &[bool]) -> f64 {
        mask.iter().zip(self.probe.costs).filter(|(&on, _)| on).map(|(_, c)| c).sum()
    }

    fn improves(&self, cost: f64) -> bool {
        self.best.as_ref().is_none_or(|b| cost < b.cost - 1e-9)
    }

    /// Probes `mask` unless it cannot beat the best; scores are cached.
    pub fn evaluate(&mut self, mask: &[bool]) -> Option<Score> {
        if let Some(&s) = self.tried.get(mask) {
            return Some(s);
        }
        if !self.improves(self.cost(mask)) {
            return None;
        }
        let (cand, score) = self.probe.probe(mask);
        self.tried.insert(mask.to_vec(), score);
        if let Some(c) = cand {
            if self.improves(c.cost) {
                self.best = Some(c);
            }
        }
        Some(score)
    }

    /// Enumerates subsets by size while that is affordable, then grows the
    /// best-scoring subset greedily, then tries to shrink the result.
    pub fn run(&mut self, allowed: &[bool], seed: u64) {
        let n = allowed.len();
        let mut order: Vec<usize> = (0..n).filter(|&k| allowed[k]).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.sort_by(|&a, &b| self.probe.costs[a].total_cmp(&self.probe.costs[b]));

        let empty = vec![false; n];
        let mut frontier = empty.clone();
        let mut frontier_score = self.evaluate(&empty);
        let min_cost = order.iter().map(|&k| self.probe.costs[k]).fold(f64::INFINITY, f64::min);

        let mut size = 1;
        while size <= order.len() && binomial(order.len(), size) <= ENUM_CAP {
            if self.out_of_time() {
                return;
            }
            if let Some(b) = &self.best {
                if b.cost <= min_cost * size as f64 + 1e-9 {
                    break;
                }
            }
            let mut best_here: Option<(Vec<bool>, Score)> = None;
            for combo in Combinations::new(order.len(), size) {
                let mut mask = empty.clone();
                for &c in &combo {
                    mask[order[c]] = true;
                }
                if let Some(s) = self.evaluate(&mask) {
                    if best_here.as_ref().is_none_or(|(_, b)| s.better_than(b)) {
                        best_here = Some((mask, s));
                    }
                }
                if self.out_of_time() {
                    return;
                }
            }
            if let Some((mask, s)) = best_here {
                frontier = mask;
                frontier_score = Some(s);
            }
            size += 1;
        }

        // Greedy growth from the best subset of the largest enumerated size.
        let mut current = frontier;
        if frontier_score.is_some_and(|s| s.deficit == 0) {
            self.shrink();
            return;
        }
        loop {
            if self.out_of_time() {
                return;
            }
            if !self.improves(self.cost(&current) + min_cost) {
                break;
            }
            let mut pick: Option<(usize, Score)> = None;
            for &k in &order {
                if current[k] {
                    continue;
                }
                current[k] = true;
                let s = self.evaluate(&current);
                current[k] = false;
                if let Some(s) = s {
                    if s.deficit == 0 {
                        pick = Some((k, s));
                        break;
                    }
                    if pick.as_ref().is_none_or(|(_, b)| s.better_than(b)) {
                        pick = Some((k, s));
                    }
                }
            }
            let Some((k, s)) = pick else { break };
            current[k] = true;
            if s.deficit == 0 {
                break;
            }
        }
        self.shrink();
    }

    /// Drops features from the best subset one at a time while it stays feasible.
    pub fn shrink(&mut self) {
        loop {
            let Some(best) = self.best.clone() else { return };
            let mut improved = false;
            let mut by_cost: Vec<usize> = (0..best.mask.len()).filter(|&k| best.mask[k]).collect();
            by_cost.sort_by(|&a, &b| self.probe.costs[b].total_cmp(&self.probe.costs[a]));
            for k in by_cost {
                if self.out_of_time() {
                    return;
                }
                let mut mask = best.mask.clone();
                mask[k] = false;
                self.evaluate(&mask);
                if self.best.as_ref().is_some_and(|b| b.cost < best.cost) {
                    improved = true;
                    break;
                }
            }
            if !improved {
                return;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    r as usize
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
