//! Nested cross-validation around feature selection and SVM training.
//!
//! Each outer fold tunes a plain linear SVM to get reference rates, turns
//! them into rate targets, selects features on the training side, tunes
//! `(C, gamma)` by inner cross-validation and finally trains and validates
//! on the held-out fold.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cssvm::{train_p2, train_p3, CsSvmSpec, SvmModel};
use crate::dataio::{Dataset, ScaleMode, Scaler};
use crate::error::{Error, Result};
use crate::fs_milp::{build_p1, check_p1_certificate, solve_p1, BigM, FsSolution, FsStatus, TimeBudget};
use crate::kernels::KernelSpec;
use crate::metrics::{empirical_thresholds, rates, target_from_reference, zeta_rates, RateReport, ThresholdMode, Thresholds};

/// Minority share below which tuning maximizes the geometric mean.
pub const UNBALANCED_CUTOFF: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelChoice::Linear),
            "rbf" | "radial" => Ok(KernelChoice::Rbf),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Where the inner loop gets its feature mask from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P1Scope {
    /// One selection on the outer training fold, reused by every inner split.
    OuterLiteral,
    /// A fresh selection on each inner training split.
    InnerStrict,
}

impl std::str::FromStr for P1Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outer_literal" | "outer-literal" => Ok(P1Scope::OuterLiteral),
            "inner_strict" | "inner-strict" => Ok(P1Scope::InnerStrict),
            other => Err(Error::InvalidArgument(format!("unknown p1 scope `{other}`"))),
        }
    }
}

/// Sample on which the reference SVM rates are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineScope {
    PerFold,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Accuracy,
    GeometricMean,
}

fn power_grid() -> Vec<f64> {
    (-5..=5).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub kernel: KernelChoice,
    pub thresholds: ThresholdMode,
    pub delta: f64,
    pub alpha: f64,
    /// Fixed rate targets; when unset the target follows the reference SVM.
    pub lambda_pos: Option<f64>,
    pub lambda_neg: Option<f64>,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub inner_folds: usize,
    pub loo_cutoff: usize,
    /// Seconds per feature-selection or SVM solve.
    pub time_limit: f64,
    pub p1_node_limit: Option<usize>,
    pub svm_node_limit: Option<usize>,
    pub seed: u64,
    pub scale: ScaleMode,
    pub p1_scope: P1Scope,
    pub baseline: BaselineScope,
    pub bigm: BigM,
    pub m1: f64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            kernel: KernelChoice::Linear,
            thresholds: ThresholdMode::Plain,
            delta: 0.025,
            alpha: 0.05,
            lambda_pos: None,
            lambda_neg: None,
            c_grid: power_grid(),
            gamma_grid: power_grid(),
            folds: 10,
            inner_folds: 10,
            loo_cutoff: 100,
            time_limit: 300.0,
            p1_node_limit: None,
            svm_node_limit: None,
            seed: 0,
            scale: ScaleMode::Minmax01,
            p1_scope: P1Scope::OuterLiteral,
            baseline: BaselineScope::PerFold,
            bigm: BigM::default(),
            m1: 100.0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return bad("c_grid must hold positive values");
        }
        if self.kernel == KernelChoice::Rbf && (self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|&g| !(g > 0.0))) {
            return bad("gamma_grid must hold positive values");
        }
        if self.folds < 2 || self.inner_folds < 2 {
            return bad("folds and inner_folds must be at least 2");
        }
        if !(self.time_limit > 0.0) {
            return bad("time_limit must be positive");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be non-negative");
        }
        if self.thresholds == ThresholdMode::Hoeffding && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if [self.lambda_pos, self.lambda_neg].iter().flatten().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("fixed rate targets must lie in [0, 1]");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    /// `(C, gamma)` pairs in tie-break order: smaller C first, then smaller gamma.
    pub fn grid(&self) -> Vec<(f64, Option<f64>)> {
        let mut cs = self.c_grid.clone();
        cs.sort_by(f64::total_cmp);
        let mut gs = self.gamma_grid.clone();
        gs.sort_by(f64::total_cmp);
        match self.kernel {
            KernelChoice::Linear => cs.into_iter().map(|c| (c, None)).collect(),
            KernelChoice::Rbf => cs
                .iter()
                .flat_map(|&c| gs.iter().map(move |&g| (c, Some(g))))
                .collect(),
        }
    }

    fn p1_budget(&self) -> TimeBudget {
        TimeBudget {
            seconds: self.time_limit,
            node_limit: self.p1_node_limit,
        }
    }

    fn svm_budget(&self) -> TimeBudget {
        TimeBudget {
            seconds: self.time_limit,
            node_limit: self.svm_node_limit,
        }
    }
}

/// Validation index sets of a partition, plus a note when stratification
/// had to be abandoned.
#[derive(Debug, Clone, PartialEq)]
pub struct Folds {
    pub test: Vec<Vec<usize>>,
    pub warning: Option<String>,
}

impl Folds {
    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    pub fn train(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .test
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, t)| t.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Stratified partition of the rows of `d` into `k` folds.
///
/// Each class is shuffled and dealt round-robin, the second class picking up
/// where the first stopped, so fold sizes differ by at most one.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<Folds> {
    make_folds_for(&d.y, k, seed)
}

pub fn make_folds_for(y: &[f64], k: usize, seed: u64) -> Result<Folds> {
    let n = y.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} rows into {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = vec![Vec::new(); k];
    if k == n {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (f, i) in idx.into_iter().enumerate() {
            test[f].push(i);
        }
        return Ok(Folds { test, warning: None });
    }
    let pos: Vec<usize> = (0..n).filter(|&i| y[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| y[i] <= 0.0).collect();
    let mut warning = None;
    let groups = if pos.len() < k || neg.len() < k {
        warning = Some(format!(
            "a class has fewer than {k} members; folds are not stratified"
        ));
        vec![(0..n).collect::<Vec<_>>()]
    } else {
        vec![pos, neg]
    };
    let mut slot = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            test[slot % k].push(i);
            slot += 1;
        }
    }
    for t in &mut test {
        t.sort_unstable();
    }
    if let Some(w) = &warning {
        warn!("{w}");
    }
    Ok(Folds { test, warning })
}

pub fn unbalanced_rule(d: &Dataset) -> Criterion {
    criterion_for(d.n_pos(), d.n_neg())
}

fn criterion_for(n_pos: usize, n_neg: usize) -> Criterion {
    let minority = n_pos.min(n_neg) as f64 / (n_pos + n_neg).max(1) as f64;
    if minority < UNBALANCED_CUTOFF {
        Criterion::GeometricMean
    } else {
        Criterion::Accuracy
    }
}

impl Criterion {
    pub fn score(self, r: &RateReport) -> Option<f64> {
        match self {
            Criterion::Accuracy => Some(r.acc),
            Criterion::GeometricMean => r.gmean,
        }
    }
}

/// Reimputes from `train` rows, then fits the scaler on them and applies it
/// to both sides.
pub fn split(d: &Dataset, train: &[usize], test: &[usize], mode: ScaleMode) -> (Dataset, Dataset) {
    let base = d.reimpute(train);
    let mut tr = base.select_rows(train);
    let mut te = base.select_rows(test);
    let scaler = Scaler::fit(mode, tr.x.view());
    tr.x = scaler.transform(tr.x.view());
    te.x = scaler.transform(te.x.view());
    (tr, te)
}

fn pooled(reports: &[RateReport]) -> RateReport {
    let mut c = [0usize; 4];
    for r in reports {
        c[0] += r.tp;
        c[1] += r.fp;
        c[2] += r.tn;
        c[3] += r.fn_;
    }
    RateReport::from_counts(c[0], c[1], c[2], c[3])
}

/// Mean criterion over folds with a defined score; folds without one
/// are skipped.
fn mean_score(crit: Criterion, reports: &[RateReport]) -> f64 {
    let vals: Vec<f64> = reports.iter().filter_map(|r| crit.score(r)).collect();
    if vals.is_empty() {
        f64::NEG_INFINITY
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Index of the best mean score; ties keep the earliest entry.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn plain_svm(train: &Dataset, c: f64, budget: TimeBudget) -> Result<SvmModel> {
    let spec = CsSvmSpec::new(KernelSpec::linear(vec![true; train.n_features()]), c, Thresholds::plain(0.0, 0.0))
        .with_budget(budget);
    train_p2(train, &vec![true; train.n_features()], &spec)
}

fn run_pool<T: Send, F: Fn(usize) -> Result<T> + Sync + Send>(workers: usize, n: usize, f: F) -> Result<Vec<T>> {
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Plain linear SVM tuned over `grid` by cross-validation on `inner`.
/// Returns the pooled validation rates of the chosen `C`.
pub fn baseline_svm(
    d: &Dataset,
    grid: &[f64],
    inner: &Folds,
    scale: ScaleMode,
    budget: TimeBudget,
    workers: usize,
) -> Result<(RateReport, f64)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    let mut cs = grid.to_vec();
    cs.sort_by(f64::total_cmp);
    let splits: Vec<(Dataset, Dataset)> = (0..inner.len())
        .map(|j| split(d, &inner.train(j), &inner.test[j], scale))
        .collect();
    let jobs = cs.len() * splits.len();
    let reports = run_pool(workers, jobs, |job| {
        let (gi, j) = (job / splits.len(), job % splits.len());
        let (tr, te) = &splits[j];
        let m = plain_svm(tr, cs[gi], budget)?;
        rates(&te.y, &m.predict(te.x.view())?)
    })?;
    let crit = unbalanced_rule(d);
    let scores: Vec<f64> = reports
        .chunks(splits.len())
        .map(|r| mean_score(crit, r))
        .collect();
    let best = argmax(&scores);
    let chosen = &reports[best * splits.len()..(best + 1) * splits.len()];
    Ok((pooled(chosen), cs[best]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCheck {
    pub required_pos: f64,
    pub required_neg: f64,
    pub certified_tpr: Option<f64>,
    pub certified_tnr: Option<f64>,
    pub measured_tpr: Option<f64>,
    pub measured_tnr: Option<f64>,
}

impl TrainingCheck {
    /// Certified rates reach the thresholds and measured rates reach the
    /// certified ones.
    pub fn holds(&self) -> bool {
        let ge = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a >= b,
            (None, None) => true,
            _ => false,
        };
        let reaches = |r: Option<f64>, lambda: f64| r.is_none_or(|r| r >= lambda - 1e-9);
        reaches(self.certified_tpr, self.required_pos)
            && reaches(self.certified_tnr, self.required_neg)
            && ge(self.measured_tpr, self.certified_tpr)
            && ge(self.measured_tnr, self.certified_tnr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub baseline: RateReport,
    pub baseline_c: f64,
    pub thresholds: Thresholds,
    pub p1_status: FsStatus,
    pub p1_gap: f64,
    pub p1_nodes: usize,
    pub mask: Vec<bool>,
    pub n_selected: usize,
    pub cost: f64,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub svm_status: Option<FsStatus>,
    pub svm_gap: Option<f64>,
    /// Validation rates; `None` for an infeasible fold.
    pub rates: Option<RateReport>,
    pub training: Option<TrainingCheck>,
    pub advisory: Option<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl FoldResult {
    pub fn infeasible(&self) -> bool {
        self.rates.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc: Option<Stat>,
    pub tpr: Option<Stat>,
    pub tnr: Option<Stat>,
    pub features: Option<Stat>,
    pub baseline_acc: Option<Stat>,
    pub baseline_tpr: Option<Stat>,
    pub baseline_tnr: Option<Stat>,
}

impl Summary {
    pub fn of(folds: &[FoldResult]) -> Summary {
        let ok: Vec<&FoldResult> = folds.iter().filter(|f| !f.infeasible()).collect();
        let pick = |g: &dyn Fn(&RateReport) -> Option<f64>| -> Option<Stat> {
            Stat::of(&ok.iter().filter_map(|f| f.rates.as_ref().and_then(g)).collect::<Vec<_>>())
        };
        let base = |g: &dyn Fn(&RateReport) -> Option<f64>| -> Option<Stat> {
            Stat::of(&folds.iter().filter_map(|f| g(&f.baseline)).collect::<Vec<_>>())
        };
        Summary {
            acc: pick(&|r| Some(r.acc)),
            tpr: pick(&|r| r.tpr),
            tnr: pick(&|r| r.tnr),
            features: Stat::of(&ok.iter().map(|f| f.n_selected as f64).collect::<Vec<_>>()),
            baseline_acc: base(&|r| Some(r.acc)),
            baseline_tpr: base(&|r| r.tpr),
            baseline_tnr: base(&|r| r.tnr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_pos: usize,
    pub feature_names: Vec<String>,
    pub criterion: Criterion,
    pub leave_one_out: bool,
    pub folds: Vec<FoldResult>,
    pub summary: Summary,
    pub infeasible_folds: usize,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn all_infeasible(&self) -> bool {
        !self.folds.is_empty() && self.infeasible_folds == self.folds.len()
    }
}

const ADVISORY: &str = "no feature subset meets the rate thresholds on this training fold; lower the thresholds";

fn select_features(train: &Dataset, th: &Thresholds, cfg: &ExperimentConfig, seed: u64) -> Result<FsSolution> {
    let model = build_p1(train, th, cfg.bigm, &train.costs)?;
    let sol = solve_p1(&model, &cfg.p1_budget(), seed)?;
    if sol.status.has_solution() {
        let cert = check_p1_certificate(train, th, &sol, cfg.bigm);
        if cert.max_violation() > 1e-6 {
            return Err(Error::Solver(format!(
                "feature-selection certificate violated by {:e}",
                cert.max_violation()
            )));
        }
    }
    Ok(sol)
}

fn thresholds_for(cfg: &ExperimentConfig, target: (f64, f64), d: &Dataset) -> Result<Thresholds> {
    empirical_thresholds(target.0, target.1, cfg.thresholds, cfg.alpha, d.n_pos(), d.n_neg())
}

fn train_svm(
    cfg: &ExperimentConfig,
    d: &Dataset,
    mask: &[bool],
    th: &Thresholds,
    c: f64,
    gamma: Option<f64>,
    hint: Option<Vec<bool>>,
) -> Result<SvmModel> {
    let kernel = match gamma {
        None => KernelSpec::linear(mask.to_vec()),
        Some(g) => KernelSpec::radial(g, mask.to_vec())?,
    };
    let mut spec = CsSvmSpec::new(kernel, c, *th).with_budget(cfg.svm_budget());
    spec.m1 = cfg.m1;
    if let Some(h) = hint {
        spec = spec.with_hint(h);
    }
    match gamma {
        None => train_p2(d, mask, &spec),
        Some(_) => train_p3(d, mask, &spec),
    }
}

fn subset(v: &[bool], idx: &[usize]) -> Vec<bool> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Inner-loop state for one inner split: the data and the mask used there.
struct InnerSplit {
    train: Dataset,
    test: Dataset,
    th: Thresholds,
    mask: Option<(Vec<bool>, Vec<bool>)>,
}

fn run_fold(
    cfg: &ExperimentConfig,
    d: &Dataset,
    outer: &Folds,
    f: usize,
    whole_baseline: Option<&(RateReport, f64)>,
) -> Result<FoldResult> {
    let start = Instant::now();
    let train_idx = outer.train(f);
    let test_idx = &outer.test[f];
    let (train, test) = split(d, &train_idx, test_idx, cfg.scale);
    let fold_seed = cfg.seed.wrapping_add(1 + f as u64);
    let inner = make_folds(&train, cfg.inner_folds.min(train.n_samples()), fold_seed)?;

    let (baseline, baseline_c) = match whole_baseline {
        Some(b) => *b,
        None => baseline_svm(&train, &cfg.c_grid, &inner, cfg.scale, cfg.svm_budget(), cfg.workers)?,
    };
    let derived = target_from_reference(&baseline, cfg.delta);
    let target = (cfg.lambda_pos.unwrap_or(derived.0), cfg.lambda_neg.unwrap_or(derived.1));
    let th = thresholds_for(cfg, target, &train)?;

    let mut result = FoldResult {
        fold: f,
        n_train: train.n_samples(),
        n_test: test.n_samples(),
        baseline,
        baseline_c,
        thresholds: th,
        p1_status: FsStatus::Infeasible,
        p1_gap: f64::INFINITY,
        p1_nodes: 0,
        mask: vec![false; d.n_features()],
        n_selected: 0,
        cost: 0.0,
        c: None,
        gamma: None,
        svm_status: None,
        svm_gap: None,
        rates: None,
        training: None,
        advisory: None,
        wall_time: 0.0,
    };

    let sel = select_features(&train, &th, cfg, fold_seed)?;
    result.p1_status = sel.status;
    result.p1_gap = sel.gap;
    result.p1_nodes = sel.nodes;
    if !sel.status.has_solution() {
        result.advisory = Some(ADVISORY.into());
        result.wall_time = start.elapsed().as_secs_f64();
        return Ok(result);
    }
    result.mask = sel.z.clone();
    result.n_selected = sel.n_selected();
    result.cost = sel.objective;

    let mut splits = Vec::with_capacity(inner.len());
    for j in 0..inner.len() {
        let tr_idx = inner.train(j);
        let (tr, te) = split(&train, &tr_idx, &inner.test[j], cfg.scale);
        let th_j = thresholds_for(cfg, target, &tr)?;
        let mask = match cfg.p1_scope {
            P1Scope::OuterLiteral => Some((sel.z.clone(), subset(&sel.zeta, &tr_idx))),
            P1Scope::InnerStrict => {
                let s = select_features(&tr, &th_j, cfg, fold_seed.wrapping_mul(31).wrapping_add(j as u64))?;
                s.status.has_solution().then_some((s.z, s.zeta))
            }
        };
        splits.push(InnerSplit {
            train: tr,
            test: te,
            th: th_j,
            mask,
        });
    }

    let grid = cfg.grid();
    let k = splits.len();
    let reports = run_pool(cfg.workers, grid.len() * k, |job| {
        let (c, g) = grid[job / k];
        let s = &splits[job % k];
        let Some((mask, hint)) = &s.mask else {
            return Ok(None);
        };
        let m = train_svm(cfg, &s.train, mask, &s.th, c, g, Some(hint.clone()))?;
        if !m.diagnostics.status.has_solution() {
            return Ok(None);
        }
        Ok(Some(rates(&s.test.y, &m.predict(s.test.x.view())?)?))
    })?;
    let crit = unbalanced_rule(&train);
    let scores: Vec<f64> = reports
        .chunks(k)
        .map(|chunk| {
            // A split without a trained model scores zero.
            let vals: Vec<f64> = chunk
                .iter()
                .filter_map(|r| match r {
                    Some(r) => crit.score(r),
                    None => Some(0.0),
                })
                .collect();
            if vals.is_empty() {
                f64::NEG_INFINITY
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();
    let (c, gamma) = grid[argmax(&scores)];
    result.c = Some(c);
    result.gamma = gamma;

    let model = train_svm(cfg, &train, &sel.z, &th, c, gamma, Some(sel.zeta.clone()))?;
    result.svm_status = Some(model.diagnostics.status);
    result.svm_gap = Some(model.diagnostics.gap);
    if !model.diagnostics.status.has_solution() {
        result.advisory = Some(ADVISORY.into());
        result.wall_time = start.elapsed().as_secs_f64();
        return Ok(result);
    }
    let (cert_tpr, cert_tnr) = zeta_rates(&model.diagnostics.zeta, &train.y)?;
    let measured = rates(&train.y, &model.predict(train.x.view())?)?;
    result.training = Some(TrainingCheck {
        required_pos: th.pos,
        required_neg: th.neg,
        certified_tpr: cert_tpr,
        certified_tnr: cert_tnr,
        measured_tpr: measured.tpr,
        measured_tnr: measured.tnr,
    });
    result.rates = Some(rates(&test.y, &model.predict(test.x.view())?)?);
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Runs the full nested cross-validation on `d`.
pub fn run_experiment(cfg: &ExperimentConfig, d: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    d.validate()?;
    let n = d.n_samples();
    let loo = n < cfg.loo_cutoff;
    let k = if loo { n } else { cfg.folds.min(n) };
    let outer = make_folds(d, k, cfg.seed)?;
    let mut warnings: Vec<String> = outer.warning.iter().cloned().collect();

    let whole = match cfg.baseline {
        BaselineScope::PerFold => None,
        BaselineScope::Whole => {
            let inner = make_folds(d, cfg.inner_folds.min(n), cfg.seed)?;
            Some(baseline_svm(d, &cfg.c_grid, &inner, cfg.scale, cfg.svm_budget(), cfg.workers)?)
        }
    };

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let r = run_fold(cfg, d, &outer, f, whole.as_ref())?;
        info!(
            "fold {f}: {} features, status {:?}, rates {:?}",
            r.n_selected, r.p1_status, r.rates.map(|x| x.acc)
        );
        folds.push(r);
    }
    let infeasible_folds = folds.iter().filter(|f| f.infeasible()).count();
    if infeasible_folds > 0 {
        warnings.push(format!(
            "{infeasible_folds} of {k} folds infeasible; aggregates use the remaining folds"
        ));
    }
    Ok(ExperimentReport {
        dataset: cfg.dataset.clone(),
        config: cfg.clone(),
        n_samples: n,
        n_features: d.n_features(),
        n_pos: d.n_pos(),
        feature_names: d.names.clone(),
        criterion: unbalanced_rule(d),
        leave_one_out: loo,
        summary: Summary::of(&folds),
        folds,
        infeasible_folds,
        warnings,
    })
}
