//! Classification rates and the rate thresholds imposed on training data.
//!
//! The two thresholds are the target true-positive rate `lambda_pos` and
//! true-negative rate `lambda_neg`. Training problems see their empirical
//! counterparts, which either equal the targets or are inflated by a
//! Hoeffding margin that depends on the class sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Plain,
    Hoeffding,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(ThresholdMode::Plain),
            "hoeffding" => Ok(ThresholdMode::Hoeffding),
            other => Err(Error::InvalidArgument(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Target rates and the empirical thresholds derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub target_pos: f64,
    pub target_neg: f64,
    pub mode: ThresholdMode,
    /// Significance level of the Hoeffding test; `None` in plain mode.
    pub significance: Option<f64>,
    /// Empirical TPR threshold imposed on the training sample.
    pub pos: f64,
    /// Empirical TNR threshold imposed on the training sample.
    pub neg: f64,
}

impl Thresholds {
    /// Plain thresholds, `lambda* = lambda`.
    pub fn plain(target_pos: f64, target_neg: f64) -> Self {
        Thresholds {
            target_pos,
            target_neg,
            mode: ThresholdMode::Plain,
            significance: None,
            pos: target_pos,
            neg: target_neg,
        }
    }

    /// Number of positives that must be certified out of `n_pos`.
    pub fn required_pos(&self, n_pos: usize) -> usize {
        required_count(self.pos, n_pos)
    }

    pub fn required_neg(&self, n_neg: usize) -> usize {
        required_count(self.neg, n_neg)
    }
}

/// Smallest integer `k` with `k >= lambda * n`, allowing for rounding noise
/// in `lambda * n`.
pub fn required_count(lambda: f64, n: usize) -> usize {
    let raw = lambda * n as f64;
    let k = (raw - 1e-9).ceil();
    k.clamp(0.0, n as f64) as usize
}

/// Hoeffding margin `sqrt(-ln(alpha) / (2 n))`.
pub fn hoeffding_margin(alpha: f64, n: usize) -> f64 {
    (-alpha.ln() / (2.0 * n as f64)).sqrt()
}

pub fn empirical_thresholds(
    target_pos: f64,
    target_neg: f64,
    mode: ThresholdMode,
    alpha: f64,
    n_pos: usize,
    n_neg: usize,
) -> Result<Thresholds> {
    for (name, v) in [("lambda_pos", target_pos), ("lambda_neg", target_neg)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    match mode {
        ThresholdMode::Plain => Ok(Thresholds::plain(target_pos, target_neg)),
        ThresholdMode::Hoeffding => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "significance level {alpha} outside (0, 1)"
                )));
            }
            if n_pos == 0 || n_neg == 0 {
                return Err(Error::InvalidArgument(
                    "hoeffding thresholds need both classes in the training sample".into(),
                ));
            }
            Ok(Thresholds {
                target_pos,
                target_neg,
                mode,
                significance: Some(alpha),
                pos: (target_pos + hoeffding_margin(alpha, n_pos)).min(1.0),
                neg: (target_neg + hoeffding_margin(alpha, n_neg)).min(1.0),
            })
        }
    }
}

/// Targets that allow the rates to drop at most `delta` below a reference
/// classifier. An undefined reference rate yields a vacuous target.
pub fn target_from_reference(reference: &RateReport, delta: f64) -> (f64, f64) {
    let lower = |r: Option<f64>| r.map_or(0.0, |v| (v - delta).min(1.0).max(0.0));
    (lower(reference.tpr), lower(reference.tnr))
}

/// Confusion counts and the derived rates. A rate whose class is absent
/// from the true labels is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub acc: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub gmean: Option<f64>,
}

impl RateReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let total = tp + fp + tn + fn_;
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let tpr = ratio(tp, tp + fn_);
        let tnr = ratio(tn, tn + fp);
        RateReport {
            tp,
            fp,
            tn,
            fn_,
            acc: if total > 0 { (tp + tn) as f64 / total as f64 } else { 0.0 },
            tpr,
            tnr,
            gmean: match (tpr, tnr) {
                (Some(a), Some(b)) => Some((a * b).sqrt()),
                _ => None,
            },
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn rates(y_true: &[f64], y_pred: &[f64]) -> Result<RateReport> {
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("rates of an empty sample".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t > 0.0, p > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    Ok(RateReport::from_counts(tp, fp, tn, fn_))
}

/// Lower bounds on the sample TPR and TNR implied by the certification
/// indicators: `sum zeta_i (1 + y_i) / sum (1 + y_i)` and the analogue for
/// the negative class.
pub fn zeta_rates(zeta: &[bool], y: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
    if zeta.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: zeta.len(),
        });
    }
    let (mut num_pos, mut den_pos, mut num_neg, mut den_neg) = (0.0, 0.0, 0.0, 0.0);
    for (&z, &yi) in zeta.iter().zip(y) {
        let zi = if z { 1.0 } else { 0.0 };
        num_pos += zi * (1.0 + yi);
        den_pos += 1.0 + yi;
        num_neg += zi * (1.0 - yi);
        den_neg += 1.0 - yi;
    }
    let ratio = |n: f64, d: f64| (d > 0.0).then(|| n / d);
    Ok((ratio(num_pos, den_pos), ratio(num_neg, den_neg)))
}
