//! Group-weighted BCE-difference statistics and the one-sided z-tests that
//! decide whether a candidate direction is kept.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::optim::{bce_one, LinearModel};
use crate::types::{Direction, LabeledEmbeddings, Target};

/// Smallest per-group validation count accepted by the tests.
pub const MIN_GROUP_COUNT: usize = 2;

/// Finite stand-in for an infinite statistic when the variance is zero.
pub const T_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDiff {
    pub d_bar_w: f64,
    pub var_hat: f64,
    pub group_means: [f64; 4],
    pub group_vars: [f64; 4],
    pub group_counts: [usize; 4],
}

/// Equally group-weighted mean of `d` and the variance of that estimate.
pub fn weighted_diff(d: &[f64], groups: &[u8]) -> Result<WeightedDiff> {
    if d.len() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "differences vs groups",
            left: d.len(),
            right: groups.len(),
        });
    }
    let mut counts = [0usize; 4];
    let mut sums = [0.0; 4];
    for (&x, &g) in d.iter().zip(groups) {
        let k = usize::from(g - 1);
        counts[k] += 1;
        sums[k] += x;
    }
    for (k, &c) in counts.iter().enumerate() {
        if c < MIN_GROUP_COUNT {
            return Err(Error::EmptyGroup {
                group: k as u8 + 1,
                count: c,
                min: MIN_GROUP_COUNT,
            });
        }
    }
    let means: [f64; 4] = std::array::from_fn(|k| sums[k] / counts[k] as f64);
    let mut ss = [0.0; 4];
    for (&x, &g) in d.iter().zip(groups) {
        let k = usize::from(g - 1);
        ss[k] += (x - means[k]).powi(2);
    }
    let vars: [f64; 4] = std::array::from_fn(|k| ss[k] / (counts[k] - 1) as f64);
    let d_bar_w = means.iter().sum::<f64>() / 4.0;
    let var_hat = (0..4).map(|k| vars[k] / counts[k] as f64).sum::<f64>() / 16.0;
    Ok(WeightedDiff {
        d_bar_w,
        var_hat,
        group_means: means,
        group_vars: vars,
        group_counts: counts,
    })
}

/// Plain sample mean of `d` and its variance `s^2 / n`.
pub fn unweighted_diff(d: &[f64]) -> Result<(f64, f64)> {
    let n = d.len();
    if n < MIN_GROUP_COUNT {
        return Err(Error::EmptyDataset);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let s2 = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, s2 / n as f64))
}

/// Mean and variance estimate under either weighting scheme.
pub fn diff_mean_var(d: &[f64], groups: &[u8], group_weighted: bool) -> Result<(f64, f64)> {
    if group_weighted {
        let w = weighted_diff(d, groups)?;
        Ok((w.d_bar_w, w.var_hat))
    } else {
        if d.len() != groups.len() {
            return Err(Error::LengthMismatch {
                what: "differences vs groups",
                left: d.len(),
                right: groups.len(),
            });
        }
        unweighted_diff(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Less,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    SpVsRandom,
    MtVsRandom,
    SpVsMtOnVsp,
    SpVsMtOnVmt,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::SpVsRandom => "sp_vs_random",
            TestKind::MtVsRandom => "mt_vs_random",
            TestKind::SpVsMtOnVsp => "sp_vs_mt_on_vsp",
            TestKind::SpVsMtOnVmt => "sp_vs_mt_on_vmt",
        }
    }
}

/// Which candidate vector a relative test is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnVector {
    VSp,
    VMt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub delta: f64,
    pub side: Side,
    pub decision: bool,
    pub mean_diff: f64,
    pub var_hat: f64,
}

impl TestReport {
    /// Builds a report from a difference mean and its variance estimate.
    pub fn from_moments(
        kind: TestKind,
        side: Side,
        mean: f64,
        var: f64,
        delta: f64,
        alpha: f64,
    ) -> Result<Self> {
        let threshold = critical_value(alpha)?;
        let statistic = t_statistic(mean, var, delta);
        let decision = match side {
            Side::Less => statistic < -threshold,
            Side::Greater => statistic > threshold,
        };
        Ok(Self {
            kind,
            statistic,
            threshold,
            alpha,
            delta,
            side,
            decision,
            mean_diff: mean,
            var_hat: var,
        })
    }

    /// CSV row: kind, t, threshold, alpha, delta, decision.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.kind.as_str(),
            self.statistic,
            self.threshold,
            self.alpha,
            self.delta,
            self.decision
        )
    }
}

/// `(mean - delta) / sqrt(var)`, with `±T_SENTINEL` (or 0) when `var == 0`.
pub fn t_statistic(mean: f64, var: f64, delta: f64) -> f64 {
    let num = mean - delta;
    if var > 0.0 {
        num / var.sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        T_SENTINEL.copysign(num)
    }
}

/// Upper `1 - alpha` quantile of the standard normal.
pub fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha))
}

fn per_sample_bce(dir: &Direction, val: &LabeledEmbeddings, target: Target) -> Vec<f64> {
    dir.predict_proba(val.z())
        .iter()
        .zip(val.labels(target))
        .map(|(&p, &y)| bce_one(p, y))
        .collect()
}

/// Is the fitted 1-D model on `v` better than the intercept-only model?
pub fn t_vs_random(
    v: &Direction,
    val: &LabeledEmbeddings,
    target: Target,
    random_model: &LinearModel,
    alpha: f64,
    group_weighted: bool,
) -> Result<TestReport> {
    if v.v.len() != val.dim() {
        return Err(Error::DimensionMismatch {
            expected: val.dim(),
            got: v.v.len(),
        });
    }
    let y = val.labels(target);
    let fitted = per_sample_bce(v, val, target);
    let p0 = crate::optim::sigmoid(random_model.b);
    let d: Vec<f64> = fitted
        .iter()
        .zip(y)
        .map(|(&l, &yi)| l - bce_one(p0, yi))
        .collect();
    let (mean, var) = diff_mean_var(&d, val.groups(), group_weighted)?;
    let kind = match target {
        Target::Sp => TestKind::SpVsRandom,
        Target::Mt => TestKind::MtVsRandom,
    };
    TestReport::from_moments(kind, Side::Less, mean, var, 0.0, alpha)
}

fn relative_diffs(
    sp_fit: &Direction,
    mt_fit: &Direction,
    val: &LabeledEmbeddings,
) -> Result<Vec<f64>> {
    for dir in [sp_fit, mt_fit] {
        if dir.v.len() != val.dim() {
            return Err(Error::DimensionMismatch {
                expected: val.dim(),
                got: dir.v.len(),
            });
        }
    }
    let ls = per_sample_bce(sp_fit, val, Target::Sp);
    let lm = per_sample_bce(mt_fit, val, Target::Mt);
    Ok(ls.iter().zip(&lm).map(|(a, b)| a - b).collect())
}

/// Compares how well one candidate vector predicts the spurious versus the
/// main-task label. `sp_fit` and `mt_fit` are the two 1-D fits on that
/// vector. On `v_sp` the alternative is `E[d] < delta`, on `v_mt` it is
/// `E[d] > delta`.
pub fn t_relative(
    sp_fit: &Direction,
    mt_fit: &Direction,
    val: &LabeledEmbeddings,
    on: OnVector,
    delta: f64,
    alpha: f64,
    group_weighted: bool,
) -> Result<TestReport> {
    let d = relative_diffs(sp_fit, mt_fit, val)?;
    let (mean, var) = diff_mean_var(&d, val.groups(), group_weighted)?;
    let (kind, side) = match on {
        OnVector::VSp => (TestKind::SpVsMtOnVsp, Side::Less),
        OnVector::VMt => (TestKind::SpVsMtOnVmt, Side::Greater),
    };
    TestReport::from_moments(kind, side, mean, var, delta, alpha)
}

/// Offset for the relative tests: the mean loss difference between the
/// spurious model on its own direction and the main-task model on its own.
pub fn delta_heuristic(
    vhat_sp: &Direction,
    vhat_mt: &Direction,
    val: &LabeledEmbeddings,
    group_weighted: bool,
) -> Result<f64> {
    let d = relative_diffs(vhat_sp, vhat_mt, val)?;
    Ok(diff_mean_var(&d, val.groups(), group_weighted)?.0)
}
