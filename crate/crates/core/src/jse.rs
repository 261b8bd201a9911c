//! Joint subspace estimation.
//!
//! The outer loop proposes spurious directions, the inner loop proposes
//! main-task directions. Every proposal comes from a fresh joint solve of two
//! logistic regressions with orthogonal weights on the embeddings that
//! remain after projecting out what has already been accepted. A candidate is
//! accepted when it beats an intercept-only model on its own label and is
//! more predictive of its own label than of the other one.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSummary};
use crate::optim::{
    fit_1d_logreg, fit_intercept_only, fit_joint_orthogonal_within, fit_logreg, BalanceSampling,
    LinearModel, OptimizerConfig,
};
use crate::seed;
use crate::stats::{delta_heuristic, t_relative, t_vs_random, OnVector, Side, TestKind, TestReport};
use crate::types::{
    project_out, project_out_vec, unit, CandidateTests, Direction, EmbeddingTransform,
    LabeledEmbeddings, SubspaceBasis, SubspaceKind, SubspaceResult, Target, Termination,
};

/// Written as a number or as the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeltaRepr", into = "DeltaRepr")]
pub enum DeltaMode {
    Fixed(f64),
    /// Computed from the first joint solve and then held fixed.
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DeltaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<DeltaRepr> for DeltaMode {
    type Error = String;

    fn try_from(r: DeltaRepr) -> std::result::Result<Self, String> {
        match r {
            DeltaRepr::Number(x) => Ok(DeltaMode::Fixed(x)),
            DeltaRepr::Text(s) if s == "auto" => Ok(DeltaMode::Auto),
            DeltaRepr::Text(s) => s
                .parse()
                .map(DeltaMode::Fixed)
                .map_err(|_| format!("delta must be a number or \"auto\", got '{s}'")),
        }
    }
}

impl From<DeltaMode> for DeltaRepr {
    fn from(m: DeltaMode) -> Self {
        match m {
            DeltaMode::Fixed(x) => DeltaRepr::Number(x),
            DeltaMode::Auto => DeltaRepr::Text("auto".into()),
        }
    }
}

impl Default for DeltaMode {
    fn default() -> Self {
        DeltaMode::Fixed(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LoopOrder {
    #[default]
    MtInner,
    SpInner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    #[default]
    RemoveSp,
    KeepMt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JseConfig {
    pub alpha: f64,
    pub delta: DeltaMode,
    /// Cap on the number of vectors per subspace; `None` means `d`.
    pub max_dim: Option<usize>,
    pub loop_order: LoopOrder,
    pub transform_mode: TransformMode,
    pub group_weighted_tests: bool,
    /// Re-run the inner loop after the last accepted spurious vector so
    /// that the main-task basis matches the final spurious basis.
    pub estimate_mt_basis: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for JseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            delta: DeltaMode::default(),
            max_dim: None,
            loop_order: LoopOrder::default(),
            transform_mode: TransformMode::default(),
            group_weighted_tests: true,
            estimate_mt_basis: true,
            optimizer: OptimizerConfig::jse_default(),
        }
    }
}

impl JseConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(m) = self.max_dim {
            if m > d {
                return Err(Error::InvalidConfig(format!("max_dim {m} exceeds d = {d}")));
            }
        }
        if let DeltaMode::Fixed(x) = self.delta {
            if !x.is_finite() {
                return Err(Error::InvalidConfig("delta must be finite".into()));
            }
        }
        self.optimizer.validate()
    }
}

/// The two splits after projecting out a set of directions.
struct Projected {
    train: LabeledEmbeddings,
    val: LabeledEmbeddings,
}

impl Projected {
    fn new(train: &LabeledEmbeddings, val: &LabeledEmbeddings, v: &Array2<f64>) -> Result<Self> {
        if v.ncols() == 0 {
            return Ok(Self {
                train: train.clone(),
                val: val.clone(),
            });
        }
        Ok(Self {
            train: train.with_embeddings(project_out(train.z(), v)?)?,
            val: val.with_embeddings(project_out(val.z(), v)?)?,
        })
    }
}

fn stack(d: usize, cols: &[Array1<f64>]) -> Array2<f64> {
    if cols.is_empty() {
        return Array2::zeros((d, 0));
    }
    let views: Vec<_> = cols.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
    concatenate(Axis(1), &views).expect("equal column lengths")
}

/// Unit vector orthogonal to `against`, or `None` if nothing is left.
fn clean_unit(w: &[f64], against: &Array2<f64>) -> Option<Array1<f64>> {
    let w = Array1::from(w.to_vec());
    let w = if against.ncols() > 0 {
        project_out_vec(&w, against)
    } else {
        w
    };
    let u = unit(&w)?;
    // a second pass removes the rounding left over by the first
    let u = if against.ncols() > 0 {
        project_out_vec(&u, against)
    } else {
        u
    };
    unit(&u)
}

/// A joint-solve model restated as a direction with scale `||w||`.
fn as_direction(v: &Array1<f64>, model: &LinearModel) -> Result<Direction> {
    let norm = model.w.iter().map(|x| x * x).sum::<f64>().sqrt();
    Direction::new(v.clone(), norm, model.b)
}

struct Candidate {
    v_sp: Array1<f64>,
    v_mt: Array1<f64>,
    own_sp: Direction,
    own_mt: Direction,
}

struct Runner<'a> {
    cfg: &'a JseConfig,
    train: &'a LabeledEmbeddings,
    val: &'a LabeledEmbeddings,
    d: usize,
    cap: usize,
    random_sp: LinearModel,
    random_mt: LinearModel,
    delta: Option<f64>,
}

impl Runner<'_> {
    fn solve(
        &mut self,
        data: &Projected,
        removed: &Array2<f64>,
        i: usize,
        j: usize,
    ) -> Result<Option<Candidate>> {
        let opt = self
            .cfg
            .optimizer
            .with_seed(seed::derive(self.cfg.optimizer.seed, &[i as u64, j as u64]));
        let fit = fit_joint_orthogonal_within(&data.train, &data.val, &opt, removed)?;
        let (Some(v_sp), Some(v_mt)) = (clean_unit(&fit.sp.w, removed), clean_unit(&fit.mt.w, removed))
        else {
            return Ok(None);
        };
        let own_sp = as_direction(&v_sp, &fit.sp)?;
        let own_mt = as_direction(&v_mt, &fit.mt)?;
        if self.delta.is_none() {
            self.delta = Some(match self.cfg.delta {
                DeltaMode::Fixed(x) => x,
                DeltaMode::Auto => {
                    delta_heuristic(&own_sp, &own_mt, &data.val, self.cfg.group_weighted_tests)?
                }
            });
        }
        Ok(Some(Candidate {
            v_sp,
            v_mt,
            own_sp,
            own_mt,
        }))
    }

    fn cross_fit(
        &self,
        data: &Projected,
        v: &Array1<f64>,
        target: Target,
        path: [u64; 3],
    ) -> Result<Direction> {
        let opt = self
            .cfg
            .optimizer
            .with_seed(seed::derive(self.cfg.optimizer.seed, &path));
        Ok(fit_1d_logreg(data.train.z(), v, data.train.labels(target), &opt)?.direction)
    }

    fn test_mt(&self, data: &Projected, c: &Candidate, i: usize, j: usize) -> Result<CandidateTests> {
        let w = self.cfg.group_weighted_tests;
        let vs_random = t_vs_random(&c.own_mt, &data.val, Target::Mt, &self.random_mt, self.cfg.alpha, w)?;
        let cross = self.cross_fit(data, &c.v_mt, Target::Sp, [i as u64, j as u64, 1])?;
        let relative = t_relative(&cross, &c.own_mt, &data.val, OnVector::VMt, self.delta(), self.cfg.alpha, w)?;
        let accepted = vs_random.decision && relative.decision;
        Ok(CandidateTests {
            vs_random,
            relative,
            accepted,
        })
    }

    fn test_sp(&self, data: &Projected, c: &Candidate, i: usize) -> Result<CandidateTests> {
        let w = self.cfg.group_weighted_tests;
        let vs_random = t_vs_random(&c.own_sp, &data.val, Target::Sp, &self.random_sp, self.cfg.alpha, w)?;
        let cross = self.cross_fit(data, &c.v_sp, Target::Mt, [i as u64, u64::MAX, 2])?;
        let relative = t_relative(&c.own_sp, &cross, &data.val, OnVector::VSp, self.delta(), self.cfg.alpha, w)?;
        let accepted = vs_random.decision && relative.decision;
        Ok(CandidateTests {
            vs_random,
            relative,
            accepted,
        })
    }

    fn delta(&self) -> f64 {
        self.delta.unwrap_or(0.0)
    }

    /// Runs the inner loop on `sp_perp` and returns the accepted main-task
    /// vectors together with the last joint-solve candidate.
    fn inner(
        &mut self,
        sp_perp: &Projected,
        v_sp: &[Array1<f64>],
        i: usize,
        mt_tests: &mut Vec<CandidateTests>,
    ) -> Result<(Vec<Array1<f64>>, Option<Candidate>)> {
        let mut v_mt: Vec<Array1<f64>> = Vec::new();
        let mut remain = Projected {
            train: sp_perp.train.clone(),
            val: sp_perp.val.clone(),
        };
        let mut last = None;
        for j in 0..self.cap {
            // a joint solve needs two free dimensions
            if v_sp.len() + v_mt.len() + 2 > self.d {
                break;
            }
            let removed = stack(self.d, &[v_sp, &v_mt[..]].concat());
            let Some(c) = self.solve(&remain, &removed, i, j)? else {
                break;
            };
            let tests = self.test_mt(&remain, &c, i, j)?;
            let accepted = tests.accepted;
            mt_tests.push(tests);
            if accepted {
                v_mt.push(c.v_mt.clone());
                last = Some(c);
                remain = Projected::new(&sp_perp.train, &sp_perp.val, &stack(self.d, &v_mt))?;
            } else {
                last = Some(c);
                break;
            }
        }
        Ok((v_mt, last))
    }
}

/// Estimates orthonormal spurious and main-task bases.
pub fn jse_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &JseConfig,
) -> Result<SubspaceResult> {
    match cfg.loop_order {
        LoopOrder::MtInner => jse_fit_mt_inner(train, val, cfg),
        LoopOrder::SpInner => {
            // the roles of the two labels are exchanged, which negates the
            // relative statistics and therefore the offset
            let swapped_cfg = JseConfig {
                delta: match cfg.delta {
                    DeltaMode::Fixed(x) => DeltaMode::Fixed(-x),
                    DeltaMode::Auto => DeltaMode::Auto,
                },
                ..cfg.clone()
            };
            let r = jse_fit_mt_inner(&train.swap_labels(), &val.swap_labels(), &swapped_cfg)?;
            Ok(mirror_result(r))
        }
    }
}

fn jse_fit_mt_inner(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &JseConfig,
) -> Result<SubspaceResult> {
    let d = train.dim();
    if val.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: val.dim(),
        });
    }
    if train.n() == 0 || val.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(d)?;
    if cfg.group_weighted_tests {
        let counts = val.group_counts();
        if let Some(g) = counts.iter().position(|&c| c < crate::stats::MIN_GROUP_COUNT) {
            return Err(Error::EmptyGroup {
                group: g as u8 + 1,
                count: counts[g],
                min: crate::stats::MIN_GROUP_COUNT,
            });
        }
    }
    let cap = cfg.max_dim.unwrap_or(d).min(d);
    let mut run = Runner {
        cfg,
        train,
        val,
        d,
        cap,
        random_sp: fit_intercept_only(train, Target::Sp),
        random_mt: fit_intercept_only(train, Target::Mt),
        delta: None,
    };

    let mut v_sp: Vec<Array1<f64>> = Vec::new();
    let mut v_mt: Vec<Array1<f64>> = Vec::new();
    let mut sp_tests = Vec::new();
    let mut mt_tests = Vec::new();
    let mut sp_perp = Projected::new(run.train, run.val, &stack(d, &v_sp))?;
    let mut termination = if cap < d {
        Termination::MaxIterations
    } else {
        Termination::DimensionExhausted
    };
    let mut mt_current = false;

    for i in 0..cap {
        mt_tests.clear();
        let (accepted_mt, last) = run.inner(&sp_perp, &v_sp, i, &mut mt_tests)?;
        v_mt = accepted_mt;
        mt_current = true;
        let Some(c) = last else {
            termination = Termination::DimensionExhausted;
            break;
        };
        let tests = run.test_sp(&sp_perp, &c, i)?;
        let accepted = tests.accepted;
        sp_tests.push(tests);
        if !accepted {
            termination = Termination::TestRejected;
            break;
        }
        v_sp.push(c.v_sp);
        sp_perp = Projected::new(run.train, run.val, &stack(d, &v_sp))?;
        mt_current = false;
    }

    if !mt_current && cfg.estimate_mt_basis && v_sp.len() + 2 <= d {
        mt_tests.clear();
        v_mt = run.inner(&sp_perp, &v_sp, cap, &mut mt_tests)?.0;
    }

    Ok(SubspaceResult {
        sp_basis: SubspaceBasis::from_columns(d, &v_sp, SubspaceKind::Spurious)?,
        mt_basis: SubspaceBasis::from_columns(d, &v_mt, SubspaceKind::MainTask)?,
        sp_tests,
        mt_tests,
        termination,
        delta: run.delta(),
    })
}

fn mirror_report(r: TestReport) -> TestReport {
    let (kind, relative) = match r.kind {
        TestKind::SpVsRandom => (TestKind::MtVsRandom, false),
        TestKind::MtVsRandom => (TestKind::SpVsRandom, false),
        TestKind::SpVsMtOnVsp => (TestKind::SpVsMtOnVmt, true),
        TestKind::SpVsMtOnVmt => (TestKind::SpVsMtOnVsp, true),
    };
    if !relative {
        return TestReport { kind, ..r };
    }
    TestReport {
        kind,
        statistic: -r.statistic,
        mean_diff: -r.mean_diff,
        delta: -r.delta,
        side: match r.side {
            Side::Less => Side::Greater,
            Side::Greater => Side::Less,
        },
        ..r
    }
}

fn mirror_tests(tests: Vec<CandidateTests>) -> Vec<CandidateTests> {
    tests
        .into_iter()
        .map(|t| CandidateTests {
            vs_random: mirror_report(t.vs_random),
            relative: mirror_report(t.relative),
            accepted: t.accepted,
        })
        .collect()
}

fn mirror_result(r: SubspaceResult) -> SubspaceResult {
    SubspaceResult {
        sp_basis: SubspaceBasis::new(r.mt_basis.matrix().clone(), SubspaceKind::Spurious)
            .expect("basis was validated"),
        mt_basis: SubspaceBasis::new(r.sp_basis.matrix().clone(), SubspaceKind::MainTask)
            .expect("basis was validated"),
        sp_tests: mirror_tests(r.mt_tests),
        mt_tests: mirror_tests(r.sp_tests),
        termination: r.termination,
        delta: -r.delta,
    }
}

/// The embedding map implied by a fitted result.
pub fn transform_for(result: &SubspaceResult, mode: TransformMode) -> EmbeddingTransform {
    match mode {
        TransformMode::RemoveSp => EmbeddingTransform::Remove(result.sp_basis.clone()),
        TransformMode::KeepMt => EmbeddingTransform::Keep(result.mt_basis.clone()),
    }
}

/// `Z (I - V_sp V_sp')` or `Z V_mt V_mt'`.
pub fn jse_transform(
    z: &Array2<f64>,
    result: &SubspaceResult,
    mode: TransformMode,
) -> Result<Array2<f64>> {
    transform_for(result, mode).apply(z)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub result: SubspaceResult,
    pub model: LinearModel,
    pub summary: EvalSummary,
}

/// Fits JSE, transforms every split and trains the downstream main-task
/// classifier (class-balanced batches) on the transformed embeddings.
pub fn jse_pipeline(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    test: &LabeledEmbeddings,
    cfg: &JseConfig,
    downstream: &OptimizerConfig,
) -> Result<PipelineOutput> {
    if test.dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: test.dim(),
        });
    }
    let result = jse_fit(train, val, cfg)?;
    let t = transform_for(&result, cfg.transform_mode);
    let (tr, va, te) = (t.apply_to(train)?, t.apply_to(val)?, t.apply_to(test)?);
    let opt = OptimizerConfig {
        balance_sampling: BalanceSampling::ClassBalanced,
        ..downstream.clone()
    };
    let model = fit_logreg(&tr, Target::Mt, &va, &opt)?.model;
    let summary = evaluate(&model, &te, None)?;
    Ok(PipelineOutput {
        result,
        model,
        summary,
    })
}
