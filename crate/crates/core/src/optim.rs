//! Logistic regressions trained with minibatch SGD (momentum, weight decay,
//! early stopping on validation loss), plus the jointly-orthogonal pair of
//! regressions used to estimate one spurious and one main-task direction.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::types::{Direction, LabeledEmbeddings, Target};

/// Probabilities are clipped into `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Added to `w'w` when projecting onto the complement of `w`.
const PROJ_EPS: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy computed from a logit, without clipping.
pub fn bce_logit(logit: f64, y: u8) -> f64 {
    softplus(logit) - f64::from(y) * logit
}

/// Per-sample binary cross-entropy of probabilities `p` against labels `y`.
pub fn bce(p: &[f64], y: &[u8]) -> Result<Vec<f64>> {
    if p.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "probabilities vs labels",
            left: p.len(),
            right: y.len(),
        });
    }
    Ok(p.iter().zip(y).map(|(&p, &y)| bce_one(p, y)).collect())
}

#[inline]
pub fn bce_one(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn mean_bce(p: &[f64], y: &[u8]) -> f64 {
    p.iter().zip(y).map(|(&p, &y)| bce_one(p, y)).sum::<f64>() / p.len() as f64
}

/// How minibatches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceSampling {
    /// Shuffle once per epoch and walk through the data.
    #[default]
    None,
    /// Weighted sampling with replacement, 50/50 in the target label.
    ClassBalanced,
    /// Weighted sampling with replacement, equal mass on the four groups.
    GroupBalanced,
}

/// Solver for the two-parameter logistic fits used by the stopping tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OneDimSolver {
    #[default]
    Sgd,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub balance_sampling: BalanceSampling,
    pub one_dim_solver: OneDimSolver,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            weight_decay: 0.0,
            momentum: 0.9,
            batch_size: 128,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            balance_sampling: BalanceSampling::ClassBalanced,
            one_dim_solver: OneDimSolver::Sgd,
        }
    }
}

impl OptimizerConfig {
    /// Toy defaults for the joint estimation (learning rate 1e-2).
    pub fn jse_default() -> Self {
        Self {
            learning_rate: 1e-2,
            ..Self::default()
        }
    }

    /// Toy defaults for ERM, INLP, RLACE and downstream classifiers.
    pub fn erm_default() -> Self {
        Self::default()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be > 0");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.early_stop_patience > self.max_epochs {
            return bad("early_stop_patience must not exceed max_epochs");
        }
        Ok(())
    }
}

/// `p(y = 1 | z) = sigmoid(z'w + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn intercept_only(d: usize, b: f64) -> Self {
        Self { w: vec![0.0; d], b }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> Array1<f64> {
        Array1::from(self.w.clone())
    }

    pub fn logits(&self, z: &Array2<f64>) -> Array1<f64> {
        z.dot(&self.weights()) + self.b
    }

    pub fn predict_proba(&self, z: &Array2<f64>) -> Vec<f64> {
        self.logits(z).iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn predict(&self, z: &Array2<f64>) -> Vec<u8> {
        self.logits(z).iter().map(|&l| u8::from(l > 0.0)).collect()
    }

    pub fn accuracy(&self, z: &Array2<f64>, y: &[u8]) -> f64 {
        let hits = self
            .predict(z)
            .iter()
            .zip(y)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / y.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitWarning {
    /// Only one class present; an intercept-only model was returned.
    SingleClass,
    /// Projected feature is constant; the slope was fixed at zero.
    ConstantFeature,
}

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LinearModel,
    /// 1-based epoch of the returned snapshot (0 when no training ran).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub final_val_loss: f64,
    pub warning: Option<FitWarning>,
}

#[derive(Debug, Clone)]
pub struct JointFit {
    pub sp: LinearModel,
    /// Stores the effective (already projected) main-task weights.
    pub mt: LinearModel,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct OneDimFit {
    pub direction: Direction,
    pub warning: Option<FitWarning>,
}

/// Row-major contiguous copy of an embedding matrix.
struct Rows {
    data: Vec<f64>,
    d: usize,
}

impl Rows {
    fn new(z: &Array2<f64>) -> Self {
        let d = z.ncols();
        let data = z.as_standard_layout().iter().copied().collect();
        Self { data, d }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Per-sample draw weights for the requested balancing mode, normalized to
/// mean 1. `None` means plain shuffling.
pub fn sampling_weights(
    data: &LabeledEmbeddings,
    target: Target,
    mode: BalanceSampling,
) -> Result<Option<Vec<f64>>> {
    let n = data.n() as f64;
    match mode {
        BalanceSampling::None => Ok(None),
        BalanceSampling::ClassBalanced => {
            let y = data.labels(target);
            let ones = y.iter().filter(|&&v| v == 1).count();
            let counts = [y.len() - ones, ones];
            if counts.contains(&0) {
                return Ok(None);
            }
            Ok(Some(
                y.iter()
                    .map(|&v| n / (2.0 * counts[usize::from(v)] as f64))
                    .collect(),
            ))
        }
        BalanceSampling::GroupBalanced => {
            let counts = data.group_counts();
            if let Some(g) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptyGroup {
                    group: g as u8 + 1,
                    count: 0,
                    min: 1,
                });
            }
            Ok(Some(
                data.groups()
                    .iter()
                    .map(|&g| n / (4.0 * counts[usize::from(g - 1)] as f64))
                    .collect(),
            ))
        }
    }
}

struct SgdOutcome {
    params: Vec<f64>,
    best_epoch: usize,
    epochs_run: usize,
    best_val_loss: f64,
    final_val_loss: f64,
}

fn epoch_order(
    n: usize,
    sampler: Option<&WeightedIndex<f64>>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    match sampler {
        Some(w) => (0..n).map(|_| w.sample(rng)).collect(),
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx
        }
    }
}

/// Minibatch SGD with heavy-ball momentum, decoupled from the model. `grad`
/// accumulates the mean gradient of a batch into its output buffer; weight
/// decay is applied to entries flagged in `decay_mask`.
#[allow(clippy::too_many_arguments)]
fn run_sgd<G, V>(
    mut params: Vec<f64>,
    decay_mask: &[bool],
    n: usize,
    weights: Option<&[f64]>,
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
    mut grad: G,
    mut val_loss: V,
) -> Result<SgdOutcome>
where
    G: FnMut(&[f64], &[usize], &mut [f64]),
    V: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let sampler = match weights {
        Some(w) => Some(
            WeightedIndex::new(w)
                .map_err(|e| Error::Numerical(format!("sampling weights: {e}")))?,
        ),
        None => None,
    };
    let p = params.len();
    let mut velocity = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut final_loss = f64::INFINITY;
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let order = epoch_order(n, sampler.as_ref(), rng);
        for batch in order.chunks(cfg.batch_size) {
            g.iter_mut().for_each(|x| *x = 0.0);
            grad(&params, batch, &mut g);
            for k in 0..p {
                let mut gk = g[k];
                if decay_mask[k] {
                    gk += cfg.weight_decay * params[k];
                }
                velocity[k] = cfg.momentum * velocity[k] + gk;
                params[k] -= cfg.learning_rate * velocity[k];
            }
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "parameters diverged in epoch {epoch}"
            )));
        }
        final_loss = val_loss(&params);
        if final_loss < best_loss {
            best_loss = final_loss;
            best.copy_from_slice(&params);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(SgdOutcome {
        params: best,
        best_epoch,
        epochs_run,
        best_val_loss: best_loss,
        final_val_loss: final_loss,
    })
}

fn uniform_init(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn logreg_val_loss(rows: &Rows, y: &[u8], w: &[f64], b: f64) -> f64 {
    let total: f64 = (0..y.len())
        .map(|i| bce_one(sigmoid(dot(rows.row(i), w) + b), y[i]))
        .sum();
    total / y.len() as f64
}

/// Intercept-only ("random") classifier: the logit of the clipped class-1
/// frequency.
pub fn fit_intercept_only(train: &LabeledEmbeddings, target: Target) -> LinearModel {
    let y = train.labels(target);
    let freq = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
    let p = freq.clamp(PROB_EPS, 1.0 - PROB_EPS);
    LinearModel::intercept_only(train.dim(), (p / (1.0 - p)).ln())
}

/// Full logistic regression on all embedding coordinates.
pub fn fit_logreg(
    train: &LabeledEmbeddings,
    target: Target,
    val: &LabeledEmbeddings,
    cfg: &OptimizerConfig,
) -> Result<LogRegFit> {
    let d = train.dim();
    if val.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: val.dim(),
        });
    }
    let y = train.labels(target);
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        let model = fit_intercept_only(train, target);
        let loss = mean_bce(&model.predict_proba(val.z()), val.labels(target));
        return Ok(LogRegFit {
            model,
            best_epoch: 0,
            epochs_run: 0,
            best_val_loss: loss,
            final_val_loss: loss,
            warning: Some(FitWarning::SingleClass),
        });
    }

    let rows = Rows::new(train.z());
    let vrows = Rows::new(val.z());
    let vy = val.labels(target);
    let weights = sampling_weights(train, target, cfg.balance_sampling)?;
    let mut rng = seed::rng(cfg.seed);
    let init = uniform_init(&mut rng, d + 1, d);
    let mut mask = vec![true; d + 1];
    mask[d] = false;

    let out = run_sgd(
        init,
        &mask,
        train.n(),
        weights.as_deref(),
        cfg,
        &mut rng,
        |params, batch, g| {
            let (w, b) = (&params[..d], params[d]);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = rows.row(i);
                let r = (sigmoid(dot(x, w) + b) - f64::from(y[i])) * scale;
                axpy(r, x, &mut g[..d]);
                g[d] += r;
            }
        },
        |params| logreg_val_loss(&vrows, vy, &params[..d], params[d]),
    )?;
    Ok(LogRegFit {
        model: LinearModel {
            w: out.params[..d].to_vec(),
            b: out.params[d],
        },
        best_epoch: out.best_epoch,
        epochs_run: out.epochs_run,
        best_val_loss: out.best_val_loss,
        final_val_loss: out.final_val_loss,
        warning: None,
    })
}

/// Fits `sigmoid(gamma * z'v + b)` with `v` held fixed.
pub fn fit_1d_logreg(
    z: &Array2<f64>,
    v: &Array1<f64>,
    y: &[u8],
    cfg: &OptimizerConfig,
) -> Result<OneDimFit> {
    if z.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "rows vs labels",
            left: z.nrows(),
            right: y.len(),
        });
    }
    if z.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: v.len(),
        });
    }
    let s: Vec<f64> = z.dot(v).to_vec();
    let n = s.len() as f64;
    let mean_s = s.iter().sum::<f64>() / n;
    let var_s = s.iter().map(|x| (x - mean_s).powi(2)).sum::<f64>() / n;
    let ybar = y.iter().filter(|&&v| v == 1).count() as f64 / n;
    let p0 = ybar.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let b0 = (p0 / (1.0 - p0)).ln();

    if var_s < 1e-14 || ybar == 0.0 || ybar == 1.0 {
        let warning = if var_s < 1e-14 {
            FitWarning::ConstantFeature
        } else {
            FitWarning::SingleClass
        };
        return Ok(OneDimFit {
            direction: Direction::new(v.clone(), 0.0, b0)?,
            warning: Some(warning),
        });
    }

    let (gamma, b) = match cfg.one_dim_solver {
        OneDimSolver::Newton => newton_1d(&s, y, cfg.weight_decay, b0),
        OneDimSolver::Sgd => sgd_1d(&s, y, cfg)?,
    };
    if !(gamma.is_finite() && b.is_finite()) {
        return Err(Error::Numerical("1-D logistic fit diverged".into()));
    }
    Ok(OneDimFit {
        direction: Direction::new(v.clone(), gamma, b)?,
        warning: None,
    })
}

fn objective_1d(s: &[f64], y: &[u8], ridge: f64, gamma: f64, b: f64) -> f64 {
    let sum: f64 = s
        .iter()
        .zip(y)
        .map(|(&si, &yi)| bce_logit(gamma * si + b, yi))
        .sum();
    sum / s.len() as f64 + 0.5 * ridge * gamma * gamma
}

/// Damped Newton iterations on the mean logistic loss in (gamma, b).
fn newton_1d(s: &[f64], y: &[u8], weight_decay: f64, b0: f64) -> (f64, f64) {
    let ridge = weight_decay + 1e-9;
    let n = s.len() as f64;
    let (mut gamma, mut b) = (0.0, b0);
    let mut f = objective_1d(s, y, ridge, gamma, b);
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&si, &yi) in s.iter().zip(y) {
            let p = sigmoid(gamma * si + b);
            let r = p - f64::from(yi);
            let w = p * (1.0 - p);
            g0 += r * si;
            g1 += r;
            h00 += w * si * si;
            h01 += w * si;
            h11 += w;
        }
        g0 = g0 / n + ridge * gamma;
        g1 /= n;
        h00 = h00 / n + ridge;
        h01 /= n;
        h11 = h11 / n + 1e-12;
        if g0.abs().max(g1.abs()) < 1e-12 {
            break;
        }
        let det = h00 * h11 - h01 * h01;
        let (d0, d1) = if det > 1e-300 {
            ((h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det)
        } else {
            (g0, g1)
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let (cg, cb) = (gamma - step * d0, b - step * d1);
            let fc = objective_1d(s, y, ridge, cg, cb);
            if fc <= f - 1e-4 * step * (g0 * d0 + g1 * d1) || fc < f {
                gamma = cg;
                b = cb;
                improved = (f - fc).abs() > 1e-15;
                f = fc;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (gamma, b)
}

fn sgd_1d(s: &[f64], y: &[u8], cfg: &OptimizerConfig) -> Result<(f64, f64)> {
    let mut rng = seed::rng(cfg.seed);
    let init = uniform_init(&mut rng, 2, 1);
    let out = run_sgd(
        init,
        &[true, false],
        s.len(),
        None,
        cfg,
        &mut rng,
        |params, batch, g| {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let r = (sigmoid(params[0] * s[i] + params[1]) - f64::from(y[i])) * scale;
                g[0] += r * s[i];
                g[1] += r;
            }
        },
        |params| {
            s.iter()
                .zip(y)
                .map(|(&si, &yi)| bce_one(sigmoid(params[0] * si + params[1]), yi))
                .sum::<f64>()
                / s.len() as f64
        },
    )?;
    Ok((out.params[0], out.params[1]))
}

/// Parameter layout of the joint problem:
/// `[w_sp (d), b_sp, w_mt (d), b_mt]`.
pub fn joint_param_len(d: usize) -> usize {
    2 * d + 2
}

/// `(I - P_{w_sp}) w_mt` with `P_w = w (w'w + eps)^{-1} w'`.
pub fn effective_mt_weights(w_sp: &[f64], w_mt: &[f64]) -> Vec<f64> {
    let s = dot(w_sp, w_sp) + PROJ_EPS;
    let c = dot(w_sp, w_mt) / s;
    w_mt.iter().zip(w_sp).map(|(m, u)| m - c * u).collect()
}

/// Mean joint loss (sum of the two per-task mean BCEs) over the rows in
/// `batch`, with its gradient accumulated into `grad`.
pub fn joint_loss_grad(
    params: &[f64],
    z: &Array2<f64>,
    y_sp: &[u8],
    y_mt: &[u8],
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    joint_loss_grad_rows(params, &Rows::new(z), y_sp, y_mt, batch, grad)
}

fn joint_loss_grad_rows(
    params: &[f64],
    rows: &Rows,
    y_sp: &[u8],
    y_mt: &[u8],
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    let d = rows.d;
    let w_sp = &params[..d];
    let b_sp = params[d];
    let w_mt = &params[d + 1..2 * d + 1];
    let b_mt = params[2 * d + 1];
    let s = dot(w_sp, w_sp) + PROJ_EPS;
    let c = dot(w_sp, w_mt);
    let eff = effective_mt_weights(w_sp, w_mt);

    let mut g_sp = vec![0.0; d];
    let mut g_eff = vec![0.0; d];
    let (mut gb_sp, mut gb_mt, mut loss) = (0.0, 0.0, 0.0);
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let x = rows.row(i);
        let ls = dot(x, w_sp) + b_sp;
        let lm = dot(x, &eff) + b_mt;
        loss += bce_logit(ls, y_sp[i]) + bce_logit(lm, y_mt[i]);
        let rs = (sigmoid(ls) - f64::from(y_sp[i])) * scale;
        let rm = (sigmoid(lm) - f64::from(y_mt[i])) * scale;
        axpy(rs, x, &mut g_sp);
        axpy(rm, x, &mut g_eff);
        gb_sp += rs;
        gb_mt += rm;
    }

    // chain rule through eff = w_mt - w_sp (w_sp'w_mt) / (w_sp'w_sp + eps)
    let ge_u = dot(&g_eff, w_sp);
    for k in 0..d {
        grad[k] += g_sp[k] - (c / s) * g_eff[k] - (ge_u / s) * w_mt[k]
            + (2.0 * c * ge_u / (s * s)) * w_sp[k];
        grad[d + 1 + k] += g_eff[k] - w_sp[k] * ge_u / s;
    }
    grad[d] += gb_sp;
    grad[2 * d + 1] += gb_mt;
    loss * scale
}

/// Jointly fits a spurious and a main-task logistic regression whose weight
/// vectors are orthogonal by construction.
pub fn fit_joint_orthogonal(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &OptimizerConfig,
) -> Result<JointFit> {
    fit_joint_orthogonal_within(train, val, cfg, &Array2::zeros((train.dim(), 0)))
}

/// As [`fit_joint_orthogonal`], with the random initialization projected
/// onto the orthogonal complement of the (orthonormal) columns of
/// `removed`. When the embeddings have already had that span projected out,
/// the gradients never leave the complement, so both returned weight
/// vectors stay orthogonal to `removed`.
pub fn fit_joint_orthogonal_within(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &OptimizerConfig,
    removed: &Array2<f64>,
) -> Result<JointFit> {
    let d = train.dim();
    if val.dim() != d || removed.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if val.dim() != d { val.dim() } else { removed.nrows() },
        });
    }
    for t in [Target::Sp, Target::Mt] {
        let y = train.labels(t);
        let ones = y.iter().filter(|&&v| v == 1).count();
        if ones == 0 || ones == y.len() {
            return Err(Error::InvalidConfig(format!(
                "joint fit needs both classes of the {t:?} label"
            )));
        }
    }

    let rows = Rows::new(train.z());
    let vrows = Rows::new(val.z());
    let weights = sampling_weights(train, Target::Mt, cfg.balance_sampling)?;
    let mut rng = seed::rng(cfg.seed);
    let mut init = uniform_init(&mut rng, joint_param_len(d), d);
    if removed.ncols() > 0 {
        for range in [0..d, d + 1..2 * d + 1] {
            let w = Array1::from(init[range.clone()].to_vec());
            let w = crate::types::project_out_vec(&w, removed);
            init[range].copy_from_slice(w.as_slice().expect("contiguous"));
        }
    }
    let mut mask = vec![true; joint_param_len(d)];
    mask[d] = false;
    mask[2 * d + 1] = false;

    let (ysp, ymt) = (train.y_sp(), train.y_mt());
    let (vsp, vmt) = (val.y_sp(), val.y_mt());
    let out = run_sgd(
        init,
        &mask,
        train.n(),
        weights.as_deref(),
        cfg,
        &mut rng,
        |params, batch, g| {
            joint_loss_grad_rows(params, &rows, ysp, ymt, batch, g);
        },
        |params| {
            let eff = effective_mt_weights(&params[..d], &params[d + 1..2 * d + 1]);
            logreg_val_loss(&vrows, vsp, &params[..d], params[d])
                + logreg_val_loss(&vrows, vmt, &eff, params[2 * d + 1])
        },
    )?;
    let p = out.params;
    let eff = effective_mt_weights(&p[..d], &p[d + 1..2 * d + 1]);
    Ok(JointFit {
        sp: LinearModel {
            w: p[..d].to_vec(),
            b: p[d],
        },
        mt: LinearModel {
            w: eff,
            b: p[2 * d + 1],
        },
        best_epoch: out.best_epoch,
        epochs_run: out.epochs_run,
        best_val_loss: out.best_val_loss,
    })
}
