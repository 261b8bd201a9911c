//! Comparison methods: iterative nullspace projection (INLP), an adversarial
//! rank-k projection in the style of RLACE, and plain or group-weighted ERM.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{
    bce_one, fit_intercept_only, fit_logreg, sampling_weights, sigmoid, BalanceSampling,
    LinearModel, OptimizerConfig,
};
use crate::seed;
use crate::stats::{diff_mean_var, Side, TestKind, TestReport};
use crate::types::{
    gram_schmidt, project_out, project_out_vec, unit, LabeledEmbeddings, SubspaceBasis,
    SubspaceKind, Target, ORTHONORMAL_BUILD_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlpConfig {
    pub alpha: f64,
    /// `None` means `d`.
    pub max_rounds: Option<usize>,
    pub group_weighted: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_rounds: None,
            group_weighted: false,
            optimizer: OptimizerConfig::erm_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InlpResult {
    pub basis: SubspaceBasis,
    /// One report per round, the last one being the rejection (if any).
    pub tests: Vec<TestReport>,
    /// Validation accuracy of each round's spurious classifier.
    pub accuracies: Vec<f64>,
}

/// Repeatedly fits a spurious-label classifier and projects out its weight
/// vector until the classifier is no longer significantly better than the
/// intercept-only model on validation data.
pub fn inlp_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &InlpConfig,
) -> Result<InlpResult> {
    let d = train.dim();
    let cap = cfg.max_rounds.unwrap_or(d);
    if cap > d {
        return Err(Error::InvalidConfig(format!("max_rounds {cap} exceeds d = {d}")));
    }
    let random = fit_intercept_only(train, Target::Sp);
    let p0 = sigmoid(random.b);
    let mut basis = Array2::zeros((d, 0));
    let mut tests = Vec::new();
    let mut accuracies = Vec::new();

    for round in 0..cap {
        let (tr, va) = if basis.ncols() == 0 {
            (train.clone(), val.clone())
        } else {
            (
                train.with_embeddings(project_out(train.z(), &basis)?)?,
                val.with_embeddings(project_out(val.z(), &basis)?)?,
            )
        };
        let opt = cfg
            .optimizer
            .with_seed(seed::derive(cfg.optimizer.seed, &[round as u64]));
        let model = fit_logreg(&tr, Target::Sp, &va, &opt)?.model;
        accuracies.push(model.accuracy(va.z(), va.y_sp()));

        let d_i: Vec<f64> = model
            .predict_proba(va.z())
            .iter()
            .zip(va.y_sp())
            .map(|(&p, &y)| bce_one(p, y) - bce_one(p0, y))
            .collect();
        let (mean, var) = diff_mean_var(&d_i, va.groups(), cfg.group_weighted)?;
        let report =
            TestReport::from_moments(TestKind::SpVsRandom, Side::Less, mean, var, 0.0, cfg.alpha)?;
        let better = report.decision;
        tests.push(report);
        if !better {
            break;
        }
        let w = project_out_vec(&model.weights(), &basis);
        let Some(v) = unit(&w) else { break };
        let mut cols: Vec<Array1<f64>> = basis.columns().into_iter().map(|c| c.to_owned()).collect();
        cols.push(v);
        let next = gram_schmidt(&stack(d, &cols), ORTHONORMAL_BUILD_TOL);
        if next.ncols() == basis.ncols() {
            break;
        }
        basis = next;
    }
    Ok(InlpResult {
        basis: SubspaceBasis::new(basis, SubspaceKind::Spurious)?,
        tests,
        accuracies,
    })
}

fn stack(d: usize, cols: &[Array1<f64>]) -> Array2<f64> {
    let mut m = Array2::zeros((d, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        m.column_mut(j).assign(c);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlaceConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub stop_accuracy: f64,
    /// Iterations between validation checks; `None` means one epoch.
    pub eval_every: Option<usize>,
    pub optimizer: OptimizerConfig,
}

impl Default for RlaceConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            max_iters: 50_000,
            stop_accuracy: 0.51,
            eval_every: None,
            optimizer: OptimizerConfig::erm_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RlaceResult {
    /// Orthonormal basis of the removed subspace.
    pub basis: SubspaceBasis,
    /// `I - U U'`.
    pub projection: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Spurious validation accuracy at the returned projection.
    pub val_accuracy: f64,
}

/// Polar factor of `u`: the closest matrix with orthonormal columns.
fn orthonormalize(u: &Array2<f64>) -> Result<Array2<f64>> {
    let (d, k) = u.dim();
    let m = DMatrix::from_fn(d, k, |i, j| u[[i, j]]);
    let svd = m.svd(true, true);
    let (Some(left), Some(right)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD failed".into()));
    };
    let q = left * right;
    Ok(Array2::from_shape_fn((d, k), |(i, j)| q[(i, j)]))
}

fn projected_accuracy(z: &Array2<f64>, y: &[u8], u: &Array2<f64>, w: &[f64], b: f64) -> Result<f64> {
    let zp = project_out(z, u)?;
    let model = LinearModel { w: w.to_vec(), b };
    Ok(model.accuracy(&zp, y))
}

/// Alternating minimax: a spurious-label classifier is trained on `Z P`
/// while a rank-k subspace `U` (`P = I - U U'`) takes gradient-ascent steps
/// on the classifier's loss, followed by re-orthonormalization.
pub fn rlace_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &RlaceConfig,
) -> Result<RlaceResult> {
    let d = train.dim();
    let k = cfg.rank;
    if k == 0 || k >= d {
        return Err(Error::InvalidConfig(format!("rank must lie in [1, d), got {k}")));
    }
    let opt = &cfg.optimizer;
    opt.validate()?;
    let mut rng = seed::rng(opt.seed);
    let z = train.z().as_standard_layout().into_owned();
    let zs = z.as_slice().expect("standard layout");
    let y = train.y_sp();
    let n = train.n();

    let mut u = orthonormalize(&Array2::from_shape_fn((d, k), |_| rng.sample(StandardNormal)))?;
    let bound = 1.0 / (d as f64).sqrt();
    let mut w: Vec<f64> = (0..d).map(|_| rng.random_range(-bound..bound)).collect();
    let mut b = rng.random_range(-bound..bound);
    let (mut vw, mut vb) = (vec![0.0; d], 0.0);
    let mut vu = Array2::<f64>::zeros((d, k));

    let weights = sampling_weights(train, Target::Sp, opt.balance_sampling)?;
    let sampler = match &weights {
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| Error::Numerical(e.to_string()))?),
        None => None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let eval_every = cfg.eval_every.unwrap_or(n.div_ceil(opt.batch_size)).max(1);

    let mut best = (u.clone(), f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;
    let mut batch = Vec::with_capacity(opt.batch_size);
    let mut zp = vec![0.0; d];
    let mut uz = vec![0.0; k];

    for it in 1..=cfg.max_iters {
        iterations = it;
        batch.clear();
        for _ in 0..opt.batch_size.min(n) {
            let i = match &sampler {
                Some(s) => s.sample(&mut rng),
                None => {
                    if cursor == n {
                        order.shuffle(&mut rng);
                        cursor = 0;
                    }
                    cursor += 1;
                    order[cursor - 1]
                }
            };
            batch.push(i);
        }
        let scale = 1.0 / batch.len() as f64;
        let uw: Vec<f64> = (0..k).map(|c| (0..d).map(|r| u[[r, c]] * w[r]).sum()).collect();

        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        let mut gu = Array2::<f64>::zeros((d, k));
        for &i in &batch {
            let x = &zs[i * d..(i + 1) * d];
            for (c, slot) in uz.iter_mut().enumerate() {
                *slot = (0..d).map(|r| u[[r, c]] * x[r]).sum();
            }
            for r in 0..d {
                zp[r] = x[r] - (0..k).map(|c| u[[r, c]] * uz[c]).sum::<f64>();
            }
            let logit: f64 = zp.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let res = (sigmoid(logit) - f64::from(y[i])) * scale;
            for r in 0..d {
                gw[r] += res * zp[r];
            }
            gb += res;
            // d logit / dU = -(z w' + w z') U
            for r in 0..d {
                for c in 0..k {
                    gu[[r, c]] -= res * (x[r] * uw[c] + w[r] * uz[c]);
                }
            }
        }

        for r in 0..d {
            vw[r] = opt.momentum * vw[r] + gw[r] + opt.weight_decay * w[r];
            w[r] -= opt.learning_rate * vw[r];
        }
        vb = opt.momentum * vb + gb;
        b -= opt.learning_rate * vb;
        vu = &vu * opt.momentum + &gu;
        u = orthonormalize(&(&u + &(&vu * opt.learning_rate)))?;

        if w.iter().any(|x| !x.is_finite()) || !b.is_finite() {
            return Err(Error::Numerical(format!("classifier diverged at iteration {it}")));
        }
        if it % eval_every == 0 {
            let acc = projected_accuracy(val.z(), val.y_sp(), &u, &w, b)?;
            if acc < best.1 {
                best = (u.clone(), acc);
            }
            if acc < cfg.stop_accuracy {
                converged = true;
                break;
            }
        }
    }
    if !best.1.is_finite() {
        let acc = projected_accuracy(val.z(), val.y_sp(), &u, &w, b)?;
        best = (u.clone(), acc);
    }
    let (u, val_accuracy) = best;
    let basis = SubspaceBasis::new(u, SubspaceKind::Spurious)?;
    let projection = Array2::eye(d) - basis.matrix().dot(&basis.matrix().t());
    Ok(RlaceResult {
        basis,
        projection,
        converged,
        iterations,
        val_accuracy,
    })
}

/// Main-task logistic regression with class-balanced batches.
pub fn erm_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &OptimizerConfig,
) -> Result<LinearModel> {
    let opt = OptimizerConfig {
        balance_sampling: BalanceSampling::ClassBalanced,
        ..cfg.clone()
    };
    Ok(fit_logreg(train, Target::Mt, val, &opt)?.model)
}

/// Main-task logistic regression with batches that weight the four groups
/// equally.
pub fn gw_erm_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfg: &OptimizerConfig,
) -> Result<LinearModel> {
    let opt = OptimizerConfig {
        balance_sampling: BalanceSampling::GroupBalanced,
        ..cfg.clone()
    };
    Ok(fit_logreg(train, Target::Mt, val, &opt)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{gen_toy, ToyConfig};

    fn toy(rho: f64, seed_: u64) -> (LabeledEmbeddings, LabeledEmbeddings) {
        gen_toy(&ToyConfig {
            rho,
            seed: seed_,
            ..ToyConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn inlp_basis_is_orthonormal_and_accuracy_drops() {
        let (train, val) = toy(0.9, 1);
        let r = inlp_fit(&train, &val, &InlpConfig::default()).unwrap();
        assert!(r.basis.rank() >= 1);
        let m = r.basis.matrix();
        assert!(crate::types::orthonormal_check(m, 1e-6));
        // each accepted round lowers the next classifier's accuracy, or the
        // next round is the rejected one
        for pair in r.accuracies.windows(2) {
            assert!(pair[1] < pair[0] + 0.02);
        }
        assert!(!r.tests.last().unwrap().decision || r.basis.rank() == train.dim());
    }

    #[test]
    fn rlace_projection_properties() {
        let (train, val) = toy(0.5, 2);
        let r = rlace_fit(&train, &val, &RlaceConfig::default()).unwrap();
        let p = &r.projection;
        let p2 = p.dot(p);
        assert!((&p2 - p).iter().all(|x| x.abs() < 1e-6));
        assert!((&p.t() - p).iter().all(|x| x.abs() < 1e-6));
        let trace: f64 = (0..p.nrows()).map(|i| p[[i, i]]).sum();
        assert!((trace - (p.nrows() - 1) as f64).abs() < 1e-6);
        if r.converged {
            assert!(r.val_accuracy < 0.51);
        }
    }

    #[test]
    fn erm_on_separable_feature() {
        let n = 600;
        let mut rng = seed::rng(3);
        let mut z = Array2::zeros((n, 3));
        let mut y = Vec::new();
        for i in 0..n {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            z[[i, 0]] = s * (0.5 + rng.random::<f64>());
            z[[i, 1]] = rng.sample(StandardNormal);
            z[[i, 2]] = rng.sample(StandardNormal);
            y.push(u8::from(s > 0.0));
        }
        let data = LabeledEmbeddings::new(z, y.clone(), y).unwrap();
        let train = data.select(&(0..480).collect::<Vec<_>>());
        let val = data.select(&(480..n).collect::<Vec<_>>());
        let m = erm_fit(&train, &val, &OptimizerConfig::default()).unwrap();
        assert!(m.accuracy(val.z(), val.y_mt()) >= 0.99);
    }

    #[test]
    fn gw_erm_requires_every_group() {
        let z = Array2::zeros((4, 2));
        let data = LabeledEmbeddings::new(z, vec![0, 0, 1, 1], vec![0, 0, 1, 1]).unwrap();
        assert!(matches!(
            gw_erm_fit(&data, &data, &OptimizerConfig::default()),
            Err(Error::EmptyGroup { .. })
        ));
    }
}
