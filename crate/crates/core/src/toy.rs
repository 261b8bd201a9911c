//! Synthetic Gaussian benchmark with a tunable correlation between the
//! spurious and main-task features.
//!
//! `z ~ N(0, Sigma)` where `Sigma` has the block `[[1, rho], [rho, 1]]` on
//! the first two coordinates and the identity elsewhere. Labels are drawn as
//! `Bernoulli(sigmoid(z'w + b))` with `w_sp = gamma_sp * e1` and `w_mt` at
//! `angle_deg` from `w_sp` inside the first two coordinates.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::sigmoid;
use crate::seed;
use crate::types::LabeledEmbeddings;

/// Stream id mixed into the seed of the out-of-distribution test draw.
const TEST_STREAM: u64 = 0x7e57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub gamma_sp: f64,
    pub gamma_mt: f64,
    pub b_sp: f64,
    pub b_mt: f64,
    pub angle_deg: f64,
    pub split_fraction: f64,
    /// Size of the uncorrelated test draw.
    pub test_n: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 20,
            rho: 0.0,
            gamma_sp: 3.0,
            gamma_mt: 3.0,
            b_sp: 0.0,
            b_mt: 0.0,
            angle_deg: 90.0,
            split_fraction: 0.8,
            test_n: 2000,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return bad(format!("rho must satisfy |rho| < 1, got {}", self.rho));
        }
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.n < 2 || self.test_n < 1 {
            return bad("n must be at least 2 and test_n at least 1".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if !(0.0..=90.0).contains(&self.angle_deg) {
            return bad(format!("angle_deg must lie in [0, 90], got {}", self.angle_deg));
        }
        Ok(())
    }

    /// Generating weights `(w_sp, w_mt)`, both of length `d`.
    pub fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let mut w_sp = vec![0.0; self.d];
        w_sp[0] = self.gamma_sp;
        let tilt = (90.0 - self.angle_deg).to_radians();
        let (a, b) = (tilt.cos(), tilt.sin());
        let mut w_mt = vec![0.0; self.d];
        w_mt[0] = self.gamma_mt * b / (a + b);
        w_mt[1] = self.gamma_mt * a / (a + b);
        (w_sp, w_mt)
    }

    /// The configuration used for the test draw: same weights, `rho = 0`.
    pub fn test_config(&self) -> Self {
        Self {
            n: self.test_n,
            rho: 0.0,
            seed: seed::derive(self.seed, &[TEST_STREAM]),
            ..self.clone()
        }
    }
}

/// Draws `n` samples with the configured correlation.
pub fn sample(cfg: &ToyConfig, n: usize, seed_: u64) -> Result<LabeledEmbeddings> {
    cfg.validate()?;
    let d = cfg.d;
    let mut rng = seed::rng(seed_);
    let c = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut z = Array2::zeros((n, d));
    for mut row in z.rows_mut() {
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        row[1] = cfg.rho * row[0] + c * row[1];
    }
    let (w_sp, w_mt) = cfg.weights();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, w: &[f64], b: f64, row: ndarray::ArrayView1<f64>| {
        let logit: f64 = row.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() + b;
        u8::from(rng.random::<f64>() < sigmoid(logit))
    };
    let mut y_mt = Vec::with_capacity(n);
    let mut y_sp = Vec::with_capacity(n);
    for row in z.rows() {
        y_mt.push(draw(&mut rng, &w_mt, cfg.b_mt, row));
        y_sp.push(draw(&mut rng, &w_sp, cfg.b_sp, row));
    }
    LabeledEmbeddings::new(z, y_mt, y_sp)
}

/// Training and validation splits (`split_fraction` of `n` for training).
pub fn gen_toy(cfg: &ToyConfig) -> Result<(LabeledEmbeddings, LabeledEmbeddings)> {
    let all = sample(cfg, cfg.n, cfg.seed)?;
    let n_train = ((cfg.n as f64) * cfg.split_fraction).round() as usize;
    let n_train = n_train.clamp(1, cfg.n - 1);
    let train: Vec<usize> = (0..n_train).collect();
    let val: Vec<usize> = (n_train..cfg.n).collect();
    Ok((all.select(&train), all.select(&val)))
}

/// Test set without spurious correlation, drawn from an independent stream.
pub fn gen_toy_test(cfg: &ToyConfig) -> Result<LabeledEmbeddings> {
    let t = cfg.test_config();
    sample(&t, t.n, t.seed)
}
