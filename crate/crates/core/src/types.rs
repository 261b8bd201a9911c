//! Shared data model: labelled embeddings, concept directions, orthonormal
//! subspace bases, and the projection primitives used by every method.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::TestReport;

/// Tolerance used when validating a basis handed in by a caller.
pub const ORTHONORMAL_ACCEPT_TOL: f64 = 1e-6;
/// Tolerance a freshly constructed basis must meet.
pub const ORTHONORMAL_BUILD_TOL: f64 = 1e-8;

/// Which of the two labels an operation is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Main-task label.
    Mt,
    /// Spurious-concept label.
    Sp,
}

impl Target {
    pub fn other(self) -> Target {
        match self {
            Target::Mt => Target::Sp,
            Target::Sp => Target::Mt,
        }
    }
}

/// Maps label pairs onto group ids: (0,0)->1, (0,1)->2, (1,0)->3, (1,1)->4,
/// where the pair is (main-task, spurious).
pub fn make_group_ids(y_mt: &[u8], y_sp: &[u8]) -> Result<Vec<u8>> {
    if y_mt.len() != y_sp.len() {
        return Err(Error::LengthMismatch {
            what: "label sequences",
            left: y_mt.len(),
            right: y_sp.len(),
        });
    }
    check_binary(y_mt)?;
    check_binary(y_sp)?;
    Ok(y_mt
        .iter()
        .zip(y_sp)
        .map(|(&m, &s)| 1 + 2 * m + s)
        .collect())
}

fn check_binary(y: &[u8]) -> Result<()> {
    match y.iter().position(|&v| v > 1) {
        Some(index) => Err(Error::NonBinaryLabel {
            index,
            value: i64::from(y[index]),
        }),
        None => Ok(()),
    }
}

/// An embedding matrix (samples as rows) with its two binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    z: Array2<f64>,
    y_mt: Vec<u8>,
    y_sp: Vec<u8>,
    groups: Vec<u8>,
}

impl LabeledEmbeddings {
    pub fn new(z: Array2<f64>, y_mt: Vec<u8>, y_sp: Vec<u8>) -> Result<Self> {
        let (n, d) = z.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if y_mt.len() != n {
            return Err(Error::LengthMismatch {
                what: "rows vs main-task labels",
                left: n,
                right: y_mt.len(),
            });
        }
        let groups = make_group_ids(&y_mt, &y_sp)?;
        Ok(Self {
            z,
            y_mt,
            y_sp,
            groups,
        })
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn y_mt(&self) -> &[u8] {
        &self.y_mt
    }

    pub fn y_sp(&self) -> &[u8] {
        &self.y_sp
    }

    pub fn labels(&self, target: Target) -> &[u8] {
        match target {
            Target::Mt => &self.y_mt,
            Target::Sp => &self.y_sp,
        }
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn group_counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for &g in &self.groups {
            counts[usize::from(g - 1)] += 1;
        }
        counts
    }

    /// Same labels, different embeddings (e.g. after a projection).
    pub fn with_embeddings(&self, z: Array2<f64>) -> Result<Self> {
        if z.nrows() != self.n() {
            return Err(Error::LengthMismatch {
                what: "replacement embeddings",
                left: self.n(),
                right: z.nrows(),
            });
        }
        Ok(Self {
            z,
            y_mt: self.y_mt.clone(),
            y_sp: self.y_sp.clone(),
            groups: self.groups.clone(),
        })
    }

    /// Swaps the roles of the two labels.
    pub fn swap_labels(&self) -> Self {
        Self::new(self.z.clone(), self.y_sp.clone(), self.y_mt.clone())
            .expect("labels were already validated")
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let z = self.z.select(Axis(0), rows);
        let pick = |y: &[u8]| rows.iter().map(|&i| y[i]).collect::<Vec<_>>();
        Self::new(z, pick(&self.y_mt), pick(&self.y_sp)).expect("subset of valid data")
    }
}

/// A unit concept direction with the scale and intercept of a 1-D logistic
/// model fitted on the projected feature `z'v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub v: Array1<f64>,
    pub gamma: f64,
    pub b: f64,
}

impl Direction {
    pub fn new(v: Array1<f64>, gamma: f64, b: f64) -> Result<Self> {
        let norm = v.dot(&v).sqrt();
        if (norm - 1.0).abs() > ORTHONORMAL_BUILD_TOL {
            return Err(Error::NotOrthonormal((norm - 1.0).abs()));
        }
        Ok(Self { v, gamma, b })
    }

    /// Probability of label 1 for every row of `z`.
    pub fn predict_proba(&self, z: &Array2<f64>) -> Vec<f64> {
        z.dot(&self.v)
            .iter()
            .map(|&s| crate::optim::sigmoid(self.gamma * s + self.b))
            .collect()
    }
}

/// Normalizes a vector to unit length; `None` for a (near) zero vector.
pub fn unit(v: &Array1<f64>) -> Option<Array1<f64>> {
    let norm = v.dot(v).sqrt();
    (norm > 1e-12).then(|| v / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceKind {
    Spurious,
    MainTask,
}

/// A `d x k` matrix with orthonormal columns. `k = 0` is legal and means
/// "no removal".
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: Array2<f64>,
    kind: SubspaceKind,
}

impl SubspaceBasis {
    pub fn new(basis: Array2<f64>, kind: SubspaceKind) -> Result<Self> {
        let dev = orthonormal_deviation(basis.view());
        if dev > ORTHONORMAL_ACCEPT_TOL {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self { basis, kind })
    }

    pub fn empty(d: usize, kind: SubspaceKind) -> Self {
        Self {
            basis: Array2::zeros((d, 0)),
            kind,
        }
    }

    /// Builds a basis from unit columns that are already mutually orthogonal.
    pub fn from_columns(d: usize, cols: &[Array1<f64>], kind: SubspaceKind) -> Result<Self> {
        let mut basis = Array2::zeros((d, cols.len()));
        for (j, c) in cols.iter().enumerate() {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.len(),
                });
            }
            basis.column_mut(j).assign(c);
        }
        Self::new(basis, kind)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn columns(&self) -> Vec<Array1<f64>> {
        self.basis.columns().into_iter().map(|c| c.to_owned()).collect()
    }
}

/// `max |V'V - I|` over all entries.
pub fn orthonormal_deviation(v: ArrayView2<f64>) -> f64 {
    let gram = v.t().dot(&v);
    let mut worst = 0.0f64;
    for ((i, j), &g) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((g - target).abs());
    }
    worst
}

/// True iff every entry of `V'V - I` is within `tol`.
pub fn orthonormal_check(v: &Array2<f64>, tol: f64) -> bool {
    orthonormal_deviation(v.view()) <= tol
}

fn check_projection_args(z: &Array2<f64>, v: &Array2<f64>) -> Result<()> {
    if z.ncols() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: v.nrows(),
        });
    }
    let dev = orthonormal_deviation(v.view());
    if dev > ORTHONORMAL_ACCEPT_TOL {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(())
}

/// `Z (I - V V')`: removes the span of `V` from every row.
pub fn project_out(z: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    check_projection_args(z, v)?;
    if v.ncols() == 0 {
        return Ok(z.clone());
    }
    Ok(z - &z.dot(v).dot(&v.t()))
}

/// `Z V V'`: keeps only the span of `V`.
pub fn project_onto(z: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    check_projection_args(z, v)?;
    Ok(z.dot(v).dot(&v.t()))
}

/// `(I - V V') x` for a single vector.
pub fn project_out_vec(x: &Array1<f64>, v: &Array2<f64>) -> Array1<f64> {
    if v.ncols() == 0 {
        return x.clone();
    }
    x - &v.dot(&v.t().dot(x))
}

/// Modified Gram-Schmidt. Columns whose residual norm falls below `tol`
/// are dropped, so the output may have fewer columns than the input.
pub fn gram_schmidt(a: &Array2<f64>, tol: f64) -> Array2<f64> {
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for col in a.columns() {
        let mut r = col.to_owned();
        // two passes keep the result orthogonal to ~1e-15
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&r);
                r.scaled_add(-c, q);
            }
        }
        let norm = r.dot(&r).sqrt();
        if norm > tol {
            kept.push(r / norm);
        }
    }
    let mut out = Array2::zeros((a.nrows(), kept.len()));
    for (j, q) in kept.iter().enumerate() {
        out.column_mut(j).assign(q);
    }
    out
}

/// A linear map applied to embeddings before the downstream classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingTransform {
    Identity,
    /// `Z (I - V V')`
    Remove(SubspaceBasis),
    /// `Z V V'`
    Keep(SubspaceBasis),
}

impl EmbeddingTransform {
    pub fn apply(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            EmbeddingTransform::Identity => Ok(z.clone()),
            EmbeddingTransform::Remove(b) => project_out(z, b.matrix()),
            EmbeddingTransform::Keep(b) => project_onto(z, b.matrix()),
        }
    }

    pub fn apply_to(&self, data: &LabeledEmbeddings) -> Result<LabeledEmbeddings> {
        data.with_embeddings(self.apply(data.z())?)
    }
}

/// Test outcomes for one candidate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTests {
    pub vs_random: TestReport,
    pub relative: TestReport,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    TestRejected,
    DimensionExhausted,
    MaxIterations,
}

/// Output of a joint subspace estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceResult {
    pub sp_basis: SubspaceBasis,
    pub mt_basis: SubspaceBasis,
    pub sp_tests: Vec<CandidateTests>,
    pub mt_tests: Vec<CandidateTests>,
    pub termination: Termination,
    /// Offset used by the relative-predictiveness tests.
    pub delta: f64,
}

impl SubspaceResult {
    pub fn d_sp(&self) -> usize {
        self.sp_basis.rank()
    }

    pub fn d_mt(&self) -> usize {
        self.mt_basis.rank()
    }

    /// Largest |v_sp' v_mt| over all pairs of basis vectors.
    pub fn cross_deviation(&self) -> f64 {
        if self.d_sp() == 0 || self.d_mt() == 0 {
            return 0.0;
        }
        self.sp_basis
            .matrix()
            .t()
            .dot(self.mt_basis.matrix())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}
