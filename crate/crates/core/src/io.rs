//! Embedding files, PCA preprocessing and fitted-method artifacts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Method;
use crate::optim::LinearModel;
use crate::stats::TestReport;
use crate::types::{
    CandidateTests, EmbeddingTransform, LabeledEmbeddings, SubspaceBasis, SubspaceKind, Termination,
};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Reads `y_mt,y_sp,z_0,...,z_{d-1}` rows.
pub fn read_embeddings<R: Read>(input: R, source_name: &str) -> Result<LabeledEmbeddings> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "y_mt" || cols[1] != "y_sp" {
        return Err(parse_err(1, "header must start with y_mt,y_sp and name at least one z column".into()));
    }
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("z_{k}") {
            return Err(parse_err(1, format!("expected column z_{k}, found '{c}'")));
        }
    }
    let d = cols.len() - 2;

    let mut values = Vec::new();
    let mut y_mt = Vec::new();
    let mut y_sp = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", d + 2, fields.len()),
            ));
        }
        for (slot, f) in [(&mut y_mt, fields[0]), (&mut y_sp, fields[1])] {
            match f {
                "0" => slot.push(0u8),
                "1" => slot.push(1u8),
                other => return Err(parse_err(lineno, format!("label '{other}' is not 0 or 1"))),
            }
        }
        for f in &fields[2..] {
            let x: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("'{f}' is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value '{f}'")));
            }
            values.push(x);
        }
    }
    if y_mt.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let z = Array2::from_shape_vec((y_mt.len(), d), values).expect("rectangular by construction");
    LabeledEmbeddings::new(z, y_mt, y_sp)
}

pub fn load_embeddings(path: &Path) -> Result<LabeledEmbeddings> {
    read_embeddings(File::open(path)?, &path.display().to_string())
}

/// Writes with shortest round-trip float formatting, so reloading is exact.
pub fn write_embeddings<W: Write>(data: &LabeledEmbeddings, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "y_mt,y_sp")?;
    for k in 0..data.dim() {
        write!(w, ",z_{k}")?;
    }
    writeln!(w)?;
    for (i, row) in data.z().rows().into_iter().enumerate() {
        write!(w, "{},{}", data.y_mt()[i], data.y_sp()[i])?;
        for x in row {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_embeddings(path: &Path, data: &LabeledEmbeddings) -> Result<()> {
    write_embeddings(data, File::create(path)?)
}

/// Training mean plus leading principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d x k`, orthonormal columns ordered by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `d x k` component matrix.
    pub fn component_matrix(&self) -> Array2<f64> {
        let (d, k) = (self.dim(), self.k());
        Array2::from_shape_fn((d, k), |(i, j)| self.components[j][i])
    }

    /// Mean subtraction only (identity components).
    pub fn demean_only(z: &Array2<f64>) -> Result<Self> {
        let mean = column_mean(z)?;
        let d = mean.len();
        Ok(Self {
            mean: mean.to_vec(),
            components: (0..d)
                .map(|j| (0..d).map(|i| f64::from(u8::from(i == j))).collect())
                .collect(),
            explained_variance: Vec::new(),
        })
    }
}

fn column_mean(z: &Array2<f64>) -> Result<Array1<f64>> {
    z.mean_axis(Axis(0)).ok_or(Error::EmptyDataset)
}

pub fn pca_fit(z: &Array2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = z.dim();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidConfig(format!(
            "PCA dimension {k} must lie in [1, min(n, d) = {}]",
            n.min(d)
        )));
    }
    let mean = column_mean(z)?;
    let centred = z - &mean;
    let cov = centred.t().dot(&centred) / ((n.max(2) - 1) as f64);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let components = order[..k]
        .iter()
        .map(|&j| eig.eigenvectors.column(j).iter().copied().collect())
        .collect();
    let explained_variance = order[..k]
        .iter()
        .map(|&j| eig.eigenvalues[j].max(0.0))
        .collect();
    Ok(PcaModel {
        mean: mean.to_vec(),
        components,
        explained_variance,
    })
}

/// `(Z - mean) C` using the stored training statistics.
pub fn pca_apply(z: &Array2<f64>, model: &PcaModel) -> Result<Array2<f64>> {
    if z.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: z.ncols(),
        });
    }
    let mean = Array1::from(model.mean.clone());
    Ok((z - &mean).dot(&model.component_matrix()))
}

pub fn pca_apply_to(data: &LabeledEmbeddings, model: &PcaModel) -> Result<LabeledEmbeddings> {
    let z = pca_apply(data.z(), model)?;
    LabeledEmbeddings::new(z, data.y_mt().to_vec(), data.y_sp().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    Remove,
    Keep,
}

/// Serializable form of an [`EmbeddingTransform`]; the basis is stored
/// column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub dim: usize,
    pub basis: Vec<Vec<f64>>,
}

impl TransformSpec {
    pub fn from_transform(t: &EmbeddingTransform, dim: usize) -> Self {
        let (kind, basis) = match t {
            EmbeddingTransform::Identity => (TransformKind::Identity, Vec::new()),
            EmbeddingTransform::Remove(b) => (TransformKind::Remove, columns(b)),
            EmbeddingTransform::Keep(b) => (TransformKind::Keep, columns(b)),
        };
        Self { kind, dim, basis }
    }

    pub fn to_transform(&self) -> Result<EmbeddingTransform> {
        let basis = |kind| basis_from_columns(self.dim, &self.basis, kind);
        Ok(match self.kind {
            TransformKind::Identity => EmbeddingTransform::Identity,
            TransformKind::Remove => EmbeddingTransform::Remove(basis(SubspaceKind::Spurious)?),
            TransformKind::Keep => EmbeddingTransform::Keep(basis(SubspaceKind::MainTask)?),
        })
    }
}

fn columns(b: &SubspaceBasis) -> Vec<Vec<f64>> {
    b.columns().into_iter().map(|c| c.to_vec()).collect()
}

fn basis_from_columns(d: usize, cols: &[Vec<f64>], kind: SubspaceKind) -> Result<SubspaceBasis> {
    let cols: Vec<Array1<f64>> = cols.iter().map(|c| Array1::from(c.clone())).collect();
    SubspaceBasis::from_columns(d, &cols, kind)
}

/// Diagnostics of a joint estimation run as stored in an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub sp_basis: Vec<Vec<f64>>,
    pub mt_basis: Vec<Vec<f64>>,
    pub sp_tests: Vec<CandidateTests>,
    pub mt_tests: Vec<CandidateTests>,
    pub termination: Termination,
    pub delta: f64,
}

impl From<&crate::types::SubspaceResult> for SubspaceRecord {
    fn from(r: &crate::types::SubspaceResult) -> Self {
        Self {
            sp_basis: columns(&r.sp_basis),
            mt_basis: columns(&r.mt_basis),
            sp_tests: r.sp_tests.clone(),
            mt_tests: r.mt_tests.clone(),
            termination: r.termination,
            delta: r.delta,
        }
    }
}

impl SubspaceRecord {
    pub fn to_result(&self, d: usize) -> Result<crate::types::SubspaceResult> {
        Ok(crate::types::SubspaceResult {
            sp_basis: basis_from_columns(d, &self.sp_basis, SubspaceKind::Spurious)?,
            mt_basis: basis_from_columns(d, &self.mt_basis, SubspaceKind::MainTask)?,
            sp_tests: self.sp_tests.clone(),
            mt_tests: self.mt_tests.clone(),
            termination: self.termination,
            delta: self.delta,
        })
    }

    /// All test reports in order, spurious candidates first.
    pub fn reports(&self) -> Vec<&TestReport> {
        self.sp_tests
            .iter()
            .chain(&self.mt_tests)
            .flat_map(|t| [&t.vs_random, &t.relative])
            .collect()
    }
}

/// Everything needed to apply a fitted method to new embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub schema_version: u32,
    pub method: Method,
    pub dim: usize,
    /// Applied to raw embeddings before `transform`.
    pub preprocess: Option<PcaModel>,
    pub transform: TransformSpec,
    pub model: LinearModel,
    pub d_sp_hat: Option<usize>,
    pub d_mt_hat: Option<usize>,
    pub subspaces: Option<SubspaceRecord>,
}

impl Artifact {
    pub fn from_fitted(f: &crate::eval::FittedMethod, preprocess: Option<PcaModel>) -> Self {
        let dim = f.model.dim();
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            method: f.method,
            dim,
            preprocess,
            transform: TransformSpec::from_transform(&f.transform, dim),
            model: f.model.clone(),
            d_sp_hat: f.d_sp_hat,
            d_mt_hat: f.d_mt_hat,
            subspaces: f.jse.as_ref().map(SubspaceRecord::from),
        }
    }

    /// Preprocessing followed by the removal transform.
    pub fn apply(&self, data: &LabeledEmbeddings) -> Result<LabeledEmbeddings> {
        let pre = match &self.preprocess {
            Some(p) => pca_apply_to(data, p)?,
            None => data.clone(),
        };
        self.transform.to_transform()?.apply_to(&pre)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: Artifact = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if a.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported artifact schema version {}",
                a.schema_version
            )));
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn small_file_parses() {
        let text = "y_mt,y_sp,z_0,z_1\n0,1,0.5,-1\n1,1,2,3e-2\n1,0,0,0\n";
        let data = read_embeddings(text.as_bytes(), "mem").unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.dim(), 2);
        assert_eq!(data.z()[[1, 1]], 0.03);
        assert_eq!(data.groups(), &[2, 4, 3]);
    }

    #[test]
    fn bad_label_names_line() {
        let text = "y_mt,y_sp,z_0\n0,1,0.5\n2,0,1.0\n";
        match read_embeddings(text.as_bytes(), "mem") {
            Err(Error::Parse { line: 3, message, .. }) => assert!(message.contains("'2'")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_rejected() {
        let text = "y_mt,y_sp,z_0,z_1\n0,1,0.5\n";
        assert!(matches!(
            read_embeddings(text.as_bytes(), "mem"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let mut rng = seed::rng(1);
        let z = Array2::from_shape_fn((50, 6), |(_, j)| (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal));
        let m = pca_fit(&z, 6).unwrap();
        let scores = pca_apply(&z, &m).unwrap();
        let back = scores.dot(&m.component_matrix().t()) + &Array1::from(m.mean.clone());
        assert!((&back - &z).iter().all(|x| x.abs() < 1e-8));
        for pair in m.explained_variance.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        let c = m.component_matrix();
        assert!(crate::types::orthonormal_check(&c, 1e-6));
    }

    #[test]
    fn pca_skips_constant_column() {
        let mut rng = seed::rng(2);
        let mut z = Array2::from_shape_fn((40, 4), |_| rng.sample::<f64, _>(StandardNormal));
        z.column_mut(2).fill(7.0);
        let m = pca_fit(&z, 3).unwrap();
        for comp in &m.components {
            assert!(comp[2].abs() < 1e-8);
        }
        assert!(pca_fit(&z, 5).is_err());
    }

    #[test]
    fn pca_uses_training_mean_only() {
        let mut rng = seed::rng(3);
        let train = Array2::from_shape_fn((100, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let val = Array2::from_shape_fn((30, 3), |_| 5.0 + rng.sample::<f64, _>(StandardNormal));
        let m = pca_fit(&train, 3).unwrap();
        let before = m.clone();
        let out = pca_apply(&val, &m).unwrap();
        assert_eq!(m, before);
        // the shifted validation mean survives the transform
        let expected = (&val - &Array1::from(m.mean.clone())).dot(&m.component_matrix());
        assert!((&out - &expected).iter().all(|x| x.abs() < 1e-12));
        let norm: f64 = out.mean_axis(Axis(0)).unwrap().iter().map(|x| x * x).sum();
        assert!(norm.sqrt() > 5.0);
    }

    #[test]
    fn demean_only_subtracts_mean() {
        let z = ndarray::array![[1.0, 2.0], [3.0, 6.0]];
        let m = PcaModel::demean_only(&z).unwrap();
        let out = pca_apply(&z, &m).unwrap();
        assert_eq!(out, ndarray::array![[-1.0, -2.0], [1.0, 2.0]]);
    }
}
