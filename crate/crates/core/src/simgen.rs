//! Synthetic covariates and responses for the simulation study.
//!
//! Correlated cases use `Sigma` with unit diagonal and 0.5 off the diagonal.
//! Draws come from ChaCha streams keyed by `(seed, label)` with one stream
//! per chunk of 1024 rows, so output does not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::DataBlock;
use crate::error::{Error, Result};

const CHUNK_ROWS: usize = 1024;
const OFF_DIAGONAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    Normal,
    LogNormal,
    T2,
    MixOrdered,
    MixShuffled,
}

impl CaseKind {
    pub const ALL: [CaseKind; 5] = [
        CaseKind::Normal,
        CaseKind::LogNormal,
        CaseKind::T2,
        CaseKind::MixOrdered,
        CaseKind::MixShuffled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Normal => "normal",
            CaseKind::LogNormal => "lognormal",
            CaseKind::T2 => "t2",
            CaseKind::MixOrdered => "mix-ordered",
            CaseKind::MixShuffled => "mix-shuffled",
        }
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, CaseKind::MixOrdered | CaseKind::MixShuffled)
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "normal" | "1" => CaseKind::Normal,
            "lognormal" | "2" => CaseKind::LogNormal,
            "t2" | "3" => CaseKind::T2,
            "mix-ordered" | "mixordered" | "mix" | "4" => CaseKind::MixOrdered,
            "mix-shuffled" | "mixshuffled" | "5" => CaseKind::MixShuffled,
            _ => return Err(Error::InvalidParameter(format!("unknown covariate case `{s}`"))),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CovariateCase {
    pub kind: CaseKind,
    pub p: usize,
}

impl CovariateCase {
    pub fn new(kind: CaseKind, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("need at least one covariate".into()));
        }
        Ok(Self { kind, p })
    }
}

/// One distribution used on its own or as a mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Normal,
    LogNormal,
    /// Multivariate t with the given degrees of freedom.
    T(f64),
    /// iid U(0, 2) entries, no correlation.
    Uniform02,
}

/// The `p x p` compound-symmetric covariance.
pub fn sigma(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { OFF_DIAGONAL })
}

fn sigma_cholesky(p: usize) -> DMatrix<f64> {
    sigma(p).cholesky().expect("compound symmetry with rho = 0.5 is positive definite").l()
}

pub(crate) fn stream_rng(seed: u64, label: &str, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    for (i, b) in label.bytes().enumerate() {
        key[8 + i % 24] ^= b.rotate_left((i / 24) as u32);
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Row-major draws of `rows` rows from `component` under `(seed, label)`.
fn component_rows(component: Component, p: usize, rows: usize, seed: u64, label: &str) -> Result<Vec<f64>> {
    let l = sigma_cholesky(p);
    let chi = match component {
        Component::T(df) => Some(ChiSquared::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?),
        _ => None,
    };
    let mut out = vec![0.0; rows * p];
    out.par_chunks_mut(CHUNK_ROWS * p).enumerate().for_each(|(c, chunk)| {
        let mut rng = stream_rng(seed, label, c as u64);
        let mut g = vec![0.0; p];
        for row in chunk.chunks_mut(p) {
            if component == Component::Uniform02 {
                for v in row.iter_mut() {
                    *v = rng.random_range(0.0..2.0);
                }
                continue;
            }
            for v in g.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (i, v) in row.iter_mut().enumerate() {
                *v = (0..=i).map(|m| l[(i, m)] * g[m]).sum();
            }
            match component {
                Component::LogNormal => row.iter_mut().for_each(|v| *v = v.exp()),
                Component::T(df) => {
                    let w: f64 = chi.as_ref().map_or(df, |d| d.sample(&mut rng));
                    let scale = (df / w).sqrt();
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                _ => {}
            }
        }
    });
    Ok(out)
}

/// Draws one distribution as a covariate matrix.
pub fn generate_component(component: Component, p: usize, rows: usize, seed: u64, label: &str) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidParameter("need at least one covariate".into()));
    }
    let data = component_rows(component, p, rows, seed, label)?;
    Ok(DMatrix::from_row_slice(rows, p, &data))
}

/// Mixture components in row order with their stream labels.
pub const MIX_COMPONENTS: [(Component, &str); 5] = [
    (Component::Normal, "mix/normal"),
    (Component::T(2.0), "mix/t2"),
    (Component::T(3.0), "mix/t3"),
    (Component::Uniform02, "mix/uniform"),
    (Component::LogNormal, "mix/lognormal"),
];

/// Covariates for one simulation case. Normal and LogNormal share a stream,
/// so the LogNormal draws are the elementwise exponential of the Normal ones.
pub fn generate(case: CovariateCase, n: usize, seed: u64) -> Result<DataBlock> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let p = case.p;
    let rows = match case.kind {
        CaseKind::Normal => component_rows(Component::Normal, p, n, seed, "normal")?,
        CaseKind::LogNormal => component_rows(Component::LogNormal, p, n, seed, "normal")?,
        CaseKind::T2 => component_rows(Component::T(2.0), p, n, seed, "t2")?,
        CaseKind::MixOrdered | CaseKind::MixShuffled => {
            if !n.is_multiple_of(5) {
                return Err(Error::IndivisibleMixSize(n));
            }
            let mut rows = Vec::with_capacity(n * p);
            for (component, label) in MIX_COMPONENTS {
                rows.extend(component_rows(component, p, n / 5, seed, label)?);
            }
            if case.kind == CaseKind::MixShuffled {
                let perm = shuffle_permutation(n, seed);
                let mut shuffled = Vec::with_capacity(n * p);
                for &src in &perm {
                    shuffled.extend_from_slice(&rows[src * p..(src + 1) * p]);
                }
                rows = shuffled;
            }
            rows
        }
    };
    DataBlock::new(DMatrix::from_row_slice(n, p, &rows), None)
}

/// Row order used by the shuffled mixture: output row `i` is source row `perm[i]`.
pub fn shuffle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, "mix/shuffle", 0));
    perm
}

/// Intercept 1 and all slopes 1.
pub fn true_beta(p: usize) -> (f64, DVector<f64>) {
    (1.0, DVector::from_element(p, 1.0))
}

/// `y_i = beta0 + z_i' beta1 + eps_i` with `eps_i ~ N(0, 1)`.
pub fn generate_responses(z: &DMatrix<f64>, beta0: f64, beta1: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
    generate_responses_with_sd(z, beta0, beta1, 1.0, seed)
}

/// As [`generate_responses`] with noise standard deviation `sd` (0 gives noiseless data).
pub fn generate_responses_with_sd(
    z: &DMatrix<f64>,
    beta0: f64,
    beta1: &DVector<f64>,
    sd: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if beta1.len() != z.ncols() {
        return Err(Error::DimensionMismatch { expected: z.ncols(), found: beta1.len() });
    }
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sd must be finite and nonnegative, got {sd}")));
    }
    let mut y = z * beta1;
    y.add_scalar_mut(beta0);
    y.as_mut_slice().par_chunks_mut(CHUNK_ROWS).enumerate().for_each(|(c, chunk)| {
        let mut rng = stream_rng(seed, "noise", c as u64);
        for v in chunk {
            let e: f64 = rng.sample(StandardNormal);
            *v += sd * e;
        }
    });
    Ok(y)
}

/// Covariates plus responses from the true model, as one block.
pub fn generate_dataset(case: CovariateCase, n: usize, seed: u64, noise_sd: f64) -> Result<DataBlock> {
    let block = generate(case, n, seed)?;
    let (b0, b1) = true_beta(case.p);
    let y = generate_responses_with_sd(block.covariates(), b0, &b1, noise_sd, seed)?;
    DataBlock::new(block.covariates().clone(), Some(y))
}
