//! Random weight-matrix ensembles with reproducible seeding.
//!
//! The primary Haar sampler is QR-based: decompose an iid Gaussian matrix and
//! multiply each column of Q by the sign of the matching diagonal entry of R.
//! With that correction the factorization is the unique one with positive
//! diagonal, and Q carries the Haar measure. The literal construction
//! `(X X^T)^{-1/2} X` is kept as a distributional reference
//! ([`sample_suo_reference`]), since forming the inverse square root is less
//! robust when `X X^T` is poorly conditioned.
//!
//! Every sampler is a pure function of `(shape, seed)`: calls are thread-safe
//! and identical inputs yield bit-identical matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of `X X^T` below this are treated as a degenerate draw.
const DEGENERATE_EIGENVALUE: f64 = 1e-12;
const MAX_REFERENCE_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixShape {
    m: usize,
    k: usize,
}

impl MatrixShape {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::InvalidShape { m, k });
        }
        Ok(MatrixShape { m, k })
    }

    /// Output dimension (rows).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Input dimension (columns).
    pub fn k(&self) -> usize {
        self.k
    }

    /// n = max(k, m).
    pub fn n(&self) -> usize {
        self.m.max(self.k)
    }

    pub fn is_square(&self) -> bool {
        self.m == self.k
    }
}

impl std::fmt::Display for MatrixShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Entries iid N(0, 1/k).
    GaussianFanIn,
    /// Top-left m x k submatrix of a Haar O(n) matrix, n = max(m, k).
    HaarRect,
    /// HaarRect scaled by max(sqrt(m/k), 1).
    Suo,
    /// Haar on the full orthogonal group O(n).
    HaarFullO,
    /// Haar restricted to SO(n) (determinant +1).
    HaarSo,
    /// Haar restricted to SO^-(n) (determinant -1).
    HaarSoMinus,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::GaussianFanIn => "gaussian",
            Scheme::HaarRect => "haar-rect",
            Scheme::Suo => "suo",
            Scheme::HaarFullO => "haar-o",
            Scheme::HaarSo => "haar-so",
            Scheme::HaarSoMinus => "haar-so-minus",
        }
    }

    pub fn is_square_only(self) -> bool {
        matches!(
            self,
            Scheme::HaarFullO | Scheme::HaarSo | Scheme::HaarSoMinus
        )
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Scheme::GaussianFanIn),
            "haar-rect" => Ok(Scheme::HaarRect),
            "suo" => Ok(Scheme::Suo),
            "haar-o" => Ok(Scheme::HaarFullO),
            "haar-so" => Ok(Scheme::HaarSo),
            "haar-so-minus" => Ok(Scheme::HaarSoMinus),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}`; expected one of gaussian, haar-rect, suo, haar-o, haar-so, haar-so-minus"
            ))),
        }
    }
}

/// Connected component requested from [`sample_haar_square`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthogonalComponent {
    O,
    So,
    SoMinus,
}

/// An m x k matrix tagged with its sampling scheme and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    data: DMatrix<f64>,
    scheme: Scheme,
    seed: u64,
    shape: MatrixShape,
}

impl WeightMatrix {
    /// Wraps an existing matrix; square-only schemes must be square.
    pub fn from_parts(data: DMatrix<f64>, scheme: Scheme, seed: u64) -> Result<Self> {
        let shape = MatrixShape::new(data.nrows(), data.ncols())?;
        if scheme.is_square_only() && !shape.is_square() {
            return Err(Error::SquareSchemeShape {
                scheme: scheme.name(),
                m: shape.m(),
                k: shape.k(),
            });
        }
        Ok(WeightMatrix {
            data,
            scheme,
            seed,
            shape,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> MatrixShape {
        self.shape
    }

    /// Frobenius residual of the scheme's orthogonality invariant, or None
    /// for Gaussian matrices (which have none).
    pub fn orthogonality_residual(&self) -> Option<f64> {
        let w = &self.data;
        let (m, k) = (self.shape.m(), self.shape.k());
        match self.scheme {
            Scheme::GaussianFanIn => None,
            Scheme::HaarRect => Some(if m <= k {
                gram_residual(&(w * w.transpose()), 1.0)
            } else {
                gram_residual(&(w.transpose() * w), 1.0)
            }),
            Scheme::Suo => Some(if m <= k {
                gram_residual(&(w * w.transpose()), 1.0)
            } else {
                gram_residual(&(w.transpose() * w), m as f64 / k as f64)
            }),
            Scheme::HaarFullO | Scheme::HaarSo | Scheme::HaarSoMinus => {
                Some(gram_residual(&(w.transpose() * w), 1.0))
            }
        }
    }

    pub fn determinant(&self) -> Option<f64> {
        self.shape.is_square().then(|| self.data.determinant())
    }

    /// CSV block: one row per matrix row, 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.shape.m() {
            let row: Vec<String> = (0..self.shape.k())
                .map(|j| format!("{:.16e}", self.data[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Flat row-major little-endian f64.
    pub fn write_binary<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.shape.m() {
            for j in 0..self.shape.k() {
                out.write_all(&self.data[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn gram_residual(gram: &DMatrix<f64>, diag: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { diag } else { 0.0 };
            let d = gram[(i, j)] - target;
            sum += d * d;
        }
    }
    sum.sqrt()
}

fn rng_for(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Row-major fill order so the draw sequence is part of the contract.
    let mut data = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            data[(i, j)] = rng.sample(StandardNormal);
        }
    }
    data
}

/// Haar-distributed n x n orthogonal matrix: sign-corrected QR of a Gaussian.
pub fn haar_orthogonal_from_rng<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    stiefel_from_rng(n, n, rng)
}

/// Haar-distributed n x p matrix with orthonormal columns (p <= n); equal in
/// law to the first p columns of a Haar O(n) matrix.
pub fn stiefel_from_rng<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(p >= 1 && p <= n);
    let g = gaussian_matrix(n, p, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Entries iid N(0, 1/k).
pub fn sample_gaussian_fanin(shape: MatrixShape, seed: u64) -> WeightMatrix {
    let mut rng = rng_for(seed);
    let scale = 1.0 / (shape.k() as f64).sqrt();
    let data = gaussian_matrix(shape.m(), shape.k(), &mut rng) * scale;
    WeightMatrix {
        data,
        scheme: Scheme::GaussianFanIn,
        seed,
        shape,
    }
}

/// Haar sample on the requested component of O(n). The determinant is forced
/// onto the component by negating the last column when the sampled sign is
/// wrong; this leaves the first n-1 columns untouched and maps the Haar
/// measure between the two components.
pub fn sample_haar_square(n: usize, component: OrthogonalComponent, seed: u64) -> Result<WeightMatrix> {
    let shape = MatrixShape::new(n, n)?;
    let mut rng = rng_for(seed);
    let mut q = haar_orthogonal_from_rng(n, &mut rng);
    let scheme = match component {
        OrthogonalComponent::O => Scheme::HaarFullO,
        OrthogonalComponent::So => Scheme::HaarSo,
        OrthogonalComponent::SoMinus => Scheme::HaarSoMinus,
    };
    let det = q.determinant();
    let flip = match component {
        OrthogonalComponent::O => false,
        OrthogonalComponent::So => det < 0.0,
        OrthogonalComponent::SoMinus => det > 0.0,
    };
    if flip {
        let last = n - 1;
        for i in 0..n {
            q[(i, last)] = -q[(i, last)];
        }
    }
    Ok(WeightMatrix {
        data: q,
        scheme,
        seed,
        shape,
    })
}

fn haar_rect_from_rng<R: Rng>(shape: MatrixShape, rng: &mut R) -> DMatrix<f64> {
    let (m, k) = (shape.m(), shape.k());
    if m <= k {
        // First m rows of a Haar O(k) matrix: sample k orthonormal columns of
        // length k restricted to m of them, i.e. transpose a Stiefel sample.
        stiefel_from_rng(k, m, rng).transpose()
    } else {
        // n = m: the top-left m x k block is the first k columns, untruncated.
        stiefel_from_rng(m, k, rng)
    }
}

/// Top-left m x k submatrix of a Haar O(n) matrix, n = max(m, k).
pub fn sample_haar_rect(shape: MatrixShape, seed: u64) -> WeightMatrix {
    let mut rng = rng_for(seed);
    WeightMatrix {
        data: haar_rect_from_rng(shape, &mut rng),
        scheme: Scheme::HaarRect,
        seed,
        shape,
    }
}

/// The SUO multiplier max(sqrt(m/k), 1), equal to sqrt(n/k).
pub fn suo_scale(shape: MatrixShape) -> f64 {
    (shape.m() as f64 / shape.k() as f64).sqrt().max(1.0)
}

/// Haar rectangular sample scaled by max(sqrt(m/k), 1); identical to
/// [`sample_haar_rect`] when m <= k.
pub fn sample_suo(shape: MatrixShape, seed: u64) -> WeightMatrix {
    let mut rng = rng_for(seed);
    WeightMatrix {
        data: haar_rect_from_rng(shape, &mut rng) * suo_scale(shape),
        scheme: Scheme::Suo,
        seed,
        shape,
    }
}

fn inverse_sqrt_times(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // (X X^T)^{-1/2} X via symmetric eigendecomposition of X X^T.
    let s = x * x.transpose();
    let eig = s.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < DEGENERATE_EIGENVALUE {
        return Err(Error::DegenerateDraw {
            min_eigenvalue: min,
        });
    }
    let p = eig.eigenvalues.len();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..p {
        let inv = 1.0 / eig.eigenvalues[j].sqrt();
        for i in 0..p {
            scaled[(i, j)] *= inv;
        }
    }
    Ok(scaled * eig.eigenvectors.transpose() * x)
}

/// Literal reference construction: `(X X^T)^{-1/2} X` for Gaussian X (the
/// transpose route when m > k), scaled by max(sqrt(m/k), 1). Degenerate draws
/// (smallest eigenvalue below 1e-12) are resampled from the next derived
/// stream; the error surfaces only if every attempt degenerates.
pub fn sample_suo_reference(shape: MatrixShape, seed: u64) -> Result<WeightMatrix> {
    let (m, k) = (shape.m(), shape.k());
    let mut last = Error::DegenerateDraw {
        min_eigenvalue: f64::NAN,
    };
    for attempt in 0..MAX_REFERENCE_ATTEMPTS {
        let mut rng = rng_for(seed);
        rng.set_stream(attempt);
        let result = if m <= k {
            let x = gaussian_matrix(m, k, &mut rng);
            inverse_sqrt_times(&x)
        } else {
            let x = gaussian_matrix(k, m, &mut rng);
            inverse_sqrt_times(&x).map(|w| w.transpose())
        };
        match result {
            Ok(w) => {
                return Ok(WeightMatrix {
                    data: w * suo_scale(shape),
                    scheme: Scheme::Suo,
                    seed,
                    shape,
                })
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Scheme dispatch from a caller-provided RNG (used by the experiment harness,
/// whose per-trial streams are derived elsewhere).
pub fn sample_with_rng<R: Rng>(scheme: Scheme, shape: MatrixShape, rng: &mut R) -> Result<DMatrix<f64>> {
    if scheme.is_square_only() && !shape.is_square() {
        return Err(Error::SquareSchemeShape {
            scheme: scheme.name(),
            m: shape.m(),
            k: shape.k(),
        });
    }
    Ok(match scheme {
        Scheme::GaussianFanIn => {
            gaussian_matrix(shape.m(), shape.k(), rng) * (1.0 / (shape.k() as f64).sqrt())
        }
        Scheme::HaarRect => haar_rect_from_rng(shape, rng),
        Scheme::Suo => haar_rect_from_rng(shape, rng) * suo_scale(shape),
        Scheme::HaarFullO | Scheme::HaarSo | Scheme::HaarSoMinus => {
            let n = shape.n();
            let mut q = haar_orthogonal_from_rng(n, rng);
            let det = q.determinant();
            let flip = match scheme {
                Scheme::HaarSo => det < 0.0,
                Scheme::HaarSoMinus => det > 0.0,
                _ => false,
            };
            if flip {
                let last = n - 1;
                for i in 0..n {
                    q[(i, last)] = -q[(i, last)];
                }
            }
            q
        }
    })
}

/// Scheme dispatch from (shape, seed).
pub fn sample(scheme: Scheme, shape: MatrixShape, seed: u64) -> Result<WeightMatrix> {
    match scheme {
        Scheme::GaussianFanIn => Ok(sample_gaussian_fanin(shape, seed)),
        Scheme::HaarRect => Ok(sample_haar_rect(shape, seed)),
        Scheme::Suo => Ok(sample_suo(shape, seed)),
        Scheme::HaarFullO => sample_haar_square(shape_square(shape)?, OrthogonalComponent::O, seed),
        Scheme::HaarSo => sample_haar_square(shape_square(shape)?, OrthogonalComponent::So, seed),
        Scheme::HaarSoMinus => {
            sample_haar_square(shape_square(shape)?, OrthogonalComponent::SoMinus, seed)
        }
    }
}

fn shape_square(shape: MatrixShape) -> Result<usize> {
    if shape.is_square() {
        Ok(shape.m())
    } else {
        Err(Error::SquareSchemeShape {
            scheme: "square haar",
            m: shape.m(),
            k: shape.k(),
        })
    }
}
