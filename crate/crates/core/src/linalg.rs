//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on small dense matrices (a few dozen rows), so the
//! routines favour robustness over speed: eigenvalues come from a real Schur
//! decomposition, eigenvectors from shifted inverse iteration in complex
//! arithmetic, and null vectors from a full SVD.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Solves `a * x = b` by LU with partial pivoting. `None` if `a` is singular.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// 2-norm condition number estimate `sigma_max / sigma_min`.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = singular_values(a);
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Right and left singular vectors belonging to the smallest singular value.
#[derive(Debug, Clone)]
pub struct NullPair {
    pub right: DVector<f64>,
    pub left: DVector<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
}

/// Approximate null vectors of a square matrix from its SVD. Both vectors
/// have unit norm and their largest-magnitude component positive.
pub fn null_pair(a: &DMatrix<f64>) -> NullPair {
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (imin, _) = sv
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty matrix");
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let right = orient_real(vt.row(imin).transpose());
    let left = orient_real(u.column(imin).into_owned());
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|x, y| y.total_cmp(x));
    NullPair {
        right,
        left,
        singular_values: sorted,
    }
}

/// Normalizes to unit length with the largest-magnitude entry positive.
pub fn orient_real(v: DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let imax = v.iamax();
    let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
    v * (sign / norm)
}

fn orient_complex(v: DVector<C64>) -> DVector<C64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let imax = v.icamax();
    let phase = v[imax].conj() / v[imax].norm();
    v.map(|z| z * phase / norm)
}

/// One eigenvalue with its right and left eigenvectors.
///
/// `right` satisfies `A v = mu v`, `left` satisfies `w^H A = mu w^H`. Both are
/// unit length with their largest-magnitude entry real and positive.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub right: DVector<C64>,
    pub left: DVector<C64>,
}

impl EigenPair {
    pub fn is_real(&self) -> bool {
        self.value.im.abs() <= 1e-9 * (1.0 + self.value.re.abs())
    }
}

/// Eigen-decomposition of a real matrix, ordered by `|Re mu|` ascending.
#[derive(Debug, Clone, Default)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Largest real part, or `-inf` for an empty spectrum.
    pub fn max_real(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.value.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_real() < 0.0
    }

    /// The real eigenvalue closest to the imaginary axis.
    pub fn critical_real(&self) -> Option<&EigenPair> {
        self.pairs.iter().find(|p| p.is_real())
    }

    /// The rightmost eigenvalue that has a nonzero imaginary part.
    pub fn rightmost_complex(&self) -> Option<&EigenPair> {
        self.pairs
            .iter()
            .filter(|p| !p.is_real())
            .max_by(|a, b| a.value.re.total_cmp(&b.value.re))
    }
}

const SCHUR_MAX_ITER_PER_DIM: usize = 200;

/// Eigenvalues plus right and left eigenvectors of a real square matrix.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<Spectrum> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension {
            what: "eigen_decompose (square matrix)",
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Spectrum::default());
    }
    let max_iter = SCHUR_MAX_ITER_PER_DIM * n;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iter)
        .ok_or(Error::EigenNonConvergence {
            iterations: max_iter,
        })?;
    let values = schur.complex_eigenvalues();
    let scale = a.norm().max(1.0);
    let ac = a.map(|v| C64::new(v, 0.0));
    let ah = ac.adjoint();

    let mut pairs: Vec<EigenPair> = values
        .iter()
        .map(|&mu| {
            let mu = if mu.im.abs() <= 1e-12 * scale { C64::new(mu.re, 0.0) } else { mu };
            EigenPair {
                value: mu,
                right: inverse_iteration(&ac, mu, scale),
                left: inverse_iteration(&ah, mu.conj(), scale),
            }
        })
        .collect();
    pairs.sort_by(|p, q| {
        p.value
            .re
            .abs()
            .total_cmp(&q.value.re.abs())
            .then(p.value.im.total_cmp(&q.value.im))
    });
    Ok(Spectrum { pairs })
}

/// Shifted inverse iteration for the eigenvector of `a` nearest `mu`.
fn inverse_iteration(a: &DMatrix<C64>, mu: C64, scale: f64) -> DVector<C64> {
    let n = a.nrows();
    let start = DVector::from_fn(n, |i, _| {
        let t = (i + 1) as f64;
        C64::new(1.0 + 0.37 * t.sin(), 0.21 * (1.7 * t).cos())
    });
    let mut offset = 1e-13 * scale;
    for _ in 0..6 {
        let shift = mu + C64::new(offset, 0.0);
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.lu();
        let mut x = start.clone();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&x) {
                Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let nrm = y.norm();
                    if nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    x = y / C64::new(nrm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return orient_complex(x);
        }
        offset *= 100.0;
    }
    orient_complex(start)
}
