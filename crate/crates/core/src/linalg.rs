//! Small dense complex linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex<f64>`.
//! Matrices in this domain are tiny (memory dimension rarely above a few
//! dozen), so clarity wins over blocking or BLAS calls.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvector bases with a condition number above this are not trusted.
pub const MAX_EIGEN_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix logarithm undefined: eigenvalue {0} lies on the closed negative real axis")]
    LogBranch(C64),
    #[error("matrix exponential produced non-finite entries")]
    ExpFailure,
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
}

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Build a complex matrix from real row-major data.
pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| real(rows[i][j]))
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Max-entry anti-Hermitian residual `‖M − M†‖_max`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * real(0.5)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Shannon entropy in bits of a spectrum; entries below `cutoff` are dropped.
pub fn entropy_bits(values: &[f64], cutoff: f64) -> f64 {
    values
        .iter()
        .filter(|&&p| p > cutoff)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Moore–Penrose pseudo-inverse with a relative singular value cutoff.
/// Returns the inverse together with the numerical rank.
pub fn pseudo_inverse(m: &CMatrix, rel_cutoff: f64) -> (CMatrix, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (CMatrix::zeros(cols, rows), 0);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = smax * rel_cutoff;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut out = CMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk) * real(1.0 / s);
        }
    }
    (out, rank)
}

/// A diagonalization `M = V diag(λ) V⁻¹` of a general complex matrix,
/// obtained from its complex Schur form.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: CMatrix,
    pub inverse: CMatrix,
    /// Frobenius condition number of `vectors`.
    pub condition: f64,
}

impl Eigen {
    /// Returns `None` when the matrix is (numerically) defective.
    pub fn new(m: &CMatrix) -> Option<Self> {
        let n = m.nrows();
        if n == 0 {
            return Some(Eigen {
                values: vec![],
                vectors: CMatrix::zeros(0, 0),
                inverse: CMatrix::zeros(0, 0),
                condition: 1.0,
            });
        }
        let (q, t) = m.clone().schur().unpack();
        let scale = max_abs(&t).max(f64::MIN_POSITIVE);
        let tiny = 1e-13 * scale;
        let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
        let mut y = CMatrix::zeros(n, n);
        for k in 0..n {
            y[(k, k)] = real(1.0);
            for i in (0..k).rev() {
                let mut s = C64::new(0.0, 0.0);
                for j in i + 1..=k {
                    s += t[(i, j)] * y[(j, k)];
                }
                let d = t[(i, i)] - t[(k, k)];
                if d.norm() <= tiny {
                    if s.norm() <= 1e-10 * scale {
                        y[(i, k)] = C64::new(0.0, 0.0);
                    } else {
                        return None;
                    }
                } else {
                    y[(i, k)] = -s / d;
                }
            }
            let nrm = y.column(k).norm();
            y.column_mut(k).unscale_mut(nrm);
        }
        let vectors = q * y;
        let inverse = vectors.clone().try_inverse()?;
        let condition = vectors.norm() * inverse.norm();
        if !condition.is_finite() {
            return None;
        }
        Some(Eigen {
            values,
            vectors,
            inverse,
            condition,
        })
    }

    pub fn well_conditioned(&self) -> bool {
        self.condition <= MAX_EIGEN_CONDITION
    }

    /// `V f(Λ) V⁻¹`.
    pub fn apply(&self, f: impl Fn(C64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                scaled[(i, k)] *= fk;
            }
        }
        scaled * &self.inverse
    }
}

fn on_negative_real_axis(z: C64) -> bool {
    z.norm() == 0.0 || (z.re <= 0.0 && z.im.abs() <= 1e-14 * z.norm().max(1.0))
}

/// Principal matrix logarithm.
///
/// Uses the eigen-decomposition when its basis is well conditioned and
/// otherwise falls back to inverse scaling and squaring on the Schur form.
pub fn logm(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare(m.nrows(), m.ncols()));
    }
    if let Some(eig) = Eigen::new(m) {
        if let Some(&bad) = eig.values.iter().find(|z| on_negative_real_axis(**z)) {
            return Err(LinalgError::LogBranch(bad));
        }
        if eig.well_conditioned() {
            return Ok(eig.apply(|z| z.ln()));
        }
    }
    logm_schur(m)
}

/// Principal logarithm by inverse scaling and squaring on the Schur form.
pub fn logm_schur(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare(m.nrows(), m.ncols()));
    }
    let n = m.nrows();
    let (q, mut t) = m.clone().schur().unpack();
    for i in 0..n {
        if on_negative_real_axis(t[(i, i)]) {
            return Err(LinalgError::LogBranch(t[(i, i)]));
        }
    }
    let id = identity(n);
    let mut squarings = 0;
    while (&t - &id).norm() > 0.05 && squarings < 64 {
        t = sqrt_upper_triangular(&t);
        squarings += 1;
    }
    let x = &t - &id;
    let mut term = x.clone();
    let mut acc = x.clone();
    for j in 2..200 {
        term = &term * &x;
        let coeff = if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64;
        let contrib = &term * real(coeff);
        acc += &contrib;
        if contrib.norm() <= 1e-18 * acc.norm().max(1e-300) {
            break;
        }
    }
    let l = acc * real(2f64.powi(squarings));
    Ok(&q * l * q.adjoint())
}

fn sqrt_upper_triangular(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let mut r = CMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for span in 1..n {
        for i in 0..n - span {
            let j = i + span;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Matrix exponential: eigen-decomposition when well conditioned,
/// Padé scaling and squaring otherwise.
pub fn expm(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare(m.nrows(), m.ncols()));
    }
    let out = match Eigen::new(m) {
        Some(eig) if eig.well_conditioned() => eig.apply(|z| z.exp()),
        _ => m.exp(),
    };
    if out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(out)
    } else {
        Err(LinalgError::ExpFailure)
    }
}

/// Rotate a vector's global phase so its first component above `tol`
/// (relative to the vector norm) is real and positive.
pub fn fix_global_phase(v: &mut CVector) -> C64 {
    let scale = v.norm();
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if let Some(z) = v.iter().find(|z| z.norm() > tol).copied() {
        let phase = z / z.norm();
        let inv = phase.conj();
        for e in v.iter_mut() {
            *e *= inv;
        }
        phase
    } else {
        real(1.0)
    }
}

/// Fidelity `|⟨a|b⟩|² / (‖a‖²‖b‖²)` between two pure states.
pub fn pure_fidelity(a: &CVector, b: &CVector) -> f64 {
    let ov = a.dotc(b);
    ov.norm_sqr() / (a.norm_squared() * b.norm_squared())
}

pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}
