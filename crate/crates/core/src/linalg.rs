//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Singular values below this fraction of the largest one are treated as zero.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn real(x: f64) -> C64 {
    Complex::new(x, 0.0)
}

/// Squared Frobenius norm.
pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn vec_norm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Moore-Penrose pseudo-inverse through the SVD.
pub fn pinv(m: &CMat) -> CMat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMat::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = CMat::zeros(cols, rows);
    if s_max == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= PINV_RELATIVE_CUTOFF * s_max {
            continue;
        }
        // out += v_i * (1/s) * u_i^*
        let vi = v_t.row(i).adjoint();
        let ui = u.column(i).adjoint();
        out += (vi * ui).map(|z| z / s);
    }
    out
}

/// Solves `a x = b` for Hermitian positive semidefinite `a`.
///
/// Uses a Cholesky factorization when `a` is numerically definite and falls
/// back to the minimum-norm pseudo-inverse solution otherwise.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> CMat {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return x;
        }
    }
    pinv(a) * b
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Column-major vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn mat_of(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Real 2x2-block representation `[[Re, -Im], [Im, Re]]`.
pub fn lift_matrix(m: &CMat) -> RMat {
    let (r, c) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// `[Re v; Im v]`
pub fn lift_vector(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn unlift_vector(u: &RVec) -> CVec {
    let n = u.len() / 2;
    CVec::from_fn(n, |i, _| c64(u[i], u[i + n]))
}

/// Circularly symmetric complex Gaussian matrix with per-entry variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let scale = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(scale * re, scale * im)
    })
}

/// Real part of a Hermitian matrix as a symmetric real matrix.
pub fn real_part(m: &CMat) -> RMat {
    let re = m.map(|z| z.re);
    (&re + re.transpose()) * 0.5
}
