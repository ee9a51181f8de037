//! Integer-forcing receiver at the relay.
//!
//! Effective noise follows one convention throughout the crate: for equation
//! coefficients `a`, projection `b` and effective channel `H`,
//!
//! ```text
//! eps(b, a) = c ||b||^2 + ||H^* b - a||^2,   c = (sigma_r^2 + penalty) / 2
//! ```
//!
//! which at the optimal `b` equals `a^T U a` with
//! `U = I - H^* (c I + H H^*)^-1 H`. Computation rates are `log2+(1/eps)`.
//! The `penalty` term is the CSI-error contribution
//! `sigma_h^2 * sum_l ||V_l||_F^2` and is zero with perfect CSI.

use crate::linalg::{fro2, hermitian_part, hermitian_solve, identity, real, CMat, CVec};
use crate::model::PrecoderSet;

/// Effective noise values below this floor are clamped before taking rates.
pub const EPS_FLOOR: f64 = 1e-9;
/// Default ceiling on computation rates, in bits.
pub const RATE_CEILING: f64 = 30.0;

/// Integer equation coefficient vectors, one per row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EquationSet {
    rows: Vec<Vec<i64>>,
}

impl EquationSet {
    pub fn new(rows: Vec<Vec<i64>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == rows.len()));
        EquationSet { rows }
    }

    pub fn identity(l: usize) -> Self {
        EquationSet::new((0..l).map(|i| (0..l).map(|j| i64::from(i == j)).collect()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    /// Coefficients of equation `i` addressing the messages at `offset..offset+len`.
    pub fn pair_block(&self, i: usize, offset: usize, len: usize) -> &[i64] {
        &self.rows[i][offset..offset + len]
    }

    pub fn rank(&self) -> usize {
        integer_rank(&self.rows)
    }

    pub fn is_nonsingular(&self) -> bool {
        self.rank() == self.len()
    }
}

/// Exact rank of an integer matrix by fraction-free elimination.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, p);
        let pivot = m[rank].clone();
        for r in (rank + 1)..m.len() {
            let f = m[r][c];
            if f == 0 {
                continue;
            }
            let mut g = 0i128;
            for j in 0..cols {
                m[r][j] = m[r][j] * pivot[c] - f * pivot[j];
                g = gcd(g, m[r][j]);
            }
            if g > 1 {
                for x in m[r].iter_mut() {
                    *x /= g;
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn int_vec(a: &[i64]) -> CVec {
    CVec::from_iterator(a.len(), a.iter().map(|&x| real(x as f64)))
}

/// `(c I + H H^*)^-1 H` with `c = (sigma_r^2 + penalty) / 2`.
fn regularized_inverse_times(heff: &CMat, sigma2_r: f64, penalty: f64) -> CMat {
    let nr = heff.nrows();
    let c = 0.5 * (sigma2_r + penalty);
    let gram = identity(nr).map(|z| z * c) + heff * heff.adjoint();
    hermitian_solve(&gram, heff)
}

/// The `L x L` matrix whose quadratic form gives the effective noise of an
/// equation after optimal projection.
pub fn compute_u(heff: &CMat, sigma2_r: f64, penalty: f64) -> CMat {
    let l = heff.ncols();
    let u = identity(l) - heff.adjoint() * regularized_inverse_times(heff, sigma2_r, penalty);
    hermitian_part(&u)
}

/// The projection vector minimizing the effective noise for coefficients `a`.
pub fn optimal_projection(heff: &CMat, a: &[i64], sigma2_r: f64, penalty: f64) -> CVec {
    regularized_inverse_times(heff, sigma2_r, penalty) * int_vec(a)
}

/// Projection matrix whose `k`-th row is `b_k^*`.
pub fn projection_matrix(heff: &CMat, eqs: &EquationSet, sigma2_r: f64, penalty: f64) -> CMat {
    let solved = regularized_inverse_times(heff, sigma2_r, penalty);
    let mut b = CMat::zeros(eqs.len(), heff.nrows());
    for i in 0..eqs.len() {
        let bi = &solved * int_vec(eqs.row(i));
        b.row_mut(i).copy_from(&bi.adjoint());
    }
    b
}

/// `a^T U a`; the imaginary part vanishes for Hermitian `U` and real `a`.
pub fn equation_mse(u: &CMat, a: &[i64]) -> f64 {
    let mut acc = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &aj) in a.iter().enumerate() {
            acc += (ai * aj) as f64 * u[(i, j)].re;
        }
    }
    acc.max(0.0)
}

/// Effective noise evaluated for an arbitrary projection `b`.
pub fn direct_mse(heff: &CMat, b: &CVec, a: &[i64], sigma2_r: f64, penalty: f64) -> f64 {
    let resid = heff.adjoint() * b - int_vec(a);
    0.5 * (sigma2_r + penalty) * b.norm_squared() + resid.norm_squared()
}

/// `log2+(1/eps)`, with `eps` floored at [`EPS_FLOOR`] and the result capped at
/// [`RATE_CEILING`].
pub fn computation_rate(eps: f64) -> f64 {
    computation_rate_capped(eps, RATE_CEILING)
}

pub fn computation_rate_capped(eps: f64, ceiling: f64) -> f64 {
    let eps = eps.max(EPS_FLOOR);
    (-eps.log2()).clamp(0.0, ceiling)
}

/// `sigma_h^2 * sum_l (Tr(V_l^* V_l) + Tr(V_lbar^* V_lbar))`.
pub fn robust_penalty(precoders: &PrecoderSet, sigma2_h: f64) -> f64 {
    sigma2_h * precoders.v.iter().map(fro2).sum::<f64>()
}

/// Effective noise of every equation for a given effective channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub u: CMat,
    pub eps: Vec<f64>,
    pub rate: Vec<f64>,
    pub penalty: f64,
}

impl NoiseProfile {
    pub fn new(heff: &CMat, eqs: &EquationSet, sigma2_r: f64, penalty: f64) -> Self {
        let u = compute_u(heff, sigma2_r, penalty);
        let eps: Vec<f64> = eqs.rows().iter().map(|a| equation_mse(&u, a)).collect();
        let rate = eps.iter().map(|&e| computation_rate(e)).collect();
        NoiseProfile { u, eps, rate, penalty }
    }

    pub fn sum(&self) -> f64 {
        self.eps.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.eps.iter().cloned().fold(0.0, f64::max)
    }
}
