#![allow(dead_code)]

use iff::linalg::{c64, CMat, RMat};
use iff::model::{generate_channels, ChannelSet, Csi, SystemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn cgauss(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    let s = 0.5f64.sqrt();
    CMat::from_fn(rows, cols, |_, _| c64(s * gaussian(rng), s * gaussian(rng)))
}

/// Random symmetric positive semidefinite matrix `X X^T` with `X` `n x m`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, m: usize) -> RMat {
    let x = RMat::from_fn(n, m, |_, _| gaussian(rng));
    &x * x.transpose()
}

/// Channels for `cfg` that admit alignment on the estimates.
pub fn channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    let mut r = rng(seed);
    loop {
        let ch = generate_channels(cfg, &mut r);
        if ch.alignment_feasible(cfg, Csi::Estimated) {
            return ch;
        }
    }
}

/// Integer vector quadratic form, written out independently of the library.
pub fn quad(u: &RMat, a: &[i64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += u[(i, j)] * (a[i] * a[j]) as f64;
        }
    }
    s
}

/// Determinant of a small integer matrix by cofactor expansion.
pub fn int_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 1 {
        return m[0][0] as i128;
    }
    let mut det = 0i128;
    for c in 0..n {
        let minor: Vec<Vec<i64>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &x)| x).collect()).collect();
        let sign = if c % 2 == 0 { 1 } else { -1 };
        det += sign * m[0][c] as i128 * int_det(&minor);
    }
    det
}
