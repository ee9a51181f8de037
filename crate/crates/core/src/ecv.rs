//! Equation coefficient vector (ECV) search.
//!
//! Given the effective-noise matrix `U`, find `L` linearly independent integer
//! vectors minimizing either the largest or the total quadratic form
//! `a^T U a`. Independent integer vectors form a matroid, so picking the
//! shortest vectors greedily while they stay independent yields the
//! successive minima, which minimize both the sum and the maximum at once.
//! The work is in enumerating every short vector: the Gram matrix is LLL
//! reduced and then enumerated Fincke-Pohst style inside a radius that is
//! guaranteed to contain the `L`-th successive minimum.

use crate::error::{IffError, Result};
use crate::iflr::{integer_rank, EquationSet};
use crate::linalg::{real_part, CMat, RMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    MaxEquation,
    SumEquation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcvProblem {
    /// Real part of the Hermitian `U` (the form is real for integer vectors).
    pub u: RMat,
    pub criterion: Criterion,
    /// Entry bound used by [`exhaustive_oracle`].
    pub coeff_bound: i64,
    /// Multiplier applied to the automatic enumeration radius.
    pub radius_scale: f64,
    /// Maximum number of enumerated candidates before the radius is halved.
    pub candidate_cap: usize,
}

impl EcvProblem {
    pub fn new(u: &CMat, criterion: Criterion) -> Self {
        Self::from_real(real_part(u), criterion)
    }

    pub fn from_real(u: RMat, criterion: Criterion) -> Self {
        EcvProblem { u, criterion, coeff_bound: 3, radius_scale: 1.0, candidate_cap: 200_000 }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn value(&self, a: &[i64]) -> f64 {
        quad_form(&self.u, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcvSolution {
    pub equations: EquationSet,
    /// `a_k^T U a_k` per row, non-decreasing.
    pub values: Vec<f64>,
    pub objective: f64,
}

impl EcvSolution {
    fn from_rows(problem: &EcvProblem, mut rows: Vec<(f64, Vec<i64>)>) -> Self {
        rows.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let objective = match problem.criterion {
            Criterion::MaxEquation => values.iter().cloned().fold(0.0, f64::max),
            Criterion::SumEquation => values.iter().sum(),
        };
        EcvSolution { equations: EquationSet::new(rows.into_iter().map(|r| r.1).collect()), values, objective }
    }

    pub fn objective_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn objective_max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

fn quad_form(u: &RMat, a: &[i64]) -> f64 {
    let mut acc = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &aj) in a.iter().enumerate() {
            acc += (ai * aj) as f64 * u[(i, j)];
        }
    }
    acc
}

/// Flips the sign so the first nonzero entry is positive.
fn canonical(mut a: Vec<i64>) -> Vec<i64> {
    if let Some(&first) = a.iter().find(|&&x| x != 0) {
        if first < 0 {
            a.iter_mut().for_each(|x| *x = -*x);
        }
    }
    a
}

fn validate(problem: &EcvProblem) -> Result<()> {
    let l = problem.dim();
    if l == 0 || problem.u.ncols() != l {
        return Err(IffError::InvalidProblem(format!("U must be square and non-empty, got {:?}", problem.u.shape())));
    }
    if problem.u.iter().any(|x| !x.is_finite()) {
        return Err(IffError::InvalidProblem("U has non-finite entries".into()));
    }
    Ok(())
}

/// LLL reduction of the lattice with Gram matrix `gram`.
///
/// Returns the unimodular transform `T` (columns are the reduced basis in
/// coefficient space).
fn lll_reduce(gram: &RMat, delta: f64) -> Vec<Vec<i64>> {
    let n = gram.nrows();
    let mut t: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect();
    if n < 2 {
        return t;
    }
    let gram_of = |t: &Vec<Vec<i64>>| -> RMat {
        RMat::from_fn(n, n, |i, j| {
            let mut acc = 0.0;
            for p in 0..n {
                if t[i][p] == 0 {
                    continue;
                }
                for q in 0..n {
                    acc += t[i][p] as f64 * gram[(p, q)] * t[j][q] as f64;
                }
            }
            acc
        })
    };
    // Gram-Schmidt coefficients and squared lengths from a Gram matrix.
    let gso = |g: &RMat| -> (RMat, Vec<f64>) {
        let mut mu = RMat::zeros(n, n);
        let mut bstar = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                let mut s = g[(i, j)];
                for k in 0..j {
                    s -= mu[(j, k)] * mu[(i, k)] * bstar[k];
                }
                mu[(i, j)] = if bstar[j] > 0.0 { s / bstar[j] } else { 0.0 };
            }
            let mut s = g[(i, i)];
            for k in 0..i {
                s -= mu[(i, k)] * mu[(i, k)] * bstar[k];
            }
            bstar[i] = s.max(0.0);
        }
        (mu, bstar)
    };

    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (mu, _) = gso(&gram_of(&t));
            let q = mu[(k, j)].round();
            if q != 0.0 && mu[(k, j)].abs() > 0.5 {
                let q = q as i64;
                let tj = t[j].clone();
                for (x, y) in t[k].iter_mut().zip(&tj) {
                    *x -= q * y;
                }
            }
        }
        let (mu, bstar) = gso(&gram_of(&t));
        if bstar[k] >= (delta - mu[(k, k - 1)] * mu[(k, k - 1)]) * bstar[k - 1] {
            k += 1;
        } else {
            t.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    t
}

/// Upper-triangular `R` with `gram = R^T R`.
fn cholesky_upper(gram: &RMat) -> Option<RMat> {
    let ch = gram.clone().cholesky()?;
    Some(ch.l().transpose())
}

/// All nonzero integer `z` with `||R z||^2 <= radius`, one per sign pair.
fn enumerate(r: &RMat, radius: f64, cap: usize) -> Option<Vec<Vec<i64>>> {
    let n = r.nrows();
    let mut out = Vec::new();
    let mut z = vec![0i64; n];
    // partial[i] = contribution of levels i..n
    fn recurse(
        r: &RMat,
        level: usize,
        budget: f64,
        z: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
        cap: usize,
    ) -> bool {
        let n = r.nrows();
        let rii = r[(level, level)];
        let mut center = 0.0;
        for j in (level + 1)..n {
            center -= r[(level, j)] / rii * z[j] as f64;
        }
        let half = (budget.max(0.0)).sqrt() / rii;
        let lo = (center - half).ceil() as i64;
        let hi = (center + half).floor() as i64;
        for v in lo..=hi {
            let d = v as f64 - center;
            let used = rii * rii * d * d;
            if used > budget {
                continue;
            }
            z[level] = v;
            if level == 0 {
                if z.iter().any(|&x| x != 0) {
                    out.push(z.clone());
                    if out.len() > cap {
                        return false;
                    }
                }
            } else if !recurse(r, level - 1, budget - used, z, out, cap) {
                return false;
            }
        }
        z[level] = 0;
        true
    }
    if recurse(r, n - 1, radius, &mut z, &mut out, 2 * cap) {
        Some(out)
    } else {
        None
    }
}

fn greedy_basis(problem: &EcvProblem, mut candidates: Vec<(f64, Vec<i64>)>) -> Option<Vec<(f64, Vec<i64>)>> {
    let l = problem.dim();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    candidates.dedup_by(|x, y| x.1 == y.1);
    let mut chosen: Vec<(f64, Vec<i64>)> = Vec::with_capacity(l);
    let mut rows: Vec<Vec<i64>> = Vec::with_capacity(l);
    for cand in candidates {
        rows.push(cand.1.clone());
        if integer_rank(&rows) == rows.len() {
            chosen.push(cand);
            if chosen.len() == l {
                return Some(chosen);
            }
        } else {
            rows.pop();
        }
    }
    None
}

/// Successive-minima ECV search (LLL + bounded enumeration + greedy selection).
pub fn search(problem: &EcvProblem) -> Result<EcvSolution> {
    validate(problem)?;
    let l = problem.dim();
    let q = &problem.u;
    let trace = q.trace();
    let reg = if trace > 0.0 { 1e-10 * trace / l as f64 } else { 1e-10 };
    let gram = q + RMat::identity(l, l) * reg;

    let t = lll_reduce(&gram, 0.99);
    // Reduced basis vectors in coefficient space, as rows.
    let basis: Vec<Vec<i64>> = (0..l).map(|i| t[i].clone()).collect();
    let reduced_gram = RMat::from_fn(l, l, |i, j| {
        let mut acc = 0.0;
        for p in 0..l {
            for s in 0..l {
                acc += basis[i][p] as f64 * gram[(p, s)] * basis[j][s] as f64;
            }
        }
        acc
    });
    let r = cholesky_upper(&reduced_gram)
        .ok_or_else(|| IffError::InvalidProblem("U is not positive semidefinite".into()))?;
    let mut radius = (0..l).map(|i| reduced_gram[(i, i)]).fold(0.0, f64::max) * (1.0 + 1e-6) * problem.radius_scale;

    const RETRIES: usize = 5;
    for attempt in 0..=RETRIES {
        let Some(zs) = enumerate(&r, radius, problem.candidate_cap) else {
            radius *= 0.5;
            if attempt == RETRIES {
                break;
            }
            continue;
        };
        let mut candidates: Vec<(f64, Vec<i64>)> = zs
            .into_iter()
            .map(|z| {
                let a: Vec<i64> = (0..l).map(|p| (0..l).map(|i| z[i] * basis[i][p]).sum()).collect();
                canonical(a)
            })
            .map(|a| (quad_form(q, &a), a))
            .collect();
        if attempt > 0 {
            // A shrunken radius may miss a full basis; the reduced basis always is one.
            candidates.extend(basis.iter().map(|b| canonical(b.clone())).map(|a| (quad_form(q, &a), a)));
        }
        if let Some(rows) = greedy_basis(problem, candidates) {
            return Ok(EcvSolution::from_rows(problem, rows));
        }
        radius *= 2.0;
    }
    Err(IffError::EnumerationOverflow { cap: problem.candidate_cap, retries: RETRIES })
}

/// Provably optimal ECVs by brute force over entries in `[-bound, bound]`.
pub fn exhaustive_oracle(problem: &EcvProblem) -> Result<EcvSolution> {
    validate(problem)?;
    let l = problem.dim();
    let bound = problem.coeff_bound;
    if l > 4 || !(1..=3).contains(&bound) {
        return Err(IffError::OracleTooLarge(format!("L = {l}, bound = {bound} (limits: L <= 4, 1 <= bound <= 3)")));
    }
    let width = (2 * bound + 1) as usize;
    let mut cands: Vec<(f64, Vec<i64>)> = Vec::new();
    for idx in 0..width.pow(l as u32) {
        let mut rem = idx;
        let a: Vec<i64> = (0..l)
            .map(|_| {
                let d = (rem % width) as i64 - bound;
                rem /= width;
                d
            })
            .collect();
        if a.iter().all(|&x| x == 0) || canonical(a.clone()) != a {
            continue;
        }
        cands.push((problem.value(&a), a));
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));

    struct Search<'a> {
        cands: &'a [(f64, Vec<i64>)],
        l: usize,
        criterion: Criterion,
        best: f64,
        best_set: Vec<usize>,
        chosen: Vec<usize>,
    }
    impl Search<'_> {
        fn score(&self, partial: f64, v: f64) -> f64 {
            match self.criterion {
                Criterion::SumEquation => partial + v,
                Criterion::MaxEquation => partial.max(v),
            }
        }
        fn run(&mut self, start: usize, partial: f64) {
            if self.chosen.len() == self.l {
                if partial < self.best {
                    self.best = partial;
                    self.best_set = self.chosen.clone();
                }
                return;
            }
            let remaining = (self.l - self.chosen.len()) as f64;
            for i in start..self.cands.len() {
                let v = self.cands[i].0;
                let lower = match self.criterion {
                    Criterion::SumEquation => partial + v * remaining,
                    Criterion::MaxEquation => partial.max(v),
                };
                if lower >= self.best {
                    break;
                }
                let mut rows: Vec<Vec<i64>> = self.chosen.iter().map(|&c| self.cands[c].1.clone()).collect();
                rows.push(self.cands[i].1.clone());
                if integer_rank(&rows) < rows.len() {
                    continue;
                }
                self.chosen.push(i);
                let next = self.score(partial, v);
                self.run(i + 1, next);
                self.chosen.pop();
            }
        }
    }
    let mut s = Search { cands: &cands, l, criterion: problem.criterion, best: f64::INFINITY, best_set: vec![], chosen: vec![] };
    s.run(0, 0.0);
    if s.best_set.len() != l {
        return Err(IffError::InvalidProblem("no independent set within the bound".into()));
    }
    let rows = s.best_set.iter().map(|&i| cands[i].clone()).collect();
    Ok(EcvSolution::from_rows(problem, rows))
}
