//! Min-max quadratic problems
//!
//! ```text
//! minimize x  s.t.  ||M_j u + c_j||^2 <= x  (j = 1..J),   ||S_m u||^2 <= rho_m
//! ```
//!
//! solved with a log-barrier interior-point method on `(u, x)`. Every outer
//! iteration yields a feasible point (an upper bound on the optimum) and a
//! Lagrange dual value (a lower bound), so the returned bracket is certified.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{IffError, Result};
use crate::linalg::{RMat, RVec};

/// `||m u + c||^2`
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub m: RMat,
    pub c: RVec,
}

/// `||s u||^2 <= budget`
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub s: RMat,
    pub budget: f64,
}

impl Cone {
    pub fn new(m: RMat, c: RVec) -> Self {
        Cone { m, c }
    }

    pub fn value(&self, u: &RVec) -> f64 {
        (&self.m * u + &self.c).norm_squared()
    }
}

impl Ball {
    pub fn new(s: RMat, budget: f64) -> Self {
        Ball { s, budget }
    }

    pub fn value(&self, u: &RVec) -> f64 {
        (&self.s * u).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxProblem {
    pub dim: usize,
    pub cones: Vec<Cone>,
    pub balls: Vec<Ball>,
    /// Relative tolerance on the optimal value.
    pub tol: f64,
    /// Budget of Newton steps over the whole solve.
    pub max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxSolution {
    pub u: RVec,
    /// `max_j ||M_j u + c_j||^2` at `u`.
    pub x: f64,
    /// Certified lower bound on the optimum.
    pub lower: f64,
    pub status: SolveStatus,
    /// Relative gap `(x - lower) / max(1, x)`.
    pub kkt_residual: f64,
    /// `(lower, upper)` after every outer iteration.
    pub bounds: Vec<(f64, f64)>,
    pub newton_steps: usize,
}

impl MinMaxProblem {
    pub fn new(dim: usize) -> Self {
        MinMaxProblem { dim, cones: Vec::new(), balls: Vec::new(), tol: 1e-6, max_iters: 2000 }
    }

    pub fn with_cone(mut self, m: RMat, c: RVec) -> Self {
        self.cones.push(Cone::new(m, c));
        self
    }

    pub fn with_ball(mut self, s: RMat, budget: f64) -> Self {
        self.balls.push(Ball::new(s, budget));
        self
    }

    pub fn objective(&self, u: &RVec) -> f64 {
        self.cones.iter().map(|c| c.value(u)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest relative violation `max(0, ||S u||^2 - rho) / max(1, rho)`.
    pub fn violation(&self, u: &RVec) -> f64 {
        self.balls
            .iter()
            .map(|b| (b.value(u) - b.budget).max(0.0) / b.budget.max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cones.is_empty() {
            return Err(IffError::InvalidProblem("at least one cone is required".into()));
        }
        for (j, c) in self.cones.iter().enumerate() {
            if c.m.ncols() != self.dim || c.m.nrows() != c.c.len() {
                return Err(IffError::DimensionMismatch(format!("cone {j}: map {:?}, offset {}", c.m.shape(), c.c.len())));
            }
        }
        for (m, b) in self.balls.iter().enumerate() {
            if b.s.ncols() != self.dim {
                return Err(IffError::DimensionMismatch(format!("ball {m}: map {:?}", b.s.shape())));
            }
            if !b.budget.is_finite() {
                return Err(IffError::InvalidProblem(format!("ball {m}: budget is not finite")));
            }
        }
        Ok(())
    }
}

struct Barrier<'a> {
    p: &'a MinMaxProblem,
    /// `M_j^T M_j` per cone.
    cone_gram: Vec<RMat>,
    /// `S_m^T S_m` per ball.
    ball_gram: Vec<RMat>,
    t: f64,
}

impl<'a> Barrier<'a> {
    fn new(p: &'a MinMaxProblem) -> Self {
        Barrier {
            p,
            cone_gram: p.cones.iter().map(|c| c.m.tr_mul(&c.m)).collect(),
            ball_gram: p.balls.iter().map(|b| b.s.tr_mul(&b.s)).collect(),
            t: 1.0,
        }
    }

    /// Barrier value, or `None` outside the strict interior.
    fn value(&self, u: &RVec, x: f64) -> Option<f64> {
        let mut acc = self.t * x;
        for c in &self.p.cones {
            let s = x - c.value(u);
            if s <= 0.0 {
                return None;
            }
            acc -= s.ln();
        }
        for b in &self.p.balls {
            let w = b.budget - b.value(u);
            if w <= 0.0 {
                return None;
            }
            acc -= w.ln();
        }
        Some(acc)
    }

    /// Gradient and Hessian over `(u, x)`, `x` last.
    fn derivatives(&self, u: &RVec, x: f64) -> (RVec, RMat) {
        let n = self.p.dim;
        let mut g = RVec::zeros(n + 1);
        let mut h = RMat::zeros(n + 1, n + 1);
        g[n] = self.t;
        for (c, mtm) in self.p.cones.iter().zip(&self.cone_gram) {
            let r = &c.m * u + &c.c;
            let s = x - r.norm_squared();
            let grad_f = c.m.tr_mul(&r) * 2.0;
            g.rows_mut(0, n).axpy(1.0 / s, &grad_f, 1.0);
            g[n] -= 1.0 / s;
            let mut huu = h.view_mut((0, 0), (n, n));
            huu.zip_apply(mtm, |a, b| *a += 2.0 / s * b);
            huu.ger(1.0 / (s * s), &grad_f, &grad_f, 1.0);
            h[(n, n)] += 1.0 / (s * s);
            for i in 0..n {
                h[(i, n)] -= grad_f[i] / (s * s);
                h[(n, i)] -= grad_f[i] / (s * s);
            }
        }
        for (b, sts) in self.p.balls.iter().zip(&self.ball_gram) {
            let grad_g = sts * u * 2.0;
            let w = b.budget - 0.5 * u.dot(&grad_g);
            g.rows_mut(0, n).axpy(1.0 / w, &grad_g, 1.0);
            let mut huu = h.view_mut((0, 0), (n, n));
            huu.zip_apply(sts, |a, b| *a += 2.0 / w * b);
            huu.ger(1.0 / (w * w), &grad_g, &grad_g, 1.0);
        }
        (g, h)
    }
}

fn solve_spd(h: &RMat, g: &RVec) -> RVec {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let reg = h + RMat::identity(n, n) * (1e-14 * scale);
    if let Some(ch) = reg.clone().cholesky() {
        return ch.solve(g);
    }
    let svd = reg.svd(true, true);
    svd.solve(g, 1e-14 * scale).unwrap_or_else(|_| RVec::zeros(n))
}

/// Lagrange dual value for cone weights `lambda` (summing to one) and ball
/// weights `nu`; `None` when the inner minimization is unbounded.
fn dual_value(p: &MinMaxProblem, lambda: &[f64], nu: &[f64]) -> Option<f64> {
    let n = p.dim;
    let mut a = RMat::zeros(n, n);
    let mut b = RVec::zeros(n);
    let mut c0 = 0.0;
    for (c, &l) in p.cones.iter().zip(lambda) {
        a += c.m.transpose() * &c.m * l;
        b += c.m.transpose() * &c.c * l;
        c0 += l * c.c.norm_squared();
    }
    for (ball, &v) in p.balls.iter().zip(nu) {
        a += ball.s.transpose() * &ball.s * v;
        c0 -= v * ball.budget;
    }
    if n == 0 {
        return Some(c0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-12 * smax.max(1e-300);
    let y = svd.solve(&b, cutoff).ok()?;
    let resid = (&a * &y - &b).norm();
    if resid > 1e-9 * (b.norm() + 1.0) {
        return None;
    }
    // min_u u^T A u + 2 b^T u + c0 = c0 - b^T A^+ b
    Some(c0 - b.dot(&y))
}

/// Interior-point solve with a certified optimality bracket.
pub fn solve(p: &MinMaxProblem) -> Result<MinMaxSolution> {
    p.validate()?;
    let n = p.dim;
    let u0 = RVec::zeros(n);
    if p.balls.iter().any(|b| b.budget <= 0.0) {
        let x = p.objective(&u0);
        return Ok(MinMaxSolution {
            u: u0,
            x,
            lower: f64::NEG_INFINITY,
            status: SolveStatus::Infeasible,
            kkt_residual: f64::INFINITY,
            bounds: Vec::new(),
            newton_steps: 0,
        });
    }

    let constraints = (p.cones.len() + p.balls.len()) as f64;
    let mut u = u0;
    let mut x = p.objective(&u) + 1.0;
    let mut best_u = u.clone();
    let mut upper = p.objective(&u);
    let mut lower = f64::NEG_INFINITY;
    let mut bounds = Vec::new();
    let mut t = 1.0 / x.abs().max(1.0);
    let mut newton_steps = 0;
    let mut status = SolveStatus::MaxIters;

    let mut barrier = Barrier::new(p);
    'outer: loop {
        barrier.t = t;
        // Centering.
        for _ in 0..100 {
            if newton_steps >= p.max_iters {
                break 'outer;
            }
            newton_steps += 1;
            let (g, h) = barrier.derivatives(&u, x);
            let step = -solve_spd(&h, &g);
            let decrement = -g.dot(&step);
            if decrement <= 1e-12 || !decrement.is_finite() {
                break;
            }
            let phi0 = barrier.value(&u, x).expect("iterate stays interior");
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let un = &u + step.rows(0, n) * alpha;
                let xn = x + step[n] * alpha;
                if let Some(phi) = barrier.value(&un, xn) {
                    if phi <= phi0 - 0.25 * alpha * decrement {
                        u = un;
                        x = xn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved || decrement < 1e-10 {
                break;
            }
        }

        let fu = p.objective(&u);
        if fu < upper {
            upper = fu;
            best_u = u.clone();
        }
        // Dual estimate from the central-path multipliers.
        let lambda: Vec<f64> = p.cones.iter().map(|c| 1.0 / (t * (x - c.value(&u)))).collect();
        let total: f64 = lambda.iter().sum();
        if total > 0.0 && total.is_finite() {
            let lambda: Vec<f64> = lambda.iter().map(|l| l / total).collect();
            let nu: Vec<f64> = p.balls.iter().map(|b| 1.0 / (t * (b.budget - b.value(&u))) / total).collect();
            if let Some(d) = dual_value(p, &lambda, &nu) {
                lower = lower.max(d.min(upper));
            }
        }
        bounds.push((lower, upper));

        let scale = upper.abs().max(1.0);
        if upper - lower <= p.tol * 0.1 * scale || constraints / t <= 1e-13 * scale {
            status = if upper - lower <= p.tol * scale { SolveStatus::Optimal } else { SolveStatus::MaxIters };
            break;
        }
        t *= 50.0;
    }
    if status == SolveStatus::MaxIters && upper - lower <= p.tol * upper.abs().max(1.0) {
        status = SolveStatus::Optimal;
    }
    Ok(MinMaxSolution {
        x: upper,
        kkt_residual: (upper - lower) / upper.abs().max(1.0),
        u: best_u,
        lower,
        status,
        bounds,
        newton_steps,
    })
}

/// Euclidean projection onto `{u : ||S u||^2 <= rho}`.
fn project_ellipsoid(s: &RMat, rho: f64, y: &RVec) -> RVec {
    let q = s.transpose() * s;
    if y.dot(&(&q * y)) <= rho {
        return y.clone();
    }
    let eig = q.symmetric_eigen();
    let z = eig.eigenvectors.transpose() * y;
    let lam = &eig.eigenvalues;
    // u(m) = (I + m Q)^-1 y, with ||S u(m)||^2 decreasing in m.
    let g = |m: f64| -> f64 { (0..z.len()).map(|i| lam[i].max(0.0) * (z[i] / (1.0 + m * lam[i].max(0.0))).powi(2)).sum() };
    let mut hi = 1.0;
    while g(hi) > rho && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = RVec::from_fn(z.len(), |i, _| z[i] / (1.0 + hi * lam[i].max(0.0)));
    &eig.eigenvectors * w
}

/// Projection onto the intersection of all balls (Dykstra's algorithm).
fn project_all(p: &MinMaxProblem, y: &RVec) -> RVec {
    match p.balls.len() {
        0 => y.clone(),
        1 => project_ellipsoid(&p.balls[0].s, p.balls[0].budget, y),
        m => {
            let mut x = y.clone();
            let mut incr = vec![RVec::zeros(y.len()); m];
            for _ in 0..200 {
                let prev = x.clone();
                for (i, b) in p.balls.iter().enumerate() {
                    let z = &x + &incr[i];
                    let nx = project_ellipsoid(&b.s, b.budget, &z);
                    incr[i] = z - &nx;
                    x = nx;
                }
                if (&x - prev).norm() < 1e-14 {
                    break;
                }
            }
            x
        }
    }
}

/// Brute-force reference solver for `dim <= 4`: multi-start projected
/// subgradient descent followed by a shrinking random pattern search.
pub fn oracle_solve(p: &MinMaxProblem) -> Result<MinMaxSolution> {
    p.validate()?;
    if p.dim > 4 {
        return Err(IffError::OracleTooLarge(format!("dim = {} (limit 4)", p.dim)));
    }
    let n = p.dim;
    if n == 0 {
        let u = RVec::zeros(0);
        let x = p.objective(&u);
        return Ok(MinMaxSolution { u, x, lower: x, status: SolveStatus::Optimal, kkt_residual: 0.0, bounds: vec![], newton_steps: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0ac1e_u64 ^ n as u64);
    let scale = p.cones.iter().map(|c| c.c.norm()).fold(1.0, f64::max);
    let mut best_u = project_all(p, &RVec::zeros(n));
    let mut best = p.objective(&best_u);
    let iters = 100_000;
    let starts = 4;
    for start in 0..starts {
        let mut u = if start == 0 {
            RVec::zeros(n)
        } else {
            RVec::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        };
        u = project_all(p, &u);
        for k in 1..=iters / starts {
            let (j, _) = p
                .cones
                .iter()
                .enumerate()
                .map(|(j, c)| (j, c.value(&u)))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let c = &p.cones[j];
            let g = c.m.transpose() * (&c.m * &u + &c.c) * 2.0;
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            let step = scale / (k as f64).sqrt();
            u = project_all(p, &(&u - g * (step / gn)));
            let v = p.objective(&u);
            if v < best {
                best = v;
                best_u = u.clone();
            }
        }
    }
    // Pattern search refinement.
    let mut radius = 0.1 * scale.max(best_u.norm());
    while radius > 1e-12 {
        let mut improved = false;
        for _ in 0..40 * n {
            let d = RVec::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dn = d.norm().max(1e-300);
            let cand = project_all(p, &(&best_u + d * (radius / dn)));
            let v = p.objective(&cand);
            if v < best {
                best = v;
                best_u = cand;
                improved = true;
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    Ok(MinMaxSolution { u: best_u, x: best, lower: f64::NAN, status: SolveStatus::Optimal, kkt_residual: 0.0, bounds: vec![], newton_steps: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> RVec {
        RVec::from_row_slice(xs)
    }

    #[test]
    fn unconstrained_projection() {
        let p = MinMaxProblem::new(2).with_cone(-RMat::identity(2, 2), v(&[1.0, -2.0]));
        let s = solve(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.x.abs() < 1e-6, "{}", s.x);
        assert!((&s.u - v(&[1.0, -2.0])).norm() < 1e-3);
    }

    #[test]
    fn projection_onto_unit_ball() {
        let p = MinMaxProblem::new(2)
            .with_cone(RMat::identity(2, 2), v(&[-2.0, 0.0]))
            .with_ball(RMat::identity(2, 2), 1.0);
        let s = solve(&p).unwrap();
        assert!((s.x - 1.0).abs() < 1e-6);
        assert!((&s.u - v(&[1.0, 0.0])).norm() < 1e-3);
        assert!(p.violation(&s.u) <= 1e-6);
    }

    #[test]
    fn two_scalar_cones() {
        let one = RMat::identity(1, 1);
        let p = MinMaxProblem::new(1).with_cone(one.clone(), v(&[-1.0])).with_cone(one, v(&[1.0]));
        let s = solve(&p).unwrap();
        assert!((s.x - 1.0).abs() < 1e-6);
        assert!(s.u[0].abs() < 1e-3);
        let o = oracle_solve(&p).unwrap();
        assert!((o.x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_budget_is_infeasible() {
        let p = MinMaxProblem::new(1).with_cone(RMat::identity(1, 1), v(&[1.0])).with_ball(RMat::identity(1, 1), 0.0);
        assert_eq!(solve(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn bracket_is_monotone() {
        let p = MinMaxProblem::new(2)
            .with_cone(RMat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), v(&[-3.0, 1.0]))
            .with_cone(RMat::identity(2, 2), v(&[1.0, 2.0]))
            .with_ball(RMat::identity(2, 2), 2.0);
        let s = solve(&p).unwrap();
        for w in s.bounds.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1);
        }
        for &(lo, hi) in &s.bounds {
            assert!(lo <= s.x + 1e-9 && hi >= s.x - 1e-9);
        }
    }

    #[test]
    fn oracle_rejects_large_dimension() {
        let p = MinMaxProblem::new(5).with_cone(RMat::identity(5, 5), RVec::zeros(5));
        assert!(matches!(oracle_solve(&p), Err(IffError::OracleTooLarge(_))));
    }
}
