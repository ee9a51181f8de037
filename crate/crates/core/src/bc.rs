//! Broadcast phase: alternating design of the relay precoder `W` and the user
//! filters `D_k`.
//!
//! Every user decodes all `L` equations. The per-user decoding noise is
//!
//! ```text
//! e_k = ||D_k G_k W - I||^2 + sigma_u^2 ||D_k||^2 + sigma_g^2 ||W||^2 ||D_k||^2
//! ```
//!
//! where the last term (expected downlink estimation error) is present only
//! in robust mode. Designs see the estimated downlink channels.

use crate::cone::{self, MinMaxProblem, SolveStatus};
use crate::error::{IffError, Result};
use crate::linalg::{fro2, hermitian_solve, identity, kron, lift_matrix, lift_vector, mat_of, pinv, real, unlift_vector, vec_of, CMat, CVec};
use crate::model::{ChannelSet, Csi, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcCriterion {
    SumMse,
    MaxMse,
}

/// Inputs of a broadcast design, independent of how the system is indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct BcProblem {
    /// Downlink channels seen by the designer, `N_k x N_r` each.
    pub channels: Vec<CMat>,
    pub equations: usize,
    pub relay_power: f64,
    pub sigma2_u: f64,
    /// Downlink error variance accounted for (0 for a non-robust design).
    pub sigma2_g: f64,
    pub delta: f64,
    pub max_iters: usize,
}

impl BcProblem {
    pub fn from_system(cfg: &SystemConfig, channels: &ChannelSet, robust: bool) -> Self {
        BcProblem {
            channels: channels.downlink(Csi::Estimated).to_vec(),
            equations: cfg.equations(),
            relay_power: cfg.relay_power,
            sigma2_u: cfg.user_noise,
            sigma2_g: if robust { cfg.downlink_error } else { 0.0 },
            delta: cfg.delta,
            max_iters: cfg.max_iters,
        }
    }

    fn validate(&self) -> Result<()> {
        let nr = self.channels.first().map(|g| g.ncols()).unwrap_or(0);
        if self.channels.is_empty() || nr == 0 || self.equations == 0 {
            return Err(IffError::InvalidProblem("broadcast design needs users, relay antennas and equations".into()));
        }
        if self.channels.iter().any(|g| g.ncols() != nr) {
            return Err(IffError::DimensionMismatch("downlink channels disagree on relay antennas".into()));
        }
        Ok(())
    }

    fn relay_antennas(&self) -> usize {
        self.channels[0].ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcDesign {
    pub w: CMat,
    pub d: Vec<CMat>,
    pub rho: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub criterion: BcCriterion,
    pub robust: bool,
    pub solver_failures: usize,
}

impl BcDesign {
    pub fn user_mse(&self, problem: &BcProblem) -> Vec<f64> {
        self.d
            .iter()
            .zip(&problem.channels)
            .map(|(d, g)| broadcast_mse(&self.w, d, g, problem.sigma2_u, problem.sigma2_g))
            .collect()
    }
}

/// Decoding noise of one user; `sigma2_g = 0` gives the non-robust form.
pub fn broadcast_mse(w: &CMat, d: &CMat, g: &CMat, sigma2_u: f64, sigma2_g: f64) -> f64 {
    let l = d.nrows();
    let e = fro2(&(d * g * w - identity(l)));
    let dn = fro2(d);
    e + sigma2_u * dn + sigma2_g * fro2(w) * dn
}

/// `W^(0)`: `sqrt(P_r / L)` on the leading diagonal.
pub fn initial_relay_precoder(nr: usize, l: usize, relay_power: f64) -> CMat {
    let mut w = CMat::zeros(nr, l);
    let s = (relay_power / l as f64).sqrt();
    for i in 0..nr.min(l) {
        w[(i, i)] = real(s);
    }
    w
}

/// Optimal filter of one user for fixed `W`.
pub fn optimal_filter(w: &CMat, g: &CMat, sigma2_u: f64, sigma2_g: f64) -> CMat {
    let gw = g * w;
    let nk = g.nrows();
    let s = sigma2_u + sigma2_g * fro2(w);
    let m = &gw * gw.adjoint() + identity(nk) * real(s);
    // D = W^* G^* M^-1, i.e. D^* = M^-1 G W
    hermitian_solve(&m, &gw).adjoint()
}

fn filters(problem: &BcProblem, w: &CMat) -> Vec<CMat> {
    problem.channels.iter().map(|g| optimal_filter(w, g, problem.sigma2_u, problem.sigma2_g)).collect()
}

fn aggregate(criterion: BcCriterion, values: &[f64]) -> f64 {
    match criterion {
        BcCriterion::SumMse => values.iter().sum(),
        BcCriterion::MaxMse => values.iter().cloned().fold(0.0, f64::max),
    }
}

fn objective(problem: &BcProblem, criterion: BcCriterion, w: &CMat, d: &[CMat]) -> f64 {
    let values: Vec<f64> = d
        .iter()
        .zip(&problem.channels)
        .map(|(d, g)| broadcast_mse(w, d, g, problem.sigma2_u, problem.sigma2_g))
        .collect();
    aggregate(criterion, &values)
}

/// Pieces of the sum-criterion relay update: `(sum G^* D^* D G, sum G^* D^*, sigma_g^2 sum ||D||^2)`.
fn relay_terms(problem: &BcProblem, d: &[CMat]) -> (CMat, CMat, f64) {
    let nr = problem.relay_antennas();
    let l = problem.equations;
    let mut lhs = CMat::zeros(nr, nr);
    let mut rhs = CMat::zeros(nr, l);
    let mut dsum = 0.0;
    for (dk, g) in d.iter().zip(&problem.channels) {
        let dg = dk * g;
        lhs += dg.adjoint() * &dg;
        rhs += dg.adjoint();
        dsum += fro2(dk);
    }
    (lhs, rhs, problem.sigma2_g * dsum)
}

/// Closed-form relay precoder for fixed filters; returns `(W, rho)`.
pub fn sum_relay_update(problem: &BcProblem, d: &[CMat]) -> (CMat, f64) {
    let nr = problem.relay_antennas();
    let (lhs, rhs, reg) = relay_terms(problem, d);
    let budget = problem.relay_power;
    let solve_at = |rho: f64| -> (CMat, f64) {
        let m = &lhs + identity(nr) * real(reg + rho);
        let w = if reg + rho > 0.0 { hermitian_solve(&m, &rhs) } else { pinv(&m) * &rhs };
        let p = fro2(&w);
        (w, p)
    };
    let (w0, p0) = solve_at(0.0);
    if p0.is_finite() && p0 <= budget {
        return (w0, 0.0);
    }
    let mut hi = 1.0;
    let mut at_hi = solve_at(hi);
    while at_hi.1 > budget && hi < 1e300 {
        hi *= 2.0;
        at_hi = solve_at(hi);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if (budget - at_hi.1).abs() <= 1e-8 * budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let at_mid = solve_at(mid);
        if at_mid.1 > budget {
            lo = mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    (at_hi.0, hi)
}

/// Stationarity residual of the relay update at `(W, rho)`.
pub fn relay_stationarity(problem: &BcProblem, d: &[CMat], w: &CMat, rho: f64) -> f64 {
    let nr = problem.relay_antennas();
    let (lhs, rhs, reg) = relay_terms(problem, d);
    fro2(&((lhs + identity(nr) * real(reg + rho)) * w - rhs)).sqrt()
}

/// Min-max relay problem over `u = lift(vec W)`; cone `k` evaluates to the
/// decoding noise of user `k`.
pub fn build_bc_minmax(problem: &BcProblem, d: &[CMat]) -> MinMaxProblem {
    let nr = problem.relay_antennas();
    let l = problem.equations;
    let n = nr * l;
    let target = vec_of(&identity(l));
    let mut out = MinMaxProblem::new(2 * n);
    for (dk, g) in d.iter().zip(&problem.channels) {
        let dnorm = fro2(dk).sqrt();
        let robust = problem.sigma2_g > 0.0;
        let rows = 1 + l * l + if robust { n } else { 0 };
        let mut m = CMat::zeros(rows, n);
        let mut c = CVec::zeros(rows);
        c[0] = real(problem.sigma2_u.sqrt() * dnorm);
        m.view_mut((1, 0), (l * l, n)).copy_from(&kron(&identity(l), &(dk * g)));
        c.rows_mut(1, l * l).copy_from(&(-&target));
        if robust {
            m.view_mut((1 + l * l, 0), (n, n)).copy_from(&(identity(n) * real(problem.sigma2_g.sqrt() * dnorm)));
        }
        out = out.with_cone(lift_matrix(&m), lift_vector(&c));
    }
    out.with_ball(lift_matrix(&identity(n)), problem.relay_power)
}

/// Alternating design for an explicit broadcast problem.
pub fn design_bc(problem: &BcProblem, criterion: BcCriterion) -> Result<BcDesign> {
    problem.validate()?;
    let nr = problem.relay_antennas();
    let l = problem.equations;
    let mut w = initial_relay_precoder(nr, l, problem.relay_power);
    let mut d = filters(problem, &w);
    let mut rho = 0.0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut solver_failures = 0;
    let mut last_solve_ok = true;

    while iterations < problem.max_iters {
        iterations += 1;
        let (candidate, r) = match criterion {
            BcCriterion::SumMse => {
                d = filters(problem, &w);
                sum_relay_update(problem, &d)
            }
            BcCriterion::MaxMse => {
                let sol = cone::solve(&build_bc_minmax(problem, &d))?;
                last_solve_ok = sol.status == SolveStatus::Optimal;
                if !last_solve_ok {
                    solver_failures += 1;
                }
                (mat_of(&unlift_vector(&sol.u), nr, l), 0.0)
            }
        };
        let old = objective(problem, criterion, &w, &d);
        let new = objective(problem, criterion, &candidate, &d);
        let next = if new <= old {
            rho = r;
            candidate
        } else {
            w.clone()
        };
        let change = fro2(&(&next - &w));
        w = next;
        if criterion == BcCriterion::MaxMse {
            d = filters(problem, &w);
        }
        trace.push(objective(problem, criterion, &w, &d));
        if change <= problem.delta {
            converged = true;
            break;
        }
    }
    d = filters(problem, &w);
    Ok(BcDesign { w, d, rho, trace, iterations, converged: converged && last_solve_ok, criterion, robust: problem.sigma2_g > 0.0, solver_failures })
}

/// Sum-of-user-noise broadcast design.
pub fn design_sum_mse(channels: &ChannelSet, cfg: &SystemConfig, robust: bool) -> Result<BcDesign> {
    cfg.validate()?;
    let mut design = design_bc(&BcProblem::from_system(cfg, channels, robust), BcCriterion::SumMse)?;
    design.robust = robust;
    Ok(design)
}

/// Worst-user-noise broadcast design.
pub fn design_max_mse(channels: &ChannelSet, cfg: &SystemConfig, robust: bool) -> Result<BcDesign> {
    cfg.validate()?;
    let mut design = design_bc(&BcProblem::from_system(cfg, channels, robust), BcCriterion::MaxMse)?;
    design.robust = robust;
    Ok(design)
}
