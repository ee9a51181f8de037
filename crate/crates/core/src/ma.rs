//! Multiple-access phase: alternating design of the user precoders `V`,
//! equation coefficients `A` and relay projections `B`.
//!
//! Designs run on the estimated uplink channels. In robust mode the expected
//! contribution of the estimation error, `sigma_h^2 ||b||^2 sum_l ||V_l||^2 / 2`,
//! is added to every equation's effective noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cone::{self, MinMaxProblem, SolveStatus};
use crate::ecv::{self, Criterion, EcvProblem};
use crate::error::Result;
use crate::iflr::{compute_u, projection_matrix, robust_penalty, EquationSet, NoiseProfile};
use crate::linalg::{complex_gaussian, fro2, hermitian_solve, identity, kron, lift_matrix, lift_vector, pinv, real, unlift_vector, vec_of, CMat, CVec, RVec};
use crate::model::{alignment_map, effective_channel, ChannelSet, Csi, PrecoderSet, SystemConfig};

const INIT_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq)]
pub struct MaDesign {
    pub precoders: PrecoderSet,
    pub equations: EquationSet,
    /// Row `i` is `b_i^*`, the closed-form projection for the final `(V, A)`.
    pub projection: CMat,
    /// Design-side effective noise (estimated channels, robust penalty if any).
    pub noise: NoiseProfile,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub criterion: Criterion,
    pub robust: bool,
    /// Power multipliers `mu_k` of the last precoder update (sum criterion).
    pub multipliers: Vec<f64>,
    /// Stationarity residual of the last closed-form update, per pair.
    pub kkt_residuals: Vec<f64>,
    /// Precoder updates whose cone solve did not certify optimality.
    pub solver_failures: usize,
}

impl MaDesign {
    pub fn objective(&self) -> f64 {
        match self.criterion {
            Criterion::SumEquation => self.noise.sum(),
            Criterion::MaxEquation => self.noise.max(),
        }
    }
}

/// Random feasible start: Gaussian lead precoders, aligned, each pair scaled
/// to half its power budget. Depends only on `cfg.seed` and the channels.
pub fn initial_precoders(cfg: &SystemConfig, channels: &ChannelSet) -> Result<PrecoderSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_SEED_MIX);
    let leads: Vec<CMat> =
        (0..cfg.pairs).map(|k| complex_gaussian(&mut rng, cfg.user_antennas[k], cfg.messages[k], 1.0)).collect();
    let h = channels.uplink(Csi::Estimated);
    let leads = leads
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            let phi = alignment_map(&h[k], &h[cfg.partner(k)]);
            let power = fro2(&v) + fro2(&(&phi * &v));
            let scale = if power > 0.0 { (0.5 * cfg.pair_power[k] / power).sqrt() } else { 0.0 };
            v * real(scale)
        })
        .collect();
    PrecoderSet::from_leads(cfg, channels, Csi::Estimated, leads)
}

fn error_variance(cfg: &SystemConfig, robust: bool) -> f64 {
    if robust {
        cfg.uplink_error
    } else {
        0.0
    }
}

/// Per-equation design noise `c ||b_i||^2 + ||Heff^* b_i - a_i||^2` for
/// explicit projections (rows of `projection` are `b_i^*`).
pub fn design_noise(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    equations: &EquationSet,
    projection: &CMat,
    sigma2_h: f64,
) -> Result<Vec<f64>> {
    let heff = effective_channel(cfg, channels, precoders, Csi::Estimated)?;
    let c = 0.5 * (cfg.relay_noise + robust_penalty(precoders, sigma2_h));
    // row i of B Heff is b_i^* Heff, the conjugate transpose of Heff^* b_i.
    let bh = projection * &heff;
    Ok((0..equations.len())
        .map(|i| {
            let b2: f64 = projection.row(i).iter().map(|z| z.norm_sqr()).sum();
            let resid: f64 = equations.row(i).iter().enumerate().map(|(j, &a)| (bh[(i, j)] - real(a as f64)).norm_sqr()).sum();
            c * b2 + resid
        })
        .collect())
}

fn aggregate(criterion: Criterion, values: &[f64]) -> f64 {
    match criterion {
        Criterion::SumEquation => values.iter().sum(),
        Criterion::MaxEquation => values.iter().cloned().fold(0.0, f64::max),
    }
}

struct PairStep {
    v: CMat,
    mu: f64,
    kkt: f64,
}

/// Closed-form lead precoder of one pair for the sum criterion.
fn sum_step_pair(cfg: &SystemConfig, h: &[CMat], pair: usize, projection: &CMat, equations: &EquationSet, beta: f64) -> PairStep {
    let hk = &h[pair];
    let phi = alignment_map(hk, &h[cfg.partner(pair)]);
    let nk = hk.ncols();
    let lk = cfg.messages[pair];
    let off = cfg.pair_offset(pair);
    let q = identity(nk) + phi.adjoint() * &phi;
    // rows of projection are b_i^*, so projection^* projection = sum_i b_i b_i^*
    let bb = projection.adjoint() * projection;
    let g = hk.adjoint() * bb * hk;
    let mut r = CMat::zeros(nk, lk);
    for i in 0..equations.len() {
        let hb = hk.adjoint() * projection.row(i).adjoint();
        for c in 0..lk {
            let a = equations.row(i)[off + c] as f64;
            if a != 0.0 {
                r.column_mut(c).axpy(real(a), &hb, real(1.0));
            }
        }
    }
    let budget = cfg.pair_power[pair];
    let solve_at = |mu: f64| -> (CMat, f64) {
        let lhs = &g + &q * real(beta + mu);
        let v = if beta + mu > 0.0 { hermitian_solve(&lhs, &r) } else { pinv(&lhs) * &r };
        let power = (v.adjoint() * &q * &v).trace().re;
        (v, power)
    };
    let (v0, p0) = solve_at(0.0);
    let (v, mu) = if p0.is_finite() && p0 <= budget {
        (v0, 0.0)
    } else {
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
    };
    let kkt = fro2(&((&g + &q * real(beta + mu)) * &v - &r)).sqrt();
    PairStep { v, mu, kkt }
}

/// Min-max precoder problem for fixed `(A, B)` over
/// `u = lift([vec V_1; ...; vec V_K])`. Cone `j` evaluates to twice the
/// effective noise of equation `j`.
pub fn build_ma_minmax(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    projection: &CMat,
    equations: &EquationSet,
    sigma2_h: f64,
) -> Result<MinMaxProblem> {
    let h = channels.uplink(Csi::Estimated);
    let k = cfg.pairs;
    let sizes: Vec<usize> = (0..k).map(|p| cfg.user_antennas[p] * cfg.messages[p]).collect();
    let offsets: Vec<usize> = sizes.iter().scan(0, |acc, &s| {
        let o = *acc;
        *acc += s;
        Some(o)
    }).collect();
    let n: usize = sizes.iter().sum();
    let phis: Vec<CMat> = (0..k).map(|p| alignment_map(&h[p], &h[cfg.partner(p)])).collect();
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut problem = MinMaxProblem::new(2 * n);
    for j in 0..equations.len() {
        let b_adj = projection.row(j).into_owned();
        let bnorm = b_adj.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut blocks: Vec<(CMat, CVec)> = vec![(CMat::zeros(1, n), CVec::from_element(1, real(cfg.relay_noise.sqrt() * bnorm)))];
        for p in 0..k {
            let lk = cfg.messages[p];
            let bh = CMat::from_iterator(1, h[p].ncols(), (&b_adj * &h[p]).iter().cloned());
            let mut m = CMat::zeros(lk, n);
            m.view_mut((0, offsets[p]), (lk, sizes[p])).copy_from(&(kron(&identity(lk), &bh) * real(sqrt2)));
            let off = cfg.pair_offset(p);
            let c = CVec::from_fn(lk, |c, _| real(-sqrt2 * equations.row(j)[off + c] as f64));
            blocks.push((m, c));
        }
        if sigma2_h > 0.0 {
            let scale = real(sigma2_h.sqrt() * bnorm);
            for p in 0..k {
                let lk = cfg.messages[p];
                let mut m = CMat::zeros(2 * sizes[p], n);
                m.view_mut((0, offsets[p]), (sizes[p], sizes[p])).copy_from(&(identity(sizes[p]) * scale));
                let partner = kron(&identity(lk), &phis[p]) * scale;
                m.view_mut((sizes[p], offsets[p]), (partner.nrows(), sizes[p])).copy_from(&partner);
                blocks.push((m, CVec::zeros(2 * sizes[p])));
            }
        }
        let rows: usize = blocks.iter().map(|b| b.0.nrows()).sum();
        let mut m = CMat::zeros(rows, n);
        let mut c = CVec::zeros(rows);
        let mut r = 0;
        for (bm, bc) in blocks {
            m.view_mut((r, 0), bm.shape()).copy_from(&bm);
            c.rows_mut(r, bc.len()).copy_from(&bc);
            r += bm.nrows();
        }
        problem = problem.with_cone(lift_matrix(&m), lift_vector(&c));
    }
    for p in 0..k {
        let lk = cfg.messages[p];
        let partner = kron(&identity(lk), &phis[p]);
        let mut s = CMat::zeros(sizes[p] + partner.nrows(), n);
        s.view_mut((0, offsets[p]), (sizes[p], sizes[p])).copy_from(&identity(sizes[p]));
        s.view_mut((sizes[p], offsets[p]), (partner.nrows(), sizes[p])).copy_from(&partner);
        problem = problem.with_ball(lift_matrix(&s), cfg.pair_power[p]);
    }
    Ok(problem)
}

/// Real variable vector of [`build_ma_minmax`] for given lead precoders.
pub fn pack_leads(precoders: &PrecoderSet) -> RVec {
    let k = precoders.pairs();
    let parts: Vec<CVec> = (0..k).map(|p| vec_of(precoders.lead(p))).collect();
    let n: usize = parts.iter().map(|v| v.len()).sum();
    let mut all = CVec::zeros(n);
    let mut r = 0;
    for v in parts {
        all.rows_mut(r, v.len()).copy_from(&v);
        r += v.len();
    }
    lift_vector(&all)
}

pub fn unpack_leads(cfg: &SystemConfig, u: &RVec) -> Vec<CMat> {
    let all = unlift_vector(u);
    let mut r = 0;
    (0..cfg.pairs)
        .map(|p| {
            let (nk, lk) = (cfg.user_antennas[p], cfg.messages[p]);
            let m = CMat::from_iterator(nk, lk, all.rows(r, nk * lk).iter().cloned());
            r += nk * lk;
            m
        })
        .collect()
}

fn design(channels: &ChannelSet, cfg: &SystemConfig, robust: bool, criterion: Criterion) -> Result<MaDesign> {
    cfg.validate()?;
    let sigma2_h = error_variance(cfg, robust);
    let h = channels.uplink(Csi::Estimated);
    let mut precoders = initial_precoders(cfg, channels)?;
    let mut trace = Vec::new();
    let mut equations = EquationSet::identity(cfg.equations());
    let mut multipliers = vec![0.0; cfg.pairs];
    let mut kkt_residuals = vec![0.0; cfg.pairs];
    let mut solver_failures = 0;
    let mut last_solve_ok = true;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let heff = effective_channel(cfg, channels, &precoders, Csi::Estimated)?;
        let penalty = robust_penalty(&precoders, sigma2_h);
        let u = compute_u(&heff, cfg.relay_noise, penalty);
        equations = ecv::search(&EcvProblem::new(&u, criterion))?.equations;
        let projection = projection_matrix(&heff, &equations, cfg.relay_noise, penalty);

        let leads: Vec<CMat> = match criterion {
            Criterion::SumEquation => {
                let beta = 0.5 * sigma2_h * (0..projection.nrows()).map(|i| projection.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>();
                (0..cfg.pairs)
                    .map(|p| {
                        let step = sum_step_pair(cfg, h, p, &projection, &equations, beta);
                        multipliers[p] = step.mu;
                        kkt_residuals[p] = step.kkt;
                        step.v
                    })
                    .collect()
            }
            Criterion::MaxEquation => {
                let problem = build_ma_minmax(cfg, channels, &projection, &equations, sigma2_h)?;
                let sol = cone::solve(&problem)?;
                last_solve_ok = sol.status == SolveStatus::Optimal;
                if !last_solve_ok {
                    solver_failures += 1;
                }
                kkt_residuals = vec![sol.kkt_residual; cfg.pairs];
                unpack_leads(cfg, &sol.u)
            }
        };
        let candidate = PrecoderSet::from_leads(cfg, channels, Csi::Estimated, leads)?;

        let old = aggregate(criterion, &design_noise(cfg, channels, &precoders, &equations, &projection, sigma2_h)?);
        let new = aggregate(criterion, &design_noise(cfg, channels, &candidate, &equations, &projection, sigma2_h)?);
        let (next, value) = if new <= old { (candidate, new) } else { (precoders.clone(), old) };
        trace.push(value);
        let change = next.v.iter().zip(&precoders.v).map(|(a, b)| fro2(&(a - b))).fold(0.0, f64::max);
        precoders = next;
        if change <= cfg.delta {
            converged = true;
            break;
        }
    }

    let heff = effective_channel(cfg, channels, &precoders, Csi::Estimated)?;
    let penalty = robust_penalty(&precoders, sigma2_h);
    let projection = projection_matrix(&heff, &equations, cfg.relay_noise, penalty);
    let noise = NoiseProfile::new(&heff, &equations, cfg.relay_noise, penalty);
    Ok(MaDesign {
        precoders,
        equations,
        projection,
        noise,
        trace,
        iterations,
        converged: converged && last_solve_ok,
        criterion,
        robust,
        multipliers,
        kkt_residuals,
        solver_failures,
    })
}

/// Alternating minimization of the total equation noise.
pub fn design_sum_equation(channels: &ChannelSet, cfg: &SystemConfig, robust: bool) -> Result<MaDesign> {
    design(channels, cfg, robust, Criterion::SumEquation)
}

/// Alternating minimization of the worst equation noise.
pub fn design_max_equation(channels: &ChannelSet, cfg: &SystemConfig, robust: bool) -> Result<MaDesign> {
    design(channels, cfg, robust, Criterion::MaxEquation)
}

/// Stationarity residual of the sum-criterion precoder update for pair `pair`
/// at an explicit `(V_k, mu_k)` and fixed `(A, B)`.
#[allow(clippy::too_many_arguments)]
pub fn sum_step_residual(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    equations: &EquationSet,
    projection: &CMat,
    pair: usize,
    mu: f64,
    sigma2_h: f64,
) -> f64 {
    let h = channels.uplink(Csi::Estimated);
    let hk = &h[pair];
    let phi = alignment_map(hk, &h[cfg.partner(pair)]);
    let q = identity(hk.ncols()) + phi.adjoint() * &phi;
    let beta = 0.5 * sigma2_h * fro2(projection);
    let g = hk.adjoint() * (projection.adjoint() * projection) * hk;
    let off = cfg.pair_offset(pair);
    let a_block = CMat::from_fn(equations.len(), cfg.messages[pair], |i, c| real(equations.row(i)[off + c] as f64));
    let r = hk.adjoint() * projection.adjoint() * a_block;
    let v = precoders.lead(pair);
    fro2(&((g + q * real(beta + mu)) * v - r)).sqrt()
}
