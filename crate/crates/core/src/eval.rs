//! End-to-end rates, per-user equation selection and Monte Carlo sweeps.
//!
//! Designs use estimated channels; everything here is measured on the true
//! channels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bc::{design_max_mse, design_sum_mse, BcCriterion, BcDesign};
use crate::ecv::Criterion;
use crate::error::{IffError, Result};
use crate::iflr::{computation_rate, integer_rank, EquationSet};
use crate::linalg::{real, CMat};
use crate::ma::{design_max_equation, design_sum_equation, MaDesign};
use crate::model::{generate_channels, ChannelSet, Csi, SystemConfig};

/// Draws rejected for infeasible alignment before a trial gives up.
pub const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    /// Relay computation rate of each equation.
    pub comp_rate: Vec<f64>,
    /// `bc_rate[user][i]`: rate at which `user` recovers equation `i`.
    pub bc_rate: Vec<Vec<f64>>,
    /// `min(comp_rate[i], bc_rate[user][i])`.
    pub overall: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn new(comp_rate: Vec<f64>, bc_rate: Vec<Vec<f64>>) -> Self {
        let overall = bc_rate.iter().map(|row| row.iter().zip(&comp_rate).map(|(b, c)| b.min(*c)).collect()).collect();
        RateTable { comp_rate, bc_rate, overall }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rates: RateTable,
    pub user_rate: Vec<f64>,
    pub used_equations: Vec<Vec<usize>>,
    pub sum_rate: f64,
    pub outage: Vec<bool>,
    /// Fraction of users decoding from a strict subset of the equations.
    pub single_eq_fraction: f64,
    /// Effective noise of each equation on the true channels.
    pub equation_noise: Vec<f64>,
}

/// SINR rate of equation `i` at a user with filter `d` and true channel `g`.
pub fn broadcast_rate(w: &CMat, d: &CMat, g: &CMat, sigma2_u: f64, i: usize) -> f64 {
    let dgw = d * g * w;
    let filt: f64 = d.row(i).iter().map(|z| z.norm_sqr()).sum();
    if filt == 0.0 {
        return 0.0;
    }
    let signal = dgw[(i, i)].norm_sqr();
    let interference: f64 = (0..dgw.ncols()).filter(|&l| l != i).map(|l| dgw[(i, l)].norm_sqr()).sum();
    (1.0 + signal / (sigma2_u * filt + interference)).log2()
}

/// True when the pair block `offset..offset+len` is recoverable from the rows `subset`.
pub fn subset_solvable(equations: &EquationSet, subset: &[usize], offset: usize, len: usize) -> bool {
    let rows: Vec<Vec<i64>> = subset.iter().map(|&i| equations.row(i).to_vec()).collect();
    let base = integer_rank(&rows);
    let l = equations.len();
    (offset..offset + len).all(|c| {
        let mut ext = rows.clone();
        ext.push((0..l).map(|j| i64::from(j == c)).collect());
        integer_rank(&ext) == base
    })
}

/// Best solvable subset for one user: maximizes the smallest overall rate,
/// then prefers fewer equations, then the lexicographically first subset.
pub fn select_equations(overall: &[f64], equations: &EquationSet, offset: usize, len: usize) -> (Vec<usize>, f64) {
    let l = equations.len();
    let min_rate = |s: &[usize]| s.iter().map(|&i| overall[i]).fold(f64::INFINITY, f64::min);
    if l <= 6 {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut subsets: Vec<Vec<usize>> = (1u32..(1 << l)).map(|mask| (0..l).filter(|&i| mask & (1 << i) != 0).collect()).collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        for s in subsets {
            if !subset_solvable(equations, &s, offset, len) {
                continue;
            }
            let r = min_rate(&s);
            if best.as_ref().is_none_or(|(_, br)| r > *br) {
                best = Some((s, r));
            }
        }
        return best.expect("a nonsingular equation set is always solvable");
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| overall[b].total_cmp(&overall[a]).then_with(|| a.cmp(&b)));
    let mut chosen = Vec::new();
    for i in order {
        chosen.push(i);
        if subset_solvable(equations, &chosen, offset, len) {
            break;
        }
    }
    chosen.sort_unstable();
    let r = min_rate(&chosen);
    (chosen, r)
}

/// Effective noise of equation `(a, b)` on the true uplink channels:
/// `sigma_r^2/2 ||b||^2 + 1/2 sum_j ||b^* H_j V_j - a_pair(j)^T||^2` over all users.
pub fn true_equation_noise(cfg: &SystemConfig, channels: &ChannelSet, ma: &MaDesign, i: usize) -> f64 {
    let b_adj = ma.projection.row(i);
    let b2: f64 = b_adj.iter().map(|z| z.norm_sqr()).sum();
    let mut resid = 0.0;
    for user in 0..cfg.users() {
        let pair = cfg.pair_of(user);
        let off = cfg.pair_offset(pair);
        let img = b_adj * &channels.uplink[user] * &ma.precoders.v[user];
        for c in 0..cfg.messages[pair] {
            resid += (img[(0, c)] - real(ma.equations.row(i)[off + c] as f64)).norm_sqr();
        }
    }
    0.5 * cfg.relay_noise * b2 + 0.5 * resid
}

/// Rates and metrics of one design pair on the true channels.
pub fn evaluate(ma: &MaDesign, bc: &BcDesign, channels: &ChannelSet, cfg: &SystemConfig) -> EvalReport {
    let l = cfg.equations();
    let equation_noise: Vec<f64> = (0..l).map(|i| true_equation_noise(cfg, channels, ma, i)).collect();
    let comp_rate: Vec<f64> = equation_noise.iter().map(|&e| computation_rate(e)).collect();
    let bc_rate: Vec<Vec<f64>> = (0..cfg.users())
        .map(|u| (0..l).map(|i| broadcast_rate(&bc.w, &bc.d[u], &channels.downlink[u], cfg.user_noise, i)).collect())
        .collect();
    let rates = RateTable::new(comp_rate, bc_rate);
    let factor = if cfg.two_slot_factor { 0.5 } else { 1.0 };
    let mut user_rate = Vec::with_capacity(cfg.users());
    let mut used_equations = Vec::with_capacity(cfg.users());
    for user in 0..cfg.users() {
        let pair = cfg.pair_of(user);
        let (subset, r) = select_equations(&rates.overall[user], &ma.equations, cfg.pair_offset(pair), cfg.messages[pair]);
        user_rate.push(factor * r);
        used_equations.push(subset);
    }
    let sum_rate = user_rate.iter().sum();
    let outage = user_rate.iter().map(|&r| r < cfg.target_rate).collect();
    let single = used_equations.iter().filter(|s| s.len() < l).count();
    EvalReport {
        rates,
        user_rate,
        used_equations,
        sum_rate,
        outage,
        single_eq_fraction: single as f64 / cfg.users() as f64,
        equation_noise,
    }
}

/// A complete transmission scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    pub ma: Criterion,
    pub bc: BcCriterion,
    pub robust: bool,
    /// Overrides the configured CSI error variance (both links).
    pub csi_error: Option<f64>,
    /// Overrides every antenna count.
    pub antennas: Option<usize>,
    pub label: String,
}

impl Scheme {
    pub fn new(ma: Criterion, bc: BcCriterion, robust: bool) -> Self {
        let label = format!(
            "{}_{}_{}",
            match ma {
                Criterion::SumEquation => "sumeq",
                Criterion::MaxEquation => "maxeq",
            },
            match bc {
                BcCriterion::SumMse => "summse",
                BcCriterion::MaxMse => "maxmse",
            },
            if robust { "robust" } else { "nonrobust" }
        );
        Scheme { ma, bc, robust, csi_error: None, antennas: None, label }
    }

    pub fn sum_based(robust: bool) -> Self {
        Self::new(Criterion::SumEquation, BcCriterion::SumMse, robust)
    }

    pub fn max_based(robust: bool) -> Self {
        Self::new(Criterion::MaxEquation, BcCriterion::MaxMse, robust)
    }

    pub fn with_csi_error(mut self, variance: f64) -> Self {
        self.csi_error = Some(variance);
        self
    }

    pub fn with_antennas(mut self, n: usize) -> Self {
        self.antennas = Some(n);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The configuration this scheme runs with at `snr_db`.
    pub fn apply(&self, cfg: &SystemConfig, snr_db: f64) -> SystemConfig {
        let mut c = cfg.clone().with_snr_db(snr_db);
        if let Some(e) = self.csi_error {
            c = c.with_csi_error(e);
        }
        if let Some(n) = self.antennas {
            c.user_antennas = vec![n; c.users()];
            c.relay_antennas = n;
        }
        c
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of draw `attempt` of trial `trial`. Independent of SNR and scheme so
/// that all curves see the same channels.
pub fn trial_seed(seed: u64, trial: u64, attempt: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ trial) ^ attempt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub ma: MaDesign,
    pub bc: BcDesign,
    pub report: EvalReport,
    pub channels: ChannelSet,
    /// Draws rejected before this one.
    pub redraws: u64,
}

/// Runs the designs of `scheme` on one channel realization.
pub fn design_pair(channels: &ChannelSet, cfg: &SystemConfig, scheme: &Scheme) -> Result<(MaDesign, BcDesign)> {
    let ma = match scheme.ma {
        Criterion::SumEquation => design_sum_equation(channels, cfg, scheme.robust)?,
        Criterion::MaxEquation => design_max_equation(channels, cfg, scheme.robust)?,
    };
    let bc = match scheme.bc {
        BcCriterion::SumMse => design_sum_mse(channels, cfg, scheme.robust)?,
        BcCriterion::MaxMse => design_max_mse(channels, cfg, scheme.robust)?,
    };
    Ok((ma, bc))
}

/// One Monte Carlo trial; `cfg` must already carry the scheme's settings.
pub fn run_trial(cfg: &SystemConfig, scheme: &Scheme, trial: u64) -> Result<TrialOutcome> {
    for attempt in 0..MAX_REDRAWS {
        let seed = trial_seed(cfg.seed, trial, attempt);
        let channels = generate_channels(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        if !channels.alignment_feasible(cfg, Csi::Estimated) {
            continue;
        }
        let mut trial_cfg = cfg.clone();
        trial_cfg.seed = seed;
        let (ma, bc) = design_pair(&channels, &trial_cfg, scheme)?;
        let report = evaluate(&ma, &bc, &channels, &trial_cfg);
        return Ok(TrialOutcome { ma, bc, report, channels, redraws: attempt });
    }
    Err(IffError::AlignmentRankDeficient { pair: 0, residual: f64::INFINITY })
}

/// Aggregates at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct McPoint {
    pub snr_db: f64,
    pub avg_sum_rate: f64,
    pub outage_prob: f64,
    pub single_eq_fraction: f64,
    pub avg_iters_ma: f64,
    pub avg_iters_bc: f64,
    pub infeasible_draws: u64,
    /// Fraction of trials in which either design hit the iteration cap.
    pub nonconverged: f64,
    /// Mean design noise of the `i`-th best equation.
    pub mean_equation_mse: Vec<f64>,
    pub trials: usize,
}

/// Monte Carlo sweep over `snr_grid` with `trials` channel draws per point.
pub fn monte_carlo(cfg: &SystemConfig, scheme: &Scheme, snr_grid: &[f64], trials: usize) -> Result<Vec<McPoint>> {
    if trials == 0 {
        return Err(IffError::InvalidConfig { field: "trials", reason: "must be at least 1".into() });
    }
    snr_grid
        .iter()
        .map(|&snr| {
            let point_cfg = scheme.apply(cfg, snr);
            point_cfg.validate()?;
            let outcomes: Vec<Result<TrialOutcome>> =
                (0..trials as u64).into_par_iter().map(|t| run_trial(&point_cfg, scheme, t)).collect();
            let outcomes: Vec<TrialOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
            Ok(summarize(snr, &point_cfg, &outcomes))
        })
        .collect()
}

fn summarize(snr_db: f64, cfg: &SystemConfig, outcomes: &[TrialOutcome]) -> McPoint {
    let n = outcomes.len() as f64;
    let users = cfg.users() as f64;
    let l = cfg.equations();
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    let mut mse = vec![0.0; l];
    for o in outcomes {
        for (acc, e) in mse.iter_mut().zip(&o.ma.noise.eps) {
            *acc += e / n;
        }
    }
    McPoint {
        snr_db,
        avg_sum_rate: mean(&|o| o.report.sum_rate),
        outage_prob: mean(&|o| o.report.outage.iter().filter(|&&x| x).count() as f64 / users),
        single_eq_fraction: mean(&|o| o.report.single_eq_fraction),
        avg_iters_ma: mean(&|o| o.ma.iterations as f64),
        avg_iters_bc: mean(&|o| o.bc.iterations as f64),
        infeasible_draws: outcomes.iter().map(|o| o.redraws).sum(),
        nonconverged: mean(&|o| f64::from(u8::from(!(o.ma.converged && o.bc.converged)))),
        mean_equation_mse: mse,
        trials: outcomes.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    #[test]
    fn broadcast_rate_examples() {
        let i2 = identity(2);
        assert!((broadcast_rate(&i2, &i2, &i2, 1.0, 0) - 1.0).abs() < 1e-15);
        let mut d = i2.clone();
        d.row_mut(1).fill(real(0.0));
        assert_eq!(broadcast_rate(&i2, &d, &i2, 1.0, 1), 0.0);
        let one = CMat::from_element(1, 1, real(3.0));
        assert!((broadcast_rate(&one, &identity(1), &identity(1), 1.0, 0) - 10f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn identity_equations_select_own_block() {
        let eqs = EquationSet::identity(2);
        let (s, r) = select_equations(&[0.3, 0.9], &eqs, 1, 1);
        assert_eq!(s, vec![1]);
        assert_eq!(r, 0.9);
    }

    #[test]
    fn mixed_equations_pick_better_subset() {
        let eqs = EquationSet::new(vec![vec![1, 1], vec![1, 0]]);
        assert!(subset_solvable(&eqs, &[1], 0, 1));
        assert!(!subset_solvable(&eqs, &[0], 0, 1));
        assert!(!subset_solvable(&eqs, &[1], 1, 1));
        assert_eq!(select_equations(&[2.0, 1.0], &eqs, 0, 1), (vec![1], 1.0));
        assert_eq!(select_equations(&[2.0, 1.0], &eqs, 1, 1), (vec![0, 1], 1.0));
    }

    #[test]
    fn seeds_differ_per_trial_and_attempt() {
        assert_ne!(trial_seed(1, 0, 0), trial_seed(1, 1, 0));
        assert_ne!(trial_seed(1, 0, 0), trial_seed(1, 0, 1));
        assert_eq!(trial_seed(5, 3, 2), trial_seed(5, 3, 2));
    }
}
