//! System configuration, channel realizations and signal-alignment precoding.
//!
//! Users are indexed `0..2K`. Pair `k` consists of the lead user `k` and its
//! partner `k + K`.

use rand::Rng;

use crate::error::{IffError, Result};
use crate::linalg::{complex_gaussian, fro2, pinv, real, CMat};

/// Relative Frobenius residual accepted for `H_partner V_partner = H_lead V_lead`.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of user pairs `K`.
    pub pairs: usize,
    /// Antennas per user, `2K` entries.
    pub user_antennas: Vec<usize>,
    pub relay_antennas: usize,
    /// Messages (streams) per pair, `K` entries.
    pub messages: Vec<usize>,
    /// Sum power budget of each pair, `K` entries.
    pub pair_power: Vec<f64>,
    pub relay_power: f64,
    /// Per-entry variance of the user-to-relay channel of each user.
    pub uplink_gain: Vec<f64>,
    /// Per-entry variance of the relay-to-user channel of each user.
    pub downlink_gain: Vec<f64>,
    pub relay_noise: f64,
    pub user_noise: f64,
    /// Per-entry variance of the uplink estimation error (0 = perfect CSI).
    pub uplink_error: f64,
    /// Per-entry variance of the downlink estimation error.
    pub downlink_error: f64,
    /// Outage threshold in bits per channel use.
    pub target_rate: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Apply the 1/2 factor of the two-slot exchange to user rates.
    pub two_slot_factor: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::symmetric(2, 2, 1, 0.0)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemConfig {
    /// `pairs` pairs, every node with `antennas` antennas, `messages` streams
    /// per pair, unit noise and gains, and `P_k = P_r = 10^(snr_db/10)`.
    pub fn symmetric(pairs: usize, antennas: usize, messages: usize, snr_db: f64) -> Self {
        let p = db_to_linear(snr_db);
        SystemConfig {
            pairs,
            user_antennas: vec![antennas; 2 * pairs],
            relay_antennas: antennas,
            messages: vec![messages; pairs],
            pair_power: vec![p; pairs],
            relay_power: p,
            uplink_gain: vec![1.0; 2 * pairs],
            downlink_gain: vec![1.0; 2 * pairs],
            relay_noise: 1.0,
            user_noise: 1.0,
            uplink_error: 0.0,
            downlink_error: 0.0,
            target_rate: 1.0,
            delta: 1e-3,
            max_iters: 100,
            seed: 0,
            two_slot_factor: true,
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let p = db_to_linear(snr_db);
        self.pair_power = vec![p; self.pairs];
        self.relay_power = p;
        self
    }

    pub fn with_csi_error(mut self, variance: f64) -> Self {
        self.uplink_error = variance;
        self.downlink_error = variance;
        self
    }

    pub fn users(&self) -> usize {
        2 * self.pairs
    }

    /// Total number of equations `L`.
    pub fn equations(&self) -> usize {
        self.messages.iter().sum()
    }

    pub fn partner(&self, user: usize) -> usize {
        (user + self.pairs) % self.users()
    }

    pub fn pair_of(&self, user: usize) -> usize {
        user % self.pairs
    }

    pub fn messages_of_user(&self, user: usize) -> usize {
        self.messages[self.pair_of(user)]
    }

    /// Column offset of pair `k` inside the stacked effective channel.
    pub fn pair_offset(&self, pair: usize) -> usize {
        self.messages[..pair].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> IffError {
            IffError::InvalidConfig { field, reason: reason.into() }
        }
        let k = self.pairs;
        if k == 0 {
            return Err(bad("K", "at least one pair is required"));
        }
        if self.user_antennas.len() != 2 * k {
            return Err(bad("N_k", format!("expected {} entries, got {}", 2 * k, self.user_antennas.len())));
        }
        if self.messages.len() != k {
            return Err(bad("L_k", format!("expected {k} entries, got {}", self.messages.len())));
        }
        if self.pair_power.len() != k {
            return Err(bad("P_k", format!("expected {k} entries, got {}", self.pair_power.len())));
        }
        for (name, v) in [("sigma2_k", &self.uplink_gain), ("sigma2_k_down", &self.downlink_gain)] {
            if v.len() != 2 * k {
                return Err(bad(name, format!("expected {} entries, got {}", 2 * k, v.len())));
            }
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(bad(name, "variances must be positive"));
            }
        }
        if self.relay_antennas == 0 {
            return Err(bad("N_r", "must be at least 1"));
        }
        if self.user_antennas.contains(&0) {
            return Err(bad("N_k", "must be at least 1"));
        }
        for pair in 0..k {
            let l = self.messages[pair];
            let lead = self.user_antennas[pair];
            let partner = self.user_antennas[pair + k];
            if l == 0 {
                return Err(bad("L_k", "must be at least 1"));
            }
            if l > lead.min(partner) || l > self.relay_antennas {
                return Err(bad(
                    "L_k",
                    format!("pair {pair} carries {l} messages but has antennas ({lead}, {partner}) and relay {}", self.relay_antennas),
                ));
            }
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !self.pair_power.iter().all(|&p| positive(p)) {
            return Err(bad("P_k", "must be positive"));
        }
        if !positive(self.relay_power) {
            return Err(bad("P_r", "must be positive"));
        }
        if !positive(self.relay_noise) {
            return Err(bad("sigma2_r", "must be positive"));
        }
        if !positive(self.user_noise) {
            return Err(bad("sigma2_u", "must be positive"));
        }
        if !(self.uplink_error >= 0.0 && self.uplink_error.is_finite()) {
            return Err(bad("sigma2_h", "must be non-negative"));
        }
        if !(self.downlink_error >= 0.0 && self.downlink_error.is_finite()) {
            return Err(bad("sigma2_g", "must be non-negative"));
        }
        if self.uplink_gain.iter().any(|&g| self.uplink_error >= g) {
            return Err(bad("sigma2_h", "must be below every channel variance"));
        }
        if self.downlink_gain.iter().any(|&g| self.downlink_error >= g) {
            return Err(bad("sigma2_g", "must be below every channel variance"));
        }
        if !positive(self.delta) {
            return Err(bad("delta", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(bad("max_iters", "must be at least 1"));
        }
        if !(self.target_rate >= 0.0 && self.target_rate.is_finite()) {
            return Err(bad("R_t", "must be non-negative"));
        }
        Ok(())
    }
}

/// Which version of the channels an operation looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Csi {
    /// The true propagation channels.
    True,
    /// The estimates available to the designer (`H + e`).
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Uplink channels `N_r x N_k`, one per user.
    pub uplink: Vec<CMat>,
    /// Downlink channels `N_k x N_r`, one per user.
    pub downlink: Vec<CMat>,
    pub uplink_est: Vec<CMat>,
    pub downlink_est: Vec<CMat>,
    pub uplink_err: Vec<CMat>,
    pub downlink_err: Vec<CMat>,
}

impl ChannelSet {
    pub fn users(&self) -> usize {
        self.uplink.len()
    }

    pub fn uplink(&self, csi: Csi) -> &[CMat] {
        match csi {
            Csi::True => &self.uplink,
            Csi::Estimated => &self.uplink_est,
        }
    }

    pub fn downlink(&self, csi: Csi) -> &[CMat] {
        match csi {
            Csi::True => &self.downlink,
            Csi::Estimated => &self.downlink_est,
        }
    }

    /// Builds a set with perfect estimates from explicit channels.
    pub fn perfect(uplink: Vec<CMat>, downlink: Vec<CMat>) -> Self {
        let uplink_err = uplink.iter().map(|h| CMat::zeros(h.nrows(), h.ncols())).collect();
        let downlink_err = downlink.iter().map(|g| CMat::zeros(g.nrows(), g.ncols())).collect();
        ChannelSet {
            uplink_est: uplink.clone(),
            downlink_est: downlink.clone(),
            uplink,
            downlink,
            uplink_err,
            downlink_err,
        }
    }

    /// True when every pair can be aligned for any lead precoder, i.e. the
    /// range of each lead channel lies in the range of its partner channel.
    pub fn alignment_feasible(&self, cfg: &SystemConfig, csi: Csi) -> bool {
        let h = self.uplink(csi);
        (0..cfg.pairs).all(|k| {
            let lead = &h[k];
            let partner = &h[cfg.partner(k)];
            let proj = partner * pinv(partner) * lead;
            let scale = fro2(lead);
            scale > 0.0 && fro2(&(proj - lead)) <= ALIGNMENT_TOLERANCE * ALIGNMENT_TOLERANCE * scale
        })
    }
}

/// Draws true channels and their estimates. Every entry is circularly
/// symmetric complex Gaussian; errors are drawn with unit variance and then
/// scaled, so configurations that differ only in the error variance share
/// the same underlying draws.
pub fn generate_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelSet {
    let users = cfg.users();
    let nr = cfg.relay_antennas;
    let mut uplink = Vec::with_capacity(users);
    let mut downlink = Vec::with_capacity(users);
    let mut uplink_est = Vec::with_capacity(users);
    let mut downlink_est = Vec::with_capacity(users);
    let mut uplink_err = Vec::with_capacity(users);
    let mut downlink_err = Vec::with_capacity(users);
    // The estimate and its error are independent; the true channel keeps variance sigma2_k.
    for user in 0..users {
        let nk = cfg.user_antennas[user];
        let h = complex_gaussian(rng, nr, nk, cfg.uplink_gain[user] - cfg.uplink_error);
        let g = complex_gaussian(rng, nk, nr, cfg.downlink_gain[user] - cfg.downlink_error);
        let e = complex_gaussian(rng, nr, nk, 1.0) * real(cfg.uplink_error.sqrt());
        let ehat = complex_gaussian(rng, nk, nr, 1.0) * real(cfg.downlink_error.sqrt());
        uplink.push(&h - &e);
        downlink.push(&g - &ehat);
        uplink_est.push(h);
        downlink_est.push(g);
        uplink_err.push(e);
        downlink_err.push(ehat);
    }
    ChannelSet { uplink, downlink, uplink_est, downlink_est, uplink_err, downlink_err }
}

/// Partner precoder `V_partner = H_partner^+ H_lead V_lead` that aligns both
/// users of a pair at the relay.
pub fn align_precoder(h_lead: &CMat, h_partner: &CMat, v_lead: &CMat) -> Result<CMat> {
    if h_lead.nrows() != h_partner.nrows() || h_lead.ncols() != v_lead.nrows() {
        return Err(IffError::DimensionMismatch(format!(
            "lead {:?}, partner {:?}, precoder {:?}",
            h_lead.shape(),
            h_partner.shape(),
            v_lead.shape()
        )));
    }
    let image = h_lead * v_lead;
    let v_partner = pinv(h_partner) * &image;
    let scale = fro2(&image);
    let resid = fro2(&(h_partner * &v_partner - &image));
    if resid > ALIGNMENT_TOLERANCE * ALIGNMENT_TOLERANCE * scale {
        return Err(IffError::AlignmentRankDeficient {
            pair: 0,
            residual: if scale > 0.0 { (resid / scale).sqrt() } else { f64::INFINITY },
        });
    }
    Ok(v_partner)
}

/// `H_partner^+ H_lead`, the map from a lead precoder to its aligned partner.
pub fn alignment_map(h_lead: &CMat, h_partner: &CMat) -> CMat {
    pinv(h_partner) * h_lead
}

/// Precoders of all `2K` users, aligned per pair against `csi` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub v: Vec<CMat>,
    /// Which channel version the alignment used.
    pub aligned_on: Csi,
}

impl PrecoderSet {
    /// Completes lead precoders (`K` of them) with aligned partners.
    pub fn from_leads(cfg: &SystemConfig, channels: &ChannelSet, csi: Csi, leads: Vec<CMat>) -> Result<Self> {
        let k = cfg.pairs;
        if leads.len() != k {
            return Err(IffError::DimensionMismatch(format!("expected {k} lead precoders, got {}", leads.len())));
        }
        let h = channels.uplink(csi);
        let mut partners = Vec::with_capacity(k);
        for (pair, v) in leads.iter().enumerate() {
            let vp = align_precoder(&h[pair], &h[pair + k], v).map_err(|e| match e {
                IffError::AlignmentRankDeficient { residual, .. } => IffError::AlignmentRankDeficient { pair, residual },
                other => other,
            })?;
            partners.push(vp);
        }
        let mut v = leads;
        v.extend(partners);
        Ok(PrecoderSet { v, aligned_on: csi })
    }

    pub fn pairs(&self) -> usize {
        self.v.len() / 2
    }

    pub fn lead(&self, pair: usize) -> &CMat {
        &self.v[pair]
    }

    /// Block-diagonal stack of the lead precoders.
    pub fn block_diagonal(&self) -> CMat {
        let k = self.pairs();
        let rows: usize = (0..k).map(|i| self.v[i].nrows()).sum();
        let cols: usize = (0..k).map(|i| self.v[i].ncols()).sum();
        let mut out = CMat::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for i in 0..k {
            let vi = &self.v[i];
            out.view_mut((r, c), vi.shape()).copy_from(vi);
            r += vi.nrows();
            c += vi.ncols();
        }
        out
    }

    /// Total transmit power `sum_l Tr(V_l V_l^*)` over all users.
    pub fn total_power(&self) -> f64 {
        self.v.iter().map(fro2).sum()
    }
}

/// Horizontal stack `[H_1 ... H_K]` of the lead uplink channels.
pub fn stacked_uplink(cfg: &SystemConfig, channels: &ChannelSet, csi: Csi) -> CMat {
    let h = channels.uplink(csi);
    let cols: usize = (0..cfg.pairs).map(|k| h[k].ncols()).sum();
    let mut out = CMat::zeros(cfg.relay_antennas, cols);
    let mut c = 0;
    for hk in h.iter().take(cfg.pairs) {
        out.view_mut((0, c), hk.shape()).copy_from(hk);
        c += hk.ncols();
    }
    out
}

/// Block diagonal of the alignment maps `H_partner^+ H_lead`.
pub fn alignment_block(cfg: &SystemConfig, channels: &ChannelSet, csi: Csi) -> CMat {
    let h = channels.uplink(csi);
    let maps: Vec<CMat> = (0..cfg.pairs).map(|k| alignment_map(&h[k], &h[cfg.partner(k)])).collect();
    let rows: usize = maps.iter().map(|m| m.nrows()).sum();
    let cols: usize = maps.iter().map(|m| m.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for m in &maps {
        out.view_mut((r, c), m.shape()).copy_from(m);
        r += m.nrows();
        c += m.ncols();
    }
    out
}

/// Effective `N_r x L` channel `[H_1 V_1, ..., H_K V_K]` seen through `csi`.
pub fn effective_channel(cfg: &SystemConfig, channels: &ChannelSet, precoders: &PrecoderSet, csi: Csi) -> Result<CMat> {
    let h = channels.uplink(csi);
    let l = cfg.equations();
    let mut out = CMat::zeros(cfg.relay_antennas, l);
    for k in 0..cfg.pairs {
        let v = precoders.lead(k);
        if h[k].ncols() != v.nrows() || v.ncols() != cfg.messages[k] || h[k].nrows() != cfg.relay_antennas {
            return Err(IffError::DimensionMismatch(format!(
                "pair {k}: channel {:?}, precoder {:?}",
                h[k].shape(),
                v.shape()
            )));
        }
        let block = &h[k] * v;
        out.view_mut((0, cfg.pair_offset(k)), block.shape()).copy_from(&block);
    }
    Ok(out)
}

/// Pair power written through the alignment map:
/// `Tr(V V^*) + Tr(M V V^* M^*)` with `M = H_partner^+ H_lead`.
pub fn pair_power(cfg: &SystemConfig, channels: &ChannelSet, precoders: &PrecoderSet, pair: usize) -> f64 {
    let h = channels.uplink(precoders.aligned_on);
    let v = precoders.lead(pair);
    let map = alignment_map(&h[pair], &h[cfg.partner(pair)]);
    fro2(v) + fro2(&(map * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_csi_estimates_equal_truth() {
        let cfg = SystemConfig::symmetric(2, 2, 1, 10.0);
        let ch = generate_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(ch.uplink, ch.uplink_est);
        assert_eq!(ch.downlink, ch.downlink_est);
    }

    #[test]
    fn estimates_differ_by_error_exactly() {
        let cfg = SystemConfig::symmetric(2, 2, 1, 10.0).with_csi_error(0.1);
        let ch = generate_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        for u in 0..4 {
            assert!(fro2(&(&ch.uplink_est[u] - &ch.uplink[u] - &ch.uplink_err[u])) < 1e-28);
            assert!(fro2(&ch.uplink_err[u]) > 0.0);
        }
    }

    #[test]
    fn same_seed_same_channels() {
        let cfg = SystemConfig::symmetric(2, 2, 1, 10.0).with_csi_error(0.2);
        let a = generate_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let b = generate_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn entry_variance_matches_configuration() {
        let mut cfg = SystemConfig::symmetric(1, 1, 1, 0.0);
        cfg.uplink_gain = vec![1.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let m = complex_gaussian(&mut rng, 1, 1, 1.0);
            acc += m[(0, 0)].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn align_identical_channels_returns_same_precoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = complex_gaussian(&mut rng, 2, 2, 1.0);
        let v = complex_gaussian(&mut rng, 2, 1, 1.0);
        let vp = align_precoder(&h, &h, &v).unwrap();
        assert!(fro2(&(vp - v)).sqrt() < 1e-12);
    }

    #[test]
    fn align_scaled_identity() {
        let vp = align_precoder(&identity(2), &identity(2).map(|z| z * 2.0), &identity(2)).unwrap();
        assert!(fro2(&(vp - identity(2).map(|z| z * 0.5))).sqrt() < 1e-15);
    }

    #[test]
    fn align_zero_partner_is_rank_deficient() {
        let err = align_precoder(&identity(2), &CMat::zeros(2, 2), &identity(2)).unwrap_err();
        assert!(matches!(err, IffError::AlignmentRankDeficient { .. }));
    }

    #[test]
    fn effective_channel_identity_precoder() {
        let mut cfg = SystemConfig::symmetric(1, 2, 2, 0.0);
        cfg.messages = vec![2];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = generate_channels(&cfg, &mut rng);
        let p = PrecoderSet::from_leads(&cfg, &ch, Csi::True, vec![identity(2)]).unwrap();
        let h = effective_channel(&cfg, &ch, &p, Csi::True).unwrap();
        assert_eq!(h, ch.uplink[0]);
    }

    #[test]
    fn effective_channel_stacks_pairs_in_order() {
        let cfg = SystemConfig::symmetric(2, 2, 1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = generate_channels(&cfg, &mut rng);
        let leads = vec![complex_gaussian(&mut rng, 2, 1, 1.0), complex_gaussian(&mut rng, 2, 1, 1.0)];
        let p = PrecoderSet::from_leads(&cfg, &ch, Csi::True, leads.clone()).unwrap();
        let h = effective_channel(&cfg, &ch, &p, Csi::True).unwrap();
        assert_eq!(h.column(0).into_owned(), (&ch.uplink[0] * &leads[0]).column(0).into_owned());
        assert_eq!(h.column(1).into_owned(), (&ch.uplink[1] * &leads[1]).column(0).into_owned());
        let est = effective_channel(&cfg, &ch, &p, Csi::Estimated).unwrap();
        assert_eq!(h, est);
    }

    #[test]
    fn pair_power_cases() {
        let cfg = SystemConfig::symmetric(1, 2, 1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ch = generate_channels(&cfg, &mut rng);
        let zero = PrecoderSet::from_leads(&cfg, &ch, Csi::True, vec![CMat::zeros(2, 1)]).unwrap();
        assert_eq!(pair_power(&cfg, &ch, &zero, 0), 0.0);

        let h = complex_gaussian(&mut rng, 2, 2, 1.0);
        let same = ChannelSet::perfect(vec![h.clone(), h], ch.downlink.clone());
        let v = complex_gaussian(&mut rng, 2, 1, 1.0);
        let p = PrecoderSet::from_leads(&cfg, &same, Csi::True, vec![v.clone()]).unwrap();
        assert!((pair_power(&cfg, &same, &p, 0) - 2.0 * fro2(&v)).abs() < 1e-12);
    }

    #[test]
    fn validation_names_field() {
        let mut cfg = SystemConfig::default();
        cfg.pairs = 0;
        match cfg.validate() {
            Err(IffError::InvalidConfig { field, .. }) => assert_eq!(field, "K"),
            other => panic!("{other:?}"),
        }
        let mut cfg = SystemConfig::default();
        cfg.messages = vec![3, 1];
        assert!(matches!(cfg.validate(), Err(IffError::InvalidConfig { field: "L_k", .. })));
        let mut cfg = SystemConfig::default();
        cfg.uplink_error = -1.0;
        assert!(matches!(cfg.validate(), Err(IffError::InvalidConfig { field: "sigma2_h", .. })));
        assert!(SystemConfig::default().validate().is_ok());
    }
}
