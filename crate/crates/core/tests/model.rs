mod common;

use common::{cgauss, channels, rng};
use iff::linalg::{c64, fro2};
use iff::model::{align_precoder, generate_channels, pair_power, Csi, PrecoderSet};
use iff::{IffError, SystemConfig};

#[test]
fn channel_statistics_follow_the_error_model() {
    let cfg = SystemConfig::symmetric(1, 1, 1, 0.0).with_csi_error(0.3);
    let mut r = rng(11);
    let n = 200_000;
    let (mut h2, mut e2, mut est2, mut cross) = (0.0, 0.0, 0.0, c64(0.0, 0.0));
    for _ in 0..n {
        let ch = generate_channels(&cfg, &mut r);
        let (h, hat, e) = (ch.uplink[0][(0, 0)], ch.uplink_est[0][(0, 0)], ch.uplink_err[0][(0, 0)]);
        h2 += h.norm_sqr();
        e2 += e.norm_sqr();
        est2 += hat.norm_sqr();
        cross += hat * e.conj();
    }
    let n = n as f64;
    assert!((h2 / n - 1.0).abs() < 0.01, "true variance {}", h2 / n);
    assert!((e2 / n - 0.3).abs() < 0.01);
    assert!((est2 / n - 0.7).abs() < 0.01);
    // the error is uncorrelated with the estimate
    assert!((cross / n).norm() < 0.005);
}

#[test]
fn error_variance_must_stay_below_channel_variance() {
    let cfg = SystemConfig::symmetric(2, 2, 1, 0.0).with_csi_error(1.0);
    assert!(matches!(cfg.validate(), Err(IffError::InvalidConfig { field: "sigma2_h", .. })));
}

#[test]
fn alignment_puts_partners_on_the_same_relay_image() {
    let mut r = rng(12);
    for _ in 0..20 {
        let (h1, h2, v) = (cgauss(&mut r, 2, 3), cgauss(&mut r, 2, 2), cgauss(&mut r, 3, 1));
        let vp = align_precoder(&h1, &h2, &v).unwrap();
        let lhs = &h1 * &v;
        assert!(fro2(&(&h2 * &vp - &lhs)) <= 1e-20 * fro2(&lhs));
    }
}

#[test]
fn pair_power_counts_both_users() {
    let cfg = SystemConfig::symmetric(2, 2, 1, 10.0);
    let ch = channels(&cfg, 3);
    let mut r = rng(4);
    let leads = vec![cgauss(&mut r, 2, 1), cgauss(&mut r, 2, 1)];
    let p = PrecoderSet::from_leads(&cfg, &ch, Csi::Estimated, leads).unwrap();
    for k in 0..2 {
        assert!((pair_power(&cfg, &ch, &p, k) - fro2(&p.v[k]) - fro2(&p.v[k + 2])).abs() < 1e-12);
    }
}
