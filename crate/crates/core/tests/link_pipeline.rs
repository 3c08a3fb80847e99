mod common;

use common::{Link, SEED};
use mumimo::channel::los_matrix;
use mumimo::combining::CombinerKind;
use mumimo::linalg::{circular_distance, CMat2};
use mumimo::link::{FixedFormat, GnbConfig};
use mumimo::mac::{schedule_pusch, SlotSchedule};
use mumimo::pilots::SRS_SYMBOL;
use mumimo::SimError;
use std::f64::consts::PI;

#[test]
fn noiseless_orthogonal_mrc() {
    let mut link = Link::los(0.5, None);
    link.sound();
    let (rep, tx) = link.pusch(1, 0, false, [0.0; 2]);
    assert_eq!(rep.users.len(), 2);
    for u in &rep.users {
        assert_eq!(u.combiner, CombinerKind::Mrc);
        assert!(u.crc_ok);
        assert!(u.evm_mrc < 1.0, "evm {}", u.evm_mrc);
        assert_eq!(u.payload.as_deref(), tx[u.user_id].payload.as_deref());
        assert_eq!(u.delivered_bits, 8 * 177);
    }
}

#[test]
fn nonorthogonal_rzf_separates_mrc_does_not() {
    let mut link = Link::los(0.5, Some(30.0));
    link.sound();
    for slot in 10..20 {
        let (rep, _) = link.pusch(0, slot, true, [0.0; 2]);
        for u in &rep.users {
            assert_eq!(u.combiner, CombinerKind::Rzf);
            assert!(u.crc_ok, "slot {slot} user {}", u.user_id);
            assert!(u.evm_rzf <= 5.0, "rzf evm {}", u.evm_rzf);
            assert!(u.evm_mrc >= 30.0, "mrc evm {}", u.evm_mrc);
            assert_eq!(u.delivered_bits, 8 * 357);
        }
    }
}

#[test]
fn srs_is_processed_before_pusch_in_the_same_slot() {
    let mut link = Link::los(0.5, Some(30.0));
    let mut s = SlotSchedule::empty(0, 8, false);
    s.srs_occasions.push((0, SRS_SYMBOL));
    link.run(&s, [0.0; 2]);
    let mut s = schedule_pusch(0, 9, &[1000, 1000], true, &link.mac);
    s.srs_occasions.push((1, SRS_SYMBOL));
    let (rep, _) = link.run(&s, [0.0; 2]);
    assert_eq!(rep.srs_updates.len(), 1);
    assert_eq!(rep.csi_timestamps, [Some(8), Some(9)]);
    for u in &rep.users {
        assert_eq!(u.csi_source, Some([8, 9]));
        assert!(u.crc_ok);
    }
}

#[test]
fn stale_csi_marks_entries_failed() {
    let mut link = Link::los(0.5, Some(30.0));
    let (rep, _) = link.pusch(0, 0, true, [0.0; 2]);
    assert_eq!(rep.users.len(), 2);
    for u in &rep.users {
        assert!(!u.crc_ok);
        assert_eq!(u.delivered_bits, 0);
        assert!(u.error.as_deref().unwrap().contains("CSI"));
        assert!(u.evm_rzf.is_nan());
    }
    // one user sounded is still not enough for a two-user combiner
    let mut s = SlotSchedule::empty(0, 8, false);
    s.srs_occasions.push((0, SRS_SYMBOL));
    link.run(&s, [0.0; 2]);
    let (rep, _) = link.pusch(0, 1, false, [0.0; 2]);
    assert!(rep.users.iter().all(|u| u.error.is_some()));
}

#[test]
fn two_step_equalization_recovers_planted_rotation() {
    let mut link = Link::los(0.5, Some(30.0));
    link.profiles[0].cfo_hz = 100.0;
    link.profiles[1].cfo_hz = -40.0;
    link.sound();
    // 100 Hz over 5 ms is exactly half a turn
    let tau = 0.005;
    let (rep, _) = link.pusch(0, 18, true, [tau, tau]);
    let u0 = rep.user(0).unwrap();
    assert!(circular_distance(u0.theta_hat, PI) < 0.01, "theta {}", u0.theta_hat);
    let u1 = rep.user(1).unwrap();
    let planted = mumimo::channel::phase_rotation(-40.0, tau);
    assert!(circular_distance(u1.theta_hat, planted) < 0.01);
    for u in &rep.users {
        assert!(u.crc_ok);
        assert!(u.evm_rzf <= 5.0);
    }
}

#[test]
fn report_is_complete() {
    let mut link = Link::los(0.3, Some(25.0));
    link.sound();
    for mu in [false, true] {
        let (rep, _) = link.pusch(1, 3, mu, [0.001, 0.002]);
        assert_eq!((rep.frame_idx, rep.slot_idx), (1, 3));
        assert_eq!(rep.users.len(), 2);
        for u in &rep.users {
            for v in [u.evm_rx, u.evm_mrc, u.evm_rzf, u.theta_hat, u.post_combining_sinr_db] {
                assert!(v.is_finite());
            }
            assert_eq!(u.symbols.rx.len(), u.symbols.mrc.len());
            assert_eq!(u.symbols.rzf.len(), u.symbols.mrc.len());
            assert!(u.error.is_none());
            assert_eq!(u.layer, if mu { u.user_id } else { 0 });
        }
    }
}

#[test]
fn fixed_point_receiver_matches_float() {
    let h = los_matrix(0.5).unwrap();
    let mut float = Link::new(h, Some(30.0), GnbConfig::default());
    let mut fixed = Link::new(
        h,
        Some(30.0),
        GnbConfig { fixed_point: Some(FixedFormat::default()), ..GnbConfig::default() },
    );
    float.sound();
    fixed.sound();
    let (a, _) = float.pusch(0, 12, true, [0.0; 2]);
    let (b, _) = fixed.pusch(0, 12, true, [0.0; 2]);
    for (x, y) in a.users.iter().zip(&b.users) {
        assert!(y.crc_ok);
        assert_eq!(y.fixed_saturations, 0);
        assert!((x.evm_rzf - y.evm_rzf).abs() < 0.5, "{} vs {}", x.evm_rzf, y.evm_rzf);
    }
}

#[test]
fn combiners_follow_every_srs() {
    let mut link = Link::los(0.5, Some(30.0));
    link.sound();
    let first = link.gnb.rzf.clone().unwrap();
    // a different channel sounded later replaces the combiner
    link.chan.h = vec![CMat2::identity(); link.wf.n_sc];
    let mut s = SlotSchedule::empty(0, 18, false);
    s.srs_occasions.push((0, SRS_SYMBOL));
    link.run(&s, [0.0; 2]);
    let second = link.gnb.rzf.clone().unwrap();
    assert_eq!(second.source_slot, [18, 9]);
    assert_ne!(first.v_herm[0], second.v_herm[0]);
}

#[test]
fn bad_inputs() {
    let mut link = Link::los(0.5, None);
    let s = SlotSchedule::empty(0, 0, false);
    let one = vec![mumimo::grid::build_grid(&link.wf, 0, 0).unwrap()];
    assert!(matches!(link.gnb.rx_slot(&one, &s, false, &[]), Err(SimError::Config(_))));
    let bad = GnbConfig { n_srs_prb: 0, seed: SEED, ..GnbConfig::default() };
    assert!(mumimo::link::GnbReceiver::new(bad).is_err());
}
