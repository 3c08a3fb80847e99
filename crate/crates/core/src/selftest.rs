//! Fast invariant suite behind the `selftest` command.

use crate::channel::complex_gaussian;
use crate::combining::{
    apply_combiner_fixed, compute_rzf, dequantize_samples, quantize_combiner, quantize_samples,
};
use crate::estimation::ChannelState;
use crate::grid::{build_grid, OfdmModem, PrbRange, WaveformConfig};
use crate::linalg::{CMat2, CVec2};
use crate::link::{decode_transport_block, encode_transport_block, qpsk_llrs};
use crate::mac::{MacConfig, Scheduler, SRS_PERIOD_SLOTS};
use crate::simrun::{parse_config, render_artifacts, run_scenario, ScheduleKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn fail(name: &'static str, e: impl std::fmt::Display) -> Check {
    check(name, false, e.to_string())
}

fn ofdm_round_trip() -> Check {
    let name = "ofdm_round_trip";
    let cfg = WaveformConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut g = build_grid(&cfg, 0, 3).expect("valid slot");
    for v in g.as_mut_slice() {
        *v = complex_gaussian(&mut rng, 1.0);
    }
    let run = || -> crate::Result<(usize, f64)> {
        let m = OfdmModem::new(&cfg)?;
        let s = m.modulate(&g)?;
        let back = m.demodulate(&s, 0, 3)?;
        let err = g
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).norm() / a.norm().max(1e-300))
            .fold(0.0, f64::max);
        Ok((s.len(), err))
    };
    match run() {
        Ok((n, err)) => check(name, n == 7680 && err < 1e-9, format!("{n} samples, max rel err {err:.2e}")),
        Err(e) => fail(name, e),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> (ChannelState, CMat2) {
    let mut h = CMat2::ZERO;
    for row in h.0.iter_mut() {
        for e in row.iter_mut() {
            *e = complex_gaussian(rng, 1.0);
        }
    }
    let mut st = ChannelState::new(12, PrbRange::new(0, 1));
    st.h_est = vec![h; 12];
    st.last_update_slot = [Some(0), Some(1)];
    (st, h)
}

fn rzf_inverse() -> Check {
    let name = "rzf_zero_forcing";
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (st, h) = random_state(&mut rng);
        let v = match compute_rzf(&st, 0.0) {
            Ok(c) => c.v_herm[0],
            Err(e) => return fail(name, e),
        };
        let p = v * h;
        let off = p.0[0][1].norm_sqr().max(p.0[1][0].norm_sqr());
        worst = worst.max(10.0 * off.max(1e-300).log10());
    }
    check(name, worst <= -180.0, format!("worst off-diagonal {worst:.1} dB"))
}

fn fixed_point_sqnr() -> Check {
    let name = "fixed_point_sqnr";
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (st, _) = random_state(&mut rng);
    let run = || -> crate::Result<(f64, usize)> {
        let comb = compute_rzf(&st, 0.01)?;
        let fix = quantize_combiner(&comb, 16, 12)?;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        // -12 dBFS per component at full scale 1.0
        let amp = 10f64.powf(-12.0 / 20.0);
        let ys: Vec<CVec2> = (0..1000)
            .map(|_| [complex_gaussian(&mut rng, amp * amp), complex_gaussian(&mut rng, amp * amp)])
            .collect();
        let scale = 32767.0;
        let (ints, mut sat) = quantize_samples(&ys, scale, 16);
        let pairs: Vec<_> = ints.into_iter().enumerate().map(|(i, y)| (i % 12, y)).collect();
        let out = apply_combiner_fixed(&fix, &pairs)?;
        sat += out.saturations + fix.saturations;
        let deq = dequantize_samples(&out.values, scale);
        let (mut sig, mut err) = (0.0, 0.0);
        for (y, q) in ys.iter().zip(&deq) {
            let r = comb.v_herm[0].mul_vec(y);
            for s in 0..2 {
                sig += r[s].norm_sqr();
                err += (r[s] - q[s]).norm_sqr();
            }
        }
        Ok((10.0 * (sig / err).log10(), sat))
    };
    match run() {
        Ok((sqnr, sat)) => check(name, sqnr >= 40.0 && sat == 0, format!("SQNR {sqnr:.1} dB, {sat} saturations")),
        Err(e) => fail(name, e),
    }
}

fn srs_cadence() -> Check {
    let name = "srs_cadence";
    let mac = MacConfig::default();
    let spf = mac.slots_per_frame;
    let mut s = match Scheduler::new(mac, false) {
        Ok(s) => s,
        Err(e) => return fail(name, e),
    };
    let mut seen: [Vec<usize>; 2] = [vec![], vec![]];
    for f in 0..100 {
        for slot in 0..spf {
            for &(u, _) in &s.schedule_slot(f, slot, &[0, 0]).srs_occasions {
                seen[u].push(f * spf + slot);
            }
        }
    }
    let periodic = seen
        .iter()
        .all(|v| v.len() == 200 && v.windows(2).all(|w| w[1] - w[0] == SRS_PERIOD_SLOTS));
    let gap = seen[0].iter().zip(&seen[1]).all(|(a, b)| b - a == 1);
    check(name, periodic && gap, format!("{} + {} occasions", seen[0].len(), seen[1].len()))
}

fn fec_loopback() -> Check {
    let name = "fec_loopback";
    let payload: Vec<u8> = (0..177u32).map(|i| (i * 31 % 251) as u8).collect();
    let res = encode_transport_block(&payload, 1, 5, 1440)
        .and_then(|s| decode_transport_block(&qpsk_llrs(&s, 0.5), 1, 5));
    match res {
        Ok((out, ok)) => check(name, ok && out == payload, format!("crc {}", if ok { "pass" } else { "fail" })),
        Err(e) => fail(name, e),
    }
}

fn scenario_invariants() -> Check {
    let name = "scenario_invariants";
    let doc = "duration_frames = 3\nmu_mimo_toggles = \"1:on,2:off\"\ntime_domain = false\n";
    let run = || -> crate::Result<String> {
        let cfg = parse_config(doc)?;
        let a = run_scenario(&cfg)?;
        let b = run_scenario(&cfg)?;
        let edge = PrbRange::new(20, 4);
        let edge_ok = a
            .schedule
            .iter()
            .filter(|e| e.kind == ScheduleKind::Pusch)
            .all(|e| !PrbRange::new(e.prb_start, e.prb_len).intersects(&edge));
        let same = render_artifacts(&a) == render_artifacts(&b);
        let conserved = a.frames.iter().all(|r| r.delivered_bits <= r.capacity_bits);
        if edge_ok && same && conserved {
            Ok(format!("{} schedule entries", a.schedule.len()))
        } else {
            Err(crate::SimError::Config(format!(
                "edge {edge_ok}, deterministic {same}, conserved {conserved}"
            )))
        }
    };
    match run() {
        Ok(d) => check(name, true, d),
        Err(e) => fail(name, e),
    }
}

/// Runs every check; never panics.
pub fn run_all() -> Vec<Check> {
    vec![
        ofdm_round_trip(),
        rzf_inverse(),
        fixed_point_sqnr(),
        srs_cadence(),
        fec_loopback(),
        scenario_invariants(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
