//! Acceptance criteria. Prints one PASS/FAIL line per criterion.

mod common;

use common::{cgauss, random_matrix, rng, Link};
use mumimo::channel::phase_rotation;
use mumimo::combining::{
    apply_combiner_fixed, compute_rzf, dequantize_samples, quantize_combiner, quantize_samples,
};
use mumimo::estimation::ChannelState;
use mumimo::grid::{build_grid, OfdmModem, PrbRange, WaveformConfig};
use mumimo::linalg::{circular_distance, CMat2, CVec2, C64};
use mumimo::mac::{MacConfig, Scheduler};
use mumimo::simrun::{emit_artifacts, parse_config, render_artifacts, run_scenario};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn within(t0: Instant, limit: Duration) -> Result<Duration, String> {
    let el = t0.elapsed();
    ensure(el < limit, format!("runtime {el:?} exceeds {limit:?}"))?;
    Ok(el)
}

fn evm(measured: &[C64], reference: &[C64]) -> f64 {
    let e: f64 = measured.iter().zip(reference).map(|(m, r)| (m - r).norm_sqr()).sum();
    let p: f64 = reference[..measured.len()].iter().map(|r| r.norm_sqr()).sum();
    100.0 * (e / p).sqrt()
}

fn c1_ofdm_round_trip() -> Outcome {
    let t0 = Instant::now();
    let cfg = WaveformConfig::default();
    let modem = OfdmModem::new(&cfg).map_err(|e| e.to_string())?;
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for slot in 0..cfg.slots_per_frame {
        let mut g = build_grid(&cfg, 0, slot).map_err(|e| e.to_string())?;
        for v in g.as_mut_slice() {
            use rand::Rng;
            let (a, b): (bool, bool) = (r.random(), r.random());
            *v = C64::new(
                if a { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
                if b { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
            );
        }
        let s = modem.modulate(&g).map_err(|e| e.to_string())?;
        ensure(s.len() == 7680, format!("slot {slot}: {} samples", s.len()))?;
        let back = modem.demodulate(&s, 0, slot).map_err(|e| e.to_string())?;
        for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
            worst = worst.max((a - b).norm() / a.norm());
        }
    }
    ensure(worst <= 1e-9, format!("relative error {worst:.2e}"))?;
    let el = within(t0, Duration::from_secs(1))?;
    Ok(format!("20 slots x 7680 samples, max rel err {worst:.1e}, {el:.2?}"))
}

fn c2_rzf_separation() -> Outcome {
    let t0 = Instant::now();
    let mut link = Link::los(0.5, Some(30.0));
    link.profiles[0].cfo_hz = 120.0;
    link.profiles[1].cfo_hz = -80.0;
    let mut sched = Scheduler::new(MacConfig::default(), true).map_err(|e| e.to_string())?;
    let mut last = [0u64; 2];
    let (mut slots, mut worst_rzf, mut best_mrc) = (0, 0.0f64, f64::INFINITY);
    for frame in 0..8 {
        for slot in 0..20 {
            let s = sched.schedule_slot(frame, slot, &[100_000, 100_000]);
            let abs = (frame * 20 + slot) as u64;
            for &(u, _) in &s.srs_occasions {
                last[u] = abs;
            }
            let el = [0, 1].map(|u| (abs - last[u]) as f64 * 0.0005);
            let (rep, tx) = link.run(&s, el);
            if frame == 0 {
                continue;
            }
            slots += 1;
            for u in &rep.users {
                ensure(u.crc_ok, format!("CRC failed frame {frame} slot {slot} user {}", u.user_id))?;
                let reference = &tx[u.user_id].data_symbols;
                worst_rzf = worst_rzf.max(evm(&u.symbols.rzf, reference));
                best_mrc = best_mrc.min(evm(&u.symbols.mrc, reference));
            }
        }
    }
    ensure(slots >= 100, format!("only {slots} slots"))?;
    ensure(worst_rzf <= 5.0, format!("RZF EVM {worst_rzf:.2}%"))?;
    ensure(best_mrc >= 30.0, format!("MRC EVM {best_mrc:.2}%"))?;
    let el = within(t0, Duration::from_secs(30))?;
    Ok(format!(
        "{slots} slots, all CRCs pass, worst RZF EVM {worst_rzf:.2}%, best MRC EVM {best_mrc:.1}%, {el:.2?}"
    ))
}

fn c3_two_step_equalization() -> Outcome {
    let tau = 0.005;
    let theta = phase_rotation(100.0, tau);
    ensure(theta == PI, format!("planted theta {theta}"))?;
    let mut link = Link::los(0.5, Some(30.0));
    link.profiles[0].cfo_hz = 100.0;
    link.profiles[1].cfo_hz = 100.0;
    let trials = 1000;
    let (mut err, mut ev) = (0.0, 0.0);
    for t in 0..trials {
        link.sound();
        let (rep, tx) = link.pusch(1, t % 20, true, [tau, tau]);
        let u = rep.user(0).ok_or("no report for user 0")?;
        err += circular_distance(u.theta_hat, theta);
        ev += evm(&u.symbols.rzf, &tx[0].data_symbols);
    }
    let (err, ev) = (err / trials as f64, ev / trials as f64);
    ensure(err <= 0.01, format!("mean |theta error| {err:.4} rad"))?;
    ensure(ev <= 5.0, format!("post-derotation EVM {ev:.2}%"))?;
    Ok(format!("theta = pi exactly, mean |err| {err:.4} rad over {trials} slots, EVM {ev:.2}%"))
}

fn c4_throughput_doubling() -> Outcome {
    let t0 = Instant::now();
    let cfg = parse_config(
        "duration_frames = 60\nsnr_db = [25.0, 25.0]\nbacklog = \"full_buffer\"\n\
         mu_mimo = false\nmu_mimo_toggles = \"20:on,45:off\"\ncfo_hz = [120.0, -80.0]",
    )
    .map_err(|e| e.to_string())?;
    let m = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let files = render_artifacts(&m);
    let tp = &files.iter().find(|(n, _)| *n == "throughput.csv").ok_or("no throughput.csv")?.1;
    let mut bits = vec![[0f64; 2]; 60];
    for line in tp.lines().skip(1) {
        let f: Vec<usize> = line.split(',').map(|x| x.parse().unwrap()).collect();
        bits[f[0]][f[1]] = f[2] as f64;
    }
    let mean = |u: usize, r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        r.map(|f| bits[f][u]).sum::<f64>() / n
    };
    let mut detail = Vec::new();
    for u in 0..2 {
        let (off1, on, off2) = (mean(u, 0..20), mean(u, 20..45), mean(u, 45..60));
        for (name, off) in [("first", off1), ("second", off2)] {
            let ratio = on / off;
            ensure(
                (ratio - 2.0).abs() <= 0.2,
                format!("user {u}: ON/{name}-OFF ratio {ratio:.3}"),
            )?;
        }
        let agree = (off1 / off2 - 1.0).abs();
        ensure(agree <= 0.05, format!("user {u}: OFF regions differ by {:.1}%", 100.0 * agree))?;
        detail.push(format!("user {u} ON/OFF {:.3}/{:.3}, OFF gap {:.1}%", on / off1, on / off2, 100.0 * agree));
    }
    let el = within(t0, Duration::from_secs(120))?;
    Ok(format!("{}, {el:.2?}", detail.join("; ")))
}

fn schedule_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn c5_srs_cadence() -> Outcome {
    let cfg = parse_config("duration_frames = 100\nbacklog = \"none\"\ntime_domain = false")
        .map_err(|e| e.to_string())?;
    let m = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let files = render_artifacts(&m);
    let sc = &files.iter().find(|(n, _)| *n == "schedule.csv").ok_or("no schedule.csv")?.1;
    let mut occ: [Vec<usize>; 2] = [vec![], vec![]];
    for r in schedule_rows(sc).iter().filter(|r| r[2] == "srs") {
        let abs = r[0].parse::<usize>().unwrap() * 20 + r[1].parse::<usize>().unwrap();
        occ[r[3].parse::<usize>().unwrap()].push(abs);
    }
    for (u, v) in occ.iter().enumerate() {
        ensure(v.len() == 200, format!("user {u}: {} occasions", v.len()))?;
        ensure(v.windows(2).all(|w| w[1] - w[0] == 10), format!("user {u}: period not 10 slots"))?;
    }
    ensure(occ[0].iter().zip(&occ[1]).all(|(a, b)| b - a == 1), "inter-user gap not 1 slot")?;
    Ok("200 occasions per user over 100 frames, period 10 slots (5 ms), gap 1 slot (0.5 ms)".into())
}

/// Gauss-Jordan reference for (H^H H)^{-1} H^H.
fn zf_oracle(h: &CMat2) -> [[C64; 2]; 2] {
    let hh = h.herm();
    let mut g = [[C64::new(0.0, 0.0); 4]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = (0..2).map(|k| hh.0[i][k] * h.0[k][j]).sum();
        }
        g[i][2 + i] = C64::new(1.0, 0.0);
    }
    if g[1][0].norm() > g[0][0].norm() {
        g.swap(0, 1);
    }
    for c in 0..2 {
        let p = g[c][c];
        for v in g[c].iter_mut() {
            *v /= p;
        }
        let o = 1 - c;
        let f = g[o][c];
        let rc = g[c];
        for (v, w) in g[o].iter_mut().zip(rc) {
            *v -= f * w;
        }
    }
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..2).map(|k| g[i][2 + k] * hh.0[k][j]).sum();
        }
    }
    out
}

fn state_of(h: CMat2) -> ChannelState {
    let mut st = ChannelState::new(12, PrbRange::new(0, 1));
    st.h_est = vec![h; 12];
    st.last_update_slot = [Some(0), Some(1)];
    st
}

fn c6_combiner_oracle() -> Outcome {
    let mut r = rng(6);
    let (mut worst_entry, mut worst_off): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let h = random_matrix(&mut r);
        let v = compute_rzf(&state_of(h), 0.0).map_err(|e| e.to_string())?.v_herm[0];
        let want = zf_oracle(&h);
        for i in 0..2 {
            for j in 0..2 {
                worst_entry = worst_entry.max((v.0[i][j] - want[i][j]).norm());
            }
        }
        let p = v * h;
        let off = p.0[0][1].norm_sqr().max(p.0[1][0].norm_sqr()).max(1e-300);
        worst_off = worst_off.max(10.0 * off.log10());
    }
    ensure(worst_entry <= 1e-9, format!("entry error {worst_entry:.2e}"))?;
    ensure(worst_off <= -180.0, format!("off-diagonal power {worst_off:.1} dB"))?;
    Ok(format!("10^4 channels, max entry error {worst_entry:.1e}, worst off-diagonal {worst_off:.1} dB"))
}

fn c7_fixed_point() -> Outcome {
    let mut r = rng(7);
    let h = random_matrix(&mut r);
    let comb = compute_rzf(&state_of(h), 0.01).map_err(|e| e.to_string())?;
    let fix = quantize_combiner(&comb, 16, 12).map_err(|e| e.to_string())?;
    let full = 32767.0;
    let a = 10f64.powf(-12.0 / 20.0);
    let ys: Vec<CVec2> = (0..10_000).map(|_| [cgauss(&mut r, a * a), cgauss(&mut r, a * a)]).collect();
    let (ints, sat_in) = quantize_samples(&ys, full, 16);
    let pairs: Vec<_> = ints.into_iter().enumerate().map(|(i, y)| (i % 12, y)).collect();
    let out = apply_combiner_fixed(&fix, &pairs).map_err(|e| e.to_string())?;
    let sat = sat_in + out.saturations + fix.saturations;
    let deq = dequantize_samples(&out.values, full);
    let mut sqnr = [0.0; 2];
    for (s, q) in sqnr.iter_mut().enumerate() {
        let (mut sig, mut err) = (0.0, 0.0);
        for (y, d) in ys.iter().zip(&deq) {
            let f = comb.v_herm[0].row(s)[0] * y[0] + comb.v_herm[0].row(s)[1] * y[1];
            sig += f.norm_sqr();
            err += (f - d[s]).norm_sqr();
        }
        *q = 10.0 * (sig / err).log10();
    }
    ensure(sat == 0, format!("{sat} saturation events"))?;
    ensure(sqnr.iter().all(|&s| s >= 40.0), format!("SQNR {sqnr:?} dB"))?;
    Ok(format!("10^4 vectors at -12 dBFS, SQNR {:.1}/{:.1} dB, 0 saturations", sqnr[0], sqnr[1]))
}

fn c8_edge_prbs() -> Outcome {
    let docs = [
        "duration_frames = 60\nmu_mimo_toggles = \"20:on,45:off\"\ntime_domain = false",
        "duration_frames = 10\nmu_mimo = true\nbacklog = \"per_frame\"\nbacklog_bytes_per_frame = 3000\ntime_domain = false",
        "duration_frames = 10\nbacklog = \"per_frame\"\nbacklog_bytes_per_frame = 150\nchannel_model = \"iid_rayleigh\"\ntime_domain = false",
    ];
    let mut n = 0;
    for doc in docs {
        let m = run_scenario(&parse_config(doc).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let files = render_artifacts(&m);
        let sc = &files.iter().find(|(n, _)| *n == "schedule.csv").ok_or("no schedule.csv")?.1;
        for r in schedule_rows(sc).iter().filter(|r| r[2] == "pusch") {
            let (start, len): (usize, usize) = (r[5].parse().unwrap(), r[6].parse().unwrap());
            ensure(start + len <= 20, format!("allocation {start}+{len} in frame {} slot {}", r[0], r[1]))?;
            n += 1;
        }
    }
    ensure(n > 0, "no PUSCH allocations emitted")?;
    Ok(format!("{n} PUSCH allocations across 3 scenarios, none in PRBs 20-23"))
}

fn c9_determinism() -> Outcome {
    let doc = "duration_frames = 12\nmu_mimo_toggles = \"4:on,9:off\"\ncfo_hz = [150.0, -60.0]\n\
               channel_model = \"iid_rayleigh\"\nchannel_redraw_frames = 5\nfixed_point = true";
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut written = Vec::new();
    for d in &dirs {
        let cfg = parse_config(doc).map_err(|e| e.to_string())?;
        let m = run_scenario(&cfg).map_err(|e| e.to_string())?;
        written.push(emit_artifacts(&m, d.path()).map_err(|e| e.to_string())?);
    }
    for (a, b) in written[0].iter().zip(&written[1]) {
        let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        ensure(x == y, format!("{} differs", a.file_name().unwrap().to_string_lossy()))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", written[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("ofdm_round_trip", c1_ofdm_round_trip),
        ("rzf_separation", c2_rzf_separation),
        ("two_step_equalization", c3_two_step_equalization),
        ("throughput_doubling", c4_throughput_doubling),
        ("srs_cadence", c5_srs_cadence),
        ("combiner_oracle", c6_combiner_oracle),
        ("fixed_point_fidelity", c7_fixed_point),
        ("edge_prb_exclusion", c8_edge_prbs),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("PASS {} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
