use super::{decode_transport_block, fec, qpsk_llrs};
use crate::channel::{NUM_RX, NUM_USERS};
use crate::combining::{
    apply_combiner_fixed, compute_mrc, compute_rzf, dequantize_samples, quantize_combiner,
    quantize_samples, word_limits, Combiner, CombinerKind, FixedCombiner,
};
use crate::error::{Result, SimError};
use crate::estimation::{
    estimate_layer_gain, estimate_noise, estimate_srs_channel, ChannelState, LayerGain,
};
use crate::grid::{PrbRange, ResourceGrid, WaveformConfig, SUBCARRIERS_PER_PRB};
use crate::linalg::{CVec2, C64};
use crate::mac::{PuschAlloc, SlotSchedule};
use crate::pilots::{gen_dmrs, gen_srs, SrsPattern};
use serde::{Deserialize, Serialize};

use super::ue::data_positions;

/// Level of the larger of input and output RMS on the integer path.
const FIXED_INPUT_DBFS: f64 = -12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    pub word_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedFormat {
    fn default() -> Self {
        FixedFormat {
            word_bits: 16,
            frac_bits: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnbConfig {
    pub waveform: WaveformConfig,
    pub n_srs_prb: usize,
    /// Seed shared with the UEs for pilots and scrambling.
    pub seed: u64,
    /// Fixed RZF regularization; `None` uses the SRS noise estimate.
    pub sigma_override: Option<f64>,
    /// Integer combiner application when set.
    pub fixed_point: Option<FixedFormat>,
    pub smoothing: usize,
}

impl Default for GnbConfig {
    fn default() -> Self {
        GnbConfig {
            waveform: WaveformConfig::default(),
            n_srs_prb: 20,
            seed: 1,
            sigma_override: None,
            fixed_point: None,
            smoothing: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrsUpdate {
    pub user_id: usize,
    pub stamp: u64,
    pub noise_var: f64,
}

/// Equalized data symbols of one user through each combining path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamSymbols {
    /// Antenna 0, power-normalized only.
    pub rx: Vec<C64>,
    pub mrc: Vec<C64>,
    pub rzf: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRxReport {
    pub user_id: usize,
    pub layer: usize,
    pub combiner: CombinerKind,
    pub tb_bytes: usize,
    pub crc_ok: bool,
    pub delivered_bits: usize,
    /// EVM in percent of the received, MRC- and RZF-combined streams.
    pub evm_rx: f64,
    pub evm_mrc: f64,
    pub evm_rzf: f64,
    pub theta_hat: f64,
    pub post_combining_sinr_db: f64,
    /// CSI timestamps of the combiner used.
    pub csi_source: Option<[u64; NUM_USERS]>,
    pub fixed_saturations: usize,
    pub error: Option<String>,
    pub payload: Option<Vec<u8>>,
    pub symbols: StreamSymbols,
}

impl UserRxReport {
    fn failed(alloc: &PuschAlloc, combiner: CombinerKind, err: &SimError) -> Self {
        UserRxReport {
            user_id: alloc.user_id,
            layer: alloc.layer,
            combiner,
            tb_bytes: alloc.tb_bytes,
            crc_ok: false,
            delivered_bits: 0,
            evm_rx: f64::NAN,
            evm_mrc: f64::NAN,
            evm_rzf: f64::NAN,
            theta_hat: f64::NAN,
            post_combining_sinr_db: f64::NAN,
            csi_source: None,
            fixed_saturations: 0,
            error: Some(err.to_string()),
            payload: None,
            symbols: StreamSymbols::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxReport {
    pub frame_idx: usize,
    pub slot_idx: usize,
    pub srs_updates: Vec<SrsUpdate>,
    pub users: Vec<UserRxReport>,
    pub csi_timestamps: [Option<u64>; NUM_USERS],
}

impl RxReport {
    pub fn user(&self, user_id: usize) -> Option<&UserRxReport> {
        self.users.iter().find(|u| u.user_id == user_id)
    }
}

/// Control channel decoding is not modelled.
pub fn decode_pucch(_rx_grids: &[ResourceGrid], _sched: &SlotSchedule) {}

/// RMS error vector magnitude in percent of the reference RMS.
pub fn evm_percent(measured: &[C64], reference: &[C64]) -> f64 {
    let n = measured.len().min(reference.len());
    if n == 0 {
        return f64::NAN;
    }
    let err: f64 = measured.iter().zip(reference).map(|(m, r)| (m - r).norm_sqr()).sum();
    let pow: f64 = reference[..n].iter().map(|r| r.norm_sqr()).sum();
    100.0 * (err / pow).sqrt()
}

/// EVM against the nearest QPSK point, for when no reference is known.
fn evm_decision_directed(measured: &[C64]) -> f64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let hard: Vec<C64> = measured
        .iter()
        .map(|z| C64::new(a.copysign(z.re), a.copysign(z.im)))
        .collect();
    evm_percent(measured, &hard)
}

/// The gNB receiver with its CSI and combiner state.
pub struct GnbReceiver {
    pub cfg: GnbConfig,
    pub state: ChannelState,
    pub noise_est: [Option<f64>; NUM_USERS],
    pub mrc: Option<Combiner>,
    pub rzf: Option<Combiner>,
    mrc_fixed: Option<FixedCombiner>,
    rzf_fixed: Option<FixedCombiner>,
    srs: Vec<SrsPattern>,
}

struct Streams {
    dmrs: Vec<C64>,
    data: Vec<C64>,
    saturations: usize,
}

impl GnbReceiver {
    pub fn new(cfg: GnbConfig) -> Result<Self> {
        cfg.waveform.validate()?;
        if cfg.n_srs_prb == 0 || cfg.n_srs_prb > cfg.waveform.n_prb {
            return Err(SimError::validation("n_srs_prb", "must be in 1..=n_prb"));
        }
        let srs = (0..NUM_USERS)
            .map(|u| gen_srs(u, cfg.n_srs_prb * SUBCARRIERS_PER_PRB, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        let mut state = ChannelState::new(cfg.waveform.n_sc, PrbRange::new(0, cfg.n_srs_prb));
        state.smoothing = cfg.smoothing;
        Ok(GnbReceiver {
            cfg,
            state,
            noise_est: [None; NUM_USERS],
            mrc: None,
            rzf: None,
            mrc_fixed: None,
            rzf_fixed: None,
            srs,
        })
    }

    pub fn srs_pattern(&self, user: usize) -> &SrsPattern {
        &self.srs[user]
    }

    /// Regularization used for the next RZF computation.
    pub fn sigma(&self) -> f64 {
        if let Some(s) = self.cfg.sigma_override {
            return s;
        }
        let est: Vec<f64> = self.noise_est.iter().flatten().copied().collect();
        if est.is_empty() {
            0.0
        } else {
            est.iter().sum::<f64>() / est.len() as f64
        }
    }

    fn recompute_combiners(&mut self) -> Result<()> {
        if !self.state.all_valid() {
            return Ok(());
        }
        let rzf = compute_rzf(&self.state, self.sigma())?;
        let mrc = compute_mrc(&self.state)?;
        if let Some(fmt) = self.cfg.fixed_point {
            self.rzf_fixed = Some(quantize_combiner(&rzf, fmt.word_bits, fmt.frac_bits)?);
            self.mrc_fixed = Some(quantize_combiner(&mrc, fmt.word_bits, fmt.frac_bits)?);
        }
        self.rzf = Some(rzf);
        self.mrc = Some(mrc);
        Ok(())
    }

    /// Processes one slot: PUCCH, then SRS (CSI and combiner refresh), then
    /// PUSCH with MU-MIMO preprocessing.
    ///
    /// `reference[u]`, when given, holds user `u`'s transmitted data symbols
    /// and is used for EVM; otherwise EVM is decision-directed.
    pub fn rx_slot(
        &mut self,
        rx_grids: &[ResourceGrid],
        sched: &SlotSchedule,
        mu_mimo_active: bool,
        reference: &[Option<&[C64]>],
    ) -> Result<RxReport> {
        if rx_grids.len() != NUM_RX || rx_grids.iter().any(|g| !g.matches(&self.cfg.waveform)) {
            return Err(SimError::Config("receive grids do not match the waveform".into()));
        }
        let stamp = sched.abs_slot(self.cfg.waveform.slots_per_frame);

        decode_pucch(rx_grids, sched);

        let mut srs_updates = Vec::new();
        for &(user, symbol) in &sched.srs_occasions {
            if user >= NUM_USERS {
                return Err(SimError::Index(format!("SRS user {user}")));
            }
            let mut pattern = self.srs[user].clone();
            pattern.symbol_idx = symbol;
            estimate_srs_channel(rx_grids, &pattern, &mut self.state, stamp)?;
            let noise_var = estimate_noise(rx_grids, &pattern, &self.state)?;
            self.noise_est[user] = Some(noise_var);
            self.recompute_combiners()?;
            srs_updates.push(SrsUpdate {
                user_id: user,
                stamp,
                noise_var,
            });
        }

        let mut users = Vec::with_capacity(sched.pusch_allocs.len());
        for alloc in &sched.pusch_allocs {
            let kind = if mu_mimo_active {
                CombinerKind::Rzf
            } else {
                CombinerKind::Mrc
            };
            let r = reference.get(alloc.user_id).copied().flatten();
            let entry = match self.decode_pusch(rx_grids, alloc, kind, r) {
                Ok(e) => e,
                Err(e @ SimError::StaleCsi { .. }) => UserRxReport::failed(alloc, kind, &e),
                Err(e) => return Err(e),
            };
            users.push(entry);
        }

        Ok(RxReport {
            frame_idx: sched.frame_idx,
            slot_idx: sched.slot_idx,
            srs_updates,
            users,
            csi_timestamps: self.state.last_update_slot,
        })
    }

    fn combine_float(
        comb: &Combiner,
        user: usize,
        vectors: &[(usize, CVec2)],
    ) -> Result<Vec<C64>> {
        vectors
            .iter()
            .map(|(k, y)| {
                if !comb.covers(*k) {
                    return Err(SimError::StaleCsi { user });
                }
                let row = comb.v_herm[*k].row(user);
                Ok(row[0] * y[0] + row[1] * y[1])
            })
            .collect()
    }

    fn combine_fixed(
        fix: &FixedCombiner,
        user: usize,
        vectors: &[(usize, CVec2)],
    ) -> Result<(Vec<C64>, usize)> {
        let rms = (vectors.iter().map(|(_, y)| y[0].norm_sqr() + y[1].norm_sqr()).sum::<f64>()
            / (NUM_RX * vectors.len().max(1)) as f64)
            .sqrt();
        // level predicted at the combiner output, from the quantized weights
        let v = fix.dequantize();
        let out_rms = (vectors
            .iter()
            .map(|(k, y)| v.get(*k).map_or(0.0, |m| m.mul_vec(y).iter().map(|z| z.norm_sqr()).sum()))
            .sum::<f64>()
            / (NUM_USERS * vectors.len().max(1)) as f64)
            .sqrt();
        let (_, full) = word_limits(fix.word_bits);
        let target = full as f64 * 10f64.powf(FIXED_INPUT_DBFS / 20.0);
        let level = rms.max(out_rms);
        let scale = if level > 0.0 { target / level } else { 1.0 };
        let ys: Vec<CVec2> = vectors.iter().map(|(_, y)| *y).collect();
        let (ints, mut sat) = quantize_samples(&ys, scale, fix.word_bits);
        let pairs: Vec<_> = vectors.iter().map(|(k, _)| *k).zip(ints).collect();
        let out = apply_combiner_fixed(fix, &pairs).map_err(|_| SimError::StaleCsi { user })?;
        sat += out.saturations;
        let deq = dequantize_samples(&out.values, scale);
        Ok((deq.into_iter().map(|v| v[user]).collect(), sat))
    }

    fn streams(
        &self,
        kind: CombinerKind,
        fixed: bool,
        user: usize,
        dmrs: &[(usize, CVec2)],
        data: &[(usize, CVec2)],
    ) -> Result<Streams> {
        let float = match kind {
            CombinerKind::Mrc => self.mrc.as_ref(),
            CombinerKind::Rzf => self.rzf.as_ref(),
        };
        let fix = match kind {
            CombinerKind::Mrc => self.mrc_fixed.as_ref(),
            CombinerKind::Rzf => self.rzf_fixed.as_ref(),
        };
        let missing = SimError::StaleCsi {
            user: self.state.first_invalid().unwrap_or(user),
        };
        match (fixed, fix) {
            (true, Some(f)) => {
                let all: Vec<_> = dmrs.iter().chain(data).copied().collect();
                let (s, saturations) = Self::combine_fixed(f, user, &all)?;
                let (d, x) = s.split_at(dmrs.len());
                Ok(Streams {
                    dmrs: d.to_vec(),
                    data: x.to_vec(),
                    saturations,
                })
            }
            _ => {
                let c = float.ok_or(missing)?;
                Ok(Streams {
                    dmrs: Self::combine_float(c, user, dmrs)?,
                    data: Self::combine_float(c, user, data)?,
                    saturations: 0,
                })
            }
        }
    }

    fn decode_pusch(
        &self,
        rx_grids: &[ResourceGrid],
        alloc: &PuschAlloc,
        kind: CombinerKind,
        reference: Option<&[C64]>,
    ) -> Result<UserRxReport> {
        let user = alloc.user_id;
        if user >= NUM_USERS {
            return Err(SimError::Index(format!("PUSCH user {user}")));
        }
        if self.rzf.is_none() {
            return Err(SimError::StaleCsi {
                user: self.state.first_invalid().unwrap_or(user),
            });
        }
        let n_sym = fec::coded_bits(alloc.tb_bytes) / 2;
        let dmrs = gen_dmrs(user, alloc.prbs, self.cfg.seed)?;
        let vec_at = |(k, l): (usize, usize)| (k, [rx_grids[0].get(k, l), rx_grids[1].get(k, l)]);
        let dmrs_y: Vec<_> = dmrs.positions().into_iter().map(vec_at).collect();
        let data_pos = data_positions(alloc);
        if n_sym > data_pos.len() {
            return Err(SimError::Capacity {
                payload_bytes: alloc.tb_bytes,
                capacity_bytes: fec::max_payload_bytes(data_pos.len()),
            });
        }
        let data_y: Vec<_> = data_pos[..n_sym].iter().copied().map(vec_at).collect();

        let fixed = self.cfg.fixed_point.is_some();
        let equalize = |s: &Streams| -> Result<(Vec<C64>, LayerGain)> {
            let g = estimate_layer_gain(&s.dmrs, &dmrs)?;
            // derotate by the DMRS phase and normalize the layer amplitude
            let corr = g.gain.inv();
            Ok((s.data.iter().map(|z| z * corr).collect(), g))
        };

        let active = self.streams(kind, fixed, user, &dmrs_y, &data_y)?;
        let (eq, gain) = equalize(&active)?;
        let other_kind = match kind {
            CombinerKind::Mrc => CombinerKind::Rzf,
            CombinerKind::Rzf => CombinerKind::Mrc,
        };
        let (other_eq, _) = equalize(&self.streams(other_kind, false, user, &dmrs_y, &data_y)?)?;

        let noise_var = gain.noise_var / gain.gain.norm_sqr().max(1e-30);
        let (payload, crc_ok) =
            decode_transport_block(&qpsk_llrs(&eq, noise_var), user, self.cfg.seed)?;

        let raw: Vec<C64> = data_y.iter().map(|(_, y)| y[0]).collect();
        let raw_rms = (raw.iter().map(|z| z.norm_sqr()).sum::<f64>() / raw.len().max(1) as f64).sqrt();
        let rx_norm: Vec<C64> = raw.iter().map(|z| z / raw_rms.max(1e-30)).collect();

        let (mrc_eq, rzf_eq) = match kind {
            CombinerKind::Mrc => (eq, other_eq),
            CombinerKind::Rzf => (other_eq, eq),
        };
        let evm = |s: &[C64]| match reference {
            Some(r) => evm_percent(s, r),
            None => evm_decision_directed(s),
        };
        let source = match kind {
            CombinerKind::Mrc => self.mrc.as_ref(),
            CombinerKind::Rzf => self.rzf.as_ref(),
        }
        .map(|c| c.source_slot);

        Ok(UserRxReport {
            user_id: user,
            layer: alloc.layer,
            combiner: kind,
            tb_bytes: alloc.tb_bytes,
            crc_ok,
            delivered_bits: if crc_ok { 8 * payload.len() } else { 0 },
            evm_rx: evm(&rx_norm),
            evm_mrc: evm(&mrc_eq),
            evm_rzf: evm(&rzf_eq),
            theta_hat: gain.theta(),
            post_combining_sinr_db: gain.sinr_db(),
            csi_source: source,
            fixed_saturations: active.saturations,
            error: None,
            payload: crc_ok.then_some(payload),
            symbols: StreamSymbols {
                rx: rx_norm,
                mrc: mrc_eq,
                rzf: rzf_eq,
            },
        })
    }
}
