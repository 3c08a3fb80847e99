//! Flat-fading 2x2 multi-user channel with residual-CFO phase drift and AWGN.

use crate::error::{Result, SimError};
use crate::grid::{ResourceGrid, WaveformConfig};
use crate::linalg::{wrap_angle, CMat2, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const NUM_RX: usize = 2;
pub const NUM_USERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeProfile {
    pub user_id: usize,
    pub cfo_hz: f64,
    pub tx_power_db: f64,
    pub channel_seed: u64,
    /// Nominal SRS-to-data delay; the scenario runner tracks the actual one.
    pub srs_data_delay_s: f64,
}

impl UeProfile {
    pub fn new(user_id: usize) -> Self {
        UeProfile {
            user_id,
            cfo_hz: 0.0,
            tx_power_db: 0.0,
            channel_seed: user_id as u64,
            srs_data_delay_s: 0.0,
        }
    }

    pub fn amplitude(&self) -> f64 {
        10f64.powf(self.tx_power_db / 20.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.srs_data_delay_s >= 0.0) {
            return Err(SimError::validation(
                &format!("users[{}].srs_data_delay_s", self.user_id),
                "must be nonnegative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Same matrix on every subcarrier.
    FixedLosLike(CMat2Repr),
    /// Unit-variance circularly-symmetric Gaussian entries, drawn once per
    /// realization and held flat across the band.
    IidRayleigh,
}

/// Serializable form of a 2x2 complex matrix: `[[re, im]; 4]` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CMat2Repr(pub [[f64; 2]; 4]);

impl From<CMat2> for CMat2Repr {
    fn from(m: CMat2) -> Self {
        let e: Vec<_> = m.entries().map(|c| [c.re, c.im]).collect();
        CMat2Repr([e[0], e[1], e[2], e[3]])
    }
}

impl From<CMat2Repr> for CMat2 {
    fn from(r: CMat2Repr) -> Self {
        let c = |i: usize| C64::new(r.0[i][0], r.0[i][1]);
        CMat2([[c(0), c(1)], [c(2), c(3)]])
    }
}

impl ChannelModel {
    pub fn parse(name: &str, correlation: f64) -> Result<Self> {
        match name {
            "fixed_los_like" => Ok(ChannelModel::FixedLosLike(los_matrix(correlation)?.into())),
            "iid_rayleigh" => Ok(ChannelModel::IidRayleigh),
            other => Err(SimError::Config(format!("unknown channel model `{other}`"))),
        }
    }
}

/// Two-element array steering vectors whose normalized column correlation
/// is `rho`. Each entry has unit magnitude.
pub fn los_matrix(rho: f64) -> Result<CMat2> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(SimError::validation(
            "channel_correlation",
            "must lie in [0, 1]",
        ));
    }
    // |1 + e^{j d}| / 2 = |cos(d / 2)|
    let d = 2.0 * rho.acos();
    let one = C64::new(1.0, 0.0);
    Ok(CMat2([[one, one], [one, C64::from_polar(1.0, d)]]))
}

/// Normalized correlation |h0^H h1| / (|h0| |h1|) between the two columns.
pub fn column_correlation(h: &CMat2) -> f64 {
    let (a, b) = (h.column(0), h.column(1));
    crate::linalg::dot_h(&a, &b).norm()
        / (crate::linalg::norm_sqr(&a) * crate::linalg::norm_sqr(&b)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// One M x K matrix per active subcarrier.
    pub h: Vec<CMat2>,
    pub model: ChannelModel,
    /// Held constant between sounding and data.
    pub coherent: bool,
}

impl ChannelRealization {
    pub fn flat(m: CMat2, n_sc: usize, model: ChannelModel) -> Self {
        ChannelRealization {
            h: vec![m; n_sc],
            model,
            coherent: true,
        }
    }
}

pub(crate) fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn draw_channel(seed: u64, model: &ChannelModel, config: &WaveformConfig) -> ChannelRealization {
    let m = match model {
        ChannelModel::FixedLosLike(r) => CMat2::from(*r),
        ChannelModel::IidRayleigh => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = CMat2::ZERO;
            for row in m.0.iter_mut() {
                for e in row.iter_mut() {
                    *e = complex_gaussian(&mut rng, 1.0);
                }
            }
            m
        }
    };
    ChannelRealization::flat(m, config.n_sc, model.clone())
}

/// Builds a realization whose column `k` comes from user `k`'s channel seed.
pub fn draw_user_channels(
    profiles: &[UeProfile],
    model: &ChannelModel,
    config: &WaveformConfig,
) -> ChannelRealization {
    let mut m = CMat2::ZERO;
    for p in profiles.iter().take(NUM_USERS) {
        let r = draw_channel(p.channel_seed, model, config);
        m.set_column(p.user_id, r.h[0].column(p.user_id));
    }
    ChannelRealization::flat(m, config.n_sc, model.clone())
}

/// Phase accumulated by a residual frequency offset over `tau_s`, in (-pi, pi].
pub fn phase_rotation(cfo_hz: f64, tau_s: f64) -> f64 {
    wrap_angle(TAU * cfo_hz * tau_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub noise_variance: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            noise_variance: 0.0,
            rng_seed: 0,
        }
    }

    pub fn from_snr_db(snr_db: f64, rng_seed: u64) -> Self {
        NoiseModel {
            noise_variance: 10f64.powf(-snr_db / 10.0),
            rng_seed,
        }
    }
}

/// `y = H * Theta * A * x + n` on every resource element.
///
/// `elapsed_since_srs[k]` is the time from user `k`'s last sounding to the
/// start of this slot; the resulting rotation is held for the whole slot.
pub fn propagate(
    tx_grids: &[ResourceGrid],
    chan: &ChannelRealization,
    profiles: &[UeProfile],
    noise: &NoiseModel,
    elapsed_since_srs: &[f64],
) -> Result<Vec<ResourceGrid>> {
    if tx_grids.len() != NUM_USERS || profiles.len() != NUM_USERS || elapsed_since_srs.len() != NUM_USERS {
        return Err(SimError::Config(format!(
            "expected {NUM_USERS} users, got {} grids / {} profiles / {} delays",
            tx_grids.len(),
            profiles.len(),
            elapsed_since_srs.len()
        )));
    }
    if !(noise.noise_variance >= 0.0) {
        return Err(SimError::validation("noise_variance", "must be nonnegative"));
    }
    let (n_sc, n_sym) = (tx_grids[0].n_sc(), tx_grids[0].n_sym());
    if tx_grids.iter().any(|g| g.n_sc() != n_sc || g.n_sym() != n_sym) {
        return Err(SimError::Config("transmit grids differ in shape".into()));
    }
    if chan.h.len() != n_sc {
        return Err(SimError::Config(format!(
            "channel has {} subcarriers, grid has {n_sc}",
            chan.h.len()
        )));
    }

    // per-user complex gain a_k * e^{j theta_k}, indexed by column
    let mut gain = [C64::new(0.0, 0.0); NUM_USERS];
    for (p, &tau) in profiles.iter().zip(elapsed_since_srs) {
        if p.user_id >= NUM_USERS {
            return Err(SimError::Index(format!("user id {}", p.user_id)));
        }
        gain[p.user_id] = C64::from_polar(p.amplitude(), phase_rotation(p.cfo_hz, tau));
    }
    let tx: Vec<&ResourceGrid> = {
        let mut order: Vec<(usize, &ResourceGrid)> =
            profiles.iter().map(|p| p.user_id).zip(tx_grids.iter()).collect();
        order.sort_by_key(|(u, _)| *u);
        order.into_iter().map(|(_, g)| g).collect()
    };

    let (frame, slot) = (tx_grids[0].frame_idx, tx_grids[0].slot_idx);
    let mut rx: Vec<ResourceGrid> = (0..NUM_RX)
        .map(|_| ResourceGrid::zeros(n_sc, n_sym, frame, slot))
        .collect();
    for (k, h) in chan.h.iter().enumerate() {
        for l in 0..n_sym {
            let x = [tx[0].get(k, l) * gain[0], tx[1].get(k, l) * gain[1]];
            let y = h.mul_vec(&x);
            for (m, g) in rx.iter_mut().enumerate() {
                g.set(k, l, y[m]);
            }
        }
    }
    if noise.noise_variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
        for g in rx.iter_mut() {
            for v in g.as_mut_slice() {
                *v += complex_gaussian(&mut rng, noise.noise_variance);
            }
        }
    }
    Ok(rx)
}
