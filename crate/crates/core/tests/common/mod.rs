#![allow(dead_code)]

use mumimo::channel::{los_matrix, propagate, ChannelModel, ChannelRealization, NoiseModel, UeProfile};
use mumimo::grid::WaveformConfig;
use mumimo::linalg::{CMat2, C64};
use mumimo::link::{ue_tx_slot, GnbConfig, GnbReceiver, RxReport, UeTxSlot};
use mumimo::mac::{schedule_pusch, MacConfig, SlotSchedule};
use mumimo::pilots::SRS_SYMBOL;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const SEED: u64 = 5;

pub fn cgauss(rng: &mut ChaCha8Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng) -> CMat2 {
    CMat2([[cgauss(r, 1.0), cgauss(r, 1.0)], [cgauss(r, 1.0), cgauss(r, 1.0)]])
}

/// End-to-end single-link harness operating directly on resource grids.
pub struct Link {
    pub wf: WaveformConfig,
    pub mac: MacConfig,
    pub gnb: GnbReceiver,
    pub chan: ChannelRealization,
    pub profiles: Vec<UeProfile>,
    pub noise_var: f64,
    pub noise_seed: u64,
}

impl Link {
    pub fn new(h: CMat2, snr_db: Option<f64>, gnb_cfg: GnbConfig) -> Self {
        let wf = WaveformConfig::default();
        let model = ChannelModel::FixedLosLike(h.into());
        Link {
            chan: ChannelRealization::flat(h, wf.n_sc, model),
            mac: MacConfig::default(),
            gnb: GnbReceiver::new(GnbConfig { seed: SEED, ..gnb_cfg }).unwrap(),
            profiles: (0..2).map(UeProfile::new).collect(),
            noise_var: snr_db.map_or(0.0, |s| 10f64.powf(-s / 10.0)),
            noise_seed: 1,
            wf,
        }
    }

    pub fn los(rho: f64, snr_db: Option<f64>) -> Self {
        Link::new(los_matrix(rho).unwrap(), snr_db, GnbConfig::default())
    }

    pub fn run(&mut self, sched: &SlotSchedule, elapsed: [f64; 2]) -> (RxReport, Vec<UeTxSlot>) {
        let backlog: Vec<u8> = (0..4000u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
        let tx: Vec<UeTxSlot> = self
            .profiles
            .iter()
            .map(|p| ue_tx_slot(&self.wf, p, sched, &backlog, 240, SEED).unwrap())
            .collect();
        let grids: Vec<_> = tx.iter().map(|t| t.grid.clone()).collect();
        self.noise_seed += 1;
        let noise = NoiseModel { noise_variance: self.noise_var, rng_seed: self.noise_seed };
        let rx = propagate(&grids, &self.chan, &self.profiles, &noise, &elapsed).unwrap();
        let refs: Vec<Option<&[C64]>> = tx
            .iter()
            .map(|t| (!t.data_symbols.is_empty()).then_some(t.data_symbols.as_slice()))
            .collect();
        let rep = self.gnb.rx_slot(&rx, sched, sched.mu_mimo_enabled, &refs).unwrap();
        (rep, tx)
    }

    /// Both users sound (frame 0, slots 8 and 9) with no data.
    pub fn sound(&mut self) {
        for (slot, user) in [(8, 0), (9, 1)] {
            let mut s = SlotSchedule::empty(0, slot, false);
            s.srs_occasions.push((user, SRS_SYMBOL));
            self.run(&s, [0.0; 2]);
        }
    }

    pub fn pusch(&mut self, frame: usize, slot: usize, mu: bool, elapsed: [f64; 2]) -> (RxReport, Vec<UeTxSlot>) {
        let s = schedule_pusch(frame, slot, &[100_000, 100_000], mu, &self.mac);
        self.run(&s, elapsed)
    }
}
