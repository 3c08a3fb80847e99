//! SRS occasions and PUSCH allocation with optional two-layer reuse.

use crate::channel::NUM_USERS;
use crate::error::{Result, SimError};
use crate::grid::{PrbRange, SUBCARRIERS_PER_PRB};
use crate::link::fec::max_payload_bytes;
use crate::pilots::{DMRS_SYMBOL, SRS_SYMBOL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::ops::Range;

/// Slots between a user's two SRS occasions in one frame (5 ms).
pub const SRS_PERIOD_SLOTS: usize = 10;

/// Which slots of a frame are uplink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TddPattern {
    pub uplink: Vec<bool>,
}

impl TddPattern {
    pub fn all_uplink(slots_per_frame: usize) -> Self {
        TddPattern {
            uplink: vec![true; slots_per_frame],
        }
    }

    pub fn is_uplink(&self, slot: usize) -> bool {
        self.uplink.get(slot).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacConfig {
    pub n_prb: usize,
    /// PRBs `0..n_srs_prb` are sounded; the rest are never scheduled.
    pub n_srs_prb: usize,
    pub srs_base_slot: usize,
    pub slots_per_frame: usize,
    pub tdd: TddPattern,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            n_prb: 24,
            n_srs_prb: 20,
            srs_base_slot: 8,
            slots_per_frame: 20,
            tdd: TddPattern::all_uplink(20),
        }
    }
}

impl MacConfig {
    pub fn pusch_prbs(&self) -> PrbRange {
        PrbRange::new(0, self.n_srs_prb)
    }

    pub fn edge_prbs(&self) -> PrbRange {
        PrbRange::new(self.n_srs_prb, self.n_prb - self.n_srs_prb)
    }

    /// PUSCH symbols: all but the last one, which is reserved for SRS.
    pub fn pusch_symbols(&self) -> Range<usize> {
        0..SRS_SYMBOL
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuschAlloc {
    pub layer: usize,
    pub user_id: usize,
    pub prbs: PrbRange,
    pub symbols: Range<usize>,
    /// Granted transport block size.
    pub tb_bytes: usize,
}

impl PuschAlloc {
    /// Resource elements available for coded data (DMRS symbol excluded).
    pub fn data_res(&self) -> usize {
        data_res(self.prbs, &self.symbols)
    }
}

pub fn data_res(prbs: PrbRange, symbols: &Range<usize>) -> usize {
    let n_sym = symbols.clone().filter(|&l| l != DMRS_SYMBOL).count();
    prbs.len * SUBCARRIERS_PER_PRB * n_sym
}

/// Largest transport block an allocation can carry.
pub fn capacity_bytes(prbs: PrbRange, symbols: &Range<usize>) -> usize {
    max_payload_bytes(data_res(prbs, symbols))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchedule {
    pub frame_idx: usize,
    pub slot_idx: usize,
    /// `(user_id, symbol_idx)`.
    pub srs_occasions: Vec<(usize, usize)>,
    pub pusch_allocs: Vec<PuschAlloc>,
    pub mu_mimo_enabled: bool,
}

impl SlotSchedule {
    pub fn empty(frame_idx: usize, slot_idx: usize, mu_mimo_enabled: bool) -> Self {
        SlotSchedule {
            frame_idx,
            slot_idx,
            srs_occasions: Vec::new(),
            pusch_allocs: Vec::new(),
            mu_mimo_enabled,
        }
    }

    pub fn alloc_for(&self, user: usize) -> Option<&PuschAlloc> {
        self.pusch_allocs.iter().find(|a| a.user_id == user)
    }

    pub fn srs_user(&self) -> Option<usize> {
        self.srs_occasions.first().map(|(u, _)| *u)
    }

    pub fn abs_slot(&self, slots_per_frame: usize) -> u64 {
        (self.frame_idx * slots_per_frame + self.slot_idx) as u64
    }

    /// Checks the structural invariants against `cfg`.
    pub fn validate(&self, cfg: &MacConfig) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(format!(
            "frame {} slot {}: {msg}",
            self.frame_idx, self.slot_idx
        )));
        if self.srs_occasions.len() > 1 {
            return bad("more than one SRS occasion".into());
        }
        let edge = cfg.edge_prbs();
        for (i, a) in self.pusch_allocs.iter().enumerate() {
            if a.prbs.is_empty() || a.prbs.end() > cfg.n_prb {
                return bad(format!("allocation {i} has invalid PRBs {:?}", a.prbs));
            }
            if !edge.is_empty() && a.prbs.intersects(&edge) {
                return bad(format!("allocation {i} touches SRS-uncovered PRBs"));
            }
            if !self.mu_mimo_enabled && a.layer != 0 {
                return bad(format!("allocation {i} on layer {} with MU-MIMO off", a.layer));
            }
            for b in &self.pusch_allocs[i + 1..] {
                let shared = self.mu_mimo_enabled && a.layer != b.layer;
                if !shared && a.prbs.intersects(&b.prbs) {
                    return bad(format!("overlapping PRBs {:?} / {:?}", a.prbs, b.prbs));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrsOccasion {
    pub slot_idx: usize,
    pub user_id: usize,
}

/// Two occasions per user per frame: user 0 in `s0` and `s0 + 10`, user 1 one
/// slot later.
pub fn schedule_srs(_frame_idx: usize, users: &[usize], cfg: &MacConfig) -> Result<Vec<SrsOccasion>> {
    if users.len() != NUM_USERS {
        return Err(SimError::Config(format!("SRS plan needs {NUM_USERS} users, got {}", users.len())));
    }
    let s0 = cfg.srs_base_slot;
    let mut out = Vec::with_capacity(4);
    for half in 0..2 {
        for (offset, &user) in users.iter().enumerate() {
            let slot = s0 + half * SRS_PERIOD_SLOTS + offset;
            if slot >= cfg.slots_per_frame || !cfg.tdd.is_uplink(slot) {
                return Err(SimError::Config(format!(
                    "SRS base slot {s0} needs uplink slot {slot}"
                )));
            }
            out.push(SrsOccasion { slot_idx: slot, user_id: user });
        }
    }
    out.sort_by_key(|o| o.slot_idx);
    Ok(out)
}

/// PUSCH allocations for one slot from the sounded PRBs only.
pub fn schedule_pusch(
    frame_idx: usize,
    slot_idx: usize,
    demands: &[usize],
    mu_mimo_enabled: bool,
    cfg: &MacConfig,
) -> SlotSchedule {
    let mut sched = SlotSchedule::empty(frame_idx, slot_idx, mu_mimo_enabled);
    if !cfg.tdd.is_uplink(slot_idx) {
        return sched;
    }
    let band = cfg.pusch_prbs();
    let active: Vec<usize> = demands
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0)
        .map(|(u, _)| u)
        .collect();
    let symbols = cfg.pusch_symbols();
    match (active.len(), mu_mimo_enabled) {
        (0, _) => {}
        (1, _) => sched.pusch_allocs.push(PuschAlloc {
            layer: 0,
            user_id: active[0],
            prbs: band,
            symbols,
            tb_bytes: 0,
        }),
        (_, true) => {
            for (layer, &user) in active.iter().enumerate() {
                sched.pusch_allocs.push(PuschAlloc {
                    layer,
                    user_id: user,
                    prbs: band,
                    symbols: symbols.clone(),
                    tb_bytes: 0,
                });
            }
        }
        (n, false) => {
            let share = band.len / n;
            for (i, &user) in active.iter().enumerate() {
                let len = if i + 1 == n { band.len - share * i } else { share };
                sched.pusch_allocs.push(PuschAlloc {
                    layer: 0,
                    user_id: user,
                    prbs: PrbRange::new(band.start + share * i, len),
                    symbols: symbols.clone(),
                    tb_bytes: 0,
                });
            }
        }
    }
    for a in sched.pusch_allocs.iter_mut() {
        a.tb_bytes = demands[a.user_id].min(capacity_bytes(a.prbs, &a.symbols));
    }
    sched
}

/// Scheduler state: SRS plan plus the MU-MIMO on/off timeline.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pub cfg: MacConfig,
    initial: bool,
    toggles: BTreeMap<usize, bool>,
    current_frame: usize,
}

impl Scheduler {
    pub fn new(cfg: MacConfig, mu_mimo_initial: bool) -> Result<Self> {
        if cfg.n_srs_prb == 0 || cfg.n_srs_prb > cfg.n_prb {
            return Err(SimError::validation("n_srs_prb", "must be in 1..=n_prb"));
        }
        schedule_srs(0, &[0, 1], &cfg)?;
        Ok(Scheduler {
            cfg,
            initial: mu_mimo_initial,
            toggles: BTreeMap::new(),
            current_frame: 0,
        })
    }

    pub fn current_frame(&self) -> usize {
        self.current_frame
    }

    pub fn advance_to(&mut self, frame: usize) {
        self.current_frame = self.current_frame.max(frame);
    }

    /// The new setting holds from `effective_frame` onwards.
    pub fn set_mu_mimo(&mut self, enabled: bool, effective_frame: usize) -> Result<()> {
        if effective_frame < self.current_frame {
            return Err(SimError::Config(format!(
                "MU-MIMO toggle at frame {effective_frame} is before current frame {}",
                self.current_frame
            )));
        }
        self.toggles.retain(|&f, _| f < effective_frame);
        self.toggles.insert(effective_frame, enabled);
        Ok(())
    }

    pub fn mu_mimo_at(&self, frame: usize) -> bool {
        self.toggles
            .range(..=frame)
            .next_back()
            .map(|(_, &on)| on)
            .unwrap_or(self.initial)
    }

    pub fn srs_user_at(&self, slot: usize) -> Option<usize> {
        schedule_srs(self.current_frame, &[0, 1], &self.cfg)
            .ok()?
            .into_iter()
            .find(|o| o.slot_idx == slot)
            .map(|o| o.user_id)
    }

    /// Full schedule (SRS + PUSCH) of one slot.
    pub fn schedule_slot(&mut self, frame: usize, slot: usize, demands: &[usize]) -> SlotSchedule {
        self.advance_to(frame);
        let mut s = schedule_pusch(frame, slot, demands, self.mu_mimo_at(frame), &self.cfg);
        if let Some(u) = self.srs_user_at(slot) {
            s.srs_occasions.push((u, SRS_SYMBOL));
        }
        s
    }
}
