use super::encode_transport_block;
use crate::error::Result;
use crate::grid::{build_grid, ResourceGrid, WaveformConfig};
use crate::linalg::C64;
use crate::mac::{PuschAlloc, SlotSchedule};
use crate::pilots::{gen_dmrs, gen_srs, DMRS_SYMBOL};
use crate::channel::UeProfile;

/// Output of one UE for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTxSlot {
    pub grid: ResourceGrid,
    /// Transport block sent this slot, if any.
    pub payload: Option<Vec<u8>>,
    /// Coded data symbols in resource-element order.
    pub data_symbols: Vec<C64>,
}

/// Data resource elements of an allocation: symbol-major, DMRS symbol skipped.
pub fn data_positions(alloc: &PuschAlloc) -> Vec<(usize, usize)> {
    alloc
        .symbols
        .clone()
        .filter(|&l| l != DMRS_SYMBOL)
        .flat_map(|l| alloc.prbs.subcarriers().map(move |k| (k, l)))
        .collect()
}

/// Builds a UE's transmit grid from its own grant only.
///
/// The UE takes the granted number of bytes from the front of `backlog`.
pub fn ue_tx_slot(
    config: &WaveformConfig,
    user: &UeProfile,
    sched: &SlotSchedule,
    backlog: &[u8],
    n_srs_sc: usize,
    seed: u64,
) -> Result<UeTxSlot> {
    let mut grid = build_grid(config, sched.frame_idx, sched.slot_idx)?;
    let mut out_payload = None;
    let mut data_symbols = Vec::new();

    if let Some(&(_, sym)) = sched.srs_occasions.iter().find(|(u, _)| *u == user.user_id) {
        let srs = gen_srs(user.user_id, n_srs_sc, seed)?;
        for (k, &p) in srs.sequence.iter().enumerate() {
            grid.set(k, sym, p);
        }
    }

    if let Some(alloc) = sched.alloc_for(user.user_id) {
        let tb = alloc.tb_bytes.min(backlog.len());
        if tb > 0 {
            let payload = backlog[..tb].to_vec();
            let positions = data_positions(alloc);
            let syms = encode_transport_block(&payload, user.user_id, seed, positions.len())?;
            for (&(k, l), &z) in positions.iter().zip(&syms) {
                grid.set(k, l, z);
            }
            let dmrs = gen_dmrs(user.user_id, alloc.prbs, seed)?;
            for ((k, l), &p) in dmrs.positions().into_iter().zip(&dmrs.sequence) {
                grid.set(k, l, p);
            }
            data_symbols = syms;
            out_payload = Some(payload);
        }
    }

    Ok(UeTxSlot {
        grid,
        payload: out_payload,
        data_symbols,
    })
}
