//! Bookkeeping for tall `N×r` factor blocks.
//!
//! Every factor the low-rank path keeps alive (supports, right-hand-side
//! factors, Householder storage, stage terms) is wrapped in a [`Block`].
//! Construction and drop update per-thread live/peak counters, which the
//! integrators expose so that callers can check that no step ever holds
//! more than its budget of tall blocks. Krylov workspaces are tracked
//! separately as a column count.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

use crate::linalg::CMat;

thread_local! {
    static LIVE: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
    static KRYLOV_PEAK: Cell<usize> = const { Cell::new(0) };
}

/// An owned tall factor block, counted while alive.
#[derive(Debug, PartialEq)]
pub struct Block(CMat);

impl Block {
    pub fn new(m: CMat) -> Self {
        LIVE.with(|live| {
            let now = live.get() + 1;
            live.set(now);
            PEAK.with(|p| p.set(p.get().max(now)));
        });
        Block(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Block::new(CMat::zeros(rows, cols))
    }

    /// Releases the matrix; the block stops being counted.
    pub fn into_inner(mut self) -> CMat {
        std::mem::replace(&mut self.0, CMat::zeros(0, 0))
    }
}

impl Clone for Block {
    fn clone(&self) -> Self {
        Block::new(self.0.clone())
    }
}

impl Drop for Block {
    fn drop(&mut self) {
        LIVE.with(|live| live.set(live.get() - 1));
    }
}

impl Deref for Block {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl DerefMut for Block {
    fn deref_mut(&mut self) -> &mut CMat {
        &mut self.0
    }
}

impl From<CMat> for Block {
    fn from(m: CMat) -> Self {
        Block::new(m)
    }
}

/// Snapshot of the per-thread counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCounts {
    pub live: usize,
    pub peak: usize,
    pub krylov_peak_columns: usize,
}

pub fn counts() -> BlockCounts {
    BlockCounts {
        live: LIVE.with(Cell::get),
        peak: PEAK.with(Cell::get),
        krylov_peak_columns: KRYLOV_PEAK.with(Cell::get),
    }
}

/// Resets the peak counters to the current live count.
pub fn reset_peak() {
    let live = LIVE.with(Cell::get);
    PEAK.with(|p| p.set(live));
    KRYLOV_PEAK.with(|p| p.set(0));
}

pub(crate) fn note_krylov_columns(cols: usize) {
    KRYLOV_PEAK.with(|p| p.set(p.get().max(cols)));
}
