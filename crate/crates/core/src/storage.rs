//! Counters for positional-encoding values materialised by each attention
//! path. The paths record the sizes of the matrices they actually allocate.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::encoding::{BiasMatrix, EtaPair};
use crate::tensor::Scalar;

#[derive(Debug, Default)]
pub struct PeLedger {
    eta_values: AtomicUsize,
    mask_values: AtomicUsize,
    eta_allocations: AtomicUsize,
    mask_allocations: AtomicUsize,
}

/// Snapshot of a [`PeLedger`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeCounts {
    pub eta_values: usize,
    pub mask_values: usize,
    pub eta_allocations: usize,
    pub mask_allocations: usize,
}

impl PeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_eta<T: Scalar>(&self, eta: &EtaPair<T>) {
        self.eta_values
            .fetch_add(eta.stored_values(), Ordering::Relaxed);
        self.eta_allocations.fetch_add(2, Ordering::Relaxed);
    }

    pub fn record_mask<T: Scalar>(&self, mask: &BiasMatrix<T>) {
        self.mask_values
            .fetch_add(mask.values.len(), Ordering::Relaxed);
        self.mask_allocations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn counts(&self) -> PeCounts {
        PeCounts {
            eta_values: self.eta_values.load(Ordering::Relaxed),
            mask_values: self.mask_values.load(Ordering::Relaxed),
            eta_allocations: self.eta_allocations.load(Ordering::Relaxed),
            mask_allocations: self.mask_allocations.load(Ordering::Relaxed),
        }
    }
}
