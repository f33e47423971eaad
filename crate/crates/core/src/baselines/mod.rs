//! Reference samplers sharing the denoiser contract.

pub mod ar;
pub mod stochsync;

pub use ar::{ar_sample, retrieve, ArConfig, ArOutput, Memory, RetrievalConfig, RetrievalEvent, StabilizationScale};
pub use stochsync::{stochsync_sample, window_sets, StochSyncConfig, SyncWindow};
