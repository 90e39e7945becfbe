//! Batch planning for variable-length sequence datasets.
//!
//! Plans epochs of batches under random, sorted, and bucket strategies with
//! either a fixed number of sequences per batch or a dynamic budget on the
//! padded batch size, and measures the resulting zero padding and batch
//! footprints. A masked SNR / SI-SNR reference shows that padded regions do
//! not reach the loss.
//!
//! All lengths are integer sample counts. Seconds only appear at I/O
//! boundaries and are floored to samples on the way in.

pub mod error;
pub mod manifest;
pub mod masked_loss;
pub mod packer;
mod par;
pub mod planner;
pub mod rng;
pub mod runner;
pub mod stats;

pub use error::{Error, Result};
pub use manifest::{DistributionSpec, Manifest, ManifestFormat, SequenceRecord};
pub use packer::{pack_dynamic, pack_fixed, split_sequences};
pub use planner::{
    assign_bucket, compute_bucket_limits, plan_epochs, Batch, BatchingConfig, BucketBoundary,
    BucketLimitMode, EpochPlan, Segment, SizeMode, Strategy,
};
pub use runner::{plan_hash, run_simulation, write_plan_dump, CellReport, ManifestSource, SimulationSpec};
pub use stats::{aggregate, batch_footprint, padding_of_batch, zpr, EpochStats, Report};
