//! Magnitude pruning: masks, one-shot pruning, and the iterative 20% schedule.

mod magnitude;
mod mask;

pub use magnitude::{imp_next, imp_sparsity, omp, PruneScope, SparsityRatio, IMP_RATE};
pub use mask::{apply_mask, Mask, MaskLayer, MaskMeta, MaskMethod};
