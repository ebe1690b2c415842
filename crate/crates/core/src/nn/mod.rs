//! Model construction, initialization, parameter counting, and small-dense siblings.

mod init;
mod model;
mod small_dense;
mod snapshot;
mod spec;

pub use init::{init_weights, InitScheme, InitSpec};
pub use model::{evaluate, finite_diff_grad, BatchGrad, Model, ParamInfo};
pub use small_dense::build_small_dense;
pub use snapshot::{LayerEntry, SnapshotMeta, WeightSnapshot};
pub use spec::{count_params, ArchKind, ArchSpec, ParamScope};
