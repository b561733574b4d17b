//! Static network model: shapes, receptive fields, patch split and cost
//! accounting. Everything here is a pure function of the [`NetworkSpec`].

mod cost;
mod patch;
mod spec;

pub use cost::{bitops, mac_count, peak_memory, peak_of_bytes, MemoryModel};
pub use patch::{back_project, receptive_region, split_patches, DataflowBranch, PatchSplit, Region};
pub use spec::{infer_shapes, Activation, FeatureMapShape, LayerKind, LayerSpec, NetworkSpec};
