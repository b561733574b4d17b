//! Mixed-precision quantization planning for patch-based CNN inference on
//! memory-constrained devices.

pub mod actstats;
pub mod bits;
pub mod error;
pub mod netgraph;
pub mod pipeline;
pub mod refengine;
pub mod synth;
pub mod vdpc;
pub mod vdqs;

pub use bits::Bitwidth;
pub use error::{Error, Result};
