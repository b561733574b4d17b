//! Minimal tensor interpreter used for calibration and fidelity checks.

mod calibrate;
pub mod format;
mod forward;
mod tensor;
mod weights;

pub use calibrate::{calibrate, CalibrationPools, CalibrationSet};
pub use forward::{forward_fp, forward_patched, forward_quant};
pub(crate) use forward::forward_patched_prepared;
pub use tensor::Tensor;
pub use weights::{LayerWeights, WeightSet};
