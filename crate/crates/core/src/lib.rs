//! Fixed-point event-based eye tracking: event aggregation, the quantized
//! JaneEye-Net forward pass, and a performance and energy model of its
//! 8x8 PE accelerator.

pub mod accel;
pub mod activations;
pub mod event_io;
pub mod fixed_point;
pub mod model_io;
pub mod network;
pub mod quantizer;
pub mod tensor;
