//! Desk-scale design-space exploration toolkit for a heterogeneous FPGA DNN
//! accelerator built from two computing cores: a bit-parallel DSP core with a
//! fixed 4-bit weight path and a bit-serial LUT core with run-time flexible
//! operand bit-widths.
//!
//! The crate is organized around the flow of a single design evaluation:
//!
//! * [`workload`] — DNN descriptors and im2col GEMM shapes
//! * [`quantize`] — uniform quantizer, bit-plane decomposition, hybrid
//!   per-filter quantization with KL-divergence allocation
//! * [`cores`] — value-exact functional GEMM simulation of both cores
//! * [`cost`] — analytic LUT/BRAM/DSP resource models and device fitting
//! * [`sched`] — instruction generation and discrete-event latency simulation
//! * [`split`] — optimal per-layer workload split between the two cores
//! * [`dse`] — DDPG-driven end-to-end configuration search plus a random
//!   baseline and pluggable accuracy oracles

pub mod cores;
pub mod cost;
pub mod dse;
pub mod quantize;
pub mod sched;
pub mod split;
pub mod workload;

pub use cores::{DspCoreGeometry, LutCoreGeometry};
pub use cost::{DeviceProfile, ResourceReport};
pub use quantize::{FilterAssignment, QuantParams, QuantScheme};
pub use sched::{ArchConfig, LatencyBreakdown, SimTunables};
pub use split::SplitPlan;
pub use workload::{GemmShape, LayerSpec, NetworkSpec};
