//! Instruction generation and discrete-event latency simulation for the two
//! cores: three engines per core (fetch, execute, result) exchange
//! synchronization tokens over a double-buffered tile schedule, and the
//! simulated timeline is accounted into the four latency categories
//! `l_wait + l_run + l_sig + l_rst = total`.
//!
//! The accounting follows the execute engine: cycles it spends blocked on
//! fetch tokens are `l_wait`, cycles running tile products are `l_run`,
//! cycles handling sync tokens are `l_sig`, and the result-engine drain
//! after the last execute instruction is `l_rst`. Result writes that
//! overlap execution are hidden inside the execute-side categories, which
//! keeps the identity exact.

mod program;
mod sim;

pub use program::{
    decode_instr, encode_instr, gen_dsp_program, gen_lut_program, gen_program, lower_to_wire,
    BufTarget, Channel, Core, CoreWorkload, EncodeError, EngineKind, InstrProgram, Op, ProgInstr,
    WireExec, WireInstr, WireSync, WireXfer, LUT_WEIGHT_BUF_DEPTH,
};
pub use sim::{simulate, simulate_traced, LatencyBreakdown, TraceEvent};

use crate::cores::{DspCoreGeometry, LutCoreGeometry};
use crate::quantize::QuantScheme;
use crate::workload::{GemmShape, NetworkSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cycle-cost constants of the latency model, kept in one record so
/// calibration is a config change rather than a code change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTunables {
    /// Bits moved per cycle on the DDR bus (one 64-bit word).
    pub bus_bits_per_cycle: u64,
    /// Engine cycles consumed per synchronization token handled.
    pub sync_cycles_per_token: u64,
    /// Cycles to fill the DSP weight register array per tile.
    pub dsp_weight_fill_cycles: u64,
    /// Cycles to drain one DSP tile's partial sums.
    pub dsp_drain_cycles: u64,
    /// Accumulator width written back by the result engine.
    pub result_bits: u64,
    /// Operating frequency used only to convert cycles to milliseconds.
    pub clock_mhz: u64,
}

impl Default for SimTunables {
    fn default() -> Self {
        Self {
            bus_bits_per_cycle: 64,
            sync_cycles_per_token: 1,
            dsp_weight_fill_cycles: 2,
            dsp_drain_cycles: 1,
            result_bits: 32,
            clock_mhz: 100,
        }
    }
}

impl SimTunables {
    /// Convert a cycle count to milliseconds at the configured clock.
    pub fn cycles_to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 / (self.clock_mhz as f64 * 1000.0)
    }
}

/// One complete accelerator configuration: both core geometries, the bound
/// device, and the per-layer quantization scheme and split ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub device: String,
    pub lut: LutCoreGeometry,
    pub dsp: DspCoreGeometry,
    /// Per-layer bit-widths, index-aligned with the network's layers.
    pub schemes: Vec<QuantScheme>,
    /// Per-layer LUT-core filter share, quantized to filter granularity.
    pub ratios: Vec<f64>,
}

impl ArchConfig {
    /// Uniform configuration: one scheme and ratio replicated over `layers`
    /// layers, with first/last forced to the 8-bit scheme.
    pub fn uniform(
        device: &str,
        lut: LutCoreGeometry,
        dsp: DspCoreGeometry,
        layers: usize,
        b_a: u32,
        b_w_lut: u32,
        ratio: f64,
    ) -> Self {
        let schemes = (1..=layers)
            .map(|i| {
                if i == 1 || i == layers {
                    QuantScheme::first_last(i)
                } else {
                    QuantScheme::new(i, b_a, b_w_lut)
                }
            })
            .collect();
        let ratios = (1..=layers)
            .map(|i| if i == 1 || i == layers { 1.0 } else { ratio })
            .collect();
        Self {
            device: device.to_string(),
            lut,
            dsp,
            schemes,
            ratios,
        }
    }

    pub fn scheme(&self, layer_index: usize) -> Result<&QuantScheme, SchedError> {
        self.schemes
            .get(layer_index - 1)
            .filter(|s| s.layer_index == layer_index)
            .ok_or(SchedError::LayerNotConfigured(layer_index))
    }

    pub fn ratio(&self, layer_index: usize) -> Result<f64, SchedError> {
        self.ratios
            .get(layer_index - 1)
            .copied()
            .ok_or(SchedError::LayerNotConfigured(layer_index))
    }
}

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("{core:?} {buffer} buffer (depth {depth}) cannot hold one tile ({needed} entries)")]
    TileTooLarge {
        core: Core,
        buffer: &'static str,
        depth: usize,
        needed: usize,
    },
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("layer {0} has no scheme/ratio in the configuration")]
    LayerNotConfigured(usize),
    #[error("DSP-core share requires activations of at most 4 bits, got {b_a} (assign the layer fully to the LUT-core)")]
    DspActivationBits { b_a: u32 },
    #[error("bit-width {0} outside 1..=8")]
    BadBits(u32),
}

/// Latency of both sides of one layer under a given column split.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLatency {
    pub lut: LatencyBreakdown,
    pub dsp: LatencyBreakdown,
    /// max(L_LUT, L_DSP) in cycles; an empty share contributes zero.
    pub cycles: u64,
}

/// Latency of one layer at an explicit LUT-column share. The DSP-core
/// computes the remaining columns.
pub fn layer_latency_split(
    shape: &GemmShape,
    cfg: &ArchConfig,
    scheme: &QuantScheme,
    lut_cols: usize,
    tunables: &SimTunables,
) -> Result<LayerLatency, SchedError> {
    let dsp_cols = shape.cols - lut_cols.min(shape.cols);
    if dsp_cols > 0 && scheme.b_a > 4 {
        return Err(SchedError::DspActivationBits { b_a: scheme.b_a });
    }
    let lut_work = CoreWorkload {
        rows: shape.rows,
        depth: shape.depth,
        cols: lut_cols,
        b_a: scheme.b_a,
        b_w: scheme.b_w_lut,
    };
    let dsp_work = CoreWorkload {
        rows: shape.rows,
        depth: shape.depth,
        cols: dsp_cols,
        b_a: scheme.b_a.min(4),
        b_w: QuantScheme::DSP_WEIGHT_BITS,
    };
    let lut = simulate(&gen_lut_program(&lut_work, &cfg.lut, tunables)?)?;
    let dsp = simulate(&gen_dsp_program(&dsp_work, &cfg.dsp, tunables)?)?;
    let cycles = lut.total.max(dsp.total);
    Ok(LayerLatency { lut, dsp, cycles })
}

/// Latency of one layer using the configuration's stored ratio.
pub fn layer_latency(
    shape: &GemmShape,
    cfg: &ArchConfig,
    layer_index: usize,
    tunables: &SimTunables,
) -> Result<LayerLatency, SchedError> {
    let scheme = cfg.scheme(layer_index)?;
    let ratio = cfg.ratio(layer_index)?;
    let lut_cols = (ratio * shape.cols as f64).round() as usize;
    layer_latency_split(shape, cfg, scheme, lut_cols.min(shape.cols), tunables)
}

/// End-to-end network latency: layers run inter-layer synchronously, so the
/// total is the sum of per-layer max(L_LUT, L_DSP).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLatency {
    pub per_layer: Vec<LayerLatency>,
    pub cycles: u64,
    pub ms: f64,
}

pub fn network_latency(
    net: &NetworkSpec,
    cfg: &ArchConfig,
    tunables: &SimTunables,
) -> Result<NetworkLatency, SchedError> {
    let mut per_layer = Vec::with_capacity(net.layers.len());
    let mut cycles = 0u64;
    for layer in &net.layers {
        let shape = crate::workload::im2col_dims(layer);
        let lat = layer_latency(&shape, cfg, layer.index, tunables)?;
        cycles += lat.cycles;
        per_layer.push(lat);
    }
    Ok(NetworkLatency {
        per_layer,
        cycles,
        ms: tunables.cycles_to_ms(cycles),
    })
}
