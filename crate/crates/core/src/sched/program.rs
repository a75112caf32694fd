//! Per-core instruction programs: three engine queues (fetch, execute,
//! result) plus sync tokens, generated from a tiled GEMM workload, and the
//! 128-bit wire encoding of the instruction stream.
//!
//! The schedule is the double-buffered weight-tile pattern: per activation
//! chunk, the first weight tile is fetched, the chunk's activation tile-rows
//! are fetched once each, and the remaining weight tiles stream in while the
//! execute engine consumes them. Fetches block on free buffer slots
//! (realizing the wait-execute stalls), executes block on fetch tokens
//! (wait-fetch), and the result engine drains on execute tokens.

use super::{SchedError, SimTunables};
use crate::cores::{DspCoreGeometry, LutCoreGeometry};
use crate::workload::GemmShape;
use crate::ArchConfig;
use serde::{Deserialize, Serialize};

/// Weight-buffer depth of the LUT-core. Removed from the search space (the
/// weight buffer reads one tile at once), so the latency model pins it here
/// and `LutCoreGeometry::d_lbuf_w` only feeds the cost model.
pub const LUT_WEIGHT_BUF_DEPTH: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Core {
    Lut,
    Dsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineKind {
    Fetch,
    Execute,
    Result,
}

/// Token channels between the engines of one core. The first two carry
/// data-ready tokens from fetch to execute; the slot-free channels carry
/// buffer credits back; the last gates the result engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    ActReady,
    WeightReady,
    ActSlotFree,
    WeightSlotFree,
    ResultReady,
}

pub const CHANNEL_COUNT: usize = 5;

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::ActReady => 0,
            Channel::WeightReady => 1,
            Channel::ActSlotFree => 2,
            Channel::WeightSlotFree => 3,
            Channel::ResultReady => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Some(match i {
            0 => Channel::ActReady,
            1 => Channel::WeightReady,
            2 => Channel::ActSlotFree,
            3 => Channel::WeightSlotFree,
            4 => Channel::ResultReady,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BufTarget {
    Act,
    Weight,
    Result,
}

/// Operation performed by one instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Fetch { buf: BufTarget, tile: u32 },
    Execute { tile: u32 },
    Result { tile: u32 },
    /// Emit `count` tokens on `channel`; costs one cycle per token.
    Sync { channel: Channel, count: u64 },
}

/// One instruction: operation, busy cycles, and the tokens it must consume
/// before starting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgInstr {
    pub op: Op,
    pub cycles: u64,
    pub waits: Vec<(Channel, u64)>,
}

impl ProgInstr {
    fn new(op: Op, cycles: u64) -> Self {
        Self { op, cycles, waits: Vec::new() }
    }

    fn wait(mut self, channel: Channel, count: u64) -> Self {
        if count > 0 {
            self.waits.push((channel, count));
        }
        self
    }
}

/// The per-core, per-layer instruction program: one queue per engine plus
/// the initial buffer-slot credits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrProgram {
    pub core: Core,
    pub fetch: Vec<ProgInstr>,
    pub execute: Vec<ProgInstr>,
    pub result: Vec<ProgInstr>,
    /// Activation tile-row slots available at time zero.
    pub act_slot_credits: u64,
    /// Weight tile slots available at time zero.
    pub weight_slot_credits: u64,
    /// Clock used for cycle-to-ms conversion downstream.
    pub clock_mhz: u64,
}

impl InstrProgram {
    fn empty(core: Core, clock_mhz: u64) -> Self {
        Self {
            core,
            fetch: Vec::new(),
            execute: Vec::new(),
            result: Vec::new(),
            act_slot_credits: 0,
            weight_slot_credits: 0,
            clock_mhz,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.fetch.is_empty() && self.execute.is_empty() && self.result.is_empty()
    }

    pub fn instruction_count(&self) -> usize {
        self.fetch.len() + self.execute.len() + self.result.len()
    }

    /// Tokens emitted by the fetch engine per channel.
    pub fn fetch_sync_tokens(&self, channel: Channel) -> u64 {
        self.fetch
            .iter()
            .filter_map(|i| match i.op {
                Op::Sync { channel: c, count } if c == channel => Some(count),
                _ => None,
            })
            .sum()
    }

    /// Tokens consumed by execute-engine gates per channel.
    pub fn execute_wait_tokens(&self, channel: Channel) -> u64 {
        self.execute
            .iter()
            .flat_map(|i| i.waits.iter())
            .filter(|(c, _)| *c == channel)
            .map(|&(_, n)| n)
            .sum()
    }
}

/// One core's share of a layer: GEMM extents and operand bit-widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreWorkload {
    pub rows: usize,
    pub depth: usize,
    pub cols: usize,
    pub b_a: u32,
    pub b_w: u32,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Balanced 1-D tiling: ceil(total/block) tiles with the elements dealt as
/// evenly as possible across them. Balancing the buffer loads keeps every
/// tile within one element of the others, so pipeline fill depends on the
/// tile count rather than on the raw block size.
struct Tiling {
    total: usize,
    tiles: usize,
}

impl Tiling {
    fn new(total: usize, block: usize) -> Self {
        Self { total, tiles: ceil_div(total.max(1), block) }
    }

    fn count(&self) -> usize {
        self.tiles
    }

    fn extent(&self, i: usize) -> usize {
        let base = self.total / self.tiles;
        let rem = self.total % self.tiles;
        base + usize::from(i < rem)
    }
}

struct ScheduleParams {
    rb: Tiling,
    cb: Tiling,
    /// Tile-rows resident in the activation buffers.
    cap_a: usize,
    /// Weight tiles resident in the weight buffers.
    cap_w: usize,
    /// Fetch cycles per activation matrix row.
    act_burst: u64,
    /// Fetch cycles per weight matrix column.
    weight_burst: u64,
    /// Result cycles per output row.
    result_burst: u64,
}

/// Emit the common double-buffered schedule. `exec_emit` fills the execute
/// instructions of one chunk given (chunk tile-row range, col blocks).
fn emit_schedule(
    core: Core,
    p: &ScheduleParams,
    tunables: &SimTunables,
    exec_chunk: impl Fn(&mut Vec<ProgInstr>, usize, usize, bool),
) -> InstrProgram {
    let mut prog = InstrProgram::empty(core, tunables.clock_mhz);
    prog.act_slot_credits = p.cap_a as u64;
    prog.weight_slot_credits = p.cap_w as u64;

    let rb_count = p.rb.count();
    let cb_count = p.cb.count();
    let chunks = ceil_div(rb_count, p.cap_a);
    let sync = tunables.sync_cycles_per_token;

    for chunk in 0..chunks {
        let rb_lo = chunk * p.cap_a;
        let rb_hi = ((chunk + 1) * p.cap_a).min(rb_count);
        let rbs_in_chunk = rb_hi - rb_lo;

        // Fetch queue: first weight tile, the chunk's activation tile-rows,
        // then the remaining weight tiles held back by slot credits.
        let fetch_weight = |prog: &mut InstrProgram, cbi: usize| {
            let tile = (chunk * cb_count + cbi) as u32;
            let cycles = p.cb.extent(cbi) as u64 * p.weight_burst;
            prog.fetch.push(
                ProgInstr::new(Op::Fetch { buf: BufTarget::Weight, tile }, cycles)
                    .wait(Channel::WeightSlotFree, 1),
            );
            prog.fetch.push(ProgInstr::new(
                Op::Sync { channel: Channel::WeightReady, count: 1 },
                sync,
            ));
        };
        fetch_weight(&mut prog, 0);
        for rb in rb_lo..rb_hi {
            let cycles = p.rb.extent(rb) as u64 * p.act_burst;
            prog.fetch.push(
                ProgInstr::new(Op::Fetch { buf: BufTarget::Act, tile: rb as u32 }, cycles)
                    .wait(Channel::ActSlotFree, 1),
            );
            prog.fetch.push(ProgInstr::new(
                Op::Sync { channel: Channel::ActReady, count: 1 },
                sync,
            ));
        }
        for cbi in 1..cb_count {
            fetch_weight(&mut prog, cbi);
        }

        // Execute queue: core-specific tile products plus the slot releases
        // and the completion token for the result engine.
        exec_chunk(&mut prog.execute, rb_lo, rb_hi, chunk == 0);
        prog.execute.push(ProgInstr::new(
            Op::Sync { channel: Channel::ActSlotFree, count: rbs_in_chunk as u64 },
            rbs_in_chunk as u64 * sync,
        ));
        prog.execute.push(ProgInstr::new(
            Op::Sync { channel: Channel::ResultReady, count: 1 },
            sync,
        ));
    }

    // The result engine stores the full output strip back to DDR once every
    // product has completed.
    prog.result.push(
        ProgInstr::new(Op::Result { tile: 0 }, p.rb.total as u64 * p.result_burst)
            .wait(Channel::ResultReady, chunks as u64),
    );
    prog
}

fn burst_cycles(elements: usize, bits: u64, bus: u64) -> u64 {
    (elements as u64 * bits).div_ceil(bus)
}

/// Generate the LUT-core program for one layer share.
///
/// Execute granularity is one instruction per (weight tile, activation
/// plane, weight plane): each runs the chunk's tile-rows through all depth
/// blocks, one binary M x K x N block per cycle. Total run cycles are
/// therefore ceil(rows/M) * ceil(cols/N) * ceil(depth/K) * b_a * b_w.
pub fn gen_lut_program(
    w: &CoreWorkload,
    geom: &LutCoreGeometry,
    tunables: &SimTunables,
) -> Result<InstrProgram, SchedError> {
    if w.cols == 0 {
        return Ok(InstrProgram::empty(Core::Lut, tunables.clock_mhz));
    }
    if !(1..=8).contains(&w.b_a) {
        return Err(SchedError::BadBits(w.b_a));
    }
    if !(1..=8).contains(&w.b_w) {
        return Err(SchedError::BadBits(w.b_w));
    }

    let db = ceil_div(w.depth, geom.k);
    // One tile-row occupies db entries per activation plane in each of the
    // M row buffers; one weight tile db entries per plane per column buffer.
    let act_entries = db * w.b_a as usize;
    let cap_a = geom.d_lbuf_a / act_entries;
    if cap_a == 0 {
        return Err(SchedError::TileTooLarge {
            core: Core::Lut,
            buffer: "activation",
            depth: geom.d_lbuf_a,
            needed: act_entries,
        });
    }
    let weight_entries = db * w.b_w as usize;
    let cap_w = LUT_WEIGHT_BUF_DEPTH / weight_entries;
    if cap_w == 0 {
        return Err(SchedError::TileTooLarge {
            core: Core::Lut,
            buffer: "weight",
            depth: LUT_WEIGHT_BUF_DEPTH,
            needed: weight_entries,
        });
    }

    let bus = tunables.bus_bits_per_cycle;
    let params = ScheduleParams {
        rb: Tiling::new(w.rows, geom.m),
        cb: Tiling::new(w.cols, geom.n),
        cap_a,
        cap_w,
        act_burst: burst_cycles(w.depth, w.b_a as u64, bus),
        weight_burst: burst_cycles(w.depth, w.b_w as u64, bus),
        result_burst: burst_cycles(w.cols, tunables.result_bits, bus),
    };

    let pairs = (w.b_a * w.b_w) as usize;
    let sync = tunables.sync_cycles_per_token;
    let cb_count = params.cb.count();
    let prog = emit_schedule(Core::Lut, &params, tunables, |exec, rb_lo, rb_hi, _first| {
        let rbs = (rb_hi - rb_lo) as u64;
        for cbi in 0..cb_count {
            for pair in 0..pairs {
                let mut instr = ProgInstr::new(
                    Op::Execute { tile: (cbi * pairs + pair) as u32 },
                    rbs * db as u64,
                );
                if pair == 0 {
                    instr = instr.wait(Channel::WeightReady, 1);
                    if cbi == 0 {
                        // The whole chunk's activations must be resident
                        // before its first binary product starts.
                        instr = instr.wait(Channel::ActReady, rbs);
                    }
                }
                exec.push(instr);
            }
            exec.push(ProgInstr::new(
                Op::Sync { channel: Channel::WeightSlotFree, count: 1 },
                sync,
            ));
        }
    });
    Ok(prog)
}

/// Generate the DSP-core program for one layer share.
///
/// Execute granularity is one instruction per (tile-row, weight tile
/// strip): each register-array tile costs one cycle per activation row
/// loaded plus the weight-fill and drain constants, repeated over the depth
/// blocks. Both operands live in the 4-bit datapath regardless of the
/// quantization scheme (narrow activations are zero-padded), so the DSP
/// latency depends only on the geometry knobs.
pub fn gen_dsp_program(
    w: &CoreWorkload,
    geom: &DspCoreGeometry,
    tunables: &SimTunables,
) -> Result<InstrProgram, SchedError> {
    if w.cols == 0 {
        return Ok(InstrProgram::empty(Core::Dsp, tunables.clock_mhz));
    }
    const STORED_BITS: u64 = 4;

    let dbd = ceil_div(w.depth, geom.n_reg_col_a);
    let cap_a = geom.d_dbuf_a / dbd;
    if cap_a == 0 {
        return Err(SchedError::TileTooLarge {
            core: Core::Dsp,
            buffer: "activation",
            depth: geom.d_dbuf_a,
            needed: dbd,
        });
    }
    // Two weight columns share one buffer, so a 16-column strip occupies
    // 2 * dbd entries per buffer.
    let strip_entries = 2 * dbd;
    let cap_w = geom.d_dbuf_w / strip_entries;
    if cap_w == 0 {
        return Err(SchedError::TileTooLarge {
            core: Core::Dsp,
            buffer: "weight",
            depth: geom.d_dbuf_w,
            needed: strip_entries,
        });
    }

    let bus = tunables.bus_bits_per_cycle;
    let params = ScheduleParams {
        rb: Tiling::new(w.rows, geom.n_reg_row_a),
        cb: Tiling::new(w.cols, geom.n_reg_col_w),
        cap_a,
        cap_w,
        act_burst: burst_cycles(w.depth, STORED_BITS, bus),
        weight_burst: burst_cycles(w.depth, STORED_BITS, bus),
        result_burst: burst_cycles(w.cols, tunables.result_bits, bus),
    };

    let sync = tunables.sync_cycles_per_token;
    let cb_count = params.cb.count();
    let rb_tiling = Tiling::new(w.rows, geom.n_reg_row_a);
    let per_tile_overhead = tunables.dsp_weight_fill_cycles + tunables.dsp_drain_cycles;
    let prog = emit_schedule(Core::Dsp, &params, tunables, |exec, rb_lo, rb_hi, _first| {
        let rbs = (rb_hi - rb_lo) as u64;
        for cbi in 0..cb_count {
            for rb in rb_lo..rb_hi {
                let fill = rb_tiling.extent(rb) as u64;
                let mut instr = ProgInstr::new(
                    Op::Execute { tile: (cbi * rb_tiling.count() + rb) as u32 },
                    dbd as u64 * (fill + per_tile_overhead),
                );
                if cbi == 0 && rb == rb_lo {
                    // The chunk's activations must be resident before its
                    // first register-array tile loads.
                    instr = instr.wait(Channel::ActReady, rbs);
                }
                if rb == rb_lo {
                    instr = instr.wait(Channel::WeightReady, 1);
                }
                exec.push(instr);
            }
            exec.push(ProgInstr::new(
                Op::Sync { channel: Channel::WeightSlotFree, count: 1 },
                sync,
            ));
        }
    });
    Ok(prog)
}

/// Generate the program for one core's share of a layer, picking shares
/// from the configuration's stored ratio.
pub fn gen_program(
    shape: &GemmShape,
    cfg: &ArchConfig,
    layer_index: usize,
    core: Core,
    tunables: &SimTunables,
) -> Result<InstrProgram, SchedError> {
    let scheme = cfg.scheme(layer_index)?;
    let ratio = cfg.ratio(layer_index)?;
    let lut_cols = ((ratio * shape.cols as f64).round() as usize).min(shape.cols);
    match core {
        Core::Lut => gen_lut_program(
            &CoreWorkload {
                rows: shape.rows,
                depth: shape.depth,
                cols: lut_cols,
                b_a: scheme.b_a,
                b_w: scheme.b_w_lut,
            },
            &cfg.lut,
            tunables,
        ),
        Core::Dsp => {
            let dsp_cols = shape.cols - lut_cols;
            if dsp_cols > 0 && scheme.b_a > 4 {
                return Err(SchedError::DspActivationBits { b_a: scheme.b_a });
            }
            gen_dsp_program(
                &CoreWorkload {
                    rows: shape.rows,
                    depth: shape.depth,
                    cols: dsp_cols,
                    b_a: scheme.b_a.min(4),
                    b_w: crate::quantize::QuantScheme::DSP_WEIGHT_BITS,
                },
                &cfg.dsp,
                tunables,
            )
        }
    }
}

// --- 128-bit wire encoding -------------------------------------------------
//
// All instructions encode into one 128-bit word. Field layout (LSB first):
//   [0..2)   kind: 0 Fetch, 1 Execute, 2 Result, 3 Sync
//   [2..3)   core: 0 LUT, 1 DSP
// Fetch / Result:
//   [3..19)  on-chip buffer base address (16)
//   [19..22) stage control (3)
//   [22..23) buffer read/write range flag (1)
//   [23..55) DDR base address (32)
//   [55..79) DDR offset (24)
//   [79..95) DDR read/write range (16)
//   [95..127) transfer length in bus words (32)
// Execute:
//   [3..19)  on-chip buffer base address (16)
//   [19..43) tile id (24)
//   [43..83) busy cycles (40)
// Sync:
//   [3..4)   current engine state (1)
//   [4..6)   next engine state (2)
//   [6..9)   token channel flag (3)
//   [9..33)  token count (24)

/// Wire-level instruction: exactly the fields that live in the 128-bit
/// word. Scheduling gates are structural (derived from program order and
/// buffer credits) and are not part of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireInstr {
    Fetch(WireXfer),
    Execute(WireExec),
    Result(WireXfer),
    Sync(WireSync),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireXfer {
    pub core: Core,
    pub buf_base: u16,
    pub stage: u8,
    pub buf_range: bool,
    pub ddr_base: u32,
    pub ddr_offset: u32,
    pub ddr_range: u16,
    pub words: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireExec {
    pub core: Core,
    pub buf_base: u16,
    pub tile: u32,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireSync {
    pub core: Core,
    pub current_state: bool,
    pub next_state: u8,
    pub token_flag: u8,
    pub count: u32,
}

fn pack(word: &mut u128, value: u128, lo: u32, width: u32) {
    debug_assert!(value < (1u128 << width));
    *word |= value << lo;
}

fn unpack(word: u128, lo: u32, width: u32) -> u128 {
    (word >> lo) & ((1u128 << width) - 1)
}

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("field {field} value {value} exceeds {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("reserved instruction kind {0}")]
    BadKind(u8),
}

pub fn encode_instr(instr: &WireInstr) -> Result<u128, EncodeError> {
    let mut w = 0u128;
    let check = |field: &'static str, value: u64, bits: u32| -> Result<u128, EncodeError> {
        if bits < 64 && value >= (1u64 << bits) {
            Err(EncodeError::FieldOverflow { field, value, bits })
        } else {
            Ok(value as u128)
        }
    };
    match instr {
        WireInstr::Fetch(x) | WireInstr::Result(x) => {
            pack(&mut w, if matches!(instr, WireInstr::Fetch(_)) { 0 } else { 2 }, 0, 2);
            pack(&mut w, (x.core == Core::Dsp) as u128, 2, 1);
            pack(&mut w, x.buf_base as u128, 3, 16);
            pack(&mut w, check("stage", x.stage as u64, 3)?, 19, 3);
            pack(&mut w, x.buf_range as u128, 22, 1);
            pack(&mut w, x.ddr_base as u128, 23, 32);
            pack(&mut w, check("ddr_offset", x.ddr_offset as u64, 24)?, 55, 24);
            pack(&mut w, x.ddr_range as u128, 79, 16);
            pack(&mut w, x.words as u128, 95, 32);
        }
        WireInstr::Execute(x) => {
            pack(&mut w, 1, 0, 2);
            pack(&mut w, (x.core == Core::Dsp) as u128, 2, 1);
            pack(&mut w, x.buf_base as u128, 3, 16);
            pack(&mut w, check("tile", x.tile as u64, 24)?, 19, 24);
            pack(&mut w, check("cycles", x.cycles, 40)?, 43, 40);
        }
        WireInstr::Sync(x) => {
            pack(&mut w, 3, 0, 2);
            pack(&mut w, (x.core == Core::Dsp) as u128, 2, 1);
            pack(&mut w, x.current_state as u128, 3, 1);
            pack(&mut w, check("next_state", x.next_state as u64, 2)?, 4, 2);
            pack(&mut w, check("token_flag", x.token_flag as u64, 3)?, 6, 3);
            pack(&mut w, check("count", x.count as u64, 24)?, 9, 24);
        }
    }
    Ok(w)
}

pub fn decode_instr(word: u128) -> Result<WireInstr, EncodeError> {
    let kind = unpack(word, 0, 2) as u8;
    let core = if unpack(word, 2, 1) == 1 { Core::Dsp } else { Core::Lut };
    let instr = match kind {
        0 | 2 => {
            let x = WireXfer {
                core,
                buf_base: unpack(word, 3, 16) as u16,
                stage: unpack(word, 19, 3) as u8,
                buf_range: unpack(word, 22, 1) == 1,
                ddr_base: unpack(word, 23, 32) as u32,
                ddr_offset: unpack(word, 55, 24) as u32,
                ddr_range: unpack(word, 79, 16) as u16,
                words: unpack(word, 95, 32) as u32,
            };
            if kind == 0 {
                WireInstr::Fetch(x)
            } else {
                WireInstr::Result(x)
            }
        }
        1 => WireInstr::Execute(WireExec {
            core,
            buf_base: unpack(word, 3, 16) as u16,
            tile: unpack(word, 19, 24) as u32,
            cycles: unpack(word, 43, 40) as u64,
        }),
        3 => WireInstr::Sync(WireSync {
            core,
            current_state: unpack(word, 3, 1) == 1,
            next_state: unpack(word, 4, 2) as u8,
            token_flag: unpack(word, 6, 3) as u8,
            count: unpack(word, 9, 24) as u32,
        }),
        other => return Err(EncodeError::BadKind(other)),
    };
    Ok(instr)
}

/// DDR region bases of the fixed memory map used when lowering.
const DDR_ACT_BASE: u32 = 0x0000_0000;
const DDR_WEIGHT_BASE: u32 = 0x4000_0000;
const DDR_RESULT_BASE: u32 = 0x8000_0000;

/// Lower a program to its wire form, engine queues concatenated in
/// fetch, execute, result order. Deterministic for a given program.
pub fn lower_to_wire(prog: &InstrProgram) -> Vec<WireInstr> {
    let engine_stage = |e: EngineKind| match e {
        EngineKind::Fetch => 0u8,
        EngineKind::Execute => 1,
        EngineKind::Result => 2,
    };
    let mut out = Vec::with_capacity(prog.instruction_count());
    for (engine, queue) in [
        (EngineKind::Fetch, &prog.fetch),
        (EngineKind::Execute, &prog.execute),
        (EngineKind::Result, &prog.result),
    ] {
        for instr in queue {
            let wire = match &instr.op {
                Op::Fetch { buf, tile } => WireInstr::Fetch(WireXfer {
                    core: prog.core,
                    buf_base: (*tile as u16).wrapping_mul(4),
                    stage: engine_stage(engine),
                    buf_range: matches!(buf, BufTarget::Weight),
                    ddr_base: match buf {
                        BufTarget::Act => DDR_ACT_BASE,
                        BufTarget::Weight => DDR_WEIGHT_BASE,
                        BufTarget::Result => DDR_RESULT_BASE,
                    },
                    ddr_offset: (*tile).min((1 << 24) - 1),
                    ddr_range: (instr.cycles as u16).max(1),
                    words: instr.cycles as u32,
                }),
                Op::Result { tile } => WireInstr::Result(WireXfer {
                    core: prog.core,
                    buf_base: (*tile as u16).wrapping_mul(4),
                    stage: engine_stage(engine),
                    buf_range: false,
                    ddr_base: DDR_RESULT_BASE,
                    ddr_offset: (*tile).min((1 << 24) - 1),
                    ddr_range: (instr.cycles as u16).max(1),
                    words: instr.cycles as u32,
                }),
                Op::Execute { tile } => WireInstr::Execute(WireExec {
                    core: prog.core,
                    buf_base: (*tile as u16).wrapping_mul(4),
                    tile: *tile,
                    cycles: instr.cycles,
                }),
                Op::Sync { channel, count } => WireInstr::Sync(WireSync {
                    core: prog.core,
                    current_state: true,
                    next_state: match channel {
                        Channel::ActReady | Channel::WeightReady => 1,
                        Channel::ActSlotFree | Channel::WeightSlotFree => 0,
                        Channel::ResultReady => 2,
                    },
                    token_flag: channel.index() as u8,
                    count: *count as u32,
                }),
            };
            out.push(wire);
        }
    }
    out
}
