//! Discrete-event execution of a three-engine instruction program.
//!
//! Each engine runs its queue in order. An instruction starts once its
//! engine is free and every token gate is satisfied; tokens become
//! available when the emitting sync instruction completes. All channels
//! have a single producer, so committing ready engine heads in any order
//! reaches the same (deterministic) schedule.

use super::program::{Channel, EngineKind, InstrProgram, Op, ProgInstr, CHANNEL_COUNT};
use super::SchedError;
use serde::Serialize;
use std::collections::VecDeque;

/// Cycle accounting of one simulated program, viewed from the execute
/// engine: `total = l_wait + l_run + l_sig + l_rst`, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyBreakdown {
    /// Cycles the execute engine spent blocked on tokens.
    pub l_wait: u64,
    /// Cycles the execute engine spent running tile products.
    pub l_run: u64,
    /// Cycles the execute engine spent handling sync tokens.
    pub l_sig: u64,
    /// Result-engine drain after the last execute instruction.
    pub l_rst: u64,
    pub total: u64,
    /// Total converted at the program's clock (100 MHz by default).
    pub total_ms: f64,
}

/// One line of the simulation event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub engine: EngineKind,
    /// WF / WE / run / SE, following the schedule's status names.
    pub status: &'static str,
    pub detail: String,
}

struct EngineRun<'p> {
    kind: EngineKind,
    queue: &'p [ProgInstr],
    pc: usize,
    clock: u64,
}

impl<'p> EngineRun<'p> {
    fn head(&self) -> Option<&'p ProgInstr> {
        self.queue.get(self.pc)
    }
}

struct TokenChannel {
    /// Completion times of emitted-but-unconsumed tokens.
    available: VecDeque<u64>,
}

impl TokenChannel {
    fn with_credits(credits: u64) -> Self {
        let mut available = VecDeque::new();
        for _ in 0..credits {
            available.push_back(0);
        }
        Self { available }
    }

    /// Time at which `n` tokens are jointly available, if emitted yet.
    fn ready_time(&self, n: u64) -> Option<u64> {
        if (self.available.len() as u64) < n {
            return None;
        }
        Some(self.available[(n - 1) as usize])
    }

    fn consume(&mut self, n: u64) {
        for _ in 0..n {
            self.available.pop_front();
        }
    }

    fn emit(&mut self, time: u64, count: u64) {
        for _ in 0..count {
            self.available.push_back(time);
        }
    }
}

fn wait_status(waits: &[(Channel, u64)]) -> &'static str {
    // Waiting on data from the fetch engine is WF; waiting on buffer slots
    // or downstream readiness is WE.
    if waits
        .iter()
        .any(|(c, _)| matches!(c, Channel::ActReady | Channel::WeightReady))
    {
        "WF"
    } else {
        "WE"
    }
}

fn op_detail(op: &Op) -> String {
    match op {
        Op::Fetch { buf, tile } => format!("fetch {buf:?} tile {tile}"),
        Op::Execute { tile } => format!("execute tile {tile}"),
        Op::Result { tile } => format!("result chunk {tile}"),
        Op::Sync { channel, count } => format!("sync {channel:?} x{count}"),
    }
}

/// Simulate a program and return its latency breakdown.
pub fn simulate(program: &InstrProgram) -> Result<LatencyBreakdown, SchedError> {
    run(program, None)
}

/// Simulate and append one event per engine-state transition to `trace`.
pub fn simulate_traced(
    program: &InstrProgram,
    trace: &mut Vec<TraceEvent>,
) -> Result<LatencyBreakdown, SchedError> {
    run(program, Some(trace))
}

fn run(
    program: &InstrProgram,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<LatencyBreakdown, SchedError> {
    let mut engines = [
        EngineRun { kind: EngineKind::Fetch, queue: &program.fetch, pc: 0, clock: 0 },
        EngineRun { kind: EngineKind::Execute, queue: &program.execute, pc: 0, clock: 0 },
        EngineRun { kind: EngineKind::Result, queue: &program.result, pc: 0, clock: 0 },
    ];
    let mut channels: [TokenChannel; CHANNEL_COUNT] = [
        TokenChannel::with_credits(0),
        TokenChannel::with_credits(0),
        TokenChannel::with_credits(program.act_slot_credits),
        TokenChannel::with_credits(program.weight_slot_credits),
        TokenChannel::with_credits(0),
    ];

    let mut breakdown = LatencyBreakdown::default();

    loop {
        let mut progressed = false;
        for e in engines.iter_mut() {
            // Drain every ready instruction of this engine before moving on;
            // commits only add tokens, so this is confluent.
            while let Some(instr) = e.head() {
                let mut start = e.clock;
                let mut ready = true;
                for &(ch, n) in &instr.waits {
                    match channels[ch.index()].ready_time(n) {
                        Some(t) => start = start.max(t),
                        None => {
                            ready = false;
                            break;
                        }
                    }
                }
                if !ready {
                    break;
                }
                for &(ch, n) in &instr.waits {
                    channels[ch.index()].consume(n);
                }
                let end = start + instr.cycles;
                if let Op::Sync { channel, count } = instr.op {
                    channels[channel.index()].emit(end, count);
                }
                if let Some(t) = trace.as_deref_mut() {
                    if start > e.clock {
                        t.push(TraceEvent {
                            cycle: e.clock,
                            engine: e.kind,
                            status: wait_status(&instr.waits),
                            detail: format!("{} cycles before {}", start - e.clock, op_detail(&instr.op)),
                        });
                    }
                    t.push(TraceEvent {
                        cycle: start,
                        engine: e.kind,
                        status: if matches!(instr.op, Op::Sync { .. }) { "SE" } else { "run" },
                        detail: op_detail(&instr.op),
                    });
                }
                if e.kind == EngineKind::Execute {
                    let gap = start - e.clock;
                    breakdown.l_wait += gap;
                    match instr.op {
                        Op::Sync { .. } => breakdown.l_sig += instr.cycles,
                        _ => breakdown.l_run += instr.cycles,
                    }
                }
                e.clock = end;
                e.pc += 1;
                progressed = true;
            }
        }
        if engines.iter().all(|e| e.pc == e.queue.len()) {
            break;
        }
        if !progressed {
            let state: Vec<String> = engines
                .iter()
                .map(|e| {
                    let waiting = e
                        .head()
                        .map(|i| format!("{:?} waiting on {:?}", i.op, i.waits))
                        .unwrap_or_else(|| "done".into());
                    format!("{:?}@{} instr {}/{}: {}", e.kind, e.clock, e.pc, e.queue.len(), waiting)
                })
                .collect();
            return Err(SchedError::Deadlock(state.join("; ")));
        }
    }

    let exec_end = engines[1].clock;
    let result_end = engines[2].clock;
    breakdown.l_rst = result_end.saturating_sub(exec_end);
    breakdown.total = breakdown.l_wait + breakdown.l_run + breakdown.l_sig + breakdown.l_rst;
    breakdown.total_ms = breakdown.total as f64 / (program.clock_mhz as f64 * 1000.0);
    Ok(breakdown)
}

#[cfg(test)]
mod tests {
    use super::super::program::{BufTarget, Core, CoreWorkload};
    use super::super::{gen_dsp_program, gen_lut_program, SimTunables};
    use super::*;
    use crate::cores::{DspCoreGeometry, LutCoreGeometry};

    fn instr(op: Op, cycles: u64) -> ProgInstr {
        ProgInstr { op, cycles, waits: Vec::new() }
    }

    fn instr_wait(op: Op, cycles: u64, waits: Vec<(Channel, u64)>) -> ProgInstr {
        ProgInstr { op, cycles, waits }
    }

    /// Three-instruction program with hand-traced timeline:
    /// fetch 0-10, sync 10-11; execute waits 11 cycles then runs 11-31,
    /// syncs 31-32; result runs 32-37. Total 37 = 11 + 20 + 1 + 5.
    fn hand_program() -> InstrProgram {
        InstrProgram {
            core: Core::Lut,
            fetch: vec![
                instr(Op::Fetch { buf: BufTarget::Act, tile: 0 }, 10),
                instr(Op::Sync { channel: Channel::ActReady, count: 1 }, 1),
            ],
            execute: vec![
                instr_wait(Op::Execute { tile: 0 }, 20, vec![(Channel::ActReady, 1)]),
                instr(Op::Sync { channel: Channel::ResultReady, count: 1 }, 1),
            ],
            result: vec![instr_wait(Op::Result { tile: 0 }, 5, vec![(Channel::ResultReady, 1)])],
            act_slot_credits: 0,
            weight_slot_credits: 0,
            clock_mhz: 100,
        }
    }

    #[test]
    fn hand_traced_three_instruction_program() {
        let b = simulate(&hand_program()).unwrap();
        assert_eq!(b.l_wait, 11);
        assert_eq!(b.l_run, 20);
        assert_eq!(b.l_sig, 1);
        assert_eq!(b.l_rst, 5);
        assert_eq!(b.total, 37);
        assert!((b.total_ms - 37.0 / 100_000.0).abs() < 1e-15);
    }

    #[test]
    fn empty_program_is_all_zero() {
        let p = InstrProgram {
            core: Core::Dsp,
            fetch: vec![],
            execute: vec![],
            result: vec![],
            act_slot_credits: 0,
            weight_slot_credits: 0,
            clock_mhz: 100,
        };
        let b = simulate(&p).unwrap();
        assert_eq!(b, LatencyBreakdown::default());
    }

    #[test]
    fn token_imbalance_deadlocks_with_state() {
        let mut p = hand_program();
        // Execute now needs two tokens but the fetch engine emits one.
        p.execute[0].waits = vec![(Channel::ActReady, 2)];
        let err = simulate(&p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Execute"), "{msg}");
        assert!(msg.contains("ActReady"), "{msg}");
    }

    #[test]
    fn doubling_weight_bits_doubles_lut_run() {
        let geom = LutCoreGeometry::new(4, 4, 64, 4096);
        let t = SimTunables::default();
        let base = CoreWorkload { rows: 16, depth: 48, cols: 12, b_a: 3, b_w: 2 };
        let wide = CoreWorkload { b_w: 4, ..base };
        let b1 = simulate(&gen_lut_program(&base, &geom, &t).unwrap()).unwrap();
        let b2 = simulate(&gen_lut_program(&wide, &geom, &t).unwrap()).unwrap();
        assert_eq!(b2.l_run, 2 * b1.l_run);
    }

    #[test]
    fn breakdown_identity_on_generated_programs() {
        let t = SimTunables::default();
        for (rows, depth, cols) in [(1usize, 1usize, 1usize), (7, 33, 5), (40, 128, 24), (64, 300, 17)] {
            let w = CoreWorkload { rows, depth, cols, b_a: 3, b_w: 5 };
            let lp = gen_lut_program(&w, &LutCoreGeometry::new(4, 4, 64, 1024), &t).unwrap();
            let b = simulate(&lp).unwrap();
            assert_eq!(b.total, b.l_wait + b.l_run + b.l_sig + b.l_rst);
            let w4 = CoreWorkload { b_a: 4, b_w: 4, ..w };
            let dp = gen_dsp_program(&w4, &DspCoreGeometry::new(4, 256, 1024), &t).unwrap();
            let b = simulate(&dp).unwrap();
            assert_eq!(b.total, b.l_wait + b.l_run + b.l_sig + b.l_rst);
        }
    }

    #[test]
    fn trace_reports_wait_and_run() {
        let mut trace = Vec::new();
        simulate_traced(&hand_program(), &mut trace).unwrap();
        assert!(trace.iter().any(|e| e.engine == EngineKind::Execute && e.status == "WF"));
        assert!(trace.iter().any(|e| e.engine == EngineKind::Fetch && e.status == "run"));
        assert!(trace.iter().any(|e| e.engine == EngineKind::Result && e.status == "run" && e.cycle == 32));
    }

    #[test]
    fn determinism_across_runs() {
        let t = SimTunables::default();
        let w = CoreWorkload { rows: 50, depth: 200, cols: 30, b_a: 4, b_w: 6 };
        let p = gen_lut_program(&w, &LutCoreGeometry::new(3, 7, 128, 2048), &t).unwrap();
        let first = simulate(&p).unwrap();
        for _ in 0..5 {
            assert_eq!(simulate(&p).unwrap(), first);
        }
    }
}
