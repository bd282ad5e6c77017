//! Digit-level event log shared by the engine, the memory simulator and the
//! CDAG builder.
//!
//! Every event produces exactly one value, and the value id is the index of
//! the producing event. A value is a machine word: digit vertices keep the
//! propagated carry in their high part, so consumers that want the digit read
//! `value mod s`. The id [`NONE`] stands for a constant zero digit that has no
//! producing event.

use serde::{Deserialize, Serialize};

pub type ValueId = u32;

/// Constant-zero placeholder id.
pub const NONE: ValueId = u32::MAX;

/// Subproblem tag for events emitted outside any multiplication node
/// (input loads and output stores).
pub const TOP: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    InputLoad,
    ElementaryProduct,
    Add,
    Sub,
    ScalarMul,
    ExactDivSmall,
    Shift,
    CarryPropagate,
    OutputStore,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::InputLoad,
        OpKind::ElementaryProduct,
        OpKind::Add,
        OpKind::Sub,
        OpKind::ScalarMul,
        OpKind::ExactDivSmall,
        OpKind::Shift,
        OpKind::CarryPropagate,
        OpKind::OutputStore,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::InputLoad => "InputLoad",
            OpKind::ElementaryProduct => "ElementaryProduct",
            OpKind::Add => "Add",
            OpKind::Sub => "Sub",
            OpKind::ScalarMul => "ScalarMul",
            OpKind::ExactDivSmall => "ExactDivSmall",
            OpKind::Shift => "Shift",
            OpKind::CarryPropagate => "CarryPropagate",
            OpKind::OutputStore => "OutputStore",
        }
    }
}

/// One traced operation.
///
/// Semantics, with `lo(v) = v mod s`, `hi(v) = v div s` (floored) and absent
/// operands reading as zero:
///
/// | kind | value |
/// |---|---|
/// | InputLoad | `imm` |
/// | ElementaryProduct | `lo(x) * lo(y)` |
/// | Add | `lo(x) + lo(y)`, or `x + y` when `wide` |
/// | Sub | `lo(x) - lo(y)`, or `x - y` when `wide` |
/// | ScalarMul | `lo(x) * imm` |
/// | ExactDivSmall | `t / imm + s * (t mod imm)` where `t = hi(y) * s + lo(x)` |
/// | Shift | `lo(x)` |
/// | CarryPropagate | `x + hi(y)` |
/// | OutputStore | `lo(x)` |
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub kind: OpKind,
    pub args: [ValueId; 2],
    pub imm: i64,
    pub wide: bool,
    pub sub: u32,
}

impl Event {
    /// Real (non-constant) operands in argument order.
    pub fn operands(&self) -> impl Iterator<Item = ValueId> + '_ {
        self.args.iter().copied().filter(|&a| a != NONE)
    }

    /// Evaluates the event given its operand values.
    pub fn eval(&self, base: u64, x: i128, y: i128) -> i128 {
        let s = base as i128;
        let lo = |v: i128| v.rem_euclid(s);
        let hi = |v: i128| v.div_euclid(s);
        match self.kind {
            OpKind::InputLoad => self.imm as i128,
            OpKind::ElementaryProduct => lo(x) * lo(y),
            OpKind::Add if self.wide => x + y,
            OpKind::Add => lo(x) + lo(y),
            OpKind::Sub if self.wide => x - y,
            OpKind::Sub => lo(x) - lo(y),
            OpKind::ScalarMul => lo(x) * self.imm as i128,
            OpKind::ExactDivSmall => {
                let d = self.imm as i128;
                let t = hi(y) * s + lo(x);
                t.div_euclid(d) + s * t.rem_euclid(d)
            }
            OpKind::Shift | OpKind::OutputStore => lo(x),
            OpKind::CarryPropagate => x + hi(y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Standard,
    Toom { k: usize },
}

/// One multiplication subproblem as executed.
#[derive(Clone, Debug)]
pub struct SubInfo {
    pub parent: Option<u32>,
    pub child_index: u32,
    pub depth: u32,
    /// Child indices from the root.
    pub path: Vec<u32>,
    /// Size used for splitting and admissibility checks.
    pub nominal: usize,
    pub node: NodeKind,
    pub a: Vec<ValueId>,
    pub b: Vec<ValueId>,
    pub c: Vec<ValueId>,
    /// Event range `[start, end)` covering this subproblem and its children.
    pub events: (u32, u32),
    /// For standard nodes, the range holding products and accumulations.
    pub mul_span: Option<(u32, u32)>,
}

impl SubInfo {
    /// Actual operand size `max(|A_i|, |B_i|)`.
    pub fn size(&self) -> usize {
        self.a.len().max(self.b.len())
    }
}

/// Receiver for traced events. `ON == false` compiles tracing away.
pub trait Sink {
    const ON: bool;
    fn emit(&mut self, kind: OpKind, args: [ValueId; 2], imm: i64, wide: bool) -> ValueId;
    /// Marks a value dropped by normalization right after the latest event.
    fn discard(&mut self, id: ValueId);
    fn enter(&mut self, nominal: usize, node: NodeKind, a: &[ValueId], b: &[ValueId], child_index: u32);
    fn leave(&mut self, c: &[ValueId]);
    fn pos(&self) -> u32;
    fn mul_span(&mut self, start: u32, end: u32);
}

/// Sink that records nothing.
#[derive(Default, Debug, Clone, Copy)]
pub struct NullSink;

impl Sink for NullSink {
    const ON: bool = false;
    #[inline(always)]
    fn emit(&mut self, _: OpKind, _: [ValueId; 2], _: i64, _: bool) -> ValueId {
        NONE
    }
    #[inline(always)]
    fn discard(&mut self, _: ValueId) {}
    #[inline(always)]
    fn enter(&mut self, _: usize, _: NodeKind, _: &[ValueId], _: &[ValueId], _: u32) {}
    #[inline(always)]
    fn leave(&mut self, _: &[ValueId]) {}
    #[inline(always)]
    fn pos(&self) -> u32 {
        0
    }
    #[inline(always)]
    fn mul_span(&mut self, _: u32, _: u32) {}
}

/// Complete log of one multiplication run.
#[derive(Clone, Debug, Default)]
pub struct ExecutionTrace {
    pub base: u64,
    pub events: Vec<Event>,
    /// `(position, value)`: value dropped after the event at `position`.
    pub discards: Vec<(u32, ValueId)>,
    pub subs: Vec<SubInfo>,
    pub input_a: Vec<ValueId>,
    pub input_b: Vec<ValueId>,
    /// OutputStore values, least significant first.
    pub outputs: Vec<ValueId>,
    pub result_negative: bool,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, kind: OpKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Recomputes every value from the event semantics alone.
    pub fn replay(&self) -> Vec<i128> {
        let mut vals: Vec<i128> = Vec::with_capacity(self.events.len());
        let get = |vals: &Vec<i128>, id: ValueId| if id == NONE { 0 } else { vals[id as usize] };
        for e in &self.events {
            let x = get(&vals, e.args[0]);
            let y = get(&vals, e.args[1]);
            vals.push(e.eval(self.base, x, y));
        }
        vals
    }

    /// Output digits obtained by replay, least significant first.
    pub fn replay_output(&self) -> Vec<u64> {
        let vals = self.replay();
        self.outputs.iter().map(|&o| vals[o as usize] as u64).collect()
    }

    /// Number of consumers of each value, counting discards.
    pub fn use_counts(&self) -> Vec<u32> {
        let mut uses = vec![0u32; self.events.len()];
        for e in &self.events {
            for a in e.operands() {
                uses[a as usize] += 1;
            }
        }
        for &(_, v) in &self.discards {
            uses[v as usize] += 1;
        }
        uses
    }

    /// Subproblem whose path from the root equals `path`.
    pub fn sub_by_path(&self, path: &[u32]) -> Option<usize> {
        self.subs.iter().position(|s| s.path == path)
    }
}

/// Sink that builds an [`ExecutionTrace`].
#[derive(Debug)]
pub struct Recorder {
    trace: ExecutionTrace,
    stack: Vec<u32>,
}

impl Recorder {
    pub fn new(base: u64) -> Self {
        Recorder { trace: ExecutionTrace { base, ..Default::default() }, stack: Vec::new() }
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn set_inputs(&mut self, a: Vec<ValueId>, b: Vec<ValueId>) {
        self.trace.input_a = a;
        self.trace.input_b = b;
    }

    pub fn set_outputs(&mut self, outputs: Vec<ValueId>, negative: bool) {
        self.trace.outputs = outputs;
        self.trace.result_negative = negative;
    }

    pub fn finish(self) -> ExecutionTrace {
        self.trace
    }
}

impl Sink for Recorder {
    const ON: bool = true;

    fn emit(&mut self, kind: OpKind, args: [ValueId; 2], imm: i64, wide: bool) -> ValueId {
        let id = self.trace.events.len() as ValueId;
        let sub = self.stack.last().copied().unwrap_or(TOP);
        self.trace.events.push(Event { kind, args, imm, wide, sub });
        id
    }

    fn discard(&mut self, id: ValueId) {
        debug_assert!(id != NONE && !self.trace.events.is_empty());
        let at = self.trace.events.len() as u32 - 1;
        self.trace.discards.push((at, id));
    }

    fn enter(&mut self, nominal: usize, node: NodeKind, a: &[ValueId], b: &[ValueId], child_index: u32) {
        let parent = self.stack.last().copied();
        let (depth, mut path) = match parent {
            Some(p) => {
                let ps = &self.trace.subs[p as usize];
                (ps.depth + 1, ps.path.clone())
            }
            None => (0, Vec::new()),
        };
        if parent.is_some() {
            path.push(child_index);
        }
        let start = self.trace.events.len() as u32;
        self.trace.subs.push(SubInfo {
            parent,
            child_index,
            depth,
            path,
            nominal,
            node,
            a: a.to_vec(),
            b: b.to_vec(),
            c: Vec::new(),
            events: (start, start),
            mul_span: None,
        });
        self.stack.push(self.trace.subs.len() as u32 - 1);
    }

    fn leave(&mut self, c: &[ValueId]) {
        let id = self.stack.pop().expect("leave without enter") as usize;
        let end = self.trace.events.len() as u32;
        let s = &mut self.trace.subs[id];
        s.c = c.to_vec();
        s.events.1 = end;
    }

    fn pos(&self) -> u32 {
        self.trace.events.len() as u32
    }

    fn mul_span(&mut self, start: u32, end: u32) {
        if let Some(&id) = self.stack.last() {
            self.trace.subs[id as usize].mul_span = Some((start, end));
        }
    }
}
