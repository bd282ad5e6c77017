//! Two-level memory replay of an execution trace with read/write counting.
//!
//! The cache holds `M` words. Values live at fixed slow-memory addresses and
//! move in aligned blocks of `B` words. Inputs start in slow memory; every
//! other value is created in cache. A value that dies (no remaining uses and
//! not an output) is dropped at once without a write.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::digit::DigitString;
use crate::error::{Error, Result};
use crate::plan::InstructionTree;
use crate::toom;
use crate::trace::{ExecutionTrace, NodeKind, OpKind, ValueId, NONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "LRU")]
    Lru,
    /// Evicts the word whose next use lies furthest in the future.
    IdealOffline,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "LRU",
            Policy::IdealOffline => "IdealOffline",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub policy: Policy,
}

impl MachineConfig {
    pub fn new(m: usize, b: usize, policy: Policy) -> Result<Self> {
        let c = MachineConfig { m, b, policy };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::Config(format!("machine.M = {} is below 3", self.m)));
        }
        if self.b == 0 || self.b > self.m {
            return Err(Error::Config(format!("machine.B = {} must lie in [1, M = {}]", self.b, self.m)));
        }
        Ok(())
    }
}

/// Execution order as a permutation of event indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleOrder {
    pub order: Vec<u32>,
}

impl ScheduleOrder {
    pub fn recorded(trace: &ExecutionTrace) -> Self {
        ScheduleOrder { order: (0..trace.len() as u32).collect() }
    }

    /// Checks that every operand is produced before it is consumed.
    pub fn is_topological(&self, trace: &ExecutionTrace) -> bool {
        let mut pos = vec![u32::MAX; trace.len()];
        if self.order.len() != trace.len() {
            return false;
        }
        for (i, &e) in self.order.iter().enumerate() {
            if pos[e as usize] != u32::MAX {
                return false;
            }
            pos[e as usize] = i as u32;
        }
        self.order.iter().enumerate().all(|(i, &e)| trace.events[e as usize].operands().all(|a| pos[a as usize] < i as u32))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IoReport {
    pub policy: Policy,
    pub m: usize,
    pub b: usize,
    pub reads: u64,
    pub writes: u64,
    /// `(reads, writes)` charged to the event kind that caused them; the
    /// final flush counts as OutputStore.
    pub per_class: [(u64, u64); 9],
    /// Computed non-output values that are never consumed.
    pub parsimony_violations: u64,
}

impl IoReport {
    pub fn total(&self) -> u64 {
        self.reads + self.writes
    }
}

pub fn record_trace(a: &DigitString, b: &DigitString, plan: &InstructionTree) -> Result<ExecutionTrace> {
    toom::trace_multiply(a, b, plan).map(|(_, t)| t)
}

fn align(x: usize, b: usize) -> usize {
    x.div_ceil(b) * b
}

/// Slow-memory address of every value: the two inputs, then one region per
/// subproblem in creation order, then the product.
fn layout(trace: &ExecutionTrace, b: usize) -> (Vec<u32>, Vec<ValueId>) {
    let n = trace.len();
    let mut addr = vec![u32::MAX; n];
    let mut next = 0usize;
    for region in [&trace.input_a, &trace.input_b] {
        for &v in region.iter() {
            addr[v as usize] = next as u32;
            next += 1;
        }
        next = align(next, b);
    }
    let nsub = trace.subs.len();
    let mut by_sub: Vec<Vec<u32>> = vec![Vec::new(); nsub + 1];
    for (i, e) in trace.events.iter().enumerate() {
        if matches!(e.kind, OpKind::InputLoad | OpKind::OutputStore) || addr[i] != u32::MAX {
            continue;
        }
        let s = if (e.sub as usize) < nsub { e.sub as usize } else { nsub };
        by_sub[s].push(i as u32);
    }
    for region in by_sub.iter().chain(std::iter::once(&trace.outputs)) {
        if region.is_empty() {
            continue;
        }
        for &v in region {
            addr[v as usize] = next as u32;
            next += 1;
        }
        next = align(next, b);
    }
    // any value not yet placed (an unlisted load or store) goes last
    for (i, e) in trace.events.iter().enumerate() {
        if addr[i] == u32::MAX {
            debug_assert!(matches!(e.kind, OpKind::InputLoad | OpKind::OutputStore));
            addr[i] = next as u32;
            next += 1;
        }
    }
    let mut at = vec![NONE; align(next, b)];
    for (v, &a) in addr.iter().enumerate() {
        at[a as usize] = v as ValueId;
    }
    (addr, at)
}

struct Sim<'t> {
    trace: &'t ExecutionTrace,
    cfg: MachineConfig,
    addr: Vec<u32>,
    at: Vec<ValueId>,
    resident: Vec<bool>,
    dirty: Vec<bool>,
    in_slow: Vec<bool>,
    uses_left: Vec<u32>,
    output: Vec<bool>,
    // use times per value, CSR layout
    use_start: Vec<u32>,
    use_times: Vec<u64>,
    use_ptr: Vec<u32>,
    key: Vec<u64>,
    set: BTreeSet<(u64, u32)>,
    occupancy: usize,
    pinned: [ValueId; 3],
    clock: u64,
    reads: u64,
    writes: u64,
    per_class: [(u64, u64); 9],
    class: usize,
}

impl<'t> Sim<'t> {
    fn new(trace: &'t ExecutionTrace, cfg: MachineConfig, order: &ScheduleOrder) -> Self {
        let n = trace.len();
        let (addr, at) = layout(trace, cfg.b);
        let mut pos = vec![0u64; n];
        for (i, &e) in order.order.iter().enumerate() {
            pos[e as usize] = i as u64;
        }
        let mut count = vec![0u32; n + 1];
        for e in &trace.events {
            for a in e.operands() {
                count[a as usize + 1] += 1;
            }
        }
        for &(_, v) in &trace.discards {
            count[v as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let use_start = count.clone();
        let mut fill = count;
        let mut use_times = vec![0u64; use_start[n] as usize];
        for (i, e) in trace.events.iter().enumerate() {
            for a in e.operands() {
                use_times[fill[a as usize] as usize] = 2 * pos[i];
                fill[a as usize] += 1;
            }
        }
        for &(p, v) in &trace.discards {
            use_times[fill[v as usize] as usize] = 2 * pos[p as usize] + 1;
            fill[v as usize] += 1;
        }
        for v in 0..n {
            use_times[use_start[v] as usize..use_start[v + 1] as usize].sort_unstable();
        }
        let uses_left = (0..n).map(|v| use_start[v + 1] - use_start[v]).collect();
        let mut output = vec![false; n];
        for &o in &trace.outputs {
            output[o as usize] = true;
        }
        let in_slow = trace.events.iter().map(|e| e.kind == OpKind::InputLoad).collect();
        Sim {
            trace,
            cfg,
            addr,
            at,
            resident: vec![false; n],
            dirty: vec![false; n],
            in_slow,
            uses_left,
            output,
            use_ptr: use_start[..n].to_vec(),
            use_start,
            use_times,
            key: vec![0; n],
            set: BTreeSet::new(),
            occupancy: 0,
            pinned: [NONE; 3],
            clock: 0,
            reads: 0,
            writes: 0,
            per_class: [(0, 0); 9],
            class: 0,
        }
    }

    fn priority(&self, v: usize) -> u64 {
        match self.cfg.policy {
            Policy::Lru => self.clock,
            Policy::IdealOffline => {
                let p = self.use_ptr[v];
                if p < self.use_start[v + 1] {
                    u64::MAX - self.use_times[p as usize]
                } else {
                    0
                }
            }
        }
    }

    fn set_key(&mut self, v: usize) {
        let a = self.addr[v];
        self.set.remove(&(self.key[v], a));
        self.key[v] = self.priority(v);
        self.set.insert((self.key[v], a));
    }

    fn insert(&mut self, v: usize, dirty: bool) {
        self.resident[v] = true;
        self.dirty[v] = dirty;
        self.occupancy += 1;
        self.key[v] = self.priority(v);
        self.set.insert((self.key[v], self.addr[v]));
    }

    fn remove(&mut self, v: usize) {
        self.set.remove(&(self.key[v], self.addr[v]));
        self.resident[v] = false;
        self.dirty[v] = false;
        self.occupancy -= 1;
    }

    fn block(&self, v: usize) -> std::ops::Range<usize> {
        let b = self.cfg.b;
        let start = self.addr[v] as usize / b * b;
        start..start + b
    }

    fn evict_one(&mut self) -> Result<()> {
        let victim = self
            .set
            .iter()
            .map(|&(_, a)| self.at[a as usize])
            .find(|v| !self.pinned.contains(v))
            .ok_or_else(|| Error::InfeasibleSchedule("every resident word is pinned".into()))? as usize;
        if self.dirty[victim] {
            self.writes += 1;
            self.per_class[self.class].1 += 1;
            for a in self.block(victim) {
                let w = self.at[a];
                if w != NONE && self.resident[w as usize] && self.dirty[w as usize] {
                    self.dirty[w as usize] = false;
                    self.in_slow[w as usize] = true;
                }
            }
        }
        self.remove(victim);
        Ok(())
    }

    fn make_room(&mut self) -> Result<()> {
        while self.occupancy >= self.cfg.m {
            self.evict_one()?;
        }
        Ok(())
    }

    fn access(&mut self, v: usize) -> Result<()> {
        self.clock += 1;
        if self.resident[v] {
            if self.cfg.policy == Policy::Lru {
                self.set_key(v);
            }
            return Ok(());
        }
        if !self.in_slow[v] {
            return Err(Error::Internal(format!("value {v} accessed before it exists")));
        }
        self.reads += 1;
        self.per_class[self.class].0 += 1;
        self.make_room()?;
        self.insert(v, false);
        for a in self.block(v) {
            if self.occupancy >= self.cfg.m {
                break;
            }
            let w = self.at[a];
            if w == NONE {
                continue;
            }
            let w = w as usize;
            if !self.resident[w] && self.in_slow[w] && (self.uses_left[w] > 0 || self.output[w]) {
                self.insert(w, false);
            }
        }
        Ok(())
    }

    fn consume(&mut self, v: usize) {
        self.uses_left[v] -= 1;
        self.use_ptr[v] += 1;
        if self.uses_left[v] == 0 && !self.output[v] {
            if self.resident[v] {
                self.remove(v);
            }
        } else if self.cfg.policy == Policy::IdealOffline && self.resident[v] {
            self.set_key(v);
        }
    }

    fn run(mut self, order: &ScheduleOrder) -> Result<IoReport> {
        let trace = self.trace;
        let mut discards_at: Vec<Vec<ValueId>> = vec![Vec::new(); trace.len()];
        for &(p, v) in &trace.discards {
            discards_at[p as usize].push(v);
        }
        for &ei in &order.order {
            let e = &trace.events[ei as usize];
            if e.kind == OpKind::InputLoad {
                continue;
            }
            self.class = e.kind.index();
            let mut ops = [NONE; 2];
            let mut k = 0;
            for a in e.operands() {
                if !ops[..k].contains(&a) {
                    ops[k] = a;
                    k += 1;
                }
            }
            if k + 1 > self.cfg.m {
                return Err(Error::InfeasibleSchedule(format!("event {ei} needs {} words, M = {}", k + 1, self.cfg.m)));
            }
            self.pinned = [ops[0], ops[1], ei];
            for &a in &ops[..k] {
                self.access(a as usize)?;
            }
            self.clock += 1;
            self.make_room()?;
            self.insert(ei as usize, true);
            for a in e.operands() {
                self.consume(a as usize);
            }
            let r = ei as usize;
            if self.uses_left[r] == 0 && !self.output[r] {
                self.remove(r);
            }
            for &v in &discards_at[ei as usize] {
                self.pinned = [v, NONE, NONE];
                self.access(v as usize)?;
                self.consume(v as usize);
            }
        }
        // flush the product
        self.class = OpKind::OutputStore.index();
        let mut blocks: Vec<usize> = trace
            .outputs
            .iter()
            .filter(|&&o| self.resident[o as usize] && self.dirty[o as usize])
            .map(|&o| self.addr[o as usize] as usize / self.cfg.b)
            .collect();
        blocks.sort_unstable();
        blocks.dedup();
        self.writes += blocks.len() as u64;
        self.per_class[self.class].1 += blocks.len() as u64;
        Ok(IoReport {
            policy: self.cfg.policy,
            m: self.cfg.m,
            b: self.cfg.b,
            reads: self.reads,
            writes: self.writes,
            per_class: self.per_class,
            parsimony_violations: parsimony_violations(trace),
        })
    }
}

/// Computed values (not inputs, not product digits) that nothing consumes.
pub fn parsimony_violations(trace: &ExecutionTrace) -> u64 {
    let uses = trace.use_counts();
    let mut output = vec![false; trace.len()];
    for &o in &trace.outputs {
        output[o as usize] = true;
    }
    trace
        .events
        .iter()
        .enumerate()
        .filter(|(i, e)| e.kind != OpKind::InputLoad && !output[*i] && uses[*i] == 0)
        .count() as u64
}

pub fn simulate_io(trace: &ExecutionTrace, cfg: &MachineConfig, order: &ScheduleOrder) -> Result<IoReport> {
    cfg.validate()?;
    if !order.is_topological(trace) {
        return Err(Error::Internal("schedule is not a topological order of the trace".into()));
    }
    Sim::new(trace, *cfg, order).run(order)
}

/// Depth-first order in which standard nodes too large for the cache run
/// their products in square tiles.
///
/// The recorded order already runs each subproblem contiguously. A standard
/// node whose operands and product exceed `M` words has its product loop
/// blocked into tiles of `t = max(1, (M-1)/4)` rows and columns: tile rows
/// descend in `j`, tile columns ascend in `l`, and each product moves with
/// the accumulation that follows it, so every column chain keeps its order.
pub fn cache_aware_schedule(trace: &ExecutionTrace, cfg: &MachineConfig) -> ScheduleOrder {
    let mut order: Vec<u32> = (0..trace.len() as u32).collect();
    let t = ((cfg.m.saturating_sub(1)) / 4).max(1);
    for s in &trace.subs {
        let Some((start, end)) = s.mul_span else { continue };
        if s.node != NodeKind::Standard {
            continue;
        }
        let (la, lb) = (s.a.len(), s.b.len());
        if 2 * (la + lb) <= cfg.m || la == 0 || lb == 0 {
            continue;
        }
        // group g = (la-1-j)*lb + l starts at each ElementaryProduct
        let mut groups: Vec<(u32, u32)> = Vec::with_capacity(la * lb);
        for e in start..end {
            if trace.events[e as usize].kind == OpKind::ElementaryProduct {
                groups.push((e, e + 1));
            } else if let Some(g) = groups.last_mut() {
                g.1 = e + 1;
            }
        }
        debug_assert_eq!(groups.len(), la * lb);
        let mut out = Vec::with_capacity((end - start) as usize);
        let mut jb_hi = la;
        while jb_hi > 0 {
            let jb_lo = jb_hi.saturating_sub(t);
            let mut lb_lo = 0;
            while lb_lo < lb {
                let lb_hi = (lb_lo + t).min(lb);
                for j in (jb_lo..jb_hi).rev() {
                    for l in lb_lo..lb_hi {
                        let (a, b) = groups[(la - 1 - j) * lb + l];
                        out.extend(a..b);
                    }
                }
                lb_lo = lb_hi;
            }
            jb_hi = jb_lo;
        }
        order[start as usize..end as usize].copy_from_slice(&out);
    }
    ScheduleOrder { order }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{uniform_plan, SizeModel};

    fn ds(v: i128) -> DigitString {
        DigitString::from_i128(v, 10).unwrap()
    }

    fn io(trace: &ExecutionTrace, m: usize, b: usize, p: Policy) -> Result<IoReport> {
        simulate_io(trace, &MachineConfig::new(m, b, p).unwrap(), &ScheduleOrder::recorded(trace))
    }

    #[test]
    fn record_examples() {
        let t = record_trace(&ds(12), &ds(34), &InstructionTree::standard()).unwrap();
        assert_eq!(t.count(OpKind::ElementaryProduct), 4);
        let t = record_trace(&ds(0), &ds(987), &InstructionTree::standard()).unwrap();
        assert_eq!(t.count(OpKind::ElementaryProduct), 0);
        assert!(t.outputs.is_empty());
        let plan = uniform_plan(2, 2, 1, SizeModel::ZeroPad).unwrap();
        let t = record_trace(&ds(12), &ds(34), &plan).unwrap();
        let leaves: Vec<_> = t.subs.iter().filter(|s| s.depth == 1).collect();
        assert_eq!(leaves.len(), 3);
        assert!(leaves.iter().all(|s| s.size() == 1));
        assert_eq!(t.count(OpKind::ElementaryProduct), 3);
    }

    #[test]
    fn compulsory_traffic_only() {
        let t = record_trace(&ds(1234), &ds(5678), &InstructionTree::standard()).unwrap();
        for p in [Policy::Lru, Policy::IdealOffline] {
            let r = io(&t, 1_000_000, 1, p).unwrap();
            assert_eq!((r.reads, r.writes), (8, 7));
            let r = io(&t, 1_000_000, 4, p).unwrap();
            assert_eq!((r.reads, r.writes), (2, 2));
            assert_eq!(r.per_class[OpKind::OutputStore.index()].1, 2);
            assert_eq!(r.parsimony_violations, 0);
        }
    }

    #[test]
    fn infeasible_and_bad_configs() {
        assert!(MachineConfig::new(2, 1, Policy::Lru).is_err());
        let e = MachineConfig::new(8, 16, Policy::Lru).unwrap_err();
        assert!(e.to_string().contains("machine.B"));
        let t = record_trace(&ds(1234), &ds(5678), &InstructionTree::standard()).unwrap();
        let cfg = MachineConfig { m: 2, b: 1, policy: Policy::Lru };
        assert!(matches!(
            Sim::new(&t, cfg, &ScheduleOrder::recorded(&t)).run(&ScheduleOrder::recorded(&t)),
            Err(Error::InfeasibleSchedule(_))
        ));
    }

    #[test]
    fn small_cache_forces_extra_traffic() {
        let a = DigitString::from_i128(98765432123456789, 10).unwrap();
        let t = record_trace(&a, &a, &InstructionTree::standard()).unwrap();
        let big = io(&t, 1 << 20, 1, Policy::IdealOffline).unwrap();
        let small = io(&t, 8, 1, Policy::IdealOffline).unwrap();
        assert_eq!(big.total(), 34 + 34);
        assert!(small.total() > big.total());
        assert_eq!(small.parsimony_violations, 0);
    }

    #[test]
    fn tiled_order_is_topological() {
        let a = DigitString::from_i128(98765432123456789, 10).unwrap();
        let t = record_trace(&a, &a.negated(), &InstructionTree::standard()).unwrap();
        let cfg = MachineConfig::new(9, 1, Policy::Lru).unwrap();
        let o = cache_aware_schedule(&t, &cfg);
        assert!(o.is_topological(&t));
        assert_ne!(o, ScheduleOrder::recorded(&t));
        let tiled = simulate_io(&t, &cfg, &o).unwrap();
        let plain = simulate_io(&t, &cfg, &ScheduleOrder::recorded(&t)).unwrap();
        assert!(tiled.total() <= plain.total());
    }

    #[test]
    fn toom_trace_is_parsimonious() {
        let plan = uniform_plan(16, 2, 1, SizeModel::ZeroPad).unwrap();
        let a = DigitString::from_i128(1000000000000000, 10).unwrap();
        let b = DigitString::from_i128(9999999999999999, 10).unwrap();
        let t = record_trace(&a, &b, &plan).unwrap();
        assert_eq!(parsimony_violations(&t), 0);
    }
}
