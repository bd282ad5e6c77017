//! Distributed-memory replay of a multiplication trace.
//!
//! The trace is recorded once, every event is placed on a processor by the
//! chosen strategy, and the events are replayed in trace order. A value used
//! on a processor that does not hold it is transferred from its producer,
//! once per destination. Nothing is recomputed.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport, CompRegime};
use crate::digit::DigitString;
use crate::error::{Error, Result};
use crate::plan::{node_sizes, InstructionTree, SizeModel};
use crate::toom;
use crate::trace::{ExecutionTrace, OpKind, ValueId, NONE, TOP};

/// Largest processor count the transfer bookkeeping supports.
pub const MAX_P: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelLayout {
    pub p: usize,
    pub b_m: usize,
    /// Digit count the layout covers; also the plan size.
    pub n: usize,
    pub owner_a: Vec<u16>,
    pub owner_b: Vec<u16>,
    pub alpha: f64,
}

impl ParallelLayout {
    pub fn from_owners(p: usize, b_m: usize, owner_a: Vec<u16>, owner_b: Vec<u16>) -> Result<Self> {
        if p == 0 || p > MAX_P {
            return Err(Error::Config(format!("parallel.P must lie in 1..={MAX_P}, got {p}")));
        }
        if b_m == 0 {
            return Err(Error::Config("parallel.B_m must be positive".into()));
        }
        if owner_a.len() != owner_b.len() {
            return Err(Error::Config("operand layouts differ in length".into()));
        }
        if let Some(&o) = owner_a.iter().chain(&owner_b).find(|&&o| o as usize >= p) {
            return Err(Error::Config(format!("digit assigned to processor {o} of {p}")));
        }
        let n = owner_a.len();
        let mut held = vec![(0usize, 0usize); p];
        for &o in &owner_a {
            held[o as usize].0 += 1;
        }
        for &o in &owner_b {
            held[o as usize].1 += 1;
        }
        let most = held.iter().map(|&(x, y)| x.max(y)).max().unwrap_or(0);
        let alpha = if n == 0 { 1.0 } else { (most * p) as f64 / n as f64 };
        Ok(ParallelLayout { p, b_m, n, owner_a, owner_b, alpha })
    }

    pub fn with_b_m(mut self, b_m: usize) -> Self {
        self.b_m = b_m.max(1);
        self
    }
}

/// Round-robin assignment of digits to processors, `B_m = 1`.
///
/// Seed 0 keeps digit `i` on processor `i mod P`; other seeds shuffle that
/// assignment, which leaves every holding count and hence `alpha` unchanged.
pub fn balanced_input_layout(n: usize, p: usize, seed: u64) -> Result<ParallelLayout> {
    let mut oa: Vec<u16> = (0..n).map(|i| (i % p.max(1)) as u16).collect();
    let mut ob = oa.clone();
    if seed != 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        oa.shuffle(&mut rng);
        ob.shuffle(&mut rng);
    }
    ParallelLayout::from_owners(p, 1, oa, ob)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    OwnerComputesBlocks,
    SubtreePerProcessor,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::OwnerComputesBlocks => "owner-computes-blocks",
            Strategy::SubtreePerProcessor => "subtree-per-processor",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthReport {
    pub p: usize,
    pub b_m: usize,
    pub sent: Vec<u64>,
    pub received: Vec<u64>,
    pub messages_sent: Vec<u64>,
    pub messages_received: Vec<u64>,
    pub products: Vec<u64>,
    pub max_words: u64,
    pub max_messages: u64,
    pub beta: f64,
    pub alpha: f64,
}

/// `r x c = P` with `r` the largest divisor not above `sqrt(P)`.
fn grid(p: usize) -> (usize, usize) {
    let mut r = 1;
    for d in 1..=p {
        if d * d > p {
            break;
        }
        if p % d == 0 {
            r = d;
        }
    }
    (r, p / r)
}

fn first_home(owner: &[u16], args: [ValueId; 2]) -> u16 {
    args.iter().find(|&&a| a != NONE).map(|&a| owner[a as usize]).unwrap_or(0)
}

fn place(trace: &ExecutionTrace, layout: &ParallelLayout, strategy: Strategy) -> Result<Vec<u16>> {
    let p = layout.p;
    let mut owner = vec![0u16; trace.len()];
    for (i, &v) in trace.input_a.iter().enumerate() {
        owner[v as usize] = layout.owner_a[i];
    }
    for (i, &v) in trace.input_b.iter().enumerate() {
        owner[v as usize] = layout.owner_b[i];
    }
    match strategy {
        Strategy::OwnerComputesBlocks => {
            let (pr, pc) = grid(p);
            let mut pos: HashMap<u32, (HashMap<ValueId, usize>, HashMap<ValueId, usize>)> = HashMap::new();
            for (id, e) in trace.events.iter().enumerate() {
                let o = match e.kind {
                    OpKind::InputLoad => continue,
                    OpKind::ElementaryProduct if e.sub != TOP => {
                        let s = &trace.subs[e.sub as usize];
                        let (pa, pb) = pos.entry(e.sub).or_insert_with(|| {
                            (
                                s.a.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
                                s.b.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
                            )
                        });
                        let j = pa.get(&e.args[0]).copied().unwrap_or(0);
                        let l = pb.get(&e.args[1]).copied().unwrap_or(0);
                        let row = j * pr / s.a.len().max(1);
                        let col = l * pc / s.b.len().max(1);
                        (row * pc + col) as u16
                    }
                    OpKind::Add if e.wide => {
                        let ep = e.args.iter().rev().find(|&&a| {
                            a != NONE && trace.events[a as usize].kind == OpKind::ElementaryProduct
                        });
                        match ep {
                            Some(&a) => owner[a as usize],
                            None => first_home(&owner, e.args),
                        }
                    }
                    _ => first_home(&owner, e.args),
                };
                owner[id] = o;
            }
        }
        Strategy::SubtreePerProcessor => {
            let depth_of_units = (0..)
                .take_while(|&d| trace.subs.iter().any(|s| s.depth == d))
                .find(|&d| trace.subs.iter().filter(|s| s.depth == d).count() >= p)
                .ok_or_else(|| Error::Strategy(format!("no level of the plan has {p} subproblems")))?;
            let units: Vec<usize> = (0..trace.subs.len()).filter(|&i| trace.subs[i].depth == depth_of_units).collect();
            let mut unit_proc = vec![u16::MAX; trace.subs.len()];
            for (u, &s) in units.iter().enumerate() {
                unit_proc[s] = (u * p / units.len()) as u16;
            }
            // subs are created parent first
            for i in 0..trace.subs.len() {
                if trace.subs[i].depth > depth_of_units {
                    let parent = trace.subs[i].parent.expect("deep subproblem has a parent") as usize;
                    unit_proc[i] = unit_proc[parent];
                }
            }
            for (id, e) in trace.events.iter().enumerate() {
                if e.kind == OpKind::InputLoad {
                    continue;
                }
                owner[id] = if e.sub != TOP && unit_proc[e.sub as usize] != u16::MAX {
                    unit_proc[e.sub as usize]
                } else {
                    first_home(&owner, e.args)
                };
            }
        }
    }
    Ok(owner)
}

/// Replays `trace` on the processors given by `owner`.
fn replay(trace: &ExecutionTrace, owner: &[u16], p: usize, b_m: usize) -> Result<(Vec<i128>, BandwidthReport)> {
    let mut held = vec![0u64; trace.len()];
    let mut vals: Vec<i128> = Vec::with_capacity(trace.len());
    let mut channel = vec![0u64; p * p];
    let mut sent = vec![0u64; p];
    let mut received = vec![0u64; p];
    let mut products = vec![0u64; p];
    for (id, e) in trace.events.iter().enumerate() {
        let me = owner[id] as usize;
        let mut xy = [0i128; 2];
        for (slot, &a) in e.args.iter().enumerate() {
            if a == NONE {
                continue;
            }
            let a = a as usize;
            if held[a] & (1 << me) == 0 {
                let src = owner[a] as usize;
                if held[a] & (1 << src) == 0 {
                    return Err(Error::Internal(format!("value {a} used before its producer holds it")));
                }
                held[a] |= 1 << me;
                sent[src] += 1;
                received[me] += 1;
                channel[src * p + me] += 1;
            }
            xy[slot] = vals[a];
        }
        if e.kind == OpKind::ElementaryProduct {
            products[me] += 1;
        }
        vals.push(e.eval(trace.base, xy[0], xy[1]));
        held[id] |= 1 << me;
    }
    // each channel packs its words greedily into messages of at most B_m words
    let mut messages_sent = vec![0u64; p];
    let mut messages_received = vec![0u64; p];
    for s in 0..p {
        for d in 0..p {
            let m = channel[s * p + d].div_ceil(b_m as u64);
            messages_sent[s] += m;
            messages_received[d] += m;
        }
    }
    let max_words = (0..p).map(|i| sent[i] + received[i]).max().unwrap_or(0);
    let max_messages = (0..p).map(|i| messages_sent[i] + messages_received[i]).max().unwrap_or(0);
    let total: u64 = products.iter().sum();
    let beta = if total == 0 { 0.0 } else { (p as u64 * products.iter().copied().min().unwrap_or(0)) as f64 / total as f64 };
    Ok((
        vals,
        BandwidthReport {
            p,
            b_m,
            sent,
            received,
            messages_sent,
            messages_received,
            products,
            max_words,
            max_messages,
            beta,
            alpha: 0.0,
        },
    ))
}

/// Multiplies `a * b` on `layout.p` processors.
///
/// The plan is sized for `layout.n` digits. The returned product is checked
/// against a sequential run of the same plan.
pub fn run_parallel(
    a: &DigitString,
    b: &DigitString,
    plan: &InstructionTree,
    layout: &ParallelLayout,
    strategy: Strategy,
) -> Result<(DigitString, BandwidthReport)> {
    if a.size().max(b.size()) > layout.n {
        return Err(Error::Config(format!(
            "operands of {} digits exceed the layout of {} digits",
            a.size().max(b.size()),
            layout.n
        )));
    }
    if strategy == Strategy::SubtreePerProcessor && layout.p > 1 && plan.is_standard() {
        return Err(Error::Strategy("a Standard plan is one indivisible subproblem".into()));
    }
    let (seq, trace) = toom::trace_multiply_sized(a, b, plan, layout.n)?;
    let owner = place(&trace, layout, strategy)?;
    let (vals, mut report) = replay(&trace, &owner, layout.p, layout.b_m)?;
    report.alpha = layout.alpha;
    let digits: Vec<u64> = trace.outputs.iter().map(|&o| vals[o as usize] as u64).collect();
    let out = DigitString::new(a.base(), trace.result_negative, digits)?;
    if out != seq {
        return Err(Error::Internal("parallel product differs from the sequential one".into()));
    }
    Ok((out, report))
}

/// Uniform Toom-k description of a plan: `(k, largest leaf size)` when every
/// internal node is Toom-k and all leaves sit at the same depth.
pub fn uniform_shape(plan: &InstructionTree, n: usize, model: SizeModel) -> Option<(usize, usize)> {
    let nodes = node_sizes(plan, n, model);
    let ks: Vec<usize> = nodes.iter().filter_map(|s| s.k).collect();
    let k = *ks.first()?;
    if ks.iter().any(|&x| x != k) {
        return None;
    }
    let leaves: Vec<_> = nodes.iter().filter(|s| s.k.is_none()).collect();
    let d = leaves[0].path.len();
    if leaves.iter().any(|s| s.path.len() != d) {
        return None;
    }
    Some((k, leaves.iter().map(|s| s.size).max().unwrap_or(1)))
}

/// Largest memory-independent bound that applies to a run: the balanced-input
/// scan with the run's `alpha`, and the balanced-computation form with its
/// measured `beta` for standard and uniform plans when its regime holds.
pub fn applicable_bound(
    plan: &InstructionTree,
    n: usize,
    model: SizeModel,
    report: &BandwidthReport,
) -> BoundReport {
    let mut best = bounds::memind_balanced_input_for_plan(plan, n, model, report.p, report.b_m, report.alpha);
    let regime = if plan.is_standard() {
        Some(CompRegime::Standard)
    } else {
        uniform_shape(plan, n, model).map(|(k, n0)| CompRegime::Uniform { k, n0 })
    };
    if let Some(r) = regime {
        if let Ok(c) = bounds::memind_balanced_comp(n, report.p, report.b_m, report.beta, r) {
            if c.bound > best.bound {
                best = c;
            }
        }
    }
    best
}
