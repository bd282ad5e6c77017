//! Computational DAG of a trace, maximal-subproblem marking, exact minimum
//! dominators, and sampled checks of the dominator lemmas.
//!
//! Lemma ids used in reports:
//!
//! | id | statement checked |
//! |---|---|
//! | `flow_window` | `|D| >= ceil(|X'||Y'|/n)` for `X'` in the low `floor(n/2)` digits of an input and `Y'` in the product digits `floor(n/2)..2*floor(n/2)` |
//! | `input_half` | `|D| >= |Y|` for `Y` in the low `floor(n_i/2)` input digits of one MSP |
//! | `output_window` | `|D| >= ceil(|Z|/2)` for `Z` in the middle output digits of the MSPs, `|Z| <= n'/2` |
//! | `product_window` | `|D| >= max(|Y_A|, |Y_B|)` for marked products of a standard MSP, with respect to its low input digits |
//! | `encoder_paths` | `|Y|` disjoint paths from a Toom node's low input block to the low digits of one child input |

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{ExecutionTrace, NodeKind, OpKind, NONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MspKind {
    Type1,
    Type2 { k: usize },
}

/// Marked vertex sets of one maximal subproblem.
#[derive(Clone, Debug)]
pub struct Msp {
    pub sub: usize,
    pub path: Vec<u32>,
    pub kind: MspKind,
    /// Actual input size `max(|A_i|, |B_i|)`.
    pub size: usize,
    /// Low `ceil(n_i/2)` digits of `A_i` and `B_i`.
    pub y_a: Vec<u32>,
    pub y_b: Vec<u32>,
    /// Low `floor(n_i/2)` digits.
    pub y_a_floor: Vec<u32>,
    pub y_b_floor: Vec<u32>,
    /// Product digits `ceil(n_i/2)..n_i`.
    pub z: Vec<u32>,
    /// Marked elementary products `(vertex, j, l)`; type 1 only.
    pub t: Vec<(u32, usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct Cdag {
    pub kinds: Vec<OpKind>,
    /// Subproblem tag per vertex.
    pub sub: Vec<u32>,
    pub preds: Vec<[u32; 2]>,
    succ_start: Vec<u32>,
    succ: Vec<u32>,
    pub inputs: Vec<u32>,
    pub input_a: Vec<u32>,
    pub input_b: Vec<u32>,
    pub outputs: Vec<u32>,
    /// Root size `max(|A|, |B|)`.
    pub n: usize,
    pub threshold: usize,
    pub msps: Vec<Msp>,
    /// Vertex range `[start, end)` of each subproblem.
    pub sub_ranges: Vec<(u32, u32)>,
    pub sub_parent: Vec<Option<u32>>,
    pub sub_kind: Vec<NodeKind>,
    pub sub_a: Vec<Vec<u32>>,
    pub sub_b: Vec<Vec<u32>>,
    pub sub_nominal: Vec<usize>,
}

fn real(ids: &[u32]) -> Vec<u32> {
    ids.iter().copied().filter(|&v| v != NONE).collect()
}

/// Builds the CDAG and marks the `threshold`-MSPs, sized by actual operand
/// lengths.
pub fn build_cdag(trace: &ExecutionTrace, threshold: usize) -> Result<Cdag> {
    let n = trace.len();
    let mut count = vec![0u32; n + 1];
    for (i, e) in trace.events.iter().enumerate() {
        for a in e.operands() {
            if a as usize >= i {
                return Err(Error::Internal(format!("edge {a} -> {i} breaks topological numbering")));
            }
            count[a as usize + 1] += 1;
        }
    }
    for i in 0..n {
        count[i + 1] += count[i];
    }
    let succ_start = count.clone();
    let mut fill = count;
    let mut succ = vec![0u32; succ_start[n] as usize];
    for (i, e) in trace.events.iter().enumerate() {
        for a in e.operands() {
            succ[fill[a as usize] as usize] = i as u32;
            fill[a as usize] += 1;
        }
    }
    let mut g = Cdag {
        kinds: trace.events.iter().map(|e| e.kind).collect(),
        sub: trace.events.iter().map(|e| e.sub).collect(),
        preds: trace.events.iter().map(|e| e.args).collect(),
        succ_start,
        succ,
        inputs: (0..n as u32).filter(|&i| trace.events[i as usize].kind == OpKind::InputLoad).collect(),
        input_a: trace.input_a.clone(),
        input_b: trace.input_b.clone(),
        outputs: trace.outputs.clone(),
        n: trace.input_a.len().max(trace.input_b.len()),
        threshold,
        msps: Vec::new(),
        sub_ranges: trace.subs.iter().map(|s| s.events).collect(),
        sub_parent: trace.subs.iter().map(|s| s.parent).collect(),
        sub_kind: trace.subs.iter().map(|s| s.node).collect(),
        sub_a: trace.subs.iter().map(|s| s.a.clone()).collect(),
        sub_b: trace.subs.iter().map(|s| s.b.clone()).collect(),
        sub_nominal: trace.subs.iter().map(|s| s.nominal).collect(),
    };
    if !trace.subs.is_empty() && threshold > 0 {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); trace.subs.len()];
        for (i, s) in trace.subs.iter().enumerate() {
            if let Some(p) = s.parent {
                children[p as usize].push(i);
            }
        }
        let mut stack = vec![0usize];
        while let Some(s) = stack.pop() {
            let info = &trace.subs[s];
            let size = info.size();
            if size < threshold {
                continue;
            }
            let kind = match info.node {
                NodeKind::Standard => MspKind::Type1,
                NodeKind::Toom { k } => {
                    if children[s].iter().all(|&c| trace.subs[c].size() < threshold) {
                        MspKind::Type2 { k }
                    } else {
                        stack.extend(children[s].iter().rev());
                        continue;
                    }
                }
            };
            g.msps.push(mark(trace, s, kind));
        }
    }
    Ok(g)
}

fn mark(trace: &ExecutionTrace, s: usize, kind: MspKind) -> Msp {
    let info = &trace.subs[s];
    let n = info.size();
    let (hc, hf) = (n.div_ceil(2), n / 2);
    let low = |v: &[u32], h: usize| real(&v[..h.min(v.len())]);
    let z = real(info.c.get(hc..n.min(info.c.len())).unwrap_or(&[]));
    let mut t = Vec::new();
    if let (MspKind::Type1, Some((start, end))) = (kind, info.mul_span) {
        let (la, lb) = (info.a.len(), info.b.len());
        let half = (n - 1) / 2;
        let mut g = 0usize;
        for e in start..end {
            if trace.events[e as usize].kind != OpKind::ElementaryProduct {
                continue;
            }
            let (j, l) = (la - 1 - g / lb, g % lb);
            g += 1;
            if j <= half && l <= half && 4 * (j + l) >= n && 4 * (j + l) <= 3 * n {
                t.push((e, j, l));
            }
        }
    }
    Msp {
        sub: s,
        path: info.path.clone(),
        kind,
        size: n,
        y_a: low(&info.a, hc),
        y_b: low(&info.b, hc),
        y_a_floor: low(&info.a, hf),
        y_b_floor: low(&info.b, hf),
        z,
        t,
    }
}

impl Cdag {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn succs(&self, v: u32) -> &[u32] {
        &self.succ[self.succ_start[v as usize] as usize..self.succ_start[v as usize + 1] as usize]
    }

    pub fn pred_iter(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.preds[v as usize].iter().copied().filter(|&p| p != NONE)
    }

    pub fn count(&self, kind: OpKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Vertices of the subproblem rooted at `sub`, including its descendants.
    pub fn sub_vertices(&self, sub: usize) -> std::ops::Range<u32> {
        let (a, b) = self.sub_ranges[sub];
        a..b
    }

    /// Vertices on some source-to-target path, in increasing order.
    fn relevant(&self, targets: &[u32], sources: &[u32]) -> Vec<u32> {
        let n = self.len();
        let mut fwd = vec![false; n];
        let mut q: VecDeque<u32> = VecDeque::new();
        for &s in sources {
            if !fwd[s as usize] {
                fwd[s as usize] = true;
                q.push_back(s);
            }
        }
        while let Some(v) = q.pop_front() {
            for &w in self.succs(v) {
                if !fwd[w as usize] {
                    fwd[w as usize] = true;
                    q.push_back(w);
                }
            }
        }
        let mut back = vec![false; n];
        for &t in targets {
            if fwd[t as usize] && !back[t as usize] {
                back[t as usize] = true;
                q.push_back(t);
            }
        }
        while let Some(v) = q.pop_front() {
            for p in self.pred_iter(v) {
                if fwd[p as usize] && !back[p as usize] {
                    back[p as usize] = true;
                    q.push_back(p);
                }
            }
        }
        (0..n as u32).filter(|&v| back[v as usize]).collect()
    }
}

/// Unit-vertex-capacity max flow on the split graph.
struct Dinic {
    head: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<u32>,
    next: Vec<u32>,
    level: Vec<i32>,
    it: Vec<u32>,
}

const NIL: u32 = u32::MAX;
const INF: u32 = u32::MAX / 2;

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic { head: vec![NIL; n], to: Vec::new(), cap: Vec::new(), next: Vec::new(), level: vec![0; n], it: vec![0; n] }
    }

    fn edge(&mut self, u: usize, v: usize, c: u32) {
        for (a, b, cc) in [(u, v, c), (v, u, 0)] {
            self.to.push(b as u32);
            self.cap.push(cc);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() as u32 - 1;
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    q.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, f: u32) -> u32 {
        if u == t {
            return f;
        }
        while self.it[u] != NIL {
            let e = self.it[u] as usize;
            let v = self.to[e] as usize;
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]));
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.it[u] = self.next[e];
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u32 {
        let mut flow = 0;
        while self.bfs(s, t) {
            self.it.clone_from(&self.head);
            loop {
                let f = self.dfs(s, t, INF);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph.
    fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        seen
    }
}

/// Size of a smallest vertex set meeting every path from `sources` to
/// `targets`, plus one such set. Sources and targets may belong to it.
pub fn min_dominator_witness(g: &Cdag, targets: &[u32], sources: &[u32]) -> (usize, Vec<u32>) {
    let rel = g.relevant(targets, sources);
    if rel.is_empty() {
        return (0, Vec::new());
    }
    let mut local = vec![NIL; g.len()];
    for (i, &v) in rel.iter().enumerate() {
        local[v as usize] = i as u32;
    }
    let r = rel.len();
    let (s, t) = (2 * r, 2 * r + 1);
    let mut d = Dinic::new(2 * r + 2);
    for (i, &v) in rel.iter().enumerate() {
        d.edge(2 * i, 2 * i + 1, 1);
        for &w in g.succs(v) {
            let j = local[w as usize];
            if j != NIL {
                d.edge(2 * i + 1, 2 * j as usize, INF);
            }
        }
    }
    let mut seen = vec![false; r];
    for &v in sources {
        let i = local[v as usize];
        if i != NIL && !std::mem::replace(&mut seen[i as usize], true) {
            d.edge(s, 2 * i as usize, INF);
        }
    }
    seen.fill(false);
    for &v in targets {
        let i = local[v as usize];
        if i != NIL && !std::mem::replace(&mut seen[i as usize], true) {
            d.edge(2 * i as usize + 1, t, INF);
        }
    }
    let flow = d.max_flow(s, t) as usize;
    let reach = d.reachable(s);
    let cut: Vec<u32> = rel.iter().enumerate().filter(|&(i, _)| reach[2 * i] && !reach[2 * i + 1]).map(|(_, &v)| v).collect();
    debug_assert_eq!(cut.len(), flow);
    (flow, cut)
}

pub fn min_dominator(g: &Cdag, targets: &[u32], sources: &[u32]) -> usize {
    min_dominator_witness(g, targets, sources).0
}

/// True when removing `d` leaves no path from `sources` to `targets`.
pub fn is_dominator(g: &Cdag, d: &[u32], targets: &[u32], sources: &[u32]) -> bool {
    let n = g.len();
    let mut blocked = vec![false; n];
    for &v in d {
        blocked[v as usize] = true;
    }
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t as usize] = true;
    }
    let mut seen = vec![false; n];
    let mut q = VecDeque::new();
    for &s in sources {
        if !blocked[s as usize] && !seen[s as usize] {
            seen[s as usize] = true;
            q.push_back(s);
        }
    }
    while let Some(v) = q.pop_front() {
        if is_target[v as usize] {
            return false;
        }
        for &w in g.succs(v) {
            if !blocked[w as usize] && !seen[w as usize] {
                seen[w as usize] = true;
                q.push_back(w);
            }
        }
    }
    true
}

/// Exhaustive minimum over subsets of the vertices on source-target paths;
/// `None` when there are more than `limit` of them.
pub fn brute_force_dominator(g: &Cdag, targets: &[u32], sources: &[u32], limit: usize) -> Option<usize> {
    let rel = g.relevant(targets, sources);
    if rel.len() > limit {
        return None;
    }
    let r = rel.len();
    let mut best = r;
    for mask in 0u32..(1u32 << r) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let d: Vec<u32> = (0..r).filter(|i| mask >> i & 1 == 1).map(|i| rel[i]).collect();
        if is_dominator(g, &d, targets, sources) {
            best = size;
        }
    }
    Some(best)
}

/// One sampled lemma instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaRow {
    pub lemma: &'static str,
    pub params: String,
    pub required: usize,
    pub achieved: usize,
    pub pass: bool,
    /// A minimum cut, kept for failing rows.
    pub witness: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
}

pub const LEMMA_IDS: [&str; 5] = ["flow_window", "input_half", "output_window", "product_window", "encoder_paths"];

impl LemmaReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn count(&self, lemma: &str) -> usize {
        self.rows.iter().filter(|r| r.lemma == lemma).count()
    }

    pub fn extend(&mut self, other: LemmaReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lemma", "params", "required", "achieved", "pass"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.lemma, &r.params, &r.required.to_string(), &r.achieved.to_string(), &r.pass.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn pick(rng: &mut ChaCha8Rng, from: &[u32], size: usize) -> Vec<u32> {
    let size = size.min(from.len());
    let mut v: Vec<u32> = sample(rng, from.len(), size).into_iter().map(|i| from[i]).collect();
    v.sort_unstable();
    v
}

fn fmt_set(v: &[u32]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Samples `budget` instances of each lemma (fewer when a lemma has no
/// applicable vertex sets) and checks them by exact min cut.
pub fn verify_lemmas(g: &Cdag, seed: u64, budget: usize) -> LemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = g.threshold.max(1);
    let sizes = [1, 2, th.div_ceil(4), th.div_ceil(2)];
    let mut rows = Vec::new();
    let mut push = |lemma: &'static str, params: String, required: usize, targets: &[u32], sources: &[u32]| {
        let (achieved, witness) = min_dominator_witness(g, targets, sources);
        let pass = achieved >= required;
        rows.push(LemmaRow { lemma, params, required, achieved, pass, witness: if pass { Vec::new() } else { witness } });
    };

    // flow_window on the whole product
    let n = g.n;
    let h = n / 2;
    if h > 0 && g.outputs.len() >= 2 * h {
        let y_all: Vec<u32> = real(&g.outputs[h..2 * h]);
        for i in 0..budget {
            let (side, xs) = if i % 2 == 0 { ("A", &g.input_a) } else { ("B", &g.input_b) };
            let x_all = real(&xs[..h.min(xs.len())]);
            let x = pick(&mut rng, &x_all, sizes[i % 4]);
            let y = pick(&mut rng, &y_all, sizes[(i / 4) % 4]);
            let req = (x.len() * y.len()).div_ceil(n);
            push("flow_window", format!("n={n} side={side} X=[{}] Y=[{}]", fmt_set(&x), fmt_set(&y)), req, &y, &x);
        }
    }

    if !g.msps.is_empty() {
        // input_half
        for i in 0..budget {
            let m = &g.msps[rng.gen_range(0..g.msps.len())];
            let pool: Vec<u32> = m.y_a_floor.iter().chain(&m.y_b_floor).copied().collect();
            if pool.is_empty() {
                continue;
            }
            let y = pick(&mut rng, &pool, sizes[i % 4]);
            push("input_half", format!("msp={} n_i={} Y=[{}]", crate::plan::format_path(&m.path), m.size, fmt_set(&y)), y.len(), &y, &g.inputs);
        }
        // output_window
        let z_all: Vec<u32> = g.msps.iter().flat_map(|m| m.z.iter().copied()).collect();
        if !z_all.is_empty() {
            for i in 0..budget {
                let z = pick(&mut rng, &z_all, sizes[i % 4].min(th / 2).max(1));
                if z.len() > th / 2 {
                    continue;
                }
                push("output_window", format!("n'={th} Z=[{}]", fmt_set(&z)), z.len().div_ceil(2), &z, &g.inputs);
            }
        }
        // product_window
        let type1: Vec<&Msp> = g.msps.iter().filter(|m| m.kind == MspKind::Type1 && !m.t.is_empty()).collect();
        if !type1.is_empty() {
            for i in 0..budget {
                let m = type1[rng.gen_range(0..type1.len())];
                let idx: Vec<u32> = (0..m.t.len() as u32).collect();
                let chosen = pick(&mut rng, &idx, sizes[i % 4]);
                let tv: Vec<u32> = chosen.iter().map(|&c| m.t[c as usize].0).collect();
                let mut ja: Vec<usize> = chosen.iter().map(|&c| m.t[c as usize].1).collect();
                let mut lb: Vec<usize> = chosen.iter().map(|&c| m.t[c as usize].2).collect();
                ja.sort_unstable();
                ja.dedup();
                lb.sort_unstable();
                lb.dedup();
                let sources: Vec<u32> = m.y_a.iter().chain(&m.y_b).copied().collect();
                let pairs: Vec<String> = chosen.iter().map(|&c| format!("{}:{}", m.t[c as usize].1, m.t[c as usize].2)).collect();
                push(
                    "product_window",
                    format!("msp={} n_i={} T=[{}]", crate::plan::format_path(&m.path), m.size, pairs.join(" ")),
                    ja.len().max(lb.len()),
                    &tv,
                    &sources,
                );
            }
        }
    }

    // encoder_paths on Toom nodes
    let tooms: Vec<usize> = (0..g.sub_kind.len()).filter(|&s| matches!(g.sub_kind[s], NodeKind::Toom { .. })).collect();
    if !tooms.is_empty() {
        for i in 0..budget {
            let s = tooms[rng.gen_range(0..tooms.len())];
            let NodeKind::Toom { k } = g.sub_kind[s] else { unreachable!() };
            let kids: Vec<usize> = (0..g.sub_parent.len()).filter(|&c| g.sub_parent[c] == Some(s as u32)).collect();
            let c = kids[rng.gen_range(0..kids.len())];
            let w = g.sub_nominal[s].div_ceil(k).max(1);
            let (side, src, dst) = if i % 2 == 0 { ("A", &g.sub_a[s], &g.sub_a[c]) } else { ("B", &g.sub_b[s], &g.sub_b[c]) };
            let sources = real(&src[..w.min(src.len())]);
            let pool = real(&dst[..w.min(dst.len())]);
            if pool.is_empty() {
                continue;
            }
            let y = pick(&mut rng, &pool, sizes[i % 4]);
            push("encoder_paths", format!("node={s} child={c} side={side} Y=[{}]", fmt_set(&y)), y.len(), &y, &sources);
        }
    }
    LemmaReport { rows }
}
