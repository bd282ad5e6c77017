//! Instruction trees (which algorithm runs at each subproblem) and the
//! maximal-subproblem census over a tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::toom::{EvalPointSet, MAX_K};

pub const SCHOOLBOOK: &str = "schoolbook";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub enum InstructionTree {
    Standard { variant: String },
    Toom { k: usize, pts: EvalPointSet, children: Vec<InstructionTree> },
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum Repr {
    Std { std: String },
    Toom { toom: usize, pts: EvalPointSet, children: Vec<InstructionTree> },
}

impl TryFrom<Repr> for InstructionTree {
    type Error = Error;
    fn try_from(r: Repr) -> Result<Self> {
        match r {
            Repr::Std { std } if std == SCHOOLBOOK => Ok(InstructionTree::standard()),
            Repr::Std { std } => Err(Error::Plan(format!("unknown standard variant {std:?}"))),
            Repr::Toom { toom, pts, children } => InstructionTree::toom(toom, pts, children),
        }
    }
}

impl From<InstructionTree> for Repr {
    fn from(t: InstructionTree) -> Self {
        match t {
            InstructionTree::Standard { variant } => Repr::Std { std: variant },
            InstructionTree::Toom { k, pts, children } => Repr::Toom { toom: k, pts, children },
        }
    }
}

impl InstructionTree {
    pub fn standard() -> Self {
        InstructionTree::Standard { variant: SCHOOLBOOK.into() }
    }

    pub fn toom(k: usize, pts: EvalPointSet, children: Vec<InstructionTree>) -> Result<Self> {
        if !(2..=MAX_K).contains(&k) {
            return Err(Error::Plan(format!("k={k} outside 2..={MAX_K}")));
        }
        if pts.k() != k {
            return Err(Error::Plan(format!("Toom-{k} needs {} points, got {}", 2 * k - 1, pts.points().len())));
        }
        if children.len() != 2 * k - 1 {
            return Err(Error::Plan(format!("Toom-{k} needs {} children, got {}", 2 * k - 1, children.len())));
        }
        Ok(InstructionTree::Toom { k, pts, children })
    }

    pub fn is_standard(&self) -> bool {
        matches!(self, InstructionTree::Standard { .. })
    }

    pub fn depth(&self) -> usize {
        match self {
            InstructionTree::Standard { .. } => 0,
            InstructionTree::Toom { children, .. } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            InstructionTree::Standard { .. } => 1,
            InstructionTree::Toom { children, .. } => children.iter().map(|c| c.leaf_count()).sum(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Plan(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn plan_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Digits needed above `ceil(m/k)` to hold any `p(x_i)`.
pub fn pad(k: usize, pts: &EvalPointSet, base: u64) -> usize {
    let bound = (k as u128).saturating_mul((pts.max_abs() as u128).saturating_pow(k as u32 - 1));
    let mut e = 0;
    let mut p: u128 = 1;
    while p < bound {
        p = p.saturating_mul(base as u128);
        e += 1;
    }
    e + 1
}

pub fn padded_child_size(m: usize, k: usize, pts: &EvalPointSet, base: u64) -> usize {
    m.div_ceil(k) + pad(k, pts, base)
}

/// How a node's child size follows from its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeModel {
    /// `ceil(m/k)`: the idealized recurrence with no carry growth.
    ZeroPad,
    /// `ceil(m/k) + pad`: the recurrence the engine runs with.
    Padded { base: u64 },
}

impl SizeModel {
    pub fn child_size(&self, m: usize, k: usize, pts: &EvalPointSet) -> usize {
        match *self {
            SizeModel::ZeroPad => m.div_ceil(k),
            SizeModel::Padded { base } => padded_child_size(m, k, pts, base),
        }
    }
}

/// Class rule for a Toom-k node of size `m` with children of size `c`.
pub fn admissible(m: usize, k: usize, c: usize) -> bool {
    k * c <= 2 * m && c < m
}

fn path_str(path: &[u32]) -> String {
    if path.is_empty() {
        "root".into()
    } else {
        path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Checks every Toom node against the size recurrence.
pub fn validate(plan: &InstructionTree, n: usize, model: SizeModel) -> Result<()> {
    fn go(t: &InstructionTree, m: usize, model: SizeModel, path: &mut Vec<u32>) -> Result<()> {
        if let InstructionTree::Toom { k, pts, children } = t {
            let c = model.child_size(m, *k, pts);
            if !admissible(m, *k, c) {
                return Err(Error::Plan(format!(
                    "Toom-{k} at node {} of size {m} gives children of size {c}",
                    path_str(path)
                )));
            }
            for (i, ch) in children.iter().enumerate() {
                path.push(i as u32);
                go(ch, c, model, path)?;
                path.pop();
            }
        }
        Ok(())
    }
    go(plan, n, model, &mut Vec::new())
}

fn uniform(n: usize, k: usize, n0: usize, model: SizeModel, strict: bool) -> Result<InstructionTree> {
    if !(2..=MAX_K).contains(&k) {
        return Err(Error::Plan(format!("k={k} outside 2..={MAX_K}")));
    }
    if n0 == 0 {
        return Err(Error::Plan("n0 must be at least 1".into()));
    }
    let pts = EvalPointSet::default_for(k);
    fn node(m: usize, k: usize, n0: usize, pts: &EvalPointSet, model: SizeModel, strict: bool) -> Result<InstructionTree> {
        if m <= n0 {
            return Ok(InstructionTree::standard());
        }
        let c = model.child_size(m, k, pts);
        if !admissible(m, k, c) {
            return if strict {
                Err(Error::Plan(format!("Toom-{k} inadmissible at size {m} (children {c})")))
            } else {
                Ok(InstructionTree::standard())
            };
        }
        let child = node(c, k, n0, pts, model, strict)?;
        InstructionTree::toom(k, pts.clone(), vec![child; 2 * k - 1])
    }
    node(n, k, n0, &pts, model, strict)
}

/// Toom-k at every node larger than `n0`, Standard below.
pub fn uniform_plan(n: usize, k: usize, n0: usize, model: SizeModel) -> Result<InstructionTree> {
    uniform(n, k, n0, model, true)
}

/// Like [`uniform_plan`] but nodes where Toom-k is inadmissible become
/// Standard instead of failing.
pub fn uniform_plan_clamped(n: usize, k: usize, n0: usize, model: SizeModel) -> Result<InstructionTree> {
    uniform(n, k, n0, model, false)
}

/// Each node independently picks Standard with probability `p_standard`,
/// else Toom-k with `k` uniform over the admissible choices.
pub fn random_plan(n: usize, seed: u64, k_choices: &[usize], p_standard: f64, model: SizeModel) -> Result<InstructionTree> {
    if let Some(k) = k_choices.iter().find(|k| !(2..=MAX_K).contains(*k)) {
        return Err(Error::Plan(format!("k={k} outside 2..={MAX_K}")));
    }
    if !(0.0..=1.0).contains(&p_standard) {
        return Err(Error::Plan(format!("p_standard={p_standard} outside [0, 1]")));
    }
    fn node(m: usize, rng: &mut ChaCha8Rng, ks: &[usize], p: f64, model: SizeModel) -> InstructionTree {
        if rng.gen::<f64>() < p {
            return InstructionTree::standard();
        }
        let ok: Vec<usize> = ks
            .iter()
            .copied()
            .filter(|&k| admissible(m, k, model.child_size(m, k, &EvalPointSet::default_for(k))))
            .collect();
        if ok.is_empty() {
            return InstructionTree::standard();
        }
        let k = ok[rng.gen_range(0..ok.len())];
        let pts = EvalPointSet::default_for(k);
        let c = model.child_size(m, k, &pts);
        let children = (0..2 * k - 1).map(|_| node(c, rng, ks, p, model)).collect();
        InstructionTree::Toom { k, pts, children }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(node(n, &mut rng, k_choices, p_standard, model))
}

/// Maximal subproblems of a plan for a threshold `n'`, identified by their
/// path from the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MspCensus {
    pub threshold: usize,
    /// `(path, n_i)` for standard-class MSPs.
    pub type1: Vec<(Vec<u32>, usize)>,
    /// `(path, n_i, k)` for Toom nodes whose children all fall below `n'`.
    pub type2: Vec<(Vec<u32>, usize, usize)>,
    /// Exact count of the marked elementary products over type-1 MSPs.
    pub tcard_enumerated: u128,
    /// `sum n_i^2 / 4` (rounded up per MSP), the convention the bounds use.
    pub tcard_formula: u128,
    /// Set when `tcard_enumerated < nu1 * n'^2 / 4`.
    pub tcard_flagged: bool,
}

impl MspCensus {
    pub fn nu1(&self) -> usize {
        self.type1.len()
    }

    pub fn nu2(&self) -> usize {
        self.type2.len()
    }

    pub fn nu(&self) -> usize {
        self.nu1() + self.nu2()
    }

    pub fn sum_sq_type1(&self) -> u128 {
        self.type1.iter().map(|&(_, n)| (n as u128) * (n as u128)).sum()
    }
}

/// Pairs `(j, l)` with `0 <= j, l <= (n-1)/2` and `n/4 <= j + l <= 3n/4`.
pub fn marked_pair_count(n: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    let h = (n - 1) / 2;
    let mut total = 0u128;
    for t in 0..=2 * h {
        if 4 * t >= n && 4 * t <= 3 * n {
            total += (t.min(2 * h - t) + 1) as u128;
        }
    }
    total
}

pub fn census(plan: &InstructionTree, n: usize, threshold: usize, model: SizeModel) -> MspCensus {
    let mut c = MspCensus {
        threshold,
        type1: Vec::new(),
        type2: Vec::new(),
        tcard_enumerated: 0,
        tcard_formula: 0,
        tcard_flagged: false,
    };
    fn go(t: &InstructionTree, m: usize, th: usize, model: SizeModel, path: &mut Vec<u32>, c: &mut MspCensus) {
        if m < th {
            return;
        }
        match t {
            InstructionTree::Standard { .. } => c.type1.push((path.clone(), m)),
            InstructionTree::Toom { k, pts, children } => {
                let cs = model.child_size(m, *k, pts);
                if cs < th {
                    c.type2.push((path.clone(), m, *k));
                    return;
                }
                for (i, ch) in children.iter().enumerate() {
                    path.push(i as u32);
                    go(ch, cs, th, model, path, c);
                    path.pop();
                }
            }
        }
    }
    go(plan, n, threshold, model, &mut Vec::new(), &mut c);
    c.tcard_enumerated = c.type1.iter().map(|&(_, m)| marked_pair_count(m)).sum();
    c.tcard_formula = c.type1.iter().map(|&(_, m)| ((m as u128) * (m as u128)).div_ceil(4)).sum();
    let th2 = (threshold as u128) * (threshold as u128);
    c.tcard_flagged = 4 * c.tcard_enumerated < (c.nu1() as u128) * th2;
    c
}

/// One node of a plan with its model size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizedNode {
    pub path: Vec<u32>,
    pub size: usize,
    /// `None` for Standard.
    pub k: Option<usize>,
}

/// Every node of the plan in depth-first order with its model size.
pub fn node_sizes(plan: &InstructionTree, n: usize, model: SizeModel) -> Vec<SizedNode> {
    fn go(t: &InstructionTree, m: usize, model: SizeModel, path: &mut Vec<u32>, out: &mut Vec<SizedNode>) {
        match t {
            InstructionTree::Standard { .. } => out.push(SizedNode { path: path.clone(), size: m, k: None }),
            InstructionTree::Toom { k, pts, children } => {
                out.push(SizedNode { path: path.clone(), size: m, k: Some(*k) });
                let c = model.child_size(m, *k, pts);
                for (i, ch) in children.iter().enumerate() {
                    path.push(i as u32);
                    go(ch, c, model, path, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    go(plan, n, model, &mut Vec::new(), &mut out);
    out
}

/// Dotted form of a path, `root` for the empty path.
pub fn format_path(path: &[u32]) -> String {
    path_str(path)
}
