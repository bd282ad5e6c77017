//! Generic Toom-k multiplication with integer evaluation points, driven by an
//! [`InstructionTree`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::digit::{self, DigitString, Tracked};
use crate::error::{Error, Result};
use crate::plan::{self, InstructionTree};
use crate::trace::{ExecutionTrace, NodeKind, NullSink, Recorder, Sink};

pub const MAX_K: usize = 8;
/// Largest allowed point magnitude; keeps every scalar immediate small.
pub const MAX_POINT: i64 = 1 << 20;

/// `2k-1` distinct integer evaluation points.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct EvalPointSet {
    points: Vec<i64>,
}

impl EvalPointSet {
    pub fn new(points: Vec<i64>) -> Result<Self> {
        let n = points.len();
        if n < 3 || n % 2 == 0 || (n + 1) / 2 > MAX_K {
            return Err(Error::Plan(format!("{n} evaluation points; need 2k-1 with 2 <= k <= {MAX_K}")));
        }
        if let Some(x) = points.iter().find(|x| x.abs() > MAX_POINT) {
            return Err(Error::Plan(format!("evaluation point {x} exceeds {MAX_POINT} in magnitude")));
        }
        for (i, x) in points.iter().enumerate() {
            if points[..i].contains(x) {
                return Err(Error::Plan(format!("evaluation point {x} repeated")));
            }
        }
        let set = EvalPointSet { points };
        // matrix entries must fit the exact integer solver
        VandermondeSystem::build(&set)?;
        Ok(set)
    }

    /// `0, 1, -1, 2, -2, ...` truncated to `2k-1` points.
    pub fn default_for(k: usize) -> Self {
        let mut points = vec![0i64];
        let mut x = 1;
        while points.len() < 2 * k - 1 {
            points.push(x);
            if points.len() < 2 * k - 1 {
                points.push(-x);
            }
            x += 1;
        }
        EvalPointSet { points }
    }

    pub fn k(&self) -> usize {
        (self.points.len() + 1) / 2
    }

    pub fn points(&self) -> &[i64] {
        &self.points
    }

    pub fn max_abs(&self) -> u64 {
        self.points.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
    }
}

impl TryFrom<Vec<i64>> for EvalPointSet {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        EvalPointSet::new(v)
    }
}

impl From<EvalPointSet> for Vec<i64> {
    fn from(p: EvalPointSet) -> Self {
        p.points
    }
}

/// Vandermonde matrix for a point set and the divisor schedule used to
/// invert it.
///
/// The solve eliminates in divided-difference order: column `m` is cleared by
/// subtracting adjacent rows, so each pivot division is by a point difference
/// `x_i - x_{i-m}` and the quotient is an integer whenever the right-hand
/// side is. A back-substitution then turns the divided differences into
/// monomial coefficients.
#[derive(Clone, Debug)]
pub struct VandermondeSystem {
    pub k: usize,
    pub points: Vec<i64>,
    pub matrix: Vec<Vec<i128>>,
    /// `(m, i, x_i - x_{i-m})` in execution order.
    pub divisors: Vec<(usize, usize, i64)>,
}

impl VandermondeSystem {
    fn build(pts: &EvalPointSet) -> Result<Self> {
        let x = &pts.points;
        let n = x.len();
        let mut matrix = vec![vec![0i128; n]; n];
        for i in 0..n {
            let mut p: i128 = 1;
            for j in 0..n {
                matrix[i][j] = p;
                p = p
                    .checked_mul(x[i] as i128)
                    .ok_or_else(|| Error::Plan(format!("points {x:?} too large for k={}", pts.k())))?;
            }
        }
        let mut divisors = Vec::new();
        for m in 1..n {
            for i in (m..n).rev() {
                divisors.push((m, i, x[i] - x[i - m]));
            }
        }
        Ok(VandermondeSystem { k: pts.k(), points: x.clone(), matrix, divisors })
    }

    /// Shared instance for `pts`, built on first use.
    pub fn for_points(pts: &EvalPointSet) -> Arc<VandermondeSystem> {
        static CACHE: OnceLock<Mutex<HashMap<Vec<i64>, Arc<VandermondeSystem>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().expect("vandermonde cache poisoned");
        map.entry(pts.points.clone())
            .or_insert_with(|| Arc::new(VandermondeSystem::build(pts).expect("validated point set")))
            .clone()
    }

    /// `V * r`.
    pub fn apply(&self, r: &[i128]) -> Vec<i128> {
        self.matrix.iter().map(|row| row.iter().zip(r).map(|(a, b)| a * b).sum()).collect()
    }

    /// Solves `V * r = v` over machine integers; `None` if a division is
    /// inexact or a value overflows.
    pub fn solve_i128(&self, v: &[i128]) -> Option<Vec<i128>> {
        let x = &self.points;
        let n = x.len();
        let mut d = v.to_vec();
        for &(_, i, den) in &self.divisors {
            let diff = d[i].checked_sub(d[i - 1])?;
            if diff % den as i128 != 0 {
                return None;
            }
            d[i] = diff / den as i128;
        }
        let mut poly = vec![d[n - 1]];
        for m in (0..n - 1).rev() {
            let mut next = vec![0i128; poly.len() + 1];
            for (j, &c) in poly.iter().enumerate() {
                next[j + 1] = next[j + 1].checked_add(c)?;
                next[j] = next[j].checked_sub(c.checked_mul(x[m] as i128)?)?;
            }
            next[0] = next[0].checked_add(d[m])?;
            poly = next;
        }
        Some(poly)
    }
}

/// Splits `a` into `k` blocks of `width` digits, least significant first.
pub fn split_width(a: &DigitString, k: usize, width: usize) -> Vec<DigitString> {
    (0..k).map(|i| a.slice(i * width, (i + 1) * width)).collect()
}

/// Splits into `k` blocks of `ceil(|a|/k)` digits.
pub fn split(a: &DigitString, k: usize) -> Vec<DigitString> {
    split_width(a, k, a.size().div_ceil(k).max(1))
}

/// Traced split. Blocks keep every digit vertex of their range, including
/// high zeros, so the encoder's graph does not depend on digit values.
fn split_t(a: &Tracked, k: usize, width: usize) -> Vec<Tracked> {
    (0..k).map(|i| a.slice(i * width, (i + 1) * width)).collect()
}

/// Horner evaluation of the block polynomial at every point.
pub fn evaluate_t<S: Sink>(sink: &mut S, blocks: &[Tracked], pts: &EvalPointSet) -> Result<Vec<Tracked>> {
    let k = blocks.len();
    pts.points
        .iter()
        .map(|&x| {
            if x == 0 {
                return Ok(blocks[0].clone());
            }
            let mut p = blocks[k - 1].clone();
            for j in (0..k - 1).rev() {
                let px = digit::scalar_mul(sink, &p, x);
                p = digit::add(sink, &px, &blocks[j])?;
            }
            Ok(p)
        })
        .collect()
}

pub fn evaluate(blocks: &[DigitString], pts: &EvalPointSet) -> Result<Vec<DigitString>> {
    if blocks.len() != pts.k() {
        return Err(Error::Plan(format!("{} blocks for {} points", blocks.len(), pts.points.len())));
    }
    let t: Vec<Tracked> = blocks.iter().cloned().map(Tracked::untracked).collect();
    Ok(evaluate_t(&mut NullSink, &t, pts)?.into_iter().map(|t| t.num).collect())
}

/// Recovers the coefficient vector from its values at the points.
pub fn interpolate_t<S: Sink>(sink: &mut S, values: &[Tracked], pts: &EvalPointSet) -> Result<Vec<Tracked>> {
    let sys = VandermondeSystem::for_points(pts);
    let x = &sys.points;
    let n = x.len();
    if values.len() != n {
        return Err(Error::Interpolation(format!("{} values for {n} points", values.len())));
    }
    let mut d = values.to_vec();
    for &(_, i, den) in &sys.divisors {
        let diff = digit::sub(sink, &d[i], &d[i - 1])?;
        let q = digit::exact_div(sink, &diff, den.unsigned_abs())?;
        d[i] = if den < 0 { q.negated() } else { q };
    }
    let zero = || Tracked::untracked(DigitString::zero(values[0].num.base()));
    let mut poly = vec![d[n - 1].clone()];
    for m in (0..n - 1).rev() {
        let mut next = Vec::with_capacity(poly.len() + 1);
        for j in 0..=poly.len() {
            let low = if j == 0 { d[m].clone() } else { poly[j - 1].clone() };
            let term = match poly.get(j) {
                Some(c) if x[m] != 0 => digit::scalar_mul(sink, c, -x[m]),
                _ => zero(),
            };
            next.push(digit::add(sink, &low, &term)?);
        }
        poly = next;
    }
    Ok(poly)
}

pub fn interpolate(values: &[DigitString], pts: &EvalPointSet) -> Result<Vec<DigitString>> {
    let t: Vec<Tracked> = values.iter().cloned().map(Tracked::untracked).collect();
    Ok(interpolate_t(&mut NullSink, &t, pts)?.into_iter().map(|t| t.num).collect())
}

/// `sum r_i * s^(i*width)`.
pub fn recompose_t<S: Sink>(sink: &mut S, coeffs: &[Tracked], width: usize) -> Result<Tracked> {
    let mut acc = coeffs[0].clone();
    for (i, r) in coeffs.iter().enumerate().skip(1) {
        let shifted = digit::shift(sink, r, i * width);
        acc = digit::add(sink, &acc, &shifted)?;
    }
    if acc.num.is_negative() {
        return Err(Error::Internal(format!("recomposed product {} is negative", acc.num)));
    }
    Ok(acc)
}

pub fn recompose(coeffs: &[DigitString], width: usize) -> Result<DigitString> {
    let t: Vec<Tracked> = coeffs.iter().cloned().map(Tracked::untracked).collect();
    recompose_t(&mut NullSink, &t, width).map(|t| t.num)
}

/// Runs one plan node on `a * b`. `nominal` is the node's size from the
/// padded size recurrence; splitting and the runtime admissibility check
/// both use it.
pub fn multiply_t<S: Sink>(
    sink: &mut S,
    a: &Tracked,
    b: &Tracked,
    plan: &InstructionTree,
    nominal: usize,
    child_index: u32,
) -> Result<Tracked> {
    if a.num.base() != b.num.base() {
        return Err(Error::Config(format!("base mismatch: {} vs {}", a.num.base(), b.num.base())));
    }
    let base = a.num.base();
    let negative = a.num.is_negative() ^ b.num.is_negative();
    let (ua, ub) = (a.abs(), b.abs());
    let mut c = match plan {
        InstructionTree::Standard { .. } => {
            sink.enter(nominal, NodeKind::Standard, &ua.ids, &ub.ids, child_index);
            let c = digit::schoolbook(sink, &ua, &ub)?;
            sink.leave(&c.ids);
            c
        }
        InstructionTree::Toom { k, pts, children } => {
            let k = *k;
            if pts.k() != k || children.len() != 2 * k - 1 {
                return Err(Error::Plan(format!("malformed Toom-{k} node")));
            }
            sink.enter(nominal, NodeKind::Toom { k }, &ua.ids, &ub.ids, child_index);
            let width = nominal.div_ceil(k).max(1);
            if ua.size().max(ub.size()) > k * width {
                return Err(Error::Plan(format!("operand of {} digits exceeds nominal size {nominal}", ua.size().max(ub.size()))));
            }
            let blocks = split_t(&ua, k, width);
            let pa = evaluate_t(sink, &blocks, pts)?;
            let blocks = split_t(&ub, k, width);
            let pb = evaluate_t(sink, &blocks, pts)?;
            let child_nominal = plan::padded_child_size(nominal, k, pts, base);
            let mut values = Vec::with_capacity(2 * k - 1);
            for (i, ((p, q), child)) in pa.iter().zip(&pb).zip(children).enumerate() {
                let size = p.size().max(q.size());
                if size > 0 && (k * size > 2 * nominal || size >= nominal) {
                    return Err(Error::Plan(format!(
                        "Toom-{k} at size {nominal} produced a sub-input of {size} digits at point {}",
                        pts.points()[i]
                    )));
                }
                values.push(multiply_t(sink, p, q, child, child_nominal, i as u32)?);
            }
            let coeffs = interpolate_t(sink, &values, pts)?;
            let c = recompose_t(sink, &coeffs, width)?;
            sink.leave(&c.ids);
            c
        }
    };
    c.num = if negative { c.num.abs().negated() } else { c.num.abs() };
    Ok(c)
}

/// `a * b` following `plan`, with the root sized by the larger operand.
pub fn multiply(a: &DigitString, b: &DigitString, plan: &InstructionTree) -> Result<DigitString> {
    multiply_sized(a, b, plan, a.size().max(b.size()))
}

/// `a * b` following a plan built for `n`-digit operands.
pub fn multiply_sized(a: &DigitString, b: &DigitString, plan: &InstructionTree, n: usize) -> Result<DigitString> {
    check_root(a, b, n)?;
    multiply_t(&mut NullSink, &Tracked::untracked(a.clone()), &Tracked::untracked(b.clone()), plan, n, 0).map(|t| t.num)
}

fn check_root(a: &DigitString, b: &DigitString, n: usize) -> Result<()> {
    let m = a.size().max(b.size());
    if m > n {
        return Err(Error::Plan(format!("operands of {m} digits exceed plan size {n}")));
    }
    Ok(())
}

/// Executes `a * b` under `plan` and records every digit-level event.
pub fn trace_multiply(a: &DigitString, b: &DigitString, plan: &InstructionTree) -> Result<(DigitString, ExecutionTrace)> {
    trace_multiply_sized(a, b, plan, a.size().max(b.size()))
}

pub fn trace_multiply_sized(
    a: &DigitString,
    b: &DigitString,
    plan: &InstructionTree,
    n: usize,
) -> Result<(DigitString, ExecutionTrace)> {
    check_root(a, b, n)?;
    let mut rec = Recorder::new(a.base());
    let ta = digit::load(&mut rec, a);
    let tb = digit::load(&mut rec, b);
    rec.set_inputs(ta.ids.clone(), tb.ids.clone());
    let c = multiply_t(&mut rec, &ta, &tb, plan, n, 0)?;
    let out = digit::store(&mut rec, &c);
    rec.set_outputs(out, c.num.is_negative());
    Ok((c.num, rec.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::SizeModel;
    use crate::trace::OpKind;

    fn ds(v: i128, base: u64) -> DigitString {
        DigitString::from_i128(v, base).unwrap()
    }

    fn vals(v: &[DigitString]) -> Vec<i128> {
        v.iter().map(|d| d.to_i128().unwrap()).collect()
    }

    fn pts(p: &[i64]) -> EvalPointSet {
        EvalPointSet::new(p.to_vec()).unwrap()
    }

    #[test]
    fn split_examples() {
        assert_eq!(vals(&split(&ds(123456, 10), 3)), vec![56, 34, 12]);
        assert_eq!(vals(&split(&ds(12, 10), 2)), vec![2, 1]);
        assert_eq!(vals(&split(&ds(1234567, 10), 3)), vec![567, 234, 1]);
        assert_eq!(vals(&split_width(&ds(5, 10), 3, 2)), vec![5, 0, 0]);
    }

    #[test]
    fn evaluate_examples() {
        let p = pts(&[0, 1, -1]);
        assert_eq!(vals(&evaluate(&[ds(2, 10), ds(1, 10)], &p).unwrap()), vec![2, 3, 1]);
        assert_eq!(vals(&evaluate(&[ds(0, 10), ds(0, 10)], &p).unwrap()), vec![0, 0, 0]);
        assert_eq!(vals(&evaluate(&[ds(4, 10), ds(3, 10)], &p).unwrap()), vec![4, 7, 1]);
    }

    #[test]
    fn interpolate_examples() {
        let p = pts(&[0, 1, -1]);
        let v = |x: &[i128]| x.iter().map(|&y| ds(y, 10)).collect::<Vec<_>>();
        assert_eq!(vals(&interpolate(&v(&[8, 21, 1]), &p).unwrap()), vec![8, 10, 3]);
        assert_eq!(vals(&interpolate(&v(&[0, 0, 0]), &p).unwrap()), vec![0, 0, 0]);
        assert_eq!(vals(&interpolate(&v(&[1, 1, 1]), &p).unwrap()), vec![1, 0, 0]);
        assert!(matches!(interpolate(&v(&[0, 1, 0]), &p), Err(Error::Interpolation(_))));
    }

    #[test]
    fn recompose_examples() {
        assert_eq!(recompose(&[ds(8, 10), ds(10, 10), ds(3, 10)], 1).unwrap().to_i128(), Some(408));
        assert!(recompose(&[ds(0, 10), ds(0, 10), ds(0, 10)], 1).unwrap().is_zero());
        assert!(matches!(recompose(&[ds(0, 10), ds(-1, 10), ds(0, 10)], 1), Err(Error::Internal(_))));
    }

    #[test]
    fn solve_round_trips_for_every_k() {
        for k in 2..=MAX_K {
            let p = EvalPointSet::default_for(k);
            let sys = VandermondeSystem::for_points(&p);
            let r: Vec<i128> = (0..2 * k as i128 - 1).map(|i| (i * 37 + 11) % 23 - 7).collect();
            assert_eq!(sys.solve_i128(&sys.apply(&r)).unwrap(), r, "k={k}");
        }
    }

    #[test]
    fn point_set_validation() {
        assert!(EvalPointSet::new(vec![0, 1, 1]).is_err());
        assert!(EvalPointSet::new(vec![0, 1]).is_err());
        assert!(EvalPointSet::new(vec![0, 1, -1, 2]).is_err());
        assert_eq!(EvalPointSet::default_for(3).points(), &[0, 1, -1, 2, -2]);
        assert_eq!(EvalPointSet::default_for(2).points(), &[0, 1, -1]);
    }

    #[test]
    fn multiply_examples() {
        let t2 = InstructionTree::toom(2, pts(&[0, 1, -1]), vec![InstructionTree::standard(); 3]).unwrap();
        assert_eq!(multiply(&ds(12, 10), &ds(34, 10), &t2).unwrap().to_i128(), Some(408));

        let plan = plan::uniform_plan(4, 2, 1, SizeModel::ZeroPad).unwrap();
        assert_eq!(multiply(&ds(1234, 10), &ds(5678, 10), &plan).unwrap().to_i128(), Some(7006652));

        let a = ds(987654321987, 256);
        let b = ds(-123456789, 256);
        assert_eq!(
            multiply(&a, &b, &InstructionTree::standard()).unwrap(),
            digit::schoolbook_mul(&a, &b).unwrap()
        );
    }

    #[test]
    fn large_points_raise_plan_error() {
        let t = InstructionTree::toom(2, pts(&[0, 50, -50]), vec![InstructionTree::standard(); 3]).unwrap();
        assert!(matches!(multiply(&ds(12, 10), &ds(34, 10), &t), Err(Error::Plan(_))));
    }

    #[test]
    fn trace_replays_to_product() {
        let plan = plan::uniform_plan(4, 2, 1, SizeModel::ZeroPad).unwrap();
        let (c, tr) = trace_multiply(&ds(1234, 10), &ds(5678, 10), &plan).unwrap();
        assert_eq!(c.to_i128(), Some(7006652));
        assert_eq!(tr.replay_output(), c.digits());
        assert_eq!(tr.count(OpKind::InputLoad), 8);
        assert_eq!(tr.count(OpKind::OutputStore), 7);
        let root = &tr.subs[0];
        assert_eq!(root.path, Vec::<u32>::new());
        assert_eq!(tr.subs.iter().filter(|s| s.depth == 1).count(), 3);
    }
}
