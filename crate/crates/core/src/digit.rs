//! Sign-magnitude base-s integers and traced digit-level arithmetic.
//!
//! All arithmetic is written once against a [`Sink`]; the plain
//! `DigitString` functions at the bottom run it with [`NullSink`].

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::trace::{NullSink, OpKind, Sink, ValueId, NONE};

pub const DEFAULT_BASE: u64 = 1 << 16;
pub const MAX_BASE: u64 = 1 << 32;

pub fn check_base(base: u64) -> Result<()> {
    if (2..=MAX_BASE).contains(&base) {
        Ok(())
    } else {
        Err(Error::Config(format!("base {base} outside [2, 2^32]")))
    }
}

/// Integer as least-significant-first digits in base `s` plus a sign.
///
/// Zero is the empty digit vector with positive sign.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DigitString {
    base: u64,
    negative: bool,
    digits: Vec<u64>,
}

impl DigitString {
    pub fn zero(base: u64) -> Self {
        DigitString { base, negative: false, digits: Vec::new() }
    }

    /// Validates digits and strips high zeros.
    pub fn new(base: u64, negative: bool, mut digits: Vec<u64>) -> Result<Self> {
        check_base(base)?;
        if let Some(d) = digits.iter().find(|&&d| d >= base) {
            return Err(Error::Config(format!("digit {d} not below base {base}")));
        }
        while digits.last() == Some(&0) {
            digits.pop();
        }
        let negative = negative && !digits.is_empty();
        Ok(DigitString { base, negative, digits })
    }

    pub fn from_i128(v: i128, base: u64) -> Result<Self> {
        check_base(base)?;
        let negative = v < 0;
        let mut m = v.unsigned_abs();
        let mut digits = Vec::new();
        while m > 0 {
            digits.push((m % base as u128) as u64);
            m /= base as u128;
        }
        Ok(DigitString { base, negative, digits })
    }

    pub fn from_bigint(v: &BigInt, base: u64) -> Result<Self> {
        check_base(base)?;
        let negative = v.sign() == Sign::Minus;
        let mag = v.magnitude();
        let digits = if base.is_power_of_two() {
            let bits = base.trailing_zeros() as u64;
            let nbits = mag.bits();
            (0..nbits.div_ceil(bits))
                .map(|i| {
                    (0..bits).fold(0u64, |d, b| d | ((mag.bit(i * bits + b) as u64) << b))
                })
                .collect()
        } else {
            let mut m = mag.clone();
            let b = BigUint::from(base);
            let mut out = Vec::new();
            while !m.is_zero() {
                out.push((&m % &b).to_u64().unwrap());
                m /= &b;
            }
            out
        };
        DigitString::new(base, negative, digits)
    }

    pub fn to_bigint(&self) -> BigInt {
        let b = BigUint::from(self.base);
        let mag = self.digits.iter().rev().fold(BigUint::zero(), |acc, &d| acc * &b + d);
        BigInt::from_biguint(if self.negative { Sign::Minus } else { Sign::Plus }, mag)
    }

    pub fn to_i128(&self) -> Option<i128> {
        let mut v: i128 = 0;
        for &d in self.digits.iter().rev() {
            v = v.checked_mul(self.base as i128)?.checked_add(d as i128)?;
        }
        Some(if self.negative { -v } else { v })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    /// Digit count after normalization, i.e. `|A|`.
    pub fn size(&self) -> usize {
        self.digits.len()
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn sign(&self) -> i8 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    pub fn negated(&self) -> Self {
        DigitString { negative: !self.negative && !self.digits.is_empty(), ..self.clone() }
    }

    pub fn abs(&self) -> Self {
        DigitString { negative: false, ..self.clone() }
    }

    /// Digits `[lo, hi)` as a non-negative number.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        let hi = hi.min(self.digits.len());
        let lo = lo.min(hi);
        let mut digits = self.digits[lo..hi].to_vec();
        while digits.last() == Some(&0) {
            digits.pop();
        }
        DigitString { base: self.base, negative: false, digits }
    }

    fn cmp_mag(&self, other: &Self) -> Ordering {
        self.digits
            .len()
            .cmp(&other.digits.len())
            .then_with(|| self.digits.iter().rev().cmp(other.digits.iter().rev()))
    }
}

impl std::fmt::Display for DigitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_bigint())
    }
}

/// A digit string together with the value ids of its digits.
///
/// `ids` is empty when produced under a non-recording sink.
#[derive(Clone, Debug)]
pub struct Tracked {
    pub num: DigitString,
    pub ids: Vec<ValueId>,
}

impl Tracked {
    pub fn untracked(num: DigitString) -> Self {
        Tracked { num, ids: Vec::new() }
    }

    #[inline]
    pub fn id(&self, i: usize) -> ValueId {
        self.ids.get(i).copied().unwrap_or(NONE)
    }

    pub fn size(&self) -> usize {
        self.num.size()
    }

    /// Digit positions carrying a vertex. Blocks cut from the middle of an
    /// operand keep their high zero digits, so this can exceed `size()`.
    pub fn width(&self) -> usize {
        self.ids.len().max(self.num.size())
    }

    #[inline]
    fn digit(&self, i: usize) -> u64 {
        self.num.digits.get(i).copied().unwrap_or(0)
    }

    pub fn negated(&self) -> Self {
        Tracked { num: self.num.negated(), ids: self.ids.clone() }
    }

    pub fn abs(&self) -> Self {
        Tracked { num: self.num.abs(), ids: self.ids.clone() }
    }

    /// Digits `[lo, hi)` as a non-negative number sharing value ids. Every
    /// tracked position in the range is kept, zero or not.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        let num = self.num.slice(lo, hi);
        let n = self.ids.len();
        let ids = self.ids[lo.min(n)..hi.min(n)].to_vec();
        Tracked { num, ids }
    }
}

fn same_base(a: &DigitString, b: &DigitString) -> Result<u64> {
    if a.base == b.base {
        Ok(a.base)
    } else {
        Err(Error::Config(format!("base mismatch: {} vs {}", a.base, b.base)))
    }
}

/// Strips high zero digits, reporting their values as discarded.
fn finish<S: Sink>(sink: &mut S, base: u64, negative: bool, mut digits: Vec<u64>, mut ids: Vec<ValueId>) -> Tracked {
    while digits.last() == Some(&0) {
        digits.pop();
        if S::ON {
            let id = ids.pop().expect("id per digit");
            if id != NONE {
                sink.discard(id);
            }
        }
    }
    let negative = negative && !digits.is_empty();
    Tracked { num: DigitString { base, negative, digits }, ids }
}

/// Emits an InputLoad event per digit.
pub fn load<S: Sink>(sink: &mut S, num: &DigitString) -> Tracked {
    let ids = if S::ON {
        num.digits.iter().map(|&d| sink.emit(OpKind::InputLoad, [NONE, NONE], d as i64, false)).collect()
    } else {
        Vec::new()
    };
    Tracked { num: num.clone(), ids }
}

/// Emits an OutputStore event per digit and returns the stored ids.
pub fn store<S: Sink>(sink: &mut S, t: &Tracked) -> Vec<ValueId> {
    if !S::ON {
        return Vec::new();
    }
    (0..t.size()).map(|i| sink.emit(OpKind::OutputStore, [t.id(i), NONE], 0, false)).collect()
}

/// Appends the final carry digits of a chain.
fn drain_carry<S: Sink>(sink: &mut S, base: u64, mut carry: u128, mut prev: ValueId, out: &mut Vec<u64>, ids: &mut Vec<ValueId>) {
    while carry != 0 {
        out.push((carry % base as u128) as u64);
        carry /= base as u128;
        if S::ON {
            prev = sink.emit(OpKind::CarryPropagate, [NONE, prev], 0, false);
            ids.push(prev);
        }
    }
}

fn add_mag<S: Sink>(sink: &mut S, base: u64, a: &Tracked, b: &Tracked) -> (Vec<u64>, Vec<ValueId>) {
    let n = a.width().max(b.width());
    let mut out = Vec::with_capacity(n + 1);
    let mut ids = Vec::with_capacity(if S::ON { n + 1 } else { 0 });
    let mut carry = 0u128;
    let mut prev = NONE;
    for i in 0..n {
        let t = a.digit(i) as u128 + b.digit(i) as u128 + carry;
        if S::ON {
            let (ax, by) = (a.id(i), b.id(i));
            let mut id = NONE;
            if ax != NONE || by != NONE {
                id = sink.emit(OpKind::Add, [ax, by], 0, false);
            }
            if carry != 0 {
                id = sink.emit(OpKind::CarryPropagate, [id, prev], 0, false);
            }
            ids.push(id);
            prev = id;
        }
        out.push((t % base as u128) as u64);
        carry = t / base as u128;
    }
    drain_carry(sink, base, carry, prev, &mut out, &mut ids);
    (out, ids)
}

/// `|big| - |small|` for `|big| >= |small|`.
fn sub_mag<S: Sink>(sink: &mut S, base: u64, big: &Tracked, small: &Tracked) -> (Vec<u64>, Vec<ValueId>) {
    let n = big.width().max(small.width());
    let mut out = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(if S::ON { n } else { 0 });
    let mut carry = 0i128;
    let mut prev = NONE;
    for i in 0..n {
        let t = big.digit(i) as i128 - small.digit(i) as i128 + carry;
        if S::ON {
            let (bx, sy) = (big.id(i), small.id(i));
            let mut id = NONE;
            if bx != NONE || sy != NONE {
                id = sink.emit(OpKind::Sub, [bx, sy], 0, false);
            }
            if carry != 0 {
                id = sink.emit(OpKind::CarryPropagate, [id, prev], 0, false);
            }
            ids.push(id);
            prev = id;
        }
        out.push(t.rem_euclid(base as i128) as u64);
        carry = t.div_euclid(base as i128);
    }
    debug_assert_eq!(carry, 0);
    (out, ids)
}

/// Signed addition.
pub fn add<S: Sink>(sink: &mut S, a: &Tracked, b: &Tracked) -> Result<Tracked> {
    let base = same_base(&a.num, &b.num)?;
    if a.num.negative == b.num.negative {
        let (d, ids) = add_mag(sink, base, a, b);
        return Ok(finish(sink, base, a.num.negative, d, ids));
    }
    let (d, ids, neg) = if a.num.cmp_mag(&b.num) != Ordering::Less {
        let (d, ids) = sub_mag(sink, base, a, b);
        (d, ids, a.num.negative)
    } else {
        let (d, ids) = sub_mag(sink, base, b, a);
        (d, ids, b.num.negative)
    };
    Ok(finish(sink, base, neg, d, ids))
}

/// Signed subtraction `a - b`.
pub fn sub<S: Sink>(sink: &mut S, a: &Tracked, b: &Tracked) -> Result<Tracked> {
    add(sink, a, &b.negated())
}

/// Multiplies by `s^t`. Each moved digit is copied by a Shift event; the new
/// low digits are constant zeros.
pub fn shift<S: Sink>(sink: &mut S, a: &Tracked, t: usize) -> Tracked {
    if a.width() == 0 || t == 0 {
        return a.clone();
    }
    let mut digits = if a.num.is_zero() { Vec::new() } else { vec![0u64; t] };
    digits.extend_from_slice(&a.num.digits);
    let ids = if S::ON {
        let mut ids = vec![NONE; t];
        ids.extend((0..a.width()).map(|i| sink.emit(OpKind::Shift, [a.id(i), NONE], 0, false)));
        ids
    } else {
        Vec::new()
    };
    Tracked { num: DigitString { base: a.num.base, negative: a.num.negative, digits }, ids }
}

/// Multiplies by a small signed constant.
pub fn scalar_mul<S: Sink>(sink: &mut S, a: &Tracked, c: i64) -> Tracked {
    let base = a.num.base;
    let m = c.unsigned_abs();
    let negative = a.num.negative ^ (c < 0);
    if m == 0 || a.width() == 0 {
        if S::ON {
            for &id in a.ids.iter().filter(|&&id| id != NONE) {
                sink.discard(id);
            }
        }
        return Tracked::untracked(DigitString::zero(base));
    }
    if m == 1 {
        let mut r = a.clone();
        r.num.negative = negative;
        return r;
    }
    let n = a.width();
    let mut out = Vec::with_capacity(n + 2);
    let mut ids = Vec::with_capacity(if S::ON { n + 2 } else { 0 });
    let mut carry = 0u128;
    let mut prev = NONE;
    for i in 0..n {
        let t = a.digit(i) as u128 * m as u128 + carry;
        if S::ON {
            let ax = a.id(i);
            let mut id = NONE;
            if ax != NONE {
                id = sink.emit(OpKind::ScalarMul, [ax, NONE], m as i64, false);
            }
            if carry != 0 {
                id = sink.emit(OpKind::CarryPropagate, [id, prev], 0, false);
            }
            ids.push(id);
            prev = id;
        }
        out.push((t % base as u128) as u64);
        carry = t / base as u128;
    }
    drain_carry(sink, base, carry, prev, &mut out, &mut ids);
    finish(sink, base, negative, out, ids)
}

/// Exact division by a small positive integer, most significant digit first.
pub fn exact_div<S: Sink>(sink: &mut S, a: &Tracked, d: u64) -> Result<Tracked> {
    if d == 0 {
        return Err(Error::Interpolation("division by zero".into()));
    }
    if d == 1 || a.width() == 0 {
        return Ok(a.clone());
    }
    let base = a.num.base as u128;
    let n = a.width();
    let mut out = vec![0u64; n];
    let mut ids = if S::ON { vec![NONE; n] } else { Vec::new() };
    let mut rem = 0u128;
    let mut prev = NONE;
    for i in (0..n).rev() {
        let t = rem * base + a.digit(i) as u128;
        if S::ON {
            let ax = a.id(i);
            let py = if rem != 0 { prev } else { NONE };
            let mut id = NONE;
            if ax != NONE || py != NONE {
                id = sink.emit(OpKind::ExactDivSmall, [ax, py], d as i64, false);
            }
            ids[i] = id;
            prev = id;
        }
        out[i] = (t / d as u128) as u64;
        rem = t % d as u128;
    }
    if rem != 0 {
        return Err(Error::Interpolation(format!("{} is not divisible by {d}", a.num)));
    }
    Ok(finish(sink, a.num.base, a.num.negative, out, ids))
}

/// Standard-class product: every digit pair is multiplied once and each
/// column is accumulated by its own chain of wide additions (highest `j`
/// first), followed by a single carry chain across columns.
pub fn schoolbook<S: Sink>(sink: &mut S, a: &Tracked, b: &Tracked) -> Result<Tracked> {
    let base = same_base(&a.num, &b.num)?;
    let negative = a.num.negative ^ b.num.negative;
    let (la, lb) = (a.width(), b.width());
    if la == 0 || lb == 0 {
        // the zero test consumes the other operand
        if S::ON {
            for &id in a.ids.iter().chain(&b.ids).filter(|&&id| id != NONE) {
                sink.discard(id);
            }
        }
        return Ok(Tracked::untracked(DigitString::zero(base)));
    }
    let ncol = la + lb - 1;
    let mut acc = vec![0u128; ncol];
    let mut acc_id = if S::ON { vec![NONE; ncol] } else { Vec::new() };
    let mut started = if S::ON { vec![false; ncol] } else { Vec::new() };
    let start = sink.pos();
    for j in (0..la).rev() {
        let x = a.digit(j) as u128;
        for l in 0..lb {
            let col = j + l;
            acc[col] += x * b.digit(l) as u128;
            if S::ON {
                let p = sink.emit(OpKind::ElementaryProduct, [a.id(j), b.id(l)], 0, false);
                if started[col] {
                    acc_id[col] = sink.emit(OpKind::Add, [acc_id[col], p], 0, true);
                } else {
                    started[col] = true;
                    acc_id[col] = p;
                }
            }
        }
    }
    if S::ON {
        let end = sink.pos();
        sink.mul_span(start, end);
    }
    let mut out = Vec::with_capacity(ncol + 2);
    let mut ids = Vec::with_capacity(if S::ON { ncol + 2 } else { 0 });
    let mut carry = 0u128;
    let mut prev = NONE;
    for col in 0..ncol {
        let t = acc[col] + carry;
        if S::ON {
            let mut id = acc_id[col];
            if carry != 0 {
                id = sink.emit(OpKind::CarryPropagate, [id, prev], 0, false);
            }
            ids.push(id);
            prev = id;
        }
        out.push((t % base as u128) as u64);
        carry = t / base as u128;
    }
    drain_carry(sink, base, carry, prev, &mut out, &mut ids);
    Ok(finish(sink, base, negative, out, ids))
}

pub fn add_signed(a: &DigitString, b: &DigitString) -> Result<DigitString> {
    add(&mut NullSink, &Tracked::untracked(a.clone()), &Tracked::untracked(b.clone())).map(|t| t.num)
}

pub fn sub_signed(a: &DigitString, b: &DigitString) -> Result<DigitString> {
    add_signed(a, &b.negated())
}

pub fn shift_left(a: &DigitString, t: usize) -> DigitString {
    shift(&mut NullSink, &Tracked::untracked(a.clone()), t).num
}

pub fn scalar_mul_small(a: &DigitString, c: i64) -> DigitString {
    scalar_mul(&mut NullSink, &Tracked::untracked(a.clone()), c).num
}

pub fn exact_div_small(a: &DigitString, d: u64) -> Result<DigitString> {
    exact_div(&mut NullSink, &Tracked::untracked(a.clone()), d).map(|t| t.num)
}

pub fn schoolbook_mul(a: &DigitString, b: &DigitString) -> Result<DigitString> {
    schoolbook(&mut NullSink, &Tracked::untracked(a.clone()), &Tracked::untracked(b.clone())).map(|t| t.num)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Recorder;

    fn ds(v: i128, base: u64) -> DigitString {
        DigitString::from_i128(v, base).unwrap()
    }

    fn traced<F: FnOnce(&mut Recorder, Tracked, Tracked) -> Tracked>(a: i128, b: i128, base: u64, f: F) -> (DigitString, Recorder) {
        let mut rec = Recorder::new(base);
        let ta = load(&mut rec, &ds(a, base));
        let tb = load(&mut rec, &ds(b, base));
        let r = f(&mut rec, ta, tb);
        (r.num, rec)
    }

    #[test]
    fn canonical_zero_is_empty() {
        let z = DigitString::new(10, true, vec![0, 0]).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.sign(), 1);
        assert_eq!(z.size(), 0);
        assert_eq!(z, DigitString::zero(10));
    }

    #[test]
    fn rejects_bad_digits_and_bases() {
        assert!(DigitString::new(10, false, vec![10]).is_err());
        assert!(DigitString::new(1, false, vec![]).is_err());
        assert!(DigitString::from_i128(5, MAX_BASE + 1).is_err());
    }

    #[test]
    fn add_examples() {
        let r = add_signed(&ds(12, 10), &ds(9, 10)).unwrap();
        assert_eq!(r.digits(), &[1, 2]);
        assert_eq!(r.to_i128(), Some(21));

        let r = add_signed(&ds(5, 10), &ds(-5, 10)).unwrap();
        assert_eq!(r, DigitString::zero(10));

        let (r, rec) = traced(99, 1, 10, |s, a, b| add(s, &a, &b).unwrap());
        assert_eq!(r.digits(), &[0, 0, 1]);
        assert_eq!(rec.trace().count(OpKind::CarryPropagate), 2);
        assert_eq!(rec.trace().count(OpKind::Add), 2);
    }

    #[test]
    fn add_base_mismatch() {
        assert!(matches!(add_signed(&ds(1, 10), &ds(1, 16)), Err(Error::Config(_))));
    }

    #[test]
    fn add_signs() {
        for (a, b) in [(7, -20), (-7, 20), (-7, -20), (20, -7), (0, -3), (-3, 0), (100, -99)] {
            assert_eq!(add_signed(&ds(a, 10), &ds(b, 10)).unwrap().to_i128(), Some(a + b));
            assert_eq!(sub_signed(&ds(a, 10), &ds(b, 10)).unwrap().to_i128(), Some(a - b));
        }
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_left(&ds(12, 10), 2).to_i128(), Some(1200));
        assert_eq!(shift_left(&ds(0, 10), 5), DigitString::zero(10));
        let r = shift_left(&ds(1, 2), 3);
        assert_eq!(r.digits(), &[0, 0, 0, 1]);
        assert_eq!(r.to_i128(), Some(8));
    }

    #[test]
    fn schoolbook_examples() {
        let (r, rec) = traced(12, 34, 10, |s, a, b| schoolbook(s, &a, &b).unwrap());
        assert_eq!(r.to_i128(), Some(408));
        assert_eq!(rec.trace().count(OpKind::ElementaryProduct), 4);

        assert!(schoolbook_mul(&ds(987, 10), &ds(0, 10)).unwrap().is_zero());
        assert_eq!(schoolbook_mul(&ds(1234, 10), &ds(5678, 10)).unwrap().to_i128(), Some(7006652));
        assert_eq!(schoolbook_mul(&ds(-12, 10), &ds(34, 10)).unwrap().to_i128(), Some(-408));
    }

    #[test]
    fn exact_div_examples() {
        assert_eq!(exact_div_small(&ds(408, 10), 4).unwrap().to_i128(), Some(102));
        let diff = sub_signed(&ds(21, 10), &ds(1, 10)).unwrap();
        assert_eq!(exact_div_small(&diff, 2).unwrap().to_i128(), Some(10));
        assert!(matches!(exact_div_small(&ds(7, 10), 2), Err(Error::Interpolation(_))));
        assert_eq!(exact_div_small(&ds(-96, 10), 8).unwrap().to_i128(), Some(-12));
    }

    #[test]
    fn scalar_mul_signs() {
        assert_eq!(scalar_mul_small(&ds(99, 10), -7).to_i128(), Some(-693));
        assert_eq!(scalar_mul_small(&ds(-5, 10), 1).to_i128(), Some(-5));
        assert!(scalar_mul_small(&ds(5, 10), 0).is_zero());
    }

    #[test]
    fn replay_matches_digits() {
        let (r, rec) = traced(987654321, 123456789, 10, |s, a, b| {
            let p = schoolbook(s, &a, &b).unwrap();
            let q = sub(s, &p, &a).unwrap();
            let q = scalar_mul(s, &q, 3);
            let q = shift(s, &q, 2);
            exact_div(s, &q, 3).unwrap()
        });
        let vals = rec.trace().replay();
        let want = (987654321i128 * 123456789 - 987654321) * 100;
        assert_eq!(r.to_i128(), Some(want));
        // every digit of the result is the low part of its vertex value
        let mut rec2 = Recorder::new(10);
        let a = load(&mut rec2, &ds(4321, 10));
        let b = load(&mut rec2, &ds(8765, 10));
        let p = schoolbook(&mut rec2, &a, &b).unwrap();
        let vals2 = rec2.trace().replay();
        for (i, &d) in p.num.digits().iter().enumerate() {
            assert_eq!(vals2[p.ids[i] as usize].rem_euclid(10) as u64, d);
        }
        assert!(!vals.is_empty());
    }

    #[test]
    fn bigint_round_trip_small() {
        for base in [2u64, 10, 256, 1 << 16, 1 << 32] {
            for v in [0i128, 1, -1, 255, 256, -65537, i64::MAX as i128, -(i64::MAX as i128) * 3] {
                let d = DigitString::from_bigint(&BigInt::from(v), base).unwrap();
                assert_eq!(d.to_i128(), Some(v));
                assert_eq!(d, ds(v, base));
            }
        }
    }
}
