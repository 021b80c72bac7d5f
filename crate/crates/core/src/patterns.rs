//! Ordinal patterns of windows of `h + 1` consecutive values.
//!
//! A pattern is the permutation `(r_0, ..., r_h)` listing window positions in
//! order of descending value, so `x[r_0] >= x[r_1] >= ... >= x[r_h]`. Equal
//! values are listed with the larger position first. Patterns are identified
//! with dense indices `0..(h+1)!` by the lexicographic order of `(r_0, ..., r_h)`.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest order accepted by [`Order::new`].
pub const DEFAULT_MAX_ORDER: usize = 8;
/// Largest order accepted by [`Order::with_override`]; `(h+1)!` must fit a `u32`.
pub const HARD_MAX_ORDER: usize = 10;

/// Window order `h`: the number of increments per window (windows hold `h + 1` points).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Order(usize);

impl Order {
    /// Accepts `1 <= h <= 8`.
    pub fn new(h: usize) -> Result<Self> {
        Self::checked(h, DEFAULT_MAX_ORDER)
    }

    /// Accepts `1 <= h <= 10`. Counting tables grow as `(h+1)!`.
    pub fn with_override(h: usize) -> Result<Self> {
        Self::checked(h, HARD_MAX_ORDER)
    }

    fn checked(h: usize, max: usize) -> Result<Self> {
        if h == 0 || h > max {
            return Err(Error::invalid(format!("order h must lie in 1..={max}, got {h}")));
        }
        Ok(Order(h))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Number of points per window, `h + 1`.
    pub fn window_len(self) -> usize {
        self.0 + 1
    }

    /// Number of distinct patterns, `(h + 1)!`.
    pub fn pattern_count(self) -> usize {
        factorial(self.0 + 1)
    }
}

impl TryFrom<usize> for Order {
    type Error = Error;
    fn try_from(h: usize) -> Result<Self> {
        Order::with_override(h)
    }
}

impl From<Order> for usize {
    fn from(o: Order) -> usize {
        o.0
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub(crate) fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// An ordinal pattern, a permutation of `{0, ..., h}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    order: Vec<u8>,
}

impl Pattern {
    /// Validates that `order` is a permutation of `0..order.len()` with at least two entries.
    pub fn new(order: Vec<u8>) -> Result<Self> {
        let len = order.len();
        if !(2..=HARD_MAX_ORDER + 1).contains(&len) {
            return Err(Error::invalid(format!("pattern length must lie in 2..={}, got {len}", HARD_MAX_ORDER + 1)));
        }
        let mut seen = vec![false; len];
        for &r in &order {
            let r = r as usize;
            if r >= len || seen[r] {
                return Err(Error::invalid(format!("{order:?} is not a permutation of 0..{len}")));
            }
            seen[r] = true;
        }
        Ok(Pattern { order })
    }

    /// `(0, 1, ..., h)`, the pattern of a strictly decreasing window.
    pub fn identity(h: usize) -> Self {
        Pattern { order: (0..=h as u8).collect() }
    }

    /// `(h, h-1, ..., 0)`, the pattern of a strictly increasing window.
    pub fn reversed_identity(h: usize) -> Self {
        Pattern { order: (0..=h as u8).rev().collect() }
    }

    pub fn h(&self) -> usize {
        self.order.len() - 1
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.order
    }

    /// The pattern read right to left.
    pub fn reflect(&self) -> Pattern {
        let mut order = self.order.clone();
        order.reverse();
        Pattern { order }
    }

    /// Lexicographic rank among all permutations of the same length.
    pub fn index(&self) -> PatternIndex {
        PatternIndex { value: lex_rank(&self.order), h: self.h() as u8 }
    }

    /// Inverse of [`Pattern::index`].
    pub fn from_index(index: PatternIndex) -> Result<Pattern> {
        unrank(index.value, index.h())
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, r) in self.order.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

/// Dense index of a pattern of order `h`, in `0..(h+1)!`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatternIndex {
    value: u32,
    h: u8,
}

impl PatternIndex {
    pub fn new(value: u32, h: usize) -> Result<Self> {
        if h == 0 || h > HARD_MAX_ORDER {
            return Err(Error::invalid(format!("order h must lie in 1..={HARD_MAX_ORDER}, got {h}")));
        }
        let count = factorial(h + 1);
        if value as usize >= count {
            return Err(Error::invalid(format!("pattern index {value} out of range for h = {h} (must be < {count})")));
        }
        Ok(PatternIndex { value, h: h as u8 })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn h(self) -> usize {
        self.h as usize
    }
}

/// Ordinal pattern of `window`, which must hold at least two finite values.
pub fn pattern_of(window: &[f64]) -> Result<Pattern> {
    if window.len() < 2 || window.len() > HARD_MAX_ORDER + 1 {
        return Err(Error::invalid(format!(
            "window length must lie in 2..={}, got {}",
            HARD_MAX_ORDER + 1,
            window.len()
        )));
    }
    if let Some(i) = window.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {} at window position {i}", window[i])));
    }
    Ok(Pattern { order: descending_positions(window) })
}

// Positions sorted by descending value, larger position first among equal values.
fn descending_positions(window: &[f64]) -> Vec<u8> {
    let mut order: Vec<u8> = (0..window.len() as u8).collect();
    order.sort_unstable_by(|&a, &b| {
        window[b as usize].partial_cmp(&window[a as usize]).expect("finite values").then(b.cmp(&a))
    });
    order
}

/// The reflected pattern `m(p)`.
pub fn reflect(p: &Pattern) -> Pattern {
    p.reflect()
}

pub fn pattern_index(p: &Pattern) -> PatternIndex {
    p.index()
}

/// Pattern with lexicographic rank `index` among permutations of `{0, ..., h}`.
pub fn unrank(index: u32, h: usize) -> Result<Pattern> {
    PatternIndex::new(index, h)?;
    let len = h + 1;
    let mut remaining: Vec<u8> = (0..len as u8).collect();
    let mut rest = index as usize;
    let mut order = Vec::with_capacity(len);
    for pos in 0..len {
        let f = factorial(len - 1 - pos);
        let digit = rest / f;
        rest %= f;
        order.push(remaining.remove(digit));
    }
    Ok(Pattern { order })
}

fn lex_rank(order: &[u8]) -> u32 {
    let len = order.len();
    let mut rank = 0usize;
    for j in 0..len {
        let smaller_later = order[j + 1..].iter().filter(|&&r| r < order[j]).count();
        rank += smaller_later * factorial(len - 1 - j);
    }
    rank as u32
}

/// Every pattern of order `h`, in index order.
pub fn all_patterns(h: usize) -> impl Iterator<Item = Pattern> {
    let count = factorial(h + 1) as u32;
    (0..count).map(move |i| unrank(i, h).expect("index in range"))
}

/// Pattern indices of all `n - h` windows of a series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSequence {
    h: Order,
    indices: Vec<u32>,
}

impl PatternSequence {
    pub fn h(&self) -> Order {
        self.h
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Raw index values, one per window.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> Option<PatternIndex> {
        self.indices.get(i).map(|&value| PatternIndex { value, h: self.h.get() as u8 })
    }

    pub fn iter(&self) -> impl Iterator<Item = PatternIndex> + '_ {
        let h = self.h.get() as u8;
        self.indices.iter().map(move |&value| PatternIndex { value, h })
    }

    /// Window counts per pattern index, length `(h+1)!`.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.h.pattern_count()];
        for &i in &self.indices {
            counts[i as usize] += 1;
        }
        counts
    }
}

// Orders up to this use the inversion-code lookup table in `pattern_sequence`.
const TABLE_MAX_ORDER: usize = DEFAULT_MAX_ORDER;

static CODE_TABLES: [OnceLock<Vec<u32>>; TABLE_MAX_ORDER + 1] = [const { OnceLock::new() }; TABLE_MAX_ORDER + 1];

// Maps the mixed-radix inversion code of a window to its lexicographic pattern index.
//
// For window position s >= 1 let c_s = #{ s' < s : w[s'] <= w[s] }, so c_s in 0..=s.
// The code is sum_s c_s * s!. The vector (c_1, ..., c_h) determines the pattern.
fn code_table(h: usize) -> &'static [u32] {
    CODE_TABLES[h].get_or_init(|| {
        let count = factorial(h + 1);
        let mut table = vec![0u32; count];
        let mut window = vec![0.0f64; h + 1];
        for rank in 0..count as u32 {
            let p = unrank(rank, h).expect("rank in range");
            for (j, &r) in p.order.iter().enumerate() {
                window[r as usize] = (h - j) as f64;
            }
            table[inversion_code(&window)] = rank;
        }
        table
    })
}

fn inversion_code(window: &[f64]) -> usize {
    let mut code = 0;
    let mut radix = 1;
    for s in 1..window.len() {
        let c = window[..s].iter().filter(|&&v| v <= window[s]).count();
        code += c * radix;
        radix *= s + 1;
    }
    code
}

/// Pattern indices of the windows `series[i..=i+h]`, `i = 0..n-h`.
///
/// Orders up to 8 use a sliding inversion-code update costing `O(h)` comparisons
/// per window plus a table lookup; larger orders sort each window.
pub fn pattern_sequence(series: &[f64], h: Order) -> Result<PatternSequence> {
    let n = series.len();
    let hh = h.get();
    if n <= hh {
        return Err(Error::invalid(format!("series length {n} must exceed the order h = {hh}")));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {} at position {i}", series[i])));
    }
    let windows = n - hh;
    let mut indices = Vec::with_capacity(windows);

    if hh > TABLE_MAX_ORDER {
        for w in series.windows(hh + 1) {
            indices.push(lex_rank(&descending_positions(w)));
        }
        return Ok(PatternSequence { h, indices });
    }

    let table = code_table(hh);
    // radix[s] = s!
    let mut radix = [1usize; TABLE_MAX_ORDER + 1];
    for s in 1..=hh {
        radix[s] = radix[s - 1] * s;
    }
    // counts[s] = c_s for the current window
    let mut counts = [0usize; TABLE_MAX_ORDER + 1];
    for s in 1..=hh {
        counts[s] = series[..s].iter().filter(|&&v| v <= series[s]).count();
    }
    let encode = |counts: &[usize; TABLE_MAX_ORDER + 1]| -> usize { (1..=hh).map(|s| counts[s] * radix[s]).sum() };
    indices.push(table[encode(&counts)]);

    for t in 1..windows {
        let dropped = series[t - 1];
        for s in 1..hh {
            counts[s] = counts[s + 1] - usize::from(dropped <= series[t + s]);
        }
        let newest = series[t + hh];
        counts[hh] = series[t..t + hh].iter().filter(|&&v| v <= newest).count();
        indices.push(table[encode(&counts)]);
    }
    Ok(PatternSequence { h, indices })
}
