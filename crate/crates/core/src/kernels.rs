//! Unbiased D-representation kernels.
//!
//! Every kernel here is a polynomial in pairwise differences of its arguments,
//! so it is invariant to a common shift of all coordinates and homogeneous of
//! degree `k` under scaling. For i.i.d. arguments each order-`k` kernel has
//! expectation `μ_k`, the `k`-th central moment.
//!
//! Two families share the same recursion for orders five and up:
//!
//! - `h_k` starts from the symmetrized third-order kernel
//!   `½(x₁−x₂)²[(x₁−x₃)+(x₂−x₃)]`;
//! - `μ̄_k` starts from the raw form `(x₁−x₃)(x₁−x₂)²`.
//!
//! For `m = k + 1 ≥ 5` both satisfy
//!
//! ```text
//! f_{k+1}(x₁..x_{k+1}) = (x₁−x₃)(x₁−x₂)^k
//!     − Σ_{j=2}^{k−1} (−1)^j C(k, j) f_j(x₁..x_j) f_{k+1−j}(x_{j+1}..x_{k+1})
//! ```
//!
//! with the two products evaluated on disjoint argument blocks. The even-order
//! kernel `μ̃_m` replaces the leading term by `½(x₁−x₂)^m` and always uses `μ̄`
//! for the inner blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported moment order.
pub const K_MAX: usize = 16;

/// A validated moment order `2 ≤ k ≤ K_MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct KernelOrder(usize);

impl KernelOrder {
    pub fn new(k: usize) -> Result<Self> {
        if (2..=K_MAX).contains(&k) {
            Ok(Self(k))
        } else {
            Err(Error::OrderOutOfRange { order: k, min: 2, max: K_MAX })
        }
    }

    /// An even order, as required by `μ̃_k`.
    pub fn new_even(k: usize) -> Result<Self> {
        let order = Self::new(k)?;
        if k % 2 == 1 {
            return Err(Error::OddOrder(k));
        }
        Ok(order)
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for KernelOrder {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        Self::new(k)
    }
}

impl From<KernelOrder> for usize {
    fn from(k: KernelOrder) -> usize {
        k.0
    }
}

impl std::fmt::Display for KernelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Exact binomial coefficient `C(n, j)` for `n ≤ 62`.
///
/// Uses the multiplicative formula; every intermediate `C(n-j+i, i)` is an
/// integer, so the running product divides exactly.
pub fn binomial(n: u32, j: u32) -> Result<u64> {
    if j > n {
        return Err(Error::Binomial { n, j });
    }
    let j = j.min(n - j) as u64;
    let n = n as u64;
    let mut acc: u128 = 1;
    for i in 1..=j {
        acc = acc * (n - j + i) as u128 / i as u128;
    }
    u64::try_from(acc).map_err(|_| Error::Binomial { n: n as u32, j: j as u32 })
}

const MEMO_SIDE: usize = K_MAX + 1;

/// Pascal triangle up to `K_MAX`, as floats for kernel arithmetic.
const PASCAL: [[f64; MEMO_SIDE]; MEMO_SIDE] = {
    let mut t = [[0.0; MEMO_SIDE]; MEMO_SIDE];
    let mut n = 0;
    while n < MEMO_SIDE {
        t[n][0] = 1.0;
        let mut j = 1;
        while j <= n {
            t[n][j] = t[n - 1][j - 1] + t[n - 1][j];
            j += 1;
        }
        n += 1;
    }
    t
};

/// The two kernel families that share the higher-order recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    H,
    MuBar,
}

/// Fills `t[len][a]` with the kernel of the block `x[a..a + len]` for every
/// block of length `2..=x.len()`, shortest first.
#[inline]
fn block_table<const S: usize>(x: &[f64], family: Family, t: &mut [[f64; S]; S]) {
    let m = x.len();
    // pw[p][a] = (x[a] − x[a+1])^p, built by repeated multiplication
    let mut pw = [[0.0; S]; S];
    if m >= 5 {
        for a in 0..=(m - 5) {
            let d = x[a] - x[a + 1];
            pw[1][a] = d;
            for p in 2..(m - a) {
                pw[p][a] = pw[p - 1][a] * d;
            }
        }
    }
    for len in 2..=m {
        for a in 0..=(m - len) {
            let b = &x[a..a + len];
            t[len][a] = match len {
                2 => 0.5 * sq(b[0] - b[1]),
                3 => match family {
                    Family::H => 0.5 * sq(b[0] - b[1]) * ((b[0] - b[2]) + (b[1] - b[2])),
                    Family::MuBar => (b[0] - b[2]) * sq(b[0] - b[1]),
                },
                4 => fourth_order(b),
                _ => {
                    let top = len - 1;
                    let lead = (b[0] - b[2]) * pw[top][a];
                    lead - split_sum(t, a, len, top)
                }
            };
        }
    }
}

/// `Σ_{j=2}^{top−1} (−1)^j C(top, j) f_j(block₁) f_{len−j}(block₂)` for the
/// block starting at `a`.
#[inline]
fn split_sum<const S: usize>(t: &[[f64; S]; S], a: usize, len: usize, top: usize) -> f64 {
    let mut acc = 0.0;
    for j in 2..top {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * PASCAL[top][j] * t[j][a] * t[len - j][a + j];
    }
    acc
}

/// Value of the whole block `x` in `family`.
fn recursive_kernel(x: &[f64], family: Family) -> f64 {
    fn run<const S: usize>(x: &[f64], family: Family) -> f64 {
        let mut t = [[0.0; S]; S];
        block_table(x, family, &mut t);
        t[x.len()][0]
    }
    // tables sized to the order keep the zero-initialisation cheap
    match x.len() {
        0..=5 => run::<6>(x, family),
        6 => run::<7>(x, family),
        7 => run::<8>(x, family),
        8 => run::<9>(x, family),
        9..=12 => run::<13>(x, family),
        _ => run::<MEMO_SIDE>(x, family),
    }
}

#[inline]
fn sq(v: f64) -> f64 {
    v * v
}

#[inline]
fn fourth_order(x: &[f64]) -> f64 {
    let d12 = sq(x[0] - x[1]);
    let d34 = sq(x[2] - x[3]);
    0.5 * d12 * d12 - 0.75 * d12 * d34
}

fn check_arity(k: usize, x: &[f64]) -> Result<()> {
    if x.len() != k {
        return Err(Error::Arity { expected: k, got: x.len() });
    }
    Ok(())
}

/// Minimal unbiased kernel `h_k(x₁, …, x_k)` with `E h_k = μ_k`.
pub fn kernel_h(k: usize, x: &[f64]) -> Result<f64> {
    KernelOrder::new(k)?;
    check_arity(k, x)?;
    Ok(h_unchecked(x))
}

/// `h_k` with `k = x.len()`; the caller guarantees `2 ≤ k ≤ K_MAX`.
#[inline]
pub(crate) fn h_unchecked(x: &[f64]) -> f64 {
    match x.len() {
        2 => 0.5 * sq(x[0] - x[1]),
        3 => 0.5 * sq(x[0] - x[1]) * ((x[0] - x[2]) + (x[1] - x[2])),
        4 => fourth_order(x),
        _ => recursive_kernel(x, Family::H),
    }
}

/// Recursive kernel `μ̄_k`. `μ̄_1 ≡ 0` accepts an empty or single-element tuple.
pub fn kernel_mu_bar(k: usize, x: &[f64]) -> Result<f64> {
    if k == 1 {
        if x.len() > 1 {
            return Err(Error::Arity { expected: 1, got: x.len() });
        }
        return Ok(0.0);
    }
    KernelOrder::new(k)?;
    check_arity(k, x)?;
    Ok(recursive_kernel(x, Family::MuBar))
}

/// Even-order kernel `μ̃_k = ½[(x₁−x₂)^k − Σ_{j=2}^{k−2} (−1)^j C(k,j) μ̄_j μ̄_{k−j}]`.
pub fn kernel_mu_tilde(k: usize, x: &[f64]) -> Result<f64> {
    KernelOrder::new_even(k)?;
    check_arity(k, x)?;
    fn run<const S: usize>(x: &[f64]) -> f64 {
        let k = x.len();
        let mut t = [[0.0; S]; S];
        block_table(x, Family::MuBar, &mut t);
        let mut acc = 0.0;
        for j in 2..=k - 2 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * PASCAL[k][j] * t[j][0] * t[k - j][j];
        }
        0.5 * ((x[0] - x[1]).powi(k as i32) - acc)
    }
    Ok(match k {
        0..=6 => run::<7>(x),
        8 => run::<9>(x),
        10 | 12 => run::<13>(x),
        _ => run::<MEMO_SIDE>(x),
    })
}

/// Product kernel `P_k = Π_{i=1}^k (x₀ − x_i)`; unbiased for `μ_k` with `k+1`
/// i.i.d. arguments.
pub fn kernel_p(x0: f64, x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Arity { expected: 1, got: 0 });
    }
    Ok(x.iter().map(|&xi| x0 - xi).product())
}

/// `D_i = Σ_{j≠i} (x_i − x_j) = 3(x_i − x̄)` for a triple.
pub fn sum_of_differences_d3(x: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = x;
    [(a - b) + (a - c), (b - a) + (b - c), (c - a) + (c - b)]
}

/// Selects one of the order-`k` kernels by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    H,
    MuBar,
    MuTilde,
}

impl KernelKind {
    pub fn eval(self, k: usize, x: &[f64]) -> Result<f64> {
        match self {
            KernelKind::H => kernel_h(k, x),
            KernelKind::MuBar => kernel_mu_bar(k, x),
            KernelKind::MuTilde => kernel_mu_tilde(k, x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::H => "h",
            KernelKind::MuBar => "mubar",
            KernelKind::MuTilde => "mutilde",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(KernelKind::H),
            "mubar" | "mu-bar" => Ok(KernelKind::MuBar),
            "mutilde" | "mu-tilde" => Ok(KernelKind::MuTilde),
            other => Err(Error::Parse(format!("unknown kernel `{other}` (expected h, mubar, mutilde)"))),
        }
    }
}

/// Average of `h_k` over all `k!` orderings of `x`, with `k = x.len()`.
///
/// Computed by a dynamic programme over subsets instead of enumerating
/// permutations: for a subset `S` of size `m`, the ordering average of `h_m`
/// splits into the ordered-triple average of the leading term minus the
/// subset-split averages of the block products, which only depend on the
/// ordering averages of the two blocks. Cost is `O(3^k)` instead of `O(k!·k)`.
pub fn kernel_h_symmetrized(x: &[f64]) -> Result<f64> {
    let k = x.len();
    KernelOrder::new(k)?;
    Ok(symmetrized_unchecked(x))
}

pub(crate) fn symmetrized_unchecked(x: &[f64]) -> f64 {
    let k = x.len();
    match k {
        2 => return 0.5 * sq(x[0] - x[1]),
        3 => return sym3(x[0], x[1], x[2]),
        4 => return sym4(x),
        _ => {}
    }
    let full = (1usize << k) - 1;
    let mut table = vec![0.0f64; 1 << k];
    let mut buf = [0.0f64; K_MAX];
    // Masks in increasing numeric order visit every proper submask before its
    // superset, so block values are ready when a larger subset needs them.
    for mask in 1..=full {
        let m = mask.count_ones() as usize;
        if m < 2 || (m > k - 2 && mask != full) {
            continue;
        }
        let len = gather(x, mask, &mut buf);
        let pts = &buf[..len];
        table[mask] = match m {
            2 => 0.5 * sq(pts[0] - pts[1]),
            3 => sym3(pts[0], pts[1], pts[2]),
            4 => sym4(pts),
            _ => {
                let lead = triple_average(pts);
                lead - split_average(&table, mask, m)
            }
        };
    }
    table[full]
}

fn gather(x: &[f64], mask: usize, buf: &mut [f64; K_MAX]) -> usize {
    let mut len = 0;
    let mut bits = mask;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        buf[len] = x[i];
        len += 1;
        bits &= bits - 1;
    }
    len
}

fn sym3(a: f64, b: f64, c: f64) -> f64 {
    let h = |p: f64, q: f64, r: f64| 0.5 * sq(p - q) * ((p - r) + (q - r));
    (h(a, b, c) + h(a, c, b) + h(b, c, a)) / 3.0
}

fn sym4(x: &[f64]) -> f64 {
    let d = |i: usize, j: usize| sq(x[i] - x[j]);
    let (d01, d02, d03, d12, d13, d23) = (d(0, 1), d(0, 2), d(0, 3), d(1, 2), d(1, 3), d(2, 3));
    let quartic = (sq(d01) + sq(d02) + sq(d03) + sq(d12) + sq(d13) + sq(d23)) / 6.0;
    let cross = (d01 * d23 + d02 * d13 + d03 * d12) / 3.0;
    0.5 * quartic - 0.75 * cross
}

/// Average of `(x_a − x_c)(x_a − x_b)^{m−1}` over ordered distinct triples.
fn triple_average(pts: &[f64]) -> f64 {
    let m = pts.len();
    let power = (m - 1) as i32;
    let mut total = 0.0;
    for (a, &xa) in pts.iter().enumerate() {
        let spread: f64 = pts.iter().map(|&xc| xa - xc).sum();
        for (b, &xb) in pts.iter().enumerate() {
            if a == b {
                continue;
            }
            let dab = xa - xb;
            // Σ_{c ∉ {a, b}} (x_a − x_c)
            total += dab.powi(power) * (spread - dab);
        }
    }
    total / (m * (m - 1) * (m - 2)) as f64
}

fn split_average(table: &[f64], mask: usize, m: usize) -> f64 {
    let top = m - 1;
    let mut by_size = [0.0f64; K_MAX + 1];
    // Enumerate proper submasks A with both blocks of size ≥ 2.
    let mut sub = (mask - 1) & mask;
    while sub != 0 {
        let j = sub.count_ones() as usize;
        if j >= 2 && j < top {
            by_size[j] += table[sub] * table[mask ^ sub];
        }
        sub = (sub - 1) & mask;
    }
    let mut acc = 0.0;
    for (j, total) in by_size.iter().enumerate().take(top).skip(2) {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mean = total / PASCAL[m][j];
        acc += sign * PASCAL[top][j] * mean;
    }
    acc
}
