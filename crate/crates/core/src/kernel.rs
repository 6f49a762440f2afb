//! Exact simple-random-walk kernels on Z².
//!
//! Slabs are built by repeated convolution with the uniform 4-neighbour step
//! and stored in rotated coordinates (see [`crate::lattice`]). Return
//! probabilities beyond the stored horizon come from the central binomial
//! coefficient, `p_{2n}(0) = (C(2n, n) / 4^n)²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{slab_index, Site};
use crate::stats::NeumaierSum;

/// Default ceiling for the memory held by stored slabs.
pub const DEFAULT_MEMORY_BUDGET: u64 = 512 << 20;

/// Below this the central binomial ratio is evaluated by exact products.
const SERIES_THRESHOLD: u64 = 64;

/// `C(2n, n) / 4^n`, the one-dimensional return probability after `2n` steps.
pub fn central_binomial_ratio(n: u64) -> f64 {
    if n < SERIES_THRESHOLD {
        let mut c = 1.0f64;
        for k in 1..=n {
            c *= (2 * k - 1) as f64 / (2 * k) as f64;
        }
        return c;
    }
    // Stirling series of ln Γ(2n+1) - 2 ln Γ(n+1); the omitted n^-9 term is
    // below 1e-19 here.
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        * (-1.0 / 8.0 + inv2 * (1.0 / 192.0 + inv2 * (-1.0 / 640.0 + inv2 * (17.0 / 14336.0))));
    tail.exp() / (std::f64::consts::PI * x).sqrt()
}

/// `p_{2n}(0)` for the planar walk.
pub fn return_probability(n: u64) -> f64 {
    let c = central_binomial_ratio(n);
    c * c
}

/// `p_{2s}(0)` for `s = 0..=max`.
pub fn return_probabilities(max: usize) -> Vec<f64> {
    (0..=max as u64).map(return_probability).collect()
}

/// `sup_x p_n(x)`, attained at the origin for even `n` and at a neighbour for odd `n`.
pub fn pstar_exact(n: u64) -> f64 {
    if n % 2 == 0 {
        return_probability(n / 2)
    } else {
        let c = central_binomial_ratio((n - 1) / 2) * n as f64 / (n + 1) as f64;
        c * c
    }
}

/// Above this horizon `R_n` is evaluated from its asymptotic expansion.
pub const R_N_SUM_LIMIT: u64 = 1 << 22;

/// `lim (π R_n - log n) = γ + log 16 - π`.
pub const R_N_GAP: f64 = 0.208_211_733_551_520_86;

/// `R_n = Σ_{s=1}^n p_{2s}(0)`, the mean number of meetings of two walks up to time `n`.
///
/// Summed exactly up to [`R_N_SUM_LIMIT`]; beyond it
/// `R_n = (log n + γ + log 16 - π + 3/(4n)) / π + O(n^{-2})`, whose remainder is below `1e-14`.
pub fn mean_intersection(n: u64) -> f64 {
    if n > R_N_SUM_LIMIT {
        let x = n as f64;
        return (x.ln() + R_N_GAP + 0.75 / x) / std::f64::consts::PI;
    }
    let mut acc = NeumaierSum::default();
    for s in 1..=n {
        acc.add(return_probability(s));
    }
    acc.value()
}

/// `R_0, R_1, ..., R_max`.
pub fn mean_intersection_series(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = NeumaierSum::default();
    out.push(0.0);
    for s in 1..=max as u64 {
        acc.add(return_probability(s));
        out.push(acc.value());
    }
    out
}

/// `C(n, k) / 2^n` by a running product with a separate binary exponent.
pub fn binomial_half(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0f64;
    let mut exp2: i64 = -(n as i64);
    for i in 1..=k {
        r *= (n - k + i) as f64 / i as f64;
        if r > 1e250 {
            r *= 2f64.powi(-800);
            exp2 += 800;
        }
    }
    while exp2 < -1000 {
        r *= 2f64.powi(-1000);
        exp2 += 1000;
        if r == 0.0 {
            return 0.0;
        }
    }
    r * 2f64.powi(exp2 as i32)
}

/// `p_n(x)` from the product of two one-dimensional binomial laws.
pub fn transition_probability(n: u64, x: Site) -> f64 {
    if !x.reachable_in(n) {
        return 0.0;
    }
    let (a, b) = x.rotated();
    let n_i = n as i64;
    binomial_half(n, ((n_i + a) / 2) as u64) * binomial_half(n, ((n_i + b) / 2) as u64)
}

/// Dense kernel slabs `p_n(·)` for `0 ≤ n ≤ max_time` with the derived scalar tables.
#[derive(Debug, Clone)]
pub struct KernelTable {
    max_time: u64,
    slabs: Vec<Vec<f64>>,
    pstar: Vec<f64>,
    return2n: Vec<f64>,
    partial_r: Vec<f64>,
}

/// Bytes needed to hold every slab up to `max_time`.
pub fn slab_bytes(max_time: u64) -> u64 {
    let t = max_time + 1;
    8 * t * (t + 1) * (2 * t + 1) / 6
}

/// One convolution step of a full rotated-coordinate slab from time `n` to `n + 1`.
fn step_slab(old: &[f64], n: usize) -> Vec<f64> {
    let w_old = n + 1;
    let w_new = n + 2;
    let mut new = vec![0.0; w_new * w_new];
    for i in 0..w_new {
        let row = &mut new[i * w_new..(i + 1) * w_new];
        for src in [i.wrapping_sub(1), i] {
            if src >= w_old {
                continue;
            }
            let o = &old[src * w_old..(src + 1) * w_old];
            for (j, v) in o.iter().enumerate() {
                let q = 0.25 * v;
                row[j] += q;
                row[j + 1] += q;
            }
        }
    }
    new
}

fn slab_mass(slab: &[f64]) -> f64 {
    let mut acc = NeumaierSum::default();
    for v in slab {
        acc.add(*v);
    }
    acc.value()
}

impl KernelTable {
    pub fn build(max_time: u64) -> Result<Self> {
        Self::build_with_budget(max_time, DEFAULT_MEMORY_BUDGET)
    }

    pub fn build_with_budget(max_time: u64, budget_bytes: u64) -> Result<Self> {
        if max_time < 1 {
            return Err(Error::domain("kernel table needs max_time >= 1"));
        }
        let need = slab_bytes(max_time);
        if need > budget_bytes {
            return Err(Error::Capacity {
                what: "kernel slabs (bytes)",
                required: need,
                limit: budget_bytes,
            });
        }
        let mut slabs = Vec::with_capacity(max_time as usize + 1);
        slabs.push(vec![1.0]);
        for n in 0..max_time as usize {
            let next = step_slab(&slabs[n], n);
            slabs.push(next);
        }
        let pstar = slabs
            .iter()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .collect();
        let return2n = return_probabilities(max_time as usize);
        let partial_r = mean_intersection_series(max_time as usize);
        Ok(KernelTable {
            max_time,
            slabs,
            pstar,
            return2n,
            partial_r,
        })
    }

    pub fn max_time(&self) -> u64 {
        self.max_time
    }

    /// Raw slab at time `n`, `(n + 1)²` cells in rotated coordinates.
    pub fn slab(&self, n: u64) -> &[f64] {
        &self.slabs[n as usize]
    }

    /// `p_n(x)`; zero outside the reachable set. Panics if `n > max_time`.
    pub fn prob(&self, n: u64, x: Site) -> f64 {
        match slab_index(n, x) {
            Some(i) => self.slabs[n as usize][i],
            None => 0.0,
        }
    }

    fn check_range(&self, n: u64, lo: u64) -> Result<()> {
        if n < lo || n > self.max_time {
            return Err(Error::domain(format!(
                "time {n} outside table range [{lo}, {}]",
                self.max_time
            )));
        }
        Ok(())
    }

    pub fn pstar(&self, n: u64) -> Result<f64> {
        self.check_range(n, 0)?;
        Ok(self.pstar[n as usize])
    }

    /// `p_{2n}(0)` for `0 ≤ n ≤ max_time`.
    pub fn return2n(&self, n: u64) -> Result<f64> {
        self.check_range(n, 0)?;
        Ok(self.return2n[n as usize])
    }

    pub fn r_n(&self, n: u64) -> Result<f64> {
        self.check_range(n, 1)?;
        Ok(self.partial_r[n as usize])
    }

    pub fn pstar_table(&self) -> &[f64] {
        &self.pstar
    }

    pub fn mass(&self, n: u64) -> f64 {
        slab_mass(&self.slabs[n as usize])
    }
}

/// `r_n` of the kernel module: `R_n` read from a built table.
pub fn r_n(table: &KernelTable, n: u64) -> Result<f64> {
    table.r_n(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct PnStarRow {
    pub n: u64,
    pub pstar: f64,
    pub bound: f64,
    /// `p_n* · πn / 2`, which must lie in `(0, 1]`.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PnStarReport {
    pub rows: Vec<PnStarRow>,
    pub first_violation: Option<u64>,
    pub nonincreasing: bool,
    /// Largest `|Σ_x p_n(x) - 1|` over the checked slabs.
    pub max_mass_error: f64,
    /// Largest relative gap between the convolved `p_n*` and the binomial formula.
    pub max_formula_rel_err: f64,
    /// Largest `|p_{2n}* - p_{2n}(0)|`.
    pub max_even_origin_gap: f64,
    pub ab_horizon: u64,
    pub first_a_decrease: Option<u64>,
    pub first_b_decrease: Option<u64>,
}

impl PnStarReport {
    pub fn pass(&self) -> bool {
        self.first_violation.is_none()
            && self.nonincreasing
            && self.max_mass_error <= 1e-12
            && self.first_a_decrease.is_none()
            && self.first_b_decrease.is_none()
    }
}

/// `a_n = √(2n) C(2n,n)/4^n` for `n ≥ 1`.
pub fn a_sequence(n: u64) -> f64 {
    (2.0 * n as f64).sqrt() * central_binomial_ratio(n)
}

/// `b_n = √(2n+1) C(2n+1,n+1)/2^{2n+1}` for `n ≥ 0`.
pub fn b_sequence(n: u64) -> f64 {
    let p1 = central_binomial_ratio(n) * (2 * n + 1) as f64 / (2 * (n + 1)) as f64;
    (2.0 * n as f64 + 1.0).sqrt() * p1
}

fn first_decrease(horizon: u64, start: u64, seq: impl Fn(u64) -> f64) -> Option<u64> {
    let mut prev = seq(start);
    for n in start + 1..=horizon {
        let cur = seq(n);
        if cur < prev {
            return Some(n);
        }
        prev = cur;
    }
    None
}

fn assemble_report(pstars: &[f64], masses: &[f64], ab_horizon: u64) -> PnStarReport {
    let mut rows = Vec::with_capacity(pstars.len());
    let mut first_violation = None;
    let mut nonincreasing = true;
    let mut max_formula_rel_err = 0.0f64;
    let mut max_even_origin_gap = 0.0f64;
    for (idx, &p) in pstars.iter().enumerate().skip(1) {
        let n = idx as u64;
        let bound = 2.0 / (std::f64::consts::PI * n as f64);
        let pass = p <= bound;
        if !pass && first_violation.is_none() {
            first_violation = Some(n);
        }
        if p > pstars[idx - 1] {
            nonincreasing = false;
        }
        let exact = pstar_exact(n);
        max_formula_rel_err = max_formula_rel_err.max(((p - exact) / exact).abs());
        if n % 2 == 0 {
            max_even_origin_gap = max_even_origin_gap.max((p - return_probability(n / 2)).abs());
        }
        rows.push(PnStarRow {
            n,
            pstar: p,
            bound,
            ratio: p / bound,
            pass,
        });
    }
    let max_mass_error = masses.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    PnStarReport {
        rows,
        first_violation,
        nonincreasing,
        max_mass_error,
        max_formula_rel_err,
        max_even_origin_gap,
        ab_horizon,
        first_a_decrease: first_decrease(ab_horizon, 1, a_sequence),
        first_b_decrease: first_decrease(ab_horizon, 0, b_sequence),
    }
}

/// `check_pnstar` on a stored table.
pub fn check_pnstar(table: &KernelTable, ab_horizon: u64) -> PnStarReport {
    let masses: Vec<f64> = (0..=table.max_time).map(|n| table.mass(n)).collect();
    assemble_report(&table.pstar, &masses, ab_horizon)
}

/// Quarter-plane convolution that keeps only two slabs alive.
///
/// The slab is symmetric under `a -> -a`, `b -> -b`, so only `a, b ≥ 0` are
/// stored; index `s` stands for `a = (n mod 2) + 2s`.
pub struct QuadrantConvolution {
    n: u64,
    stride: usize,
    cur: Vec<f64>,
    tmp: Vec<f64>,
    next: Vec<f64>,
}

impl QuadrantConvolution {
    pub fn new(max_time: u64) -> Self {
        let stride = (max_time / 2) as usize + 2;
        let mut cur = vec![0.0; stride * stride];
        cur[0] = 1.0;
        QuadrantConvolution {
            n: 0,
            stride,
            cur,
            tmp: vec![0.0; stride * stride],
            next: vec![0.0; stride * stride],
        }
    }

    pub fn time(&self) -> u64 {
        self.n
    }

    fn half(n: u64) -> usize {
        (n / 2) as usize
    }

    /// Combines the two parents of each new index along one axis.
    #[inline]
    fn combine(old: &[f64], out: &mut [f64], old_even: bool, h_new: usize) {
        if old_even {
            for t in 0..=h_new {
                out[t] = old[t] + old[t + 1];
            }
        } else {
            out[0] = 2.0 * old[0];
            for t in 1..=h_new {
                out[t] = old[t - 1] + old[t];
            }
        }
    }

    /// Advances one step; returns `(p_{n+1}*, Σ_x p_{n+1}(x))`.
    pub fn step(&mut self) -> (f64, f64) {
        let w = self.stride;
        let h_old = Self::half(self.n);
        let h_new = Self::half(self.n + 1);
        let old_even = self.n % 2 == 0;
        assert!(h_new + 1 < w, "quadrant convolution ran past its horizon");
        for s in 0..=h_old {
            let (src, dst) = (&self.cur[s * w..(s + 1) * w], &mut self.tmp[s * w..(s + 1) * w]);
            Self::combine(src, dst, old_even, h_new);
            dst[h_new + 1] = 0.0;
        }
        for t in 0..=h_new + 1 {
            self.tmp[(h_old + 1) * w + t] = 0.0;
        }
        let new_even = !old_even;
        let mut max = 0.0f64;
        let mut mass = NeumaierSum::default();
        for s in 0..=h_new {
            let (lo, hi) = if old_even {
                (s, s + 1)
            } else if s == 0 {
                (0, 0)
            } else {
                (s - 1, s)
            };
            let row_lo = &self.tmp[lo * w..lo * w + h_new + 1];
            let row_hi = &self.tmp[hi * w..hi * w + h_new + 1];
            let out = &mut self.next[s * w..s * w + h_new + 1];
            let mut row_sum = 0.0;
            let mut row_max = 0.0f64;
            for t in 0..=h_new {
                let v = 0.25 * (row_lo[t] + row_hi[t]);
                out[t] = v;
                row_max = row_max.max(v);
                row_sum += v;
            }
            if new_even {
                // The column a = 0 (t = 0) has a single mirror image.
                row_sum = 2.0 * row_sum - out[0];
            } else {
                row_sum *= 2.0;
            }
            let row_mult = if new_even && s == 0 { 1.0 } else { 2.0 };
            mass.add(row_mult * row_sum);
            max = max.max(row_max);
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        self.n += 1;
        (max, mass.value())
    }
}

/// `check_pnstar` by streaming convolution up to `max_time` without storing slabs.
pub fn check_pnstar_streaming(max_time: u64, ab_horizon: u64) -> Result<PnStarReport> {
    if max_time < 1 {
        return Err(Error::domain("check_pnstar needs max_time >= 1"));
    }
    let mut conv = QuadrantConvolution::new(max_time);
    let mut pstars = Vec::with_capacity(max_time as usize + 1);
    let mut masses = Vec::with_capacity(max_time as usize + 1);
    pstars.push(1.0);
    masses.push(1.0);
    for _ in 0..max_time {
        let (p, m) = conv.step();
        pstars.push(p);
        masses.push(m);
    }
    Ok(assemble_report(&pstars, &masses, ab_horizon))
}
