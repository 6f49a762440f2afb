//! Diagrams of interacting couples, the small/long jump classification, the
//! anchor map `φ`, the coefficient recursion `c_i^k`, and numerical
//! evaluation of the bound chain from the chaos series to the final moment bound.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::pstar_exact;
use crate::renewal::build_un;
use crate::scaling::PolymerParams;

/// Hard limits on exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DiagramCaps {
    pub max_q: usize,
    pub max_m: usize,
}

impl Default for DiagramCaps {
    fn default() -> Self {
        DiagramCaps { max_q: 5, max_m: 7 }
    }
}

/// A sequence of `m` couples of particles `0..q`, consecutive couples distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Diagram {
    pub q: usize,
    /// Couples `(i_r, j_r)` with `i_r < j_r`, for `r = 1..=m` stored at `r - 1`.
    pub couples: Vec<(usize, usize)>,
}

impl Diagram {
    pub fn new(q: usize, couples: Vec<(usize, usize)>) -> Result<Self> {
        for (r, &(i, j)) in couples.iter().enumerate() {
            if i >= j || j >= q {
                return Err(Error::invalid(format!("couple ({i},{j}) at index {} is not a couple of 0..{q}", r + 1)));
            }
            if r > 0 && couples[r - 1] == (i, j) {
                return Err(Error::invalid(format!("couples at indices {r} and {} coincide", r + 1)));
            }
        }
        Ok(Diagram { q, couples })
    }

    pub fn m(&self) -> usize {
        self.couples.len()
    }

    /// Couple at 1-based index `r`.
    pub fn couple(&self, r: usize) -> (usize, usize) {
        self.couples[r - 1]
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, (i, j)) in self.couples.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "({},{})", i + 1, j + 1)?;
        }
        write!(f, "]")
    }
}

pub fn num_couples(q: usize) -> usize {
    q * q.saturating_sub(1) / 2
}

/// `|D(m, q)| = binom(q,2) (binom(q,2) - 1)^{m-1}`, and 1 for `m = 0`.
pub fn diagram_count(q: usize, m: usize) -> u128 {
    if m == 0 {
        return 1;
    }
    let c = num_couples(q) as u128;
    c * (c.saturating_sub(1)).pow(m as u32 - 1)
}

fn all_couples(q: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..q {
        for j in i + 1..q {
            out.push((i, j));
        }
    }
    out
}

/// Iterator over `D(m, q)` in lexicographic order of couple indices.
#[derive(Debug, Clone)]
pub struct DiagramIter {
    q: usize,
    couples: Vec<(usize, usize)>,
    /// Current couple indices; `None` once exhausted.
    state: Option<Vec<usize>>,
    first_fixed: bool,
}

impl DiagramIter {
    fn advance(&mut self) {
        let Some(state) = self.state.as_mut() else { return };
        let c = self.couples.len();
        let lowest = usize::from(self.first_fixed);
        let mut pos = state.len();
        loop {
            if pos == lowest {
                self.state = None;
                return;
            }
            pos -= 1;
            let mut next = state[pos] + 1;
            if pos > 0 && next == state[pos - 1] {
                next += 1;
            }
            if next < c {
                state[pos] = next;
                // Reset the tail to the smallest admissible values.
                for r in pos + 1..state.len() {
                    state[r] = usize::from(state[r - 1] == 0);
                }
                return;
            }
        }
    }
}

impl Iterator for DiagramIter {
    type Item = Diagram;

    fn next(&mut self) -> Option<Diagram> {
        let state = self.state.as_ref()?;
        let d = Diagram {
            q: self.q,
            couples: state.iter().map(|k| self.couples[*k]).collect(),
        };
        self.advance();
        Some(d)
    }
}

fn check_caps(q: usize, m: usize, caps: DiagramCaps) -> Result<()> {
    if q < 2 {
        return Err(Error::domain("diagrams need q >= 2"));
    }
    if q > caps.max_q || m > caps.max_m {
        return Err(Error::Capacity {
            what: "diagram enumeration (q, m)",
            required: (q.max(m)) as u64,
            limit: caps.max_q.min(caps.max_m) as u64,
        });
    }
    Ok(())
}

fn start_state(c: usize, m: usize, first: usize) -> Option<Vec<usize>> {
    if m >= 2 && c < 2 {
        return None;
    }
    let mut s = vec![0; m];
    if m > 0 {
        s[0] = first;
    }
    for r in 1..m {
        s[r] = usize::from(s[r - 1] == 0);
    }
    Some(s)
}

/// All diagrams of `D(m, q)`, subject to the default caps.
pub fn enumerate_diagrams(q: usize, m: usize) -> Result<DiagramIter> {
    enumerate_diagrams_with(q, m, DiagramCaps::default())
}

pub fn enumerate_diagrams_with(q: usize, m: usize, caps: DiagramCaps) -> Result<DiagramIter> {
    check_caps(q, m, caps)?;
    let couples = all_couples(q);
    let state = start_state(couples.len(), m, 0);
    Ok(DiagramIter {
        q,
        couples,
        state,
        first_fixed: false,
    })
}

/// The diagrams of `D(m, q)` whose first couple has index `first`; used to split sweeps.
pub fn enumerate_diagrams_from(q: usize, m: usize, first: usize, caps: DiagramCaps) -> Result<DiagramIter> {
    check_caps(q, m, caps)?;
    let couples = all_couples(q);
    if m == 0 || first >= couples.len() {
        return Err(Error::invalid("first couple index out of range"));
    }
    let state = start_state(couples.len(), m, first);
    Ok(DiagramIter {
        q,
        couples,
        state,
        first_fixed: true,
    })
}

/// A diagram with all index marks derived for a given `L`. Per-index vectors
/// are 1-based: entry 0 is unused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classified {
    pub diagram: Diagram,
    pub l: usize,
    pub m: usize,
    pub kbar1: Vec<usize>,
    pub kbar2: Vec<usize>,
    pub kbar: Vec<usize>,
    pub long: Vec<bool>,
    pub stopping: Vec<bool>,
    pub fresh: Vec<bool>,
    pub good: Vec<bool>,
    /// `φ(r)`, possibly `≤ 0` for small `r`.
    pub phi: Vec<i64>,
    /// `s_1 < ... < s_K`.
    pub small_jumps: Vec<usize>,
}

impl Classified {
    pub fn bad(&self, r: usize) -> bool {
        !self.good[r]
    }

    pub fn n_small(&self) -> usize {
        self.small_jumps.len()
    }

    pub fn n_bad(&self) -> usize {
        (1..=self.m).filter(|r| self.bad(*r)).count()
    }

    /// `γ_k = 1{m - k is bad}` for `k = 0..m` (entry `k`).
    pub fn gammas(&self) -> Vec<bool> {
        (0..self.m).map(|k| self.bad(self.m - k)).collect()
    }
}

/// Marks small/long jumps, stopping, fresh and good indices, and computes `φ`.
pub fn classify(diagram: &Diagram, l: usize) -> Result<Classified> {
    if l < 3 {
        return Err(Error::domain(format!("L must be at least 3, got {l}")));
    }
    let m = diagram.m();
    let mut kbar1 = vec![0; m + 1];
    let mut kbar2 = vec![0; m + 1];
    let mut kbar = vec![0; m + 1];
    let mut long = vec![false; m + 1];
    for r in 1..=m {
        let (i, j) = diagram.couple(r);
        let last = |p: usize| {
            (1..r)
                .rev()
                .find(|&l| {
                    let (a, b) = diagram.couple(l);
                    a == p || b == p
                })
                .unwrap_or(0)
        };
        kbar1[r] = last(i);
        kbar2[r] = last(j);
        kbar[r] = kbar1[r].max(kbar2[r]);
        long[r] = r - kbar[r] > l + 2;
    }
    let small_jumps: Vec<usize> = (1..=m).filter(|r| !long[*r]).collect();

    let mut stopping = vec![false; m + 1];
    let mut bounds = vec![0usize];
    bounds.extend(&small_jumps);
    bounds.push(m + 1);
    for w in bounds.windows(2) {
        let (prev, s) = (w[0], w[1]);
        if s - prev > l + 1 {
            let mut k = 1;
            while s > k * l + 1 && s - k * l - 1 > prev {
                stopping[s - k * l - 1] = true;
                k += 1;
            }
        }
    }

    let mut fresh = vec![false; m + 1];
    let mut good = vec![false; m + 1];
    for r in 1..=m {
        if long[r] {
            let next_small = r < m && !long[r + 1];
            fresh[r] = stopping[r] || next_small || r == m;
        }
        good[r] = long[r] && !fresh[r];
    }

    let mut phi = vec![0i64; m + 1];
    for r in 1..=m {
        phi[r] = if r < m && !stopping[r] && long[r + 1] {
            match (r..=m).find(|&p| fresh[p]) {
                Some(p) => p as i64 - l as i64,
                None => r as i64 + 1,
            }
        } else {
            r as i64
        };
    }
    Ok(Classified {
        diagram: diagram.clone(),
        l,
        m,
        kbar1,
        kbar2,
        kbar,
        long,
        stopping,
        fresh,
        good,
        phi,
        small_jumps,
    })
}

/// Which structural properties a classified diagram violates; empty when all hold.
pub fn structural_violations(c: &Classified) -> Vec<String> {
    let m = c.m;
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    if c.long[1] {
        out.push("index 1 is a long jump".into());
    }
    for r in 1..=m {
        if c.stopping[r] && !c.fresh[r] {
            out.push(format!("stopping index {r} is not fresh"));
        }
        if c.long[r] != (r - c.kbar[r] > c.l + 2) {
            out.push(format!("jump kind at {r} disagrees with definition"));
        }
        // Property (i).
        if c.good[r] && (r == m || !c.long[r + 1]) {
            out.push(format!("(i) fails at good index {r}"));
        }
        // Property (ii).
        if c.good[r] && (2..m).contains(&r) && c.phi[r - 1] != c.phi[r] {
            out.push(format!("(ii) fails at {r}: φ(r-1)={} φ(r)={}", c.phi[r - 1], c.phi[r]));
        }
        // Property (iii).
        if c.fresh[r] && r >= 2 && c.phi[r - 1] != r as i64 - c.l as i64 {
            out.push(format!("(iii) fails at fresh {r}: φ(r-1)={}", c.phi[r - 1]));
        }
        // Property (iv).
        if r < m && c.long[r + 1] && c.phi[r] > r as i64 {
            out.push(format!("(iv) fails at {r}"));
        }
        if c.phi[r] > r as i64 {
            out.push(format!("φ({r}) = {} exceeds r", c.phi[r]));
        }
        if c.good[r] && c.phi[r] > r as i64 - 1 {
            out.push(format!("φ({r}) = {} not below r at good index", c.phi[r]));
        }
    }
    if c.long[m] && !c.fresh[m] {
        out.push("m is a long jump but not fresh".into());
    }
    if c.phi[m] != m as i64 {
        out.push("φ(m) != m".into());
    }
    let bad_bound = 2.0 * c.n_small() as f64 + m as f64 / c.l as f64 + 1.0;
    if c.n_bad() as f64 > bad_bound {
        out.push(format!("{} bad indices exceed 2n + m/L + 1 = {bad_bound}", c.n_bad()));
    }
    out
}

/// `c_i^k` for `1 ≤ k ≤ m`, `0 ≤ i ≤ k`; row `k` has `k + 1` entries, row 0 is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffTable {
    pub rows: Vec<Vec<f64>>,
    /// `γ_k` for `k = 0..m`.
    pub gammas: Vec<bool>,
}

impl CoeffTable {
    pub fn c(&self, k: usize, i: usize) -> f64 {
        self.rows[k].get(i).copied().unwrap_or(0.0)
    }

    /// `3^i ∏_{r<k} (1 + γ_r)`.
    pub fn bound(&self, k: usize, i: usize) -> f64 {
        let prod: f64 = (1..k).map(|r| if self.gammas[r] { 2.0 } else { 1.0 }).product();
        3f64.powi(i as i32) * prod
    }

    pub fn bound_holds(&self) -> bool {
        (1..self.rows.len()).all(|k| (0..=k).all(|i| self.c(k, i) <= self.bound(k, i)))
    }
}

/// The recursion from explicit flags `γ_k` (`k = 0..m`), up to row `m`.
pub fn coeff_table_from_gammas(gammas: &[bool]) -> CoeffTable {
    let m = gammas.len().max(1);
    let mut rows = vec![Vec::new(), vec![1.0, 2.0]];
    for k in 1..m {
        let prev = &rows[k];
        let g = if gammas[k] { 2.0 } else { 0.0 };
        let mut next = vec![0.0; k + 2];
        let mut prefix = 0.0;
        for i in 0..=k + 1 {
            let ck = prev.get(i).copied().unwrap_or(0.0);
            next[i] = ck + g * prefix;
            prefix += ck;
        }
        rows.push(next);
    }
    CoeffTable {
        rows,
        gammas: gammas.to_vec(),
    }
}

pub fn coeff_table(c: &Classified) -> CoeffTable {
    coeff_table_from_gammas(&c.gammas())
}

/// `ũ_r` for 1-based `r ≥ 2`, from `u[1..r)`.
fn u_tilde(c: &Classified, u: &[u64], r: usize) -> f64 {
    let k = c.kbar[r];
    if k + 1 < r {
        u[k + 1..r].iter().sum::<u64>() as f64
    } else {
        u[r - 1] as f64 / 2.0
    }
}

/// `Σ_{i=φ(r)}^{r} u_i`, with indices below 1 dropped.
fn anchor_sum(c: &Classified, u: &[u64], r: usize) -> f64 {
    let lo = c.phi[r].max(1) as usize;
    u[lo..=r].iter().sum::<u64>() as f64
}

fn f_pow(params: &PolymerParams, t: u64, v: f64, p: usize) -> Result<f64> {
    if p == 0 {
        return Ok(1.0);
    }
    Ok(params.small_f(t as f64, v)?.powi(p as i32))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Which partial-sum indicator to use on the left of the induction inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Indicator {
    /// `Σ_{i≤m} u_i ≤ T`.
    Full,
    /// `Σ_{i≤m-k+1} u_i ≤ T`, as printed.
    Literal,
}

/// `Σ_{u_{m-k+1..m}} ∏_{r>m-k} F(u_r + ũ_r) · indicator`, given `u_1..u_{m-k}`.
pub fn bound_sum_lhs(
    c: &Classified,
    params: &PolymerParams,
    t: u64,
    k: usize,
    prefix: &[u64],
    indicator: Indicator,
) -> Result<f64> {
    let m = c.m;
    if k == 0 || k >= m || prefix.len() != m - k {
        return Err(Error::invalid("need 1 <= k <= m-1 and a prefix of length m-k"));
    }
    let mut u = vec![0u64; m + 1];
    u[1..=m - k].copy_from_slice(prefix);
    let base: u64 = prefix.iter().sum();
    let mut total = 0.0;
    lhs_rec(c, params, t, m - k + 1, &mut u, base, 1.0, indicator, k, &mut total)?;
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn lhs_rec(
    c: &Classified,
    params: &PolymerParams,
    t: u64,
    r: usize,
    u: &mut Vec<u64>,
    sum: u64,
    weight: f64,
    indicator: Indicator,
    k: usize,
    total: &mut f64,
) -> Result<()> {
    let m = c.m;
    if r > m {
        *total += weight;
        return Ok(());
    }
    for ur in 1..=t {
        let s = sum + ur;
        let constrained = match indicator {
            Indicator::Full => true,
            Indicator::Literal => r == m - k + 1,
        };
        if constrained && s > t {
            break;
        }
        u[r] = ur;
        let w = weight * params.big_f(ur as f64 + u_tilde(c, u, r))?;
        lhs_rec(c, params, t, r + 1, u, s, w, indicator, k, total)?;
    }
    u[r] = 0;
    Ok(())
}

/// `Σ_i c_i^k / (k-i)! (1-β̂²)^{-i} f(Σ_{φ(m-k)}^{m-k} u_i)^{k-i}`.
pub fn bound_sum_rhs(
    c: &Classified,
    coeffs: &CoeffTable,
    params: &PolymerParams,
    t: u64,
    k: usize,
    prefix: &[u64],
) -> Result<f64> {
    let m = c.m;
    if k == 0 || k >= m || prefix.len() != m - k {
        return Err(Error::invalid("need 1 <= k <= m-1 and a prefix of length m-k"));
    }
    let mut u = vec![0u64; m + 1];
    u[1..=m - k].copy_from_slice(prefix);
    let v = anchor_sum(c, &u, m - k);
    let inv = 1.0 / (1.0 - params.beta_hat() * params.beta_hat());
    let mut total = 0.0;
    for i in 0..=k {
        total += coeffs.c(k, i) / factorial(k - i) * inv.powi(i as i32) * f_pow(params, t, v, k - i)?;
    }
    Ok(total)
}

/// Compositions of prefixes `u_1..u_len ∈ [1, T]` with sum at most `T`.
fn prefixes(len: usize, t: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(len: usize, t: u64, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for x in 1..=left.min(t) {
            cur.push(x);
            rec(len, t, left - x, cur, out);
            cur.pop();
        }
    }
    rec(len, t, t, &mut cur, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InductionReport {
    pub instances: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over checked instances with positive right side.
    pub max_ratio: f64,
    pub counterexample: Option<String>,
}

impl InductionReport {
    fn new() -> Self {
        InductionReport {
            instances: 0,
            violations: 0,
            max_ratio: 0.0,
            counterexample: None,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, what: impl FnOnce() -> String) {
        self.instances += 1;
        if rhs > 0.0 {
            self.max_ratio = self.max_ratio.max(lhs / rhs);
        }
        if lhs > rhs * (1.0 + 1e-12) {
            self.violations += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(what());
            }
        }
    }

    fn merge(&mut self, other: InductionReport) {
        self.instances += other.instances;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        if self.counterexample.is_none() {
            self.counterexample = other.counterexample;
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// The induction inequality for every `k ∈ [1, m-1]` and every admissible prefix.
pub fn check_induction(c: &Classified, params: &PolymerParams, t: u64, indicator: Indicator) -> Result<InductionReport> {
    let coeffs = coeff_table(c);
    let mut rep = InductionReport::new();
    for k in 1..c.m {
        for prefix in prefixes(c.m - k, t) {
            let lhs = bound_sum_lhs(c, params, t, k, &prefix, indicator)?;
            let rhs = bound_sum_rhs(c, &coeffs, params, t, k, &prefix)?;
            rep.record(lhs, rhs, || format!("{} k={k} u={prefix:?}: {lhs} > {rhs}", c.diagram));
        }
    }
    Ok(rep)
}

/// The single-step reduction: for `k ∈ [0, m-2]`, `j ≤ k` and prefixes
/// `u_1..u_{m-k-1}`, `S_k f^j` is bounded by its polynomial in `f(v')`.
pub fn check_reduction(c: &Classified, params: &PolymerParams, t: u64) -> Result<InductionReport> {
    let m = c.m;
    let mut rep = InductionReport::new();
    if m < 2 {
        return Ok(rep);
    }
    let inv = 1.0 / (1.0 - params.beta_hat() * params.beta_hat());
    let gammas = c.gammas();
    for k in 0..=m - 2 {
        let idx = m - k;
        for prefix in prefixes(idx - 1, t) {
            let mut u = vec![0u64; m + 1];
            u[1..idx].copy_from_slice(&prefix);
            let base: u64 = prefix.iter().sum();
            let v_prime = anchor_sum(c, &u, idx - 1);
            for j in 0..=k {
                let mut lhs = 0.0;
                for x in 1..=t - base {
                    u[idx] = x;
                    let ff = params.big_f(x as f64 + u_tilde(c, &u, idx))?;
                    lhs += ff * f_pow(params, t, anchor_sum(c, &u, idx), j)?;
                }
                u[idx] = 0;
                let mut rhs = f_pow(params, t, v_prime, j + 1)? / (j + 1) as f64;
                if gammas[k] {
                    for l in 1..=j + 1 {
                        rhs += factorial(j) / factorial(j + 1 - l) * 2.0 * inv.powi(l as i32)
                            * f_pow(params, t, v_prime, j + 1 - l)?;
                    }
                }
                rep.record(lhs, rhs, || format!("{} k={k} j={j} u={prefix:?}: {lhs} > {rhs}", c.diagram));
            }
        }
    }
    Ok(rep)
}

/// Tables shared by the `A` and `Ã` evaluations.
#[derive(Debug, Clone)]
pub struct ChainTables {
    pub t: u64,
    pub pstar: Vec<f64>,
    pub un: Vec<f64>,
}

impl ChainTables {
    pub fn new(params: &PolymerParams, t: u64) -> Result<Self> {
        let un = build_un(params, t)?.u_values;
        let pstar = (0..=5 * t + 2).map(pstar_exact).collect();
        Ok(ChainTables { t, pstar, un })
    }
}

pub const MAX_A_HORIZON: u64 = 12;
pub const MAX_A_RUNS: usize = 3;

fn check_a_caps(c: &Classified, t: u64) -> Result<()> {
    if c.m > MAX_A_RUNS || t > MAX_A_HORIZON {
        return Err(Error::Capacity {
            what: "direct A sums (m <= 3, T <= 12)",
            required: t.max(c.m as u64),
            limit: MAX_A_HORIZON,
        });
    }
    Ok(())
}

/// `A_{m,N,I}`: the sum over `u_i ∈ [1,T]`, `v_i ∈ [0,T]` with `Σ u_i ≤ T` of
/// `p*_{2u_1} U_N(v_m) ∏_{r<m} U_N(v_r) p*_{v_r + 2u_{r+1} + 2ũ_{r+1}}`.
///
/// With `time_constrained` the run endpoints are also kept inside the horizon
/// (`Σ (u_i + v_i) ≤ T`), which is the sum the decomposition actually produces.
pub fn eval_a(c: &Classified, tables: &ChainTables, time_constrained: bool) -> Result<f64> {
    check_a_caps(c, tables.t)?;
    if c.m == 0 {
        return Ok(1.0);
    }
    let mut u = vec![0u64; c.m + 1];
    let mut total = 0.0;
    a_rec(c, tables, time_constrained, 1, &mut u, 0, 0, 1.0, &mut total);
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn a_rec(
    c: &Classified,
    tb: &ChainTables,
    constrained: bool,
    r: usize,
    u: &mut Vec<u64>,
    usum: u64,
    elapsed: u64,
    weight: f64,
    total: &mut f64,
) {
    let t = tb.t;
    // `weight` carries every factor up to U_N(v_{r-1}) inclusive and awaits v_{r-1}'s p* link.
    for ur in 1..=t - usum {
        if constrained && elapsed + ur > t {
            break;
        }
        u[r] = ur;
        let entry = if r == 1 {
            tb.pstar[(2 * ur) as usize]
        } else {
            1.0
        };
        // v_r ranges over [0, T].
        for vr in 0..=t {
            if constrained && elapsed + ur + vr > t {
                break;
            }
            let w = weight * entry * tb.un[vr as usize];
            if r == c.m {
                *total += w;
            } else {
                // Link to the next run requires u_{r+1}; fold it into the recursion.
                a_link(c, tb, constrained, r + 1, u, usum + ur, elapsed + ur + vr, vr, w, total);
            }
        }
    }
    u[r] = 0;
}

#[allow(clippy::too_many_arguments)]
fn a_link(
    c: &Classified,
    tb: &ChainTables,
    constrained: bool,
    r: usize,
    u: &mut Vec<u64>,
    usum: u64,
    elapsed: u64,
    v_prev: u64,
    weight: f64,
    total: &mut f64,
) {
    let t = tb.t;
    for ur in 1..=t.saturating_sub(usum) {
        if constrained && elapsed + ur > t {
            break;
        }
        u[r] = ur;
        let two_tilde = (2.0 * u_tilde(c, u, r)).round() as u64;
        let link = tb.pstar[(v_prev + 2 * ur + two_tilde) as usize];
        for vr in 0..=t {
            if constrained && elapsed + ur + vr > t {
                break;
            }
            let w = weight * link * tb.un[vr as usize];
            if r == c.m {
                *total += w;
            } else {
                a_link(c, tb, constrained, r + 1, u, usum + ur, elapsed + ur + vr, vr, w, total);
            }
        }
    }
    u[r] = 0;
}

/// `Ã_{m,N,I} = (1-β̂²)^{-1} Σ_u (1+ε)^m p*_{2u_1} ∏_{r=2}^m F(u_r + ũ_r) 1{Σ_{i≤r} u_i ≤ T}`.
pub fn eval_a_tilde(c: &Classified, params: &PolymerParams, tables: &ChainTables, eps: f64) -> Result<f64> {
    check_a_caps(c, tables.t)?;
    if c.m == 0 {
        return Ok(1.0);
    }
    let t = tables.t;
    let mut u = vec![0u64; c.m + 1];
    let mut total = 0.0;
    fn rec(
        c: &Classified,
        params: &PolymerParams,
        tb: &ChainTables,
        r: usize,
        u: &mut Vec<u64>,
        sum: u64,
        w: f64,
        total: &mut f64,
    ) -> Result<()> {
        if r > c.m {
            *total += w;
            return Ok(());
        }
        for ur in 1..=tb.t - sum {
            u[r] = ur;
            let factor = if r == 1 {
                tb.pstar[(2 * ur) as usize]
            } else {
                params.big_f(ur as f64 + u_tilde(c, u, r))?
            };
            rec(c, params, tb, r + 1, u, sum + ur, w * factor, total)?;
        }
        u[r] = 0;
        Ok(())
    }
    rec(c, params, tables, 1, &mut u, 0, 1.0, &mut total)?;
    let _ = t;
    let pref = (1.0 + eps).powi(c.m as i32) / (1.0 - params.beta_hat() * params.beta_hat());
    Ok(pref * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRow {
    pub m: usize,
    /// `σ^{2m} Σ_I A` with time-constrained runs.
    pub a_constrained: f64,
    /// `σ^{2m} Σ_I A`.
    pub a: f64,
    /// `σ^{2m} (1/π)^{m-1} Σ_I Ã` with `ε = 0`.
    pub a_tilde: f64,
    /// `(A / ((1/π)^{m-1} Ã))^{1/m} - 1`, the `ε` needed per run.
    pub measured_eps: f64,
}

/// Per-`m` terms of the bound chain, summed over `D(m, q)`.
pub fn chain_terms(params: &PolymerParams, q: usize, t: u64, m_max: usize, l: usize) -> Result<Vec<ChainRow>> {
    let tables = ChainTables::new(params, t)?;
    let sigma = params.sigma_n_sq();
    let mut rows = Vec::new();
    for m in 0..=m_max {
        let (mut ac, mut a, mut at) = (0.0, 0.0, 0.0);
        for d in enumerate_diagrams(q, m)? {
            let c = classify(&d, l)?;
            ac += eval_a(&c, &tables, true)?;
            a += eval_a(&c, &tables, false)?;
            at += eval_a_tilde(&c, params, &tables, 0.0)?;
        }
        let s = sigma.powi(m as i32);
        let pi_factor = std::f64::consts::FRAC_1_PI.powi(m as i32 - 1);
        let at = if m == 0 { 1.0 } else { s * pi_factor * at };
        let a = s * a;
        let measured_eps = if m == 0 || at == 0.0 { 0.0 } else { (a / at).powf(1.0 / m as f64) - 1.0 };
        rows.push(ChainRow {
            m,
            a_constrained: s * ac,
            a,
            a_tilde: at,
            measured_eps,
        });
    }
    Ok(rows)
}

/// `max(3, ⌈√q⌉)`.
pub fn default_l(q: usize) -> usize {
    let mut l = 0usize;
    while l * l < q {
        l += 1;
    }
    l.max(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalBound {
    pub r: f64,
    pub bound: f64,
    pub valid: bool,
    /// `3β̂²/(1-β̂²) · binom(q,2) / log N`.
    pub condition_value: f64,
    pub condition_ok: bool,
    /// `log(bound) / (binom(q,2) λ_{T,N}²)`.
    pub exponent_ratio: f64,
}

/// The closing bound with constant `C = 1` and the given `ε` slot.
pub fn final_bound(params: &PolymerParams, q: usize, t: u64, l: usize, eps: f64) -> Result<FinalBound> {
    if l < 3 {
        return Err(Error::domain(format!("L must be at least 3, got {l}")));
    }
    if q < 2 {
        return Err(Error::domain("q must be at least 2"));
    }
    let b2 = params.beta_hat() * params.beta_hat();
    let ln = params.log_n();
    let pairs = num_couples(q) as f64;
    let weight = 8.0 * (l as f64 + 2.0) * q as f64 + pairs;
    let two_l = 2f64.powf(1.0 / l as f64);
    let r = 3.0 * (1.0 + eps) * two_l / (1.0 - b2) * (b2 / ln) * weight;
    let lam = params.lambda_tn_sq(t as f64)?;
    let valid = r < 1.0;
    let bound = if valid {
        1.0 / (1.0 - r) * ((1.0 + eps) * weight * two_l * lam).exp()
    } else {
        f64::INFINITY
    };
    let condition_value = 3.0 * b2 / (1.0 - b2) * pairs / ln;
    let exponent_ratio = if valid && lam > 0.0 { bound.ln() / (pairs * lam) } else { f64::NAN };
    Ok(FinalBound {
        r,
        bound,
        valid,
        condition_value,
        condition_ok: condition_value < 1.0,
        exponent_ratio,
    })
}

/// `binom(m,n) (2(L+2)q)^n binom(q,2)^{m-n}`.
pub fn small_jump_count_bound(q: usize, m: usize, n: usize, l: usize) -> f64 {
    let binom: f64 = (0..n).map(|k| (m - k) as f64 / (k + 1) as f64).product();
    binom * (2.0 * (l as f64 + 2.0) * q as f64).powi(n as i32) * (num_couples(q) as f64).powi((m - n) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub diagrams: u64,
    pub count_mismatches: Vec<(usize, usize)>,
    pub structural_failures: u64,
    pub coeff_failures: u64,
    pub small_jump_count_failures: u64,
    pub counterexample: Option<String>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.count_mismatches.is_empty()
            && self.structural_failures == 0
            && self.coeff_failures == 0
            && self.small_jump_count_failures == 0
    }
}

/// Exhaustive structural checks over `D(m, q)` for `2 ≤ q ≤ q_max`, `1 ≤ m ≤ m_max`.
pub fn check_suite(q_max: usize, m_max: usize, l: usize) -> Result<SuiteReport> {
    let mut rep = SuiteReport {
        diagrams: 0,
        count_mismatches: Vec::new(),
        structural_failures: 0,
        coeff_failures: 0,
        small_jump_count_failures: 0,
        counterexample: None,
    };
    for q in 2..=q_max {
        for m in 1..=m_max {
            let mut count = 0u128;
            let mut by_small = vec![0u64; m + 1];
            for d in enumerate_diagrams(q, m)? {
                count += 1;
                let c = classify(&d, l)?;
                by_small[c.n_small()] += 1;
                let v = structural_violations(&c);
                if !v.is_empty() {
                    rep.structural_failures += 1;
                    if rep.counterexample.is_none() {
                        rep.counterexample = Some(format!("{d}: {}", v.join("; ")));
                    }
                }
                if !coeff_table(&c).bound_holds() {
                    rep.coeff_failures += 1;
                    if rep.counterexample.is_none() {
                        rep.counterexample = Some(format!("{d}: coefficient bound fails"));
                    }
                }
            }
            rep.diagrams += count as u64;
            if count != diagram_count(q, m) {
                rep.count_mismatches.push((q, m));
            }
            for (n, k) in by_small.iter().enumerate() {
                if *k as f64 > small_jump_count_bound(q, m, n, l) {
                    rep.small_jump_count_failures += 1;
                    if rep.counterexample.is_none() {
                        rep.counterexample = Some(format!("q={q} m={m}: {k} diagrams with {n} small jumps"));
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Induction and reduction inequalities over `D(m, q)` for `2 ≤ q ≤ q_max`, `2 ≤ m ≤ m_max`.
pub fn check_induction_suite(
    params: &PolymerParams,
    q_max: usize,
    m_max: usize,
    t: u64,
    l: usize,
    indicator: Indicator,
) -> Result<(InductionReport, InductionReport)> {
    let mut ind = InductionReport::new();
    let mut red = InductionReport::new();
    for q in 2..=q_max {
        for m in 2..=m_max {
            for d in enumerate_diagrams(q, m)? {
                let c = classify(&d, l)?;
                ind.merge(check_induction(&c, params, t, indicator)?);
                red.merge(check_reduction(&c, params, t)?);
            }
        }
    }
    Ok((ind, red))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;
    use crate::polymer::decomposition_sum;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn d(q: usize, cs: &[(usize, usize)]) -> Diagram {
        Diagram::new(q, cs.iter().map(|(i, j)| (i - 1, j - 1)).collect()).unwrap()
    }

    #[test]
    fn counts_and_distinctness() {
        assert_eq!(enumerate_diagrams(2, 1).unwrap().count(), 1);
        assert_eq!(enumerate_diagrams(2, 2).unwrap().count(), 0);
        assert_eq!(enumerate_diagrams(3, 2).unwrap().count(), 6);
        assert_eq!(enumerate_diagrams(4, 3).unwrap().count(), 150);
        assert_eq!(enumerate_diagrams(3, 0).unwrap().count(), 1);
        for (q, m) in [(3, 4), (4, 4), (5, 3)] {
            let all: Vec<Diagram> = enumerate_diagrams(q, m).unwrap().collect();
            assert_eq!(all.len() as u128, diagram_count(q, m));
            let set: HashSet<_> = all.iter().cloned().collect();
            assert_eq!(set.len(), all.len());
            for x in &all {
                assert!(x.couples.windows(2).all(|w| w[0] != w[1]));
            }
            let split: usize = (0..num_couples(q))
                .map(|f| enumerate_diagrams_from(q, m, f, DiagramCaps::default()).unwrap().count())
                .sum();
            assert_eq!(split, all.len());
        }
        assert!(matches!(enumerate_diagrams(6, 2), Err(Error::Capacity { .. })));
        assert!(Diagram::new(3, vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn small_example() {
        let c = classify(&d(3, &[(1, 2), (1, 3)]), 3).unwrap();
        assert_eq!(c.kbar[2], 1);
        assert!(!c.long[1] && !c.long[2]);
        assert!(c.bad(1) && c.bad(2));
        assert!(classify(&d(3, &[(1, 2)]), 2).is_err());
    }

    #[test]
    fn handcrafted_long_jump() {
        let c = classify(&d(14, &[(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (13, 14)]), 3).unwrap();
        assert!(c.long[6]);
        assert!(c.fresh[6]);
        assert!((1..=5).all(|r| !c.long[r]));
        assert_eq!(c.phi[6], 6);
    }

    #[test]
    fn short_diagrams_have_only_small_jumps() {
        for m in 1..=5 {
            for x in enumerate_diagrams(4, m).unwrap() {
                let c = classify(&x, 3).unwrap();
                assert!((1..=m).all(|r| !c.long[r]));
            }
        }
    }

    #[test]
    fn stopping_indices_by_hand() {
        // Disjoint couples make every index after the first L+2 a potential long jump.
        let q = 14;
        let cs: Vec<(usize, usize)> = (0..7).map(|k| (2 * k + 1, 2 * k + 2)).chain([(1, 2)]).collect();
        let c = classify(&d(q, &cs), 3).unwrap();
        // Index 8 revisits couple (1,2) after 7 steps: long. Indices 6, 7 also long (kbar = 0).
        assert_eq!(c.small_jumps, vec![1, 2, 3, 4, 5]);
        // s_{K+1} = 9, s_K = 5: gap 4 = L+1, so no stopping indices.
        assert!(c.stopping.iter().all(|s| !s));
        assert!(c.fresh[8] && c.good[6] && c.good[7]);
        assert!(structural_violations(&c).is_empty());
    }

    #[test]
    fn coefficient_examples() {
        let t = coeff_table_from_gammas(&[true, true, true]);
        assert_eq!(t.rows[1], vec![1.0, 2.0]);
        assert_eq!(t.rows[2], vec![1.0, 4.0, 6.0]);
        assert_eq!((t.bound(2, 0), t.bound(2, 1), t.bound(2, 2)), (2.0, 6.0, 18.0));
        assert!(t.bound_holds());
        let z = coeff_table_from_gammas(&[false; 5]);
        for k in 1..5 {
            assert_eq!(z.c(k, 0), 1.0);
            assert_eq!(z.c(k, 1), 2.0);
            assert_eq!(z.c(k, 2), 0.0);
        }
    }

    #[test]
    fn structural_suite_small() {
        let r = check_suite(4, 5, 3).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn handcrafted_long_diagrams_are_consistent() {
        // Long chains on many particles exercise stopping indices.
        let q = 12;
        let cs: Vec<(usize, usize)> = (0..14).map(|k| (2 * (k % 6) + 1, 2 * (k % 6) + 2)).collect();
        for l in 3..=5 {
            let c = classify(&d(q, &cs), l).unwrap();
            assert!(structural_violations(&c).is_empty(), "{:?}", structural_violations(&c));
            assert!(coeff_table(&c).bound_holds());
        }
        let cs: Vec<(usize, usize)> = (0..20).map(|k| (2 * (k % 10) + 1, 2 * (k % 10) + 2)).collect();
        let c = classify(&d(20, &cs), 3).unwrap();
        assert!(c.stopping.iter().any(|s| *s));
        assert!(structural_violations(&c).is_empty(), "{:?}", structural_violations(&c));
    }

    #[test]
    fn induction_small_instance() {
        let p = PolymerParams::new(1000, 0.5).unwrap();
        let c = classify(&d(3, &[(1, 2), (1, 3)]), 3).unwrap();
        let r = check_induction(&c, &p, 4, Indicator::Full).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.instances > 0);
        // An empty range gives zero on the left.
        let coeffs = coeff_table(&c);
        let lhs = bound_sum_lhs(&c, &p, 4, 1, &[4], Indicator::Full).unwrap();
        assert_eq!(lhs, 0.0);
        assert!(bound_sum_rhs(&c, &coeffs, &p, 4, 1, &[4]).unwrap() >= 0.0);
        let red = check_reduction(&c, &p, 6).unwrap();
        assert!(red.pass(), "{red:?}");
    }

    #[test]
    fn a_terms_against_decomposition() {
        // q = 2 from a common start: one-run Ψ term equals the time-constrained A.
        let p = PolymerParams::new(200, 0.6).unwrap();
        let t = 4;
        let rows = chain_terms(&p, 2, t, 1, 3).unwrap();
        assert_eq!(rows[0].a, 1.0);
        let psi1 = decomposition_sum(&p, 2, t, &[Site::ORIGIN; 2], Some(1)).unwrap();
        assert_relative_eq!(1.0 + rows[1].a_constrained, psi1, max_relative = 1e-10);
        assert!(rows[1].a >= rows[1].a_constrained);
        // q = 3: exact m-run terms lie below the A terms.
        let rows = chain_terms(&p, 3, 3, 2, 3).unwrap();
        let x = [Site::ORIGIN, Site::new(1, 1), Site::new(0, 0)];
        let mut prev = 0.0;
        for m in 0..=2 {
            let cum = decomposition_sum(&p, 3, 3, &x, Some(m)).unwrap();
            assert!(cum - prev <= rows[m].a * (1.0 + 1e-12));
            prev = cum;
        }
        let zero = chain_terms(&PolymerParams::new(200, 0.0).unwrap(), 3, 3, 2, 3).unwrap();
        assert_eq!(zero[1].a, 0.0);
        assert_eq!(zero[2].a_tilde, 0.0);
    }

    #[test]
    fn final_bound_values() {
        let p = PolymerParams::new(1_000_000, 0.3).unwrap();
        let fb = final_bound(&p, 3, 1_000_000, 3, 0.0).unwrap();
        let expect = 3.0 * 2f64.powf(1.0 / 3.0) / 0.91 * (0.09 / 1e6f64.ln()) * (8.0 * 5.0 * 3.0 + 3.0);
        assert_relative_eq!(fb.r, expect, max_relative = 1e-14);
        assert!((fb.r - 3.33).abs() < 0.01);
        assert!(!fb.valid);
        let zero = final_bound(&PolymerParams::new(1000, 0.0).unwrap(), 3, 1000, 3, 0.0).unwrap();
        assert_eq!(zero.r, 0.0);
        assert_eq!(zero.bound, 1.0);
        assert!(final_bound(&p, 3, 100, 2, 0.0).is_err());
        assert_eq!(default_l(9), 3);
        assert_eq!(default_l(4), 3);
        assert_eq!(default_l(17), 5);
        let big = PolymerParams::new(u64::MAX / 4, 0.2).unwrap();
        let fb = final_bound(&big, 3, 1000, 3, 0.0).unwrap();
        assert!(fb.valid && fb.bound.is_finite());
    }
}
