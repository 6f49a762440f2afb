//! Gaussian environment, partition-function dynamic programming and exact
//! small-horizon moment transfers.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::collisions::collision_profile;
use crate::error::{Error, Result};
use crate::kernel::KernelTable;
use crate::lattice::{Site, STEPS};
use crate::renewal::spatial_un;
use crate::rng::hash_words;
use crate::scaling::PolymerParams;

/// Cells generated together from one counter-derived stream.
const BLOCK: i64 = 32;

/// Default ceiling on the number of cells in a transfer state.
pub const DEFAULT_STATE_BUDGET: u64 = 1 << 24;

/// I.i.d. standard normal field `ω(n, x)`, evaluated on demand.
///
/// Along each rotated row `A = x + y` at time `n`, cells are grouped in blocks
/// of 32 consecutive `B = x - y` values; a block's values are drawn from a
/// generator keyed by `(seed, n, A, block)`, so any cell can be replayed
/// without storing the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Environment {
    pub seed: u64,
    pub horizon: u64,
}

impl Environment {
    pub fn new(seed: u64, horizon: u64) -> Self {
        Environment { seed, horizon }
    }

    fn block(&self, n: u64, a: i64, block: i64, out: &mut [f64; BLOCK as usize]) {
        let key = hash_words(&[self.seed, n, a as u64, block as u64]);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(key);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    /// Position of `(a, b)` inside its row: consecutive same-parity `b` map to consecutive integers.
    fn column(a: i64, b: i64) -> i64 {
        (b - a.rem_euclid(2)).div_euclid(2)
    }

    pub fn omega(&self, n: u64, x: Site) -> f64 {
        let (a, b) = x.rotated();
        let c = Self::column(a, b);
        let mut buf = [0.0; BLOCK as usize];
        self.block(n, a, c.div_euclid(BLOCK), &mut buf);
        buf[c.rem_euclid(BLOCK) as usize]
    }

    /// Values of the row `A = a` at time `n` for columns `c0 .. c0 + out.len()`.
    fn fill_row(&self, n: u64, a: i64, c0: i64, out: &mut [f64]) {
        let mut buf = [0.0; BLOCK as usize];
        let mut c = c0;
        let end = c0 + out.len() as i64;
        while c < end {
            let blk = c.div_euclid(BLOCK);
            self.block(n, a, blk, &mut buf);
            let blk_end = ((blk + 1) * BLOCK).min(end);
            for cc in c..blk_end {
                out[(cc - c0) as usize] = buf[(cc - blk * BLOCK) as usize];
            }
            c = blk_end;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionResult {
    pub value: f64,
    pub log_value: f64,
    /// `log Σ_x u_n(x)` for `n = 0..=N`.
    pub log_mass_profile: Vec<f64>,
}

/// `W_n(β_N, start)` by the forward recursion with per-step rescaling.
pub fn partition_dp(env: &Environment, params: &PolymerParams, n: u64, start: Site) -> Result<PartitionResult> {
    let mut out = partition_dp_many(env, std::slice::from_ref(params), n, start)?;
    Ok(out.pop().expect("one result per parameter set"))
}

/// [`partition_dp`] for several disorder strengths on one shared environment.
pub fn partition_dp_many(
    env: &Environment,
    params: &[PolymerParams],
    n: u64,
    start: Site,
) -> Result<Vec<PartitionResult>> {
    if n > env.horizon {
        return Err(Error::domain(format!(
            "environment horizon {} is shorter than N = {n}",
            env.horizon
        )));
    }
    let w = n as usize + 1;
    let cells = (w as u64) * (w as u64);
    if cells * 2 * params.len().max(1) as u64 > DEFAULT_STATE_BUDGET * 4 {
        return Err(Error::Capacity {
            what: "partition DP cells",
            required: cells * 2 * params.len() as u64,
            limit: DEFAULT_STATE_BUDGET * 4,
        });
    }
    let (a0, b0) = start.rotated();
    let k = params.len();
    let betas: Vec<f64> = params.iter().map(|p| p.beta_n()).collect();
    let shifts: Vec<f64> = params.iter().map(|p| -0.5 * p.beta_n_sq()).collect();
    let mut cur: Vec<Vec<f64>> = vec![vec![0.0; w * w]; k];
    let mut next: Vec<Vec<f64>> = vec![vec![0.0; w * w]; k];
    for c in cur.iter_mut() {
        c[0] = 1.0;
    }
    let mut log_scale = vec![0.0f64; k];
    let mut profiles: Vec<Vec<f64>> = vec![vec![0.0]; k];
    let mut omega = vec![0.0; w];
    let mut colsum = vec![0.0; w];
    for t in 0..n as usize {
        // Slab at time t occupies rows/cols 0..=t; build time t + 1.
        let tn = t + 1;
        let mut totals = vec![0.0f64; k];
        for i in 0..=tn {
            let a = a0 + 2 * i as i64 - tn as i64;
            let b_lo = b0 - tn as i64;
            env.fill_row(tn as u64, a, Environment::column(a, b_lo), &mut omega[..=tn]);
            for p in 0..k {
                let old = &cur[p];
                for j in 0..=t {
                    let up = if i >= 1 { old[(i - 1) * w + j] } else { 0.0 };
                    let here = if i <= t { old[i * w + j] } else { 0.0 };
                    colsum[j] = up + here;
                }
                let row = &mut next[p][i * w..i * w + tn + 1];
                let (beta, shift) = (betas[p], shifts[p]);
                let mut total = 0.0;
                for j in 0..=tn {
                    let left = if j >= 1 { colsum[j - 1] } else { 0.0 };
                    let right = if j <= t { colsum[j] } else { 0.0 };
                    let v = 0.25 * (left + right) * (beta * omega[j] + shift).exp();
                    row[j] = v;
                    total += v;
                }
                totals[p] += total;
            }
        }
        for p in 0..k {
            let s = totals[p];
            let inv = 1.0 / s;
            for i in 0..=tn {
                for v in &mut next[p][i * w..i * w + tn + 1] {
                    *v *= inv;
                }
            }
            log_scale[p] += s.ln();
            profiles[p].push(log_scale[p]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    // Without disorder the mass is conserved exactly; avoid rounding in the rescaling.
    for (p, prm) in params.iter().enumerate() {
        if prm.beta_n() == 0.0 {
            log_scale[p] = 0.0;
            profiles[p].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok((0..k)
        .map(|p| PartitionResult {
            value: log_scale[p].exp(),
            log_value: log_scale[p],
            log_mass_profile: std::mem::take(&mut profiles[p]),
        })
        .collect())
}

/// `E[W_n(β_N)²]` by transfer on the difference walk `S¹ - S²`.
///
/// In rotated half-coordinates the difference walk moves each axis by
/// `-1, 0, +1` with weights `¼, ½, ¼`; the state picks up `e^{β_N²}` at the origin.
pub fn second_moment_exact(params: &PolymerParams, n: u64) -> Result<f64> {
    Ok(*second_moment_profile(params, n)?.last().expect("profile includes n = 0"))
}

/// `E[W_t(β_N)²]` for every `t = 0..=n` from one transfer run.
pub fn second_moment_profile(params: &PolymerParams, n: u64) -> Result<Vec<f64>> {
    let w = 2 * n as usize + 1;
    let cells = (w as u64) * (w as u64);
    if cells > DEFAULT_STATE_BUDGET {
        return Err(Error::Capacity {
            what: "second-moment transfer cells",
            required: cells,
            limit: DEFAULT_STATE_BUDGET,
        });
    }
    let gain = params.beta_n_sq().exp();
    let c = n as usize;
    let mut cur = vec![0.0; w * w];
    let mut tmp = vec![0.0; w * w];
    cur[c * w + c] = 1.0;
    let mut profile = Vec::with_capacity(n as usize + 1);
    profile.push(1.0);
    for t in 1..=n as usize {
        // Only |h| <= t can be occupied.
        let lo = c - t;
        let hi = c + t;
        for i in lo..=hi {
            let src = &cur[i * w..(i + 1) * w];
            let dst = &mut tmp[i * w..(i + 1) * w];
            for j in lo..=hi {
                let l = if j > 0 { src[j - 1] } else { 0.0 };
                let r = if j + 1 < w { src[j + 1] } else { 0.0 };
                dst[j] = 0.25 * l + 0.5 * src[j] + 0.25 * r;
            }
        }
        for i in lo..=hi {
            for j in lo..=hi {
                let u = if i > 0 { tmp[(i - 1) * w + j] } else { 0.0 };
                let d = if i + 1 < w { tmp[(i + 1) * w + j] } else { 0.0 };
                cur[i * w + j] = 0.25 * u + 0.5 * tmp[i * w + j] + 0.25 * d;
            }
        }
        cur[c * w + c] *= gain;
        let mut acc = crate::stats::NeumaierSum::default();
        for i in lo..=hi {
            for v in &cur[i * w + lo..=i * w + hi] {
                acc.add(*v);
            }
        }
        profile.push(acc.value());
    }
    Ok(profile)
}

/// Per-time weight of a configuration in the exact moment transfers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CollisionWeight {
    /// `1 + σ_N² C_n`: the chaos series Ψ_{N,q}.
    Psi,
    /// `e^{β_N² C_n}`: the full moment.
    Moment,
    /// `e^{β_N² C_n}` on configurations with neither a triple nor two disjoint pairs.
    NoTriple,
}

/// Exact `E_X^{⊗q}[∏_{n≤T} weight(S_n)]`, with the state held relative to particle 1.
pub fn transfer_moment(
    params: &PolymerParams,
    q: usize,
    t: u64,
    starts: &[Site],
    weight: CollisionWeight,
    budget: u64,
) -> Result<f64> {
    if q < 2 {
        return Err(Error::domain("transfer needs q >= 2"));
    }
    if starts.len() != q {
        return Err(Error::invalid(format!("expected {q} start points, got {}", starts.len())));
    }
    let d0: Vec<Site> = starts[1..].iter().map(|s| *s - starts[0]).collect();
    let spread = d0.iter().map(|d| d.x.abs().max(d.y.abs())).max().unwrap_or(0);
    let r = spread + 2 * t as i64;
    let pad = r + 1;
    let w = (2 * pad + 1) as usize;
    let dims = 2 * (q - 1);
    let cells = (w as u64).checked_pow(dims as u32).unwrap_or(u64::MAX);
    if cells > budget {
        return Err(Error::Capacity {
            what: "moment transfer cells",
            required: cells,
            limit: budget,
        });
    }
    let cells = cells as usize;
    let mut strides = vec![1usize; dims];
    for d in (0..dims - 1).rev() {
        strides[d] = strides[d + 1] * w;
    }
    let index = |coords: &[i64]| -> usize {
        coords
            .iter()
            .zip(&strides)
            .map(|(c, s)| (c + pad) as usize * s)
            .sum()
    };

    // Interior mask and per-cell collision weight.
    let sigma = params.sigma_n_sq();
    let beta_sq = params.beta_n_sq();
    let mut interior = vec![false; cells];
    let mut gain = vec![0.0f64; cells];
    let mut coords = vec![0i64; dims];
    let mut positions = vec![Site::ORIGIN; q];
    for idx in 0..cells {
        let mut rem = idx;
        for d in 0..dims {
            coords[d] = (rem / strides[d]) as i64 - pad;
            rem %= strides[d];
        }
        interior[idx] = coords.iter().all(|c| c.abs() <= r);
        for j in 1..q {
            positions[j] = Site::new(coords[2 * (j - 1)], coords[2 * (j - 1) + 1]);
        }
        let prof = collision_profile(&positions);
        let c = prof.pairs as f64;
        gain[idx] = match weight {
            CollisionWeight::Psi => 1.0 + sigma * c,
            CollisionWeight::Moment => (beta_sq * c).exp(),
            CollisionWeight::NoTriple => {
                if prof.triple || prof.quad {
                    0.0
                } else {
                    (beta_sq * c).exp()
                }
            }
        };
    }

    // Linear offsets of each particle's four moves.
    let offset = |particle: usize, e: Site| -> isize {
        if particle == 0 {
            (0..q - 1)
                .map(|j| -(e.x as isize) * strides[2 * j] as isize - (e.y as isize) * strides[2 * j + 1] as isize)
                .sum()
        } else {
            let j = particle - 1;
            e.x as isize * strides[2 * j] as isize + e.y as isize * strides[2 * j + 1] as isize
        }
    };
    let mut cur = vec![0.0f64; cells];
    let mut next = vec![0.0f64; cells];
    coords.iter_mut().enumerate().for_each(|(d, c)| {
        let site = d0[d / 2];
        *c = if d % 2 == 0 { site.x } else { site.y };
    });
    cur[index(&coords)] = 1.0;
    for _ in 0..t {
        for particle in 0..q {
            let offs: Vec<isize> = STEPS.iter().map(|e| offset(particle, *e)).collect();
            for idx in 0..cells {
                if !interior[idx] {
                    continue;
                }
                let mut acc = 0.0;
                for o in &offs {
                    acc += cur[(idx as isize - o) as usize];
                }
                next[idx] = 0.25 * acc;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (v, g) in cur.iter_mut().zip(&gain) {
            *v *= g;
        }
    }
    let mut acc = crate::stats::NeumaierSum::default();
    for v in &cur {
        acc.add(*v);
    }
    Ok(acc.value())
}

/// Ψ_{N,q}(X): the chaos series, equal to `E_X[∏_{n≤T} (1 + σ_N² C_n)]`.
pub fn psi_exact(params: &PolymerParams, q: usize, t: u64, starts: &[Site]) -> Result<f64> {
    transfer_moment(params, q, t, starts, CollisionWeight::Psi, DEFAULT_STATE_BUDGET)
}

/// `E_X[e^{β_N² Σ_{n≤T} C_n}]`, the unrestricted moment.
pub fn moment_exact(params: &PolymerParams, q: usize, t: u64, starts: &[Site]) -> Result<f64> {
    transfer_moment(params, q, t, starts, CollisionWeight::Moment, DEFAULT_STATE_BUDGET)
}

/// `E_X[e^{β_N² Σ_{n≤T} C_n} 1_{G_T}]`.
pub fn no_triple_moment_exact(params: &PolymerParams, q: usize, t: u64, starts: &[Site]) -> Result<f64> {
    transfer_moment(params, q, t, starts, CollisionWeight::NoTriple, DEFAULT_STATE_BUDGET)
}

fn couples(q: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..q {
        for j in i + 1..q {
            out.push((i, j));
        }
    }
    out
}

fn check_oracle_size(q: usize, t: u64, starts: &[Site]) -> Result<()> {
    if starts.len() != q {
        return Err(Error::invalid(format!("expected {q} start points, got {}", starts.len())));
    }
    if q < 2 || q > 4 || t > 6 {
        return Err(Error::Capacity {
            what: "brute-force oracle size (q <= 4, T <= 6)",
            required: t.max(q as u64),
            limit: 6,
        });
    }
    Ok(())
}

/// Sites reachable both from `a` in `da` steps and from `b` in `db` steps.
fn common_sites(a: Site, da: u64, b: Site, db: u64) -> Vec<Site> {
    let mut out = Vec::new();
    let r = da as i64;
    for x in -r..=r {
        let rest = r - x.abs();
        for y in -rest..=rest {
            let z = Site::new(a.x + x, a.y + y);
            if (z - a).reachable_in(da) && (z - b).reachable_in(db) {
                out.push(z);
            }
        }
    }
    out
}

struct ChaosSearch<'a> {
    kernel: &'a KernelTable,
    sigma: f64,
    t: u64,
    couples: Vec<(usize, usize)>,
    max_runs: usize,
    total: f64,
}

impl ChaosSearch<'_> {
    /// Adds every continuation of the event sequence whose last event is at `last`.
    fn visit(&mut self, anchors: &mut Vec<(u64, Site)>, last: u64, prev: Option<usize>, runs: usize, weight: f64) {
        self.total += weight;
        for n in last + 1..=self.t {
            for ci in 0..self.couples.len() {
                let new_runs = runs + usize::from(prev != Some(ci));
                if new_runs > self.max_runs {
                    continue;
                }
                let (i, j) = self.couples[ci];
                let (ti, xi) = anchors[i];
                let (tj, xj) = anchors[j];
                for z in common_sites(xi, n - ti, xj, n - tj) {
                    let w = self.kernel.prob(n - ti, z - xi) * self.kernel.prob(n - tj, z - xj);
                    if w == 0.0 {
                        continue;
                    }
                    let (si, sj) = (anchors[i], anchors[j]);
                    anchors[i] = (n, z);
                    anchors[j] = (n, z);
                    self.visit(anchors, n, Some(ci), new_runs, weight * self.sigma * w);
                    anchors[i] = si;
                    anchors[j] = sj;
                }
            }
        }
    }
}

/// The chaos series Ψ_{N,q}(X) by explicit enumeration of events
/// `(n_r, couple_r, site_r)`, optionally keeping only terms with at most
/// `max_runs` alternations of couples.
pub fn chaos_enumerate(
    params: &PolymerParams,
    q: usize,
    t: u64,
    starts: &[Site],
    max_runs: Option<usize>,
) -> Result<f64> {
    check_oracle_size(q, t, starts)?;
    let kernel = KernelTable::build(t.max(1))?;
    let mut search = ChaosSearch {
        kernel: &kernel,
        sigma: params.sigma_n_sq(),
        t,
        couples: couples(q),
        max_runs: max_runs.unwrap_or(usize::MAX),
        total: 0.0,
    };
    let mut anchors: Vec<(u64, Site)> = starts.iter().map(|s| (0, *s)).collect();
    search.visit(&mut anchors, 0, None, 0, 1.0);
    Ok(search.total)
}

struct RunSearch<'a> {
    kernel: &'a KernelTable,
    un: &'a [Vec<f64>],
    sigma: f64,
    t: u64,
    couples: Vec<(usize, usize)>,
    max_runs: usize,
    total: f64,
}

impl RunSearch<'_> {
    fn un_at(&self, v: u64, d: Site) -> f64 {
        match crate::lattice::slab_index(v, d) {
            Some(i) => self.un[v as usize][i],
            None => 0.0,
        }
    }

    fn visit(&mut self, anchors: &mut Vec<(u64, Site)>, last_b: u64, prev: Option<usize>, runs: usize, weight: f64) {
        self.total += weight;
        if runs == self.max_runs {
            return;
        }
        for a in last_b + 1..=self.t {
            for ci in 0..self.couples.len() {
                if prev == Some(ci) {
                    continue;
                }
                let (i, j) = self.couples[ci];
                let (ti, xi) = anchors[i];
                let (tj, xj) = anchors[j];
                for x in common_sites(xi, a - ti, xj, a - tj) {
                    let entry = self.kernel.prob(a - ti, x - xi) * self.kernel.prob(a - tj, x - xj);
                    if entry == 0.0 {
                        continue;
                    }
                    for b in a..=self.t {
                        let v = b - a;
                        let r = v as i64;
                        for dx in -r..=r {
                            let rest = r - dx.abs();
                            for dy in -rest..=rest {
                                let d = Site::new(dx, dy);
                                let u = self.un_at(v, d);
                                if u == 0.0 {
                                    continue;
                                }
                                let (si, sj) = (anchors[i], anchors[j]);
                                anchors[i] = (b, x + d);
                                anchors[j] = (b, x + d);
                                self.visit(anchors, b, Some(ci), runs + 1, weight * self.sigma * entry * u);
                                anchors[i] = si;
                                anchors[j] = sj;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Ψ_{N,q}(X) through the run decomposition: a sum over diagrams, run
/// endpoints `a_r ≤ b_r` and sites, with the spatial overlap weight
/// `U_N(b - a, y - x)` inside each run. Truncated to at most `max_runs` runs.
pub fn decomposition_sum(
    params: &PolymerParams,
    q: usize,
    t: u64,
    starts: &[Site],
    max_runs: Option<usize>,
) -> Result<f64> {
    check_oracle_size(q, t, starts)?;
    let kernel = KernelTable::build(t.max(1))?;
    let un = spatial_un(params, t)?;
    let mut search = RunSearch {
        kernel: &kernel,
        un: &un,
        sigma: params.sigma_n_sq(),
        t,
        couples: couples(q),
        max_runs: max_runs.unwrap_or(usize::MAX),
        total: 0.0,
    };
    let mut anchors: Vec<(u64, Site)> = starts.iter().map(|s| (0, *s)).collect();
    search.visit(&mut anchors, 0, None, 0, 1.0);
    Ok(search.total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriCheck {
    pub k: u64,
    pub q: usize,
    pub moment: f64,
    /// `exp((1/π)(1 + slack) q² β_N² log(k + 1))`.
    pub bound: f64,
    /// `ε` solving `moment = exp((1/π)(1 + ε) q² β_N² log(k + 1))`.
    pub measured_eps: f64,
    pub pass: bool,
}

/// Short-time a-priori bound on the `q = 2` moment with the given slack.
pub fn apriori_check(params: &PolymerParams, k: u64, slack: f64) -> Result<AprioriCheck> {
    let q = 2usize;
    let moment = second_moment_exact(params, k)?;
    let scale = (q * q) as f64 * params.beta_n_sq() * ((k + 1) as f64).ln() / std::f64::consts::PI;
    let bound = ((1.0 + slack) * scale).exp();
    let measured_eps = if scale > 0.0 { moment.ln() / scale - 1.0 } else { 0.0 };
    Ok(AprioriCheck {
        k,
        q,
        moment,
        bound,
        measured_eps,
        pass: moment <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::return_probability;
    use approx::assert_relative_eq;

    fn params(n: u64, b: f64) -> PolymerParams {
        PolymerParams::new(n, b).unwrap()
    }

    #[test]
    fn environment_is_replayable() {
        let env = Environment::new(42, 10);
        let a = env.omega(3, Site::new(1, 2));
        assert_eq!(a, env.omega(3, Site::new(1, 2)));
        assert_ne!(a, env.omega(3, Site::new(2, 1)));
        assert_ne!(a, Environment::new(43, 10).omega(3, Site::new(1, 2)));
        // Row filling agrees with pointwise lookup.
        let (ra, rb) = Site::new(-7, 4).rotated();
        let mut row = vec![0.0; 70];
        let c0 = Environment::column(ra, rb);
        env.fill_row(5, ra, c0, &mut row);
        for (k, v) in row.iter().enumerate() {
            let b = rb + 2 * k as i64;
            assert_eq!(*v, env.omega(5, Site::from_rotated(ra, b)));
        }
    }

    #[test]
    fn environment_moments() {
        let env = Environment::new(9, 400);
        let mut xs = Vec::new();
        for n in 1..=20u64 {
            for x in -40..40 {
                for y in -40..40 {
                    xs.push(env.omega(n, Site::new(x, y)));
                }
            }
        }
        let (m, v) = crate::stats::mean_var(&xs);
        let k = xs.len() as f64;
        assert!(m.abs() < 5.0 / k.sqrt());
        assert!((v - 1.0).abs() < 5.0 * (2.0 / k).sqrt());
    }

    #[test]
    fn zero_disorder_gives_one() {
        let env = Environment::new(1, 50);
        let r = partition_dp(&env, &params(50, 0.0), 50, Site::ORIGIN).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.log_value, 0.0);
    }

    #[test]
    fn one_step_closed_form() {
        let env = Environment::new(5, 4);
        let p = params(100, 0.7);
        let b = p.beta_n();
        let expect: f64 = STEPS
            .iter()
            .map(|e| 0.25 * (b * env.omega(1, *e) - 0.5 * p.beta_n_sq()).exp())
            .sum();
        let got = partition_dp(&env, &p, 1, Site::ORIGIN).unwrap();
        assert_relative_eq!(got.value, expect, max_relative = 1e-14);
        let s = Site::new(3, -2);
        let expect: f64 = STEPS
            .iter()
            .map(|e| 0.25 * (b * env.omega(1, s + *e) - 0.5 * p.beta_n_sq()).exp())
            .sum();
        let got = partition_dp(&env, &p, 1, s).unwrap();
        assert_relative_eq!(got.value, expect, max_relative = 1e-14);
    }

    #[test]
    fn dp_matches_path_enumeration() {
        // All 4^4 paths of length 4, weights from pointwise lookups.
        let env = Environment::new(77, 4);
        let p = params(64, 0.8);
        let (b, b2) = (p.beta_n(), p.beta_n_sq());
        let mut total = 0.0;
        for code in 0..256usize {
            let mut c = code;
            let mut pos = Site::new(2, 1);
            let mut wgt = 1.0;
            for n in 1..=4u64 {
                pos = pos + STEPS[c % 4];
                c /= 4;
                wgt *= 0.25 * (b * env.omega(n, pos) - 0.5 * b2).exp();
            }
            total += wgt;
        }
        let got = partition_dp(&env, &p, 4, Site::new(2, 1)).unwrap();
        assert_relative_eq!(got.value, total, max_relative = 1e-13);
        let many = partition_dp_many(&env, &[params(64, 0.0), p], 4, Site::new(2, 1)).unwrap();
        assert_eq!(many[0].value, 1.0);
        assert_relative_eq!(many[1].value, total, max_relative = 1e-13);
    }

    #[test]
    fn dp_rejects_short_environment() {
        let env = Environment::new(1, 3);
        assert!(partition_dp(&env, &params(64, 0.3), 4, Site::ORIGIN).is_err());
    }

    #[test]
    fn second_moment_small_cases() {
        let p = params(100, 0.6);
        assert_relative_eq!(second_moment_exact(&p, 1).unwrap(), 1.0 + p.sigma_n_sq() / 4.0, max_relative = 1e-15);
        assert_eq!(second_moment_exact(&params(100, 0.0), 30).unwrap(), 1.0);
        assert_eq!(second_moment_exact(&p, 0).unwrap(), 1.0);
        // Two steps: E[(1+σ²1_{D_1=0})(1+σ²1_{D_2=0})] with D the difference walk.
        let s = p.sigma_n_sq();
        let expect = 1.0 + s * (0.25 + 9.0 / 64.0) + s * s * 0.25 * 0.25;
        assert_relative_eq!(second_moment_exact(&p, 2).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn second_moment_below_bound_at_64() {
        let p = params(64, 0.5);
        let m = second_moment_exact(&p, 64).unwrap();
        assert!(m <= 1.0 / (1.0 - p.sigma_n_sq() * p.r_n()));
    }

    #[test]
    fn psi_q2_equals_second_moment() {
        let p = params(1000, 0.7);
        let o = [Site::ORIGIN, Site::ORIGIN];
        assert_relative_eq!(psi_exact(&p, 2, 1, &o).unwrap(), 1.0 + p.sigma_n_sq() / 4.0, max_relative = 1e-14);
        for t in [1u64, 3, 10, 25] {
            let a = psi_exact(&p, 2, t, &o).unwrap();
            let b = second_moment_exact(&p, t).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
            assert_relative_eq!(moment_exact(&p, 2, t, &o).unwrap(), b, max_relative = 1e-10);
        }
    }

    #[test]
    fn transfer_trivial_cases() {
        let x = [Site::ORIGIN; 3];
        assert_eq!(psi_exact(&params(100, 0.0), 3, 4, &x).unwrap(), 1.0);
        assert_eq!(no_triple_moment_exact(&params(100, 0.5), 3, 0, &x).unwrap(), 1.0);
        let prob = no_triple_moment_exact(&params(100, 0.0), 3, 3, &x).unwrap();
        assert!(prob > 0.0 && prob < 1.0);
        assert!(psi_exact(&params(100, 0.5), 3, 3, &x[..2]).is_err());
    }

    #[test]
    fn no_triple_first_step_by_hand() {
        // From a common start, after one step: P(all distinct), P(exactly one pair), P(triple).
        let p = params(100, 0.5);
        let x = [Site::ORIGIN; 3];
        let s = p.sigma_n_sq();
        let (p_triple, p_pair) = (1.0 / 16.0, 3.0 * (1.0 / 4.0) * (3.0 / 4.0));
        let p_none = 1.0 - p_triple - p_pair;
        let no_triple = no_triple_moment_exact(&p, 3, 1, &x).unwrap();
        assert_relative_eq!(no_triple, p_none + p_pair * (1.0 + s), max_relative = 1e-14);
        let psi = psi_exact(&p, 3, 1, &x).unwrap();
        assert_relative_eq!(psi, p_none + p_pair * (1.0 + s) + p_triple * (1.0 + 3.0 * s), max_relative = 1e-14);
        let full = moment_exact(&p, 3, 1, &x).unwrap();
        assert_relative_eq!(full, p_none + p_pair * (1.0 + s) + p_triple * (1.0 + s).powi(3), max_relative = 1e-14);
    }

    #[test]
    fn chaos_oracle_small() {
        let p = params(500, 0.6);
        let o = [Site::ORIGIN, Site::ORIGIN];
        assert_relative_eq!(chaos_enumerate(&p, 2, 1, &o, None).unwrap(), 1.0 + p.sigma_n_sq() / 4.0, max_relative = 1e-14);
        for t in 1..=4u64 {
            let a = chaos_enumerate(&p, 2, t, &o, None).unwrap();
            let b = psi_exact(&p, 2, t, &o).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        let spread = [Site::new(0, 0), Site::new(1, 1), Site::new(-1, 1)];
        let a = chaos_enumerate(&p, 3, 3, &spread, None).unwrap();
        let b = psi_exact(&p, 3, 3, &spread).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn decomposition_matches_chaos_truncations() {
        let p = params(200, 0.7);
        let x = [Site::ORIGIN, Site::new(1, 1), Site::new(2, 0)];
        for m in 0..=2usize {
            let a = chaos_enumerate(&p, 3, 3, &x, Some(m)).unwrap();
            let b = decomposition_sum(&p, 3, 3, &x, Some(m)).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        assert_eq!(decomposition_sum(&p, 3, 3, &x, Some(0)).unwrap(), 1.0);
        let o = [Site::ORIGIN, Site::ORIGIN];
        let full = decomposition_sum(&p, 2, 4, &o, None).unwrap();
        assert_relative_eq!(full, psi_exact(&p, 2, 4, &o).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn oracle_size_guard() {
        let p = params(200, 0.5);
        assert!(matches!(
            chaos_enumerate(&p, 2, 9, &[Site::ORIGIN; 2], None),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn separated_walks_never_meet() {
        let p = params(200, 0.9);
        let x = [Site::ORIGIN, Site::new(20, 0)];
        assert_eq!(psi_exact(&p, 2, 5, &x).unwrap(), 1.0);
    }

    #[test]
    fn apriori_bound_holds_for_small_k() {
        let p = params(1 << 20, 0.5);
        for k in [1u64, 4, 16, 64] {
            let c = apriori_check(&p, k, 0.5).unwrap();
            assert!(c.pass, "{c:?}");
        }
        let c = apriori_check(&p, 1, 0.5).unwrap();
        assert_relative_eq!(c.moment, 1.0 + p.sigma_n_sq() * return_probability(1), max_relative = 1e-14);
    }

    #[test]
    fn capacity_guard_on_transfer() {
        let p = params(200, 0.5);
        let r = transfer_moment(&p, 3, 6, &[Site::ORIGIN; 3], CollisionWeight::Psi, 1000);
        assert!(matches!(r, Err(Error::Capacity { .. })));
    }

    #[test]
    fn profile_matches_pointwise() {
        let p = params(200, 0.6);
        let prof = second_moment_profile(&p, 20).unwrap();
        assert_eq!(prof.len(), 21);
        for t in [0u64, 1, 7, 20] {
            assert_relative_eq!(prof[t as usize], second_moment_exact(&p, t).unwrap(), max_relative = 1e-14);
        }
    }
}
