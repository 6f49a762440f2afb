//! The two-walk overlap weight `U_N(n)` and its renewal structure.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{return_probabilities, KernelTable};
use crate::polymer::second_moment_exact;
use crate::rng::{par_map, sample_rng};
use crate::scaling::PolymerParams;
use crate::stats::{wilson_interval, McEstimate, NeumaierSum};

/// Largest horizon accepted by [`build_un`]; the recursion is quadratic.
pub const MAX_UN_HORIZON: u64 = 1 << 17;

/// Largest horizon for [`spatial_un`].
pub const MAX_SPATIAL_HORIZON: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalTable {
    pub horizon: u64,
    /// `w(n) = σ_N² p_{2n}(0)`, with `w(0) = 0`.
    pub step_law: Vec<f64>,
    /// `U_N(n)` for `0 ≤ n ≤ M`.
    pub u_values: Vec<f64>,
    /// `Σ_{k≤n} U_N(k)`.
    pub partial_sums: Vec<f64>,
}

impl RenewalTable {
    pub fn u(&self, n: u64) -> f64 {
        self.u_values[n as usize]
    }
}

/// `U_N(n) = w(n) + Σ_{0<m<n} w(n-m) U_N(m)` for `n ≤ M`.
pub fn build_un(params: &PolymerParams, m: u64) -> Result<RenewalTable> {
    if m > params.n() {
        return Err(Error::domain(format!("horizon M = {m} exceeds N = {}", params.n())));
    }
    if m > MAX_UN_HORIZON {
        return Err(Error::Capacity {
            what: "renewal table horizon",
            required: m,
            limit: MAX_UN_HORIZON,
        });
    }
    let len = m as usize + 1;
    let sigma = params.sigma_n_sq();
    let ret = return_probabilities(len);
    let mut w = vec![0.0; len];
    for n in 1..len {
        w[n] = sigma * ret[n];
    }
    let mut u = vec![0.0; len];
    u[0] = 1.0;
    for n in 1..len {
        // Includes m = 0 through U(0) = 1.
        let mut acc = 0.0;
        for k in 0..n {
            acc += w[n - k] * u[k];
        }
        u[n] = acc;
    }
    let mut partial = Vec::with_capacity(len);
    let mut s = NeumaierSum::default();
    for v in &u {
        s.add(*v);
        partial.push(s.value());
    }
    Ok(RenewalTable {
        horizon: m,
        step_law: w,
        u_values: u,
        partial_sums: partial,
    })
}

/// `max_n |U(n) - w(n) - (w * U)(n)|` on `[1, M]`, with the convolution re-summed independently.
pub fn renewal_residual(table: &RenewalTable) -> f64 {
    let (w, u) = (&table.step_law, &table.u_values);
    let mut worst: f64 = 0.0;
    for n in 1..u.len() {
        let mut conv = NeumaierSum::default();
        for m in 1..n {
            conv.add(w[n - m] * u[m]);
        }
        worst = worst.max((u[n] - w[n] - conv.value()).abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialSumReport {
    pub m: u64,
    pub partial_sum: f64,
    pub second_moment: f64,
    pub rel_err: f64,
    pub pass: bool,
}

/// Compares `Σ_{n≤M} U_N(n)` with the transfer value of `E[W_M²]`.
pub fn check_partial_sum_identity(table: &RenewalTable, params: &PolymerParams, m: u64) -> Result<PartialSumReport> {
    if m > table.horizon {
        return Err(Error::domain(format!("M = {m} beyond table horizon {}", table.horizon)));
    }
    let partial_sum = table.partial_sums[m as usize];
    let second_moment = second_moment_exact(params, m)?;
    let rel_err = (partial_sum - second_moment).abs() / second_moment;
    Ok(PartialSumReport {
        m,
        partial_sum,
        second_moment,
        rel_err,
        pass: rel_err <= 1e-10,
    })
}

/// `ρ(n) = U_N(n) n log N (1 - β̂² log n / log N)² / β̂²`.
pub fn rho(table: &RenewalTable, params: &PolymerParams, n: u64) -> f64 {
    let b2 = params.beta_hat() * params.beta_hat();
    let ln = params.log_n();
    let damp = 1.0 - b2 * (n as f64).ln() / ln;
    table.u(n) * n as f64 * ln * damp * damp / b2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoRow {
    pub n: u64,
    pub u: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnBoundsReport {
    pub rows: Vec<RhoRow>,
    pub max_rho: f64,
    /// `ρ(n) ∈ [0.5, 2]` for every grid point `n ≥ 10³`.
    pub upper_band_pass: bool,
    /// `|ρ - 1|` does not grow along the grid points `n ≥ 10³`.
    pub tending_to_one: bool,
}

pub fn check_un_bounds(table: &RenewalTable, params: &PolymerParams, grid: &[u64]) -> Result<UnBoundsReport> {
    if params.beta_hat() == 0.0 {
        return Err(Error::domain("ρ(n) is undefined at β̂ = 0"));
    }
    let mut rows = Vec::new();
    for &n in grid {
        if n == 0 || n > table.horizon {
            return Err(Error::domain(format!("grid point {n} outside [1, {}]", table.horizon)));
        }
        rows.push(RhoRow {
            n,
            u: table.u(n),
            rho: rho(table, params, n),
        });
    }
    let upper: Vec<&RhoRow> = rows.iter().filter(|r| r.n >= 1000).collect();
    let upper_band_pass = upper.iter().all(|r| (0.5..=2.0).contains(&r.rho));
    let tending_to_one = upper
        .windows(2)
        .all(|w| (w[1].rho - 1.0).abs() <= (w[0].rho - 1.0).abs() + 1e-12);
    Ok(UnBoundsReport {
        max_rho: rows.iter().map(|r| r.rho).fold(0.0, f64::max),
        rows,
        upper_band_pass,
        tending_to_one,
    })
}

/// Spatial overlap weights `U_N(n, x)` for `n ≤ T`, stored as time slabs.
///
/// `U(0, x) = 1{x = 0}` and `U(n, x) = σ_N² Σ_{m<n} Σ_z U(m, z) p_{n-m}(x - z)²`.
pub fn spatial_un(params: &PolymerParams, t: u64) -> Result<Vec<Vec<f64>>> {
    if t > MAX_SPATIAL_HORIZON {
        return Err(Error::Capacity {
            what: "spatial U_N horizon",
            required: t,
            limit: MAX_SPATIAL_HORIZON,
        });
    }
    let kernel = KernelTable::build(t.max(1))?;
    let sigma = params.sigma_n_sq();
    let sq: Vec<Vec<f64>> = (0..=t).map(|k| kernel.slab(k).iter().map(|p| p * p).collect()).collect();
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    for n in 1..=t as usize {
        let w = n + 1;
        let mut slab = vec![0.0; w * w];
        for m in 0..n {
            let (um, km) = (&out[m], &sq[n - m]);
            let (wm, wk) = (m + 1, n - m + 1);
            for i1 in 0..wm {
                for j1 in 0..wm {
                    let v = um[i1 * wm + j1];
                    if v == 0.0 {
                        continue;
                    }
                    for i2 in 0..wk {
                        let dst = &mut slab[(i1 + i2) * w + j1..(i1 + i2) * w + j1 + wk];
                        let src = &km[i2 * wk..(i2 + 1) * wk];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += v * s;
                        }
                    }
                }
            }
        }
        for v in slab.iter_mut() {
            *v *= sigma;
        }
        out.push(slab);
    }
    Ok(out)
}

/// Renewal process with steps `P(T = n) = p_{2n}(0) / R_N` on `1..=N`.
#[derive(Debug, Clone)]
pub struct RenewalProcess {
    horizon: u64,
    /// `P(T = n)` at index `n`; index 0 is unused.
    step_probs: Vec<f64>,
    /// Weight `σ_N² R_N` carried by each renewal.
    mass: f64,
    dist: WeightedIndex<f64>,
}

impl RenewalProcess {
    pub fn new(params: &PolymerParams) -> Result<Self> {
        let n = params.n();
        let ret = return_probabilities(n as usize);
        let r: f64 = {
            let mut s = NeumaierSum::default();
            for v in &ret[1..] {
                s.add(*v);
            }
            s.value()
        };
        let mut step_probs = vec![0.0; n as usize + 1];
        for k in 1..=n as usize {
            step_probs[k] = ret[k] / r;
        }
        let dist = WeightedIndex::new(&ret[1..]).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(RenewalProcess {
            horizon: n,
            step_probs,
            mass: params.sigma_n_sq() * r,
            dist,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn step_prob(&self, n: u64) -> f64 {
        self.step_probs.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    fn draw<R: rand::Rng>(&self, rng: &mut R) -> u64 {
        self.dist.sample(rng) as u64 + 1
    }
}

/// `τ_k = T_1 + ... + T_k` on stream 0 of `seed`.
pub fn sample_tau(process: &RenewalProcess, k: u64, seed: u64) -> Result<u64> {
    sample_tau_id(process, k, seed, 0)
}

pub fn sample_tau_id(process: &RenewalProcess, k: u64, seed: u64, id: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let mut rng = sample_rng(seed, id);
    Ok((0..k).map(|_| process.draw(&mut rng)).sum())
}

/// Monte Carlo of `U_N(n) = Σ_k (σ_N² R_N)^k P(τ_k = n)` at each target `n`.
pub fn mc_reconstruct_un(
    process: &RenewalProcess,
    targets: &[u64],
    samples: usize,
    seed: u64,
    threads: usize,
) -> Vec<McEstimate> {
    let top = targets.iter().copied().max().unwrap_or(0);
    let per_sample = par_map(samples, threads, |id| {
        let mut rng = sample_rng(seed, id as u64);
        let mut hits = vec![0.0; targets.len()];
        let mut tau = 0u64;
        let mut weight = 1.0;
        while tau < top {
            tau += process.draw(&mut rng);
            weight *= process.mass;
            for (h, t) in hits.iter_mut().zip(targets) {
                if *t == tau {
                    *h = weight;
                }
            }
        }
        hits
    });
    (0..targets.len())
        .map(|i| {
            let xs: Vec<f64> = per_sample.iter().map(|h| h[i]).collect();
            McEstimate::from_samples(&xs, seed, false)
        })
        .collect()
}

/// Law of `τ_k` on `1..=n_max` for `k = 1..=k_max`; row `k-1`, column `n`.
pub fn tau_law(process: &RenewalProcess, n_max: u64, k_max: u64) -> Vec<Vec<f64>> {
    let len = n_max as usize + 1;
    let step: Vec<f64> = (0..len).map(|n| process.step_prob(n as u64)).collect();
    let mut out = vec![step.clone()];
    for _ in 1..k_max {
        let prev = out.last().expect("non-empty");
        let mut next = vec![0.0; len];
        for n in 1..len {
            let mut s = 0.0;
            for m in 1..n {
                s += prev[m] * step[n - m];
            }
            next[n] = s;
        }
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DickmanReport {
    /// `max P(τ_k = n) / (k P(T = n) P(T ≤ n)^{k-1})`.
    pub measured_c: f64,
    pub argmax_n: u64,
    pub argmax_k: u64,
    pub threshold: f64,
    pub pass: bool,
}

fn dickman_ratio(process: &RenewalProcess, cdf: &[f64], n: u64, k: u64, p: f64) -> f64 {
    let denom = k as f64 * process.step_prob(n) * cdf[n as usize].powi(k as i32 - 1);
    p / denom
}

fn step_cdf(process: &RenewalProcess, n_max: u64) -> Vec<f64> {
    let mut cdf = vec![0.0; n_max as usize + 1];
    for n in 1..=n_max as usize {
        cdf[n] = cdf[n - 1] + process.step_prob(n as u64);
    }
    cdf
}

/// The Dickman-type constant computed from the exact law of `τ_k`.
pub fn dickman_exact(process: &RenewalProcess, n_max: u64, k_max: u64, threshold: f64) -> DickmanReport {
    let n_max = n_max.min(process.horizon);
    let law = tau_law(process, n_max, k_max);
    let cdf = step_cdf(process, n_max);
    let mut best = (0.0, 0, 0);
    for (ki, row) in law.iter().enumerate() {
        let k = ki as u64 + 1;
        for n in k..=n_max {
            let r = dickman_ratio(process, &cdf, n, k, row[n as usize]);
            if r > best.0 {
                best = (r, n, k);
            }
        }
    }
    DickmanReport {
        measured_c: best.0,
        argmax_n: best.1,
        argmax_k: best.2,
        threshold,
        pass: best.0.is_finite() && best.0 <= threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalDickman {
    /// Largest ratio using the empirical frequency.
    pub point: f64,
    /// Largest ratio using the Wilson upper limit of the frequency.
    pub upper: f64,
    pub samples: usize,
}

/// Frequencies of `τ_k = n` from simulated renewal sequences; cells with fewer
/// than `min_count` hits are skipped in the point estimate.
pub fn dickman_empirical(
    process: &RenewalProcess,
    n_max: u64,
    k_max: u64,
    samples: usize,
    seed: u64,
    threads: usize,
    min_count: u64,
) -> EmpiricalDickman {
    let n_max = n_max.min(process.horizon);
    let width = n_max as usize + 1;
    let chunks = 64.min(samples.max(1));
    let per_chunk = par_map(chunks, threads, |c| {
        let mut counts = vec![0u64; k_max as usize * width];
        let lo = c * samples / chunks;
        let hi = (c + 1) * samples / chunks;
        for id in lo..hi {
            let mut rng = sample_rng(seed, id as u64);
            let mut tau = 0u64;
            for k in 0..k_max as usize {
                tau += process.draw(&mut rng);
                if tau > n_max {
                    break;
                }
                counts[k * width + tau as usize] += 1;
            }
        }
        counts
    });
    let mut counts = vec![0u64; k_max as usize * width];
    for chunk in &per_chunk {
        for (a, b) in counts.iter_mut().zip(chunk) {
            *a += b;
        }
    }
    let cdf = step_cdf(process, n_max);
    let (mut point, mut upper) = (0.0f64, 0.0f64);
    for k in 1..=k_max {
        for n in k..=n_max {
            let c = counts[(k as usize - 1) * width + n as usize];
            if c >= min_count {
                let f = c as f64 / samples as f64;
                point = point.max(dickman_ratio(process, &cdf, n, k, f));
                let (_, hi) = wilson_interval(c, samples as u64, 3.0);
                upper = upper.max(dickman_ratio(process, &cdf, n, k, hi));
            }
        }
    }
    EmpiricalDickman { point, upper, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_squared;
    use approx::assert_relative_eq;

    fn params(n: u64, b: f64) -> PolymerParams {
        PolymerParams::new(n, b).unwrap()
    }

    #[test]
    fn hand_expanded_values() {
        let p = params(1000, 0.6);
        let s = p.sigma_n_sq();
        let t = build_un(&p, 10).unwrap();
        assert_eq!(t.u(0), 1.0);
        assert_relative_eq!(t.u(1), s / 4.0, max_relative = 1e-15);
        assert_relative_eq!(t.u(2), s * 9.0 / 64.0 + s * s / 16.0, max_relative = 1e-15);
        for n in 1..=10 {
            assert!(t.u(n) >= t.step_law[n as usize]);
        }
        let zero = build_un(&params(1000, 0.0), 10).unwrap();
        assert!(zero.u_values[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn domain_and_capacity() {
        assert!(matches!(build_un(&params(10, 0.5), 11), Err(Error::Domain(_))));
        assert!(matches!(
            build_un(&params(1 << 20, 0.5), MAX_UN_HORIZON + 1),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn residual_is_tiny() {
        let t = build_un(&params(5000, 0.8), 2000).unwrap();
        assert!(renewal_residual(&t) < 1e-12);
    }

    #[test]
    fn partial_sums_match_transfer() {
        for m in [0u64, 1, 8, 40] {
            let p = params(256, 0.5);
            let t = build_un(&p, m.max(1)).unwrap();
            let r = check_partial_sum_identity(&t, &p, m).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let p = params(256, 0.5);
        let t = build_un(&p, 1).unwrap();
        let r = check_partial_sum_identity(&t, &p, 1).unwrap();
        assert_relative_eq!(r.partial_sum, 1.0 + p.sigma_n_sq() / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn rho_first_term() {
        let p = params(1_000_000, 0.5);
        let t = build_un(&p, 10).unwrap();
        let direct = p.sigma_n_sq() * 0.25 * p.log_n() / 0.25;
        assert_relative_eq!(rho(&t, &p, 1), direct, max_relative = 1e-14);
        assert!((rho(&t, &p, 1) - std::f64::consts::PI / 4.0).abs() < 0.2);
    }

    #[test]
    fn spatial_marginal_is_un() {
        let p = params(500, 0.7);
        let s = spatial_un(&p, 12).unwrap();
        let t = build_un(&p, 12).unwrap();
        for n in 0..=12u64 {
            let total: f64 = s[n as usize].iter().sum();
            assert_relative_eq!(total, t.u(n), max_relative = 1e-10);
        }
        assert!(spatial_un(&p, MAX_SPATIAL_HORIZON + 1).is_err());
    }

    #[test]
    fn first_step_law() {
        let p = params(50, 0.5);
        let proc = RenewalProcess::new(&p).unwrap();
        let total: f64 = (1..=50).map(|n| proc.step_prob(n)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        let draws = 100_000u64;
        let mut counts = vec![0u64; 5];
        for id in 0..draws {
            let t = sample_tau_id(&proc, 1, 4, id).unwrap();
            counts[(t.min(5) - 1) as usize] += 1;
        }
        let mut expected: Vec<f64> = (1..5).map(|n| proc.step_prob(n) * draws as f64).collect();
        expected.push(draws as f64 - expected.iter().sum::<f64>());
        // 4 degrees of freedom: the 0.1% quantile is 18.47.
        assert!(chi_squared(&counts, &expected) < 18.47);
        assert!(sample_tau(&proc, 0, 1).is_err());
    }

    #[test]
    fn tau_law_sums_to_one_on_full_range() {
        let p = params(30, 0.5);
        let proc = RenewalProcess::new(&p).unwrap();
        let law = tau_law(&proc, 60, 2);
        let s: f64 = law[1].iter().sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn mc_reconstruction() {
        let p = params(1000, 0.5);
        let proc = RenewalProcess::new(&p).unwrap();
        let t = build_un(&p, 100).unwrap();
        let est = mc_reconstruct_un(&proc, &[5, 20, 100], 100_000, 6, 1);
        for (e, n) in est.iter().zip([5u64, 20, 100]) {
            assert!(e.within(t.u(n), 3.0), "n={n}: {e:?} vs {}", t.u(n));
        }
    }

    #[test]
    fn dickman_constant_is_finite() {
        let p = params(1000, 0.5);
        let proc = RenewalProcess::new(&p).unwrap();
        let exact = dickman_exact(&proc, 300, 10, 10.0);
        assert!(exact.measured_c.is_finite() && exact.measured_c >= 1.0 - 1e-12);
        let emp = dickman_empirical(&proc, 300, 10, 20_000, 1, 1, 50);
        assert!(emp.point.is_finite() && emp.upper >= emp.point);
    }
}
