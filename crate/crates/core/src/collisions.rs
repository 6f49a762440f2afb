//! Monte Carlo over independent walks: pairwise collision counts, triple and
//! double-pair events, moment estimators and the Erdős–Taylor statistic.

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::rng::{par_map, sample_rng};
use crate::scaling::PolymerParams;
use crate::stats::{ks_distance, Cdf, McEstimate};

/// Coincidence structure of one configuration of particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CollisionProfile {
    /// Number of pairs `i < j` sharing a site.
    pub pairs: u64,
    /// Some site holds three or more particles.
    pub triple: bool,
    /// Two disjoint pairs are each coincident.
    pub quad: bool,
}

/// Pair count and triple / disjoint-double-pair detection for one time slice.
pub fn collision_profile<T: PartialEq>(positions: &[T]) -> CollisionProfile {
    let q = positions.len();
    let mut seen = vec![false; q];
    let mut prof = CollisionProfile::default();
    let mut paired_groups = 0;
    for i in 0..q {
        if seen[i] {
            continue;
        }
        let mut size = 1u64;
        for j in i + 1..q {
            if !seen[j] && positions[j] == positions[i] {
                seen[j] = true;
                size += 1;
            }
        }
        prof.pairs += size * (size - 1) / 2;
        if size >= 2 {
            paired_groups += 1;
        }
        if size >= 3 {
            prof.triple = true;
        }
        if size >= 4 {
            prof.quad = true;
        }
    }
    if paired_groups >= 2 {
        prof.quad = true;
    }
    prof
}

/// Collision record of `q` independent walks up to time `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollisionSample {
    pub q: usize,
    pub horizon: u64,
    /// `Σ_n 1{S_n^i = S_n^j}` for couples in lexicographic order.
    pub pair_counts: Vec<u64>,
    /// First time three walks share a site.
    pub triple_flag: Option<u64>,
    /// First time two disjoint couples are both coincident.
    pub quad_flag: Option<u64>,
}

impl CollisionSample {
    pub fn total_pairs(&self) -> u64 {
        self.pair_counts.iter().sum()
    }
}

/// Rotated coordinates packed as `a·2^32 + b` in wrapping arithmetic; equal
/// packings mean equal sites while `|a|, |b| < 2^31`.
#[inline]
fn pack(s: Site) -> u64 {
    let (a, b) = s.rotated();
    (a as u64).wrapping_shl(32).wrapping_add(b as u64)
}

const HI: u64 = 1 << 32;
/// Packed increments of `(a, b) ∈ {±1}²`.
const STEP: [u64; 4] = [
    HI.wrapping_add(1),
    HI.wrapping_sub(1),
    HI.wrapping_neg().wrapping_add(1),
    HI.wrapping_neg().wrapping_sub(1),
];

fn validate(q: usize, n: u64, starts: &[Site]) -> Result<()> {
    if q < 2 {
        return Err(Error::domain("q must be at least 2"));
    }
    if starts.len() != q {
        return Err(Error::invalid(format!("expected {q} start points, got {}", starts.len())));
    }
    if n >= 1 << 30 {
        return Err(Error::domain("horizon too large for packed positions"));
    }
    Ok(())
}

fn simulate<R: RngCore>(rng: &mut R, q: usize, n: u64, starts: &[Site]) -> CollisionSample {
    let mut pos: Vec<u64> = starts.iter().map(|s| pack(*s)).collect();
    let mut bits = vec![0u64; q];
    let mut counts = vec![0u64; q * (q - 1) / 2];
    let mut triple_flag = None;
    let mut quad_flag = None;
    for t in 1..=n {
        if (t - 1) % 32 == 0 {
            for b in bits.iter_mut() {
                *b = rng.next_u64();
            }
        }
        for (p, b) in pos.iter_mut().zip(bits.iter_mut()) {
            *p = p.wrapping_add(STEP[(*b & 3) as usize]);
            *b >>= 2;
        }
        let mut at_t = 0u64;
        let mut k = 0;
        for i in 0..q {
            for j in i + 1..q {
                let hit = (pos[i] == pos[j]) as u64;
                counts[k] += hit;
                at_t += hit;
                k += 1;
            }
        }
        if at_t >= 2 && (triple_flag.is_none() || quad_flag.is_none()) {
            let prof = collision_profile(&pos);
            if prof.triple && triple_flag.is_none() {
                triple_flag = Some(t);
            }
            if prof.quad && quad_flag.is_none() {
                quad_flag = Some(t);
            }
        }
    }
    CollisionSample {
        q,
        horizon: n,
        pair_counts: counts,
        triple_flag,
        quad_flag,
    }
}

/// One realisation of `q` walks from `starts` up to time `n`, on stream 0 of `seed`.
pub fn sample_collisions(q: usize, n: u64, seed: u64, starts: &[Site]) -> Result<CollisionSample> {
    sample_collisions_id(q, n, seed, 0, starts)
}

/// As [`sample_collisions`] on stream `id`.
pub fn sample_collisions_id(q: usize, n: u64, seed: u64, id: u64, starts: &[Site]) -> Result<CollisionSample> {
    validate(q, n, starts)?;
    Ok(simulate(&mut sample_rng(seed, id), q, n, starts))
}

/// Monte Carlo estimate of `E[W_N^q]` from walks started at the origin.
pub fn moment_mc(
    params: &PolymerParams,
    q: usize,
    n: u64,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<McEstimate> {
    moment_mc_from(params, q, n, samples, seed, threads, &vec![Site::ORIGIN; q])
}

/// `E_X[exp(β_N² Σ_{i<j} Σ_{n≤N} 1{S_n^i = S_n^j})]` by direct simulation.
pub fn moment_mc_from(
    params: &PolymerParams,
    q: usize,
    n: u64,
    samples: usize,
    seed: u64,
    threads: usize,
    starts: &[Site],
) -> Result<McEstimate> {
    validate(q, n, starts)?;
    let b2 = params.beta_n_sq();
    let xs = par_map(samples, threads, |id| {
        let s = simulate(&mut sample_rng(seed, id as u64), q, n, starts);
        (b2 * s.total_pairs() as f64).exp()
    });
    Ok(McEstimate::from_samples(&xs, seed, true))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoTripleEstimate {
    pub estimate: McEstimate,
    /// Nine or more walks share a start, so a triple occurs at time 1 almost surely.
    pub degenerate_start: bool,
    /// `log(estimate) / (binom(q,2) λ_{T,N}²)`, when defined.
    pub measured_exponent: Option<f64>,
}

/// `E_X[exp(β_N² Σ C_n) 1_{G_T}]` by direct simulation.
pub fn no_triple_moment_mc(
    params: &PolymerParams,
    q: usize,
    t: u64,
    samples: usize,
    seed: u64,
    starts: &[Site],
    threads: usize,
) -> Result<NoTripleEstimate> {
    validate(q, t, starts)?;
    let b2 = params.beta_n_sq();
    let xs = par_map(samples, threads, |id| {
        let s = simulate(&mut sample_rng(seed, id as u64), q, t, starts);
        if s.triple_flag.is_some() || s.quad_flag.is_some() {
            0.0
        } else {
            (b2 * s.total_pairs() as f64).exp()
        }
    });
    let estimate = McEstimate::from_samples(&xs, seed, true);
    let degenerate_start = starts
        .iter()
        .any(|s| starts.iter().filter(|o| *o == s).count() >= 9);
    let couples = (q * (q - 1) / 2) as f64;
    let measured_exponent = match params.lambda_tn_sq(t.max(1) as f64) {
        Ok(l) if t >= 2 && l > 0.0 && estimate.mean > 0.0 => Some(estimate.mean.ln() / (couples * l)),
        _ => None,
    };
    Ok(NoTripleEstimate {
        estimate,
        degenerate_start,
        measured_exponent,
    })
}

/// Packed half-unit increments of the difference walk: each rotated axis moves
/// by `-1, 0, 0, +1` for two bits.
const DIFF: [u64; 16] = {
    let axis: [i64; 4] = [-1, 0, 0, 1];
    let mut out = [0u64; 16];
    let mut k = 0;
    while k < 16 {
        let a = axis[k & 3];
        let b = axis[k >> 2];
        out[k] = (a as u64).wrapping_shl(32).wrapping_add(b as u64);
        k += 1;
    }
    out
};

/// Collisions of two independent walks from a common start up to time `n`,
/// simulated through the difference walk.
fn difference_collisions<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    let mut pos = 0u64;
    let mut count = 0u64;
    let mut left = n;
    while left > 0 {
        let mut bits = rng.next_u64();
        let chunk = left.min(16);
        for _ in 0..chunk {
            pos = pos.wrapping_add(DIFF[(bits & 15) as usize]);
            count += (pos == 0) as u64;
            bits >>= 4;
        }
        left -= chunk;
    }
    count
}

/// Samples of `(π / log N) Σ_{n≤N} 1{S_n^1 = S_n^2}`.
pub fn erdos_taylor_stat(n: u64, samples: usize, seed: u64, threads: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::domain("Erdős–Taylor statistic needs N >= 2"));
    }
    let scale = std::f64::consts::PI / (n as f64).ln();
    Ok(par_map(samples, threads, |id| {
        scale * difference_collisions(&mut sample_rng(seed, id as u64), n) as f64
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErdosTaylorSummary {
    pub n: u64,
    pub estimate: McEstimate,
    /// `π R_N / log N`.
    pub exact_mean: f64,
    pub ks_exp1: f64,
}

pub fn erdos_taylor_summary(n: u64, samples: usize, seed: u64, threads: usize) -> Result<ErdosTaylorSummary> {
    let xs = erdos_taylor_stat(n, samples, seed, threads)?;
    let exact_mean = std::f64::consts::PI * crate::kernel::mean_intersection(n) / (n as f64).ln();
    Ok(ErdosTaylorSummary {
        n,
        estimate: McEstimate::from_samples(&xs, seed, false),
        exact_mean,
        ks_exp1: ks_distance(&xs, Cdf::Exp1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::mean_intersection;
    use crate::polymer::{no_triple_moment_exact, second_moment_exact};

    #[test]
    fn profile_cases() {
        let p = collision_profile(&[1, 2, 3]);
        assert_eq!(p, CollisionProfile::default());
        let p = collision_profile(&[1, 1, 3]);
        assert_eq!((p.pairs, p.triple, p.quad), (1, false, false));
        let p = collision_profile(&[1, 1, 1]);
        assert_eq!((p.pairs, p.triple, p.quad), (3, true, false));
        let p = collision_profile(&[1, 2, 1, 2]);
        assert_eq!((p.pairs, p.triple, p.quad), (2, false, true));
        let p = collision_profile(&[5, 5, 5, 5]);
        assert_eq!((p.pairs, p.triple, p.quad), (6, true, true));
        let p = collision_profile(&[5, 5, 5, 7]);
        assert_eq!((p.pairs, p.triple, p.quad), (3, true, false));
    }

    #[test]
    fn packing_tracks_sites() {
        let s = Site::new(-3, 5);
        let mut p = pack(s);
        let (a, b) = s.rotated();
        for (k, (da, db)) in [(1, 1), (1, -1), (-1, 1), (-1, -1)].iter().enumerate() {
            p = p.wrapping_add(STEP[k]);
            assert_eq!(p, pack(Site::from_rotated(a + da, b + db)));
            p = pack(s);
        }
    }

    #[test]
    fn first_step_collision_rate() {
        let hits: u64 = (0..40_000u64)
            .map(|id| sample_collisions_id(2, 1, 3, id, &[Site::ORIGIN; 2]).unwrap().pair_counts[0])
            .sum();
        let f = hits as f64 / 40_000.0;
        let sd = (0.25f64 * 0.75 / 40_000.0).sqrt();
        assert!((f - 0.25).abs() < 4.0 * sd, "{f}");
    }

    #[test]
    fn separated_walks_do_not_meet() {
        let s = sample_collisions(3, 5, 1, &[Site::new(0, 0), Site::new(20, 0), Site::new(0, 20)]).unwrap();
        assert_eq!(s.pair_counts, vec![0, 0, 0]);
        assert!(s.triple_flag.is_none() && s.quad_flag.is_none());
    }

    #[test]
    fn flags_are_consistent() {
        let mut triples = 0;
        for id in 0..2000 {
            let s = sample_collisions_id(3, 20, 7, id, &[Site::ORIGIN; 3]).unwrap();
            assert!(s.quad_flag.is_none());
            if let Some(t) = s.triple_flag {
                triples += 1;
                // Replay the same stream and confirm the coincidence.
                let mut rng = sample_rng(7, id);
                let replay = simulate(&mut rng, 3, t, &[Site::ORIGIN; 3]);
                assert_eq!(replay.triple_flag, Some(t));
            }
            assert!(s.pair_counts.iter().all(|c| *c <= 20));
        }
        assert!(triples > 0);
        let mut quads = 0;
        for id in 0..2000 {
            let s = sample_collisions_id(4, 10, 8, id, &[Site::ORIGIN; 4]).unwrap();
            quads += s.quad_flag.is_some() as u32;
        }
        assert!(quads > 0);
    }

    #[test]
    fn zero_disorder_moment_is_one() {
        let p = PolymerParams::new(100, 0.0).unwrap();
        let m = moment_mc(&p, 3, 50, 200, 1, 1).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.stderr, 0.0);
    }

    #[test]
    fn second_moment_mc_matches_transfer() {
        let p = PolymerParams::new(256, 0.5).unwrap();
        let exact = second_moment_exact(&p, 64).unwrap();
        let m = moment_mc(&p, 2, 64, 40_000, 11, 1).unwrap();
        assert!(m.within(exact, 3.0), "{m:?} vs {exact}");
    }

    #[test]
    fn collision_count_mean_is_rn() {
        let n = 200;
        let xs: Vec<f64> = (0..20_000u64)
            .map(|id| sample_collisions_id(2, n, 5, id, &[Site::ORIGIN; 2]).unwrap().pair_counts[0] as f64)
            .collect();
        let e = McEstimate::from_samples(&xs, 5, false);
        assert!(e.within(mean_intersection(n), 3.0), "{e:?}");
    }

    #[test]
    fn no_triple_mc_matches_transfer() {
        let p = PolymerParams::new(100, 0.6).unwrap();
        let x = [Site::new(0, 0), Site::new(1, 1), Site::new(2, 0)];
        let exact = no_triple_moment_exact(&p, 3, 4, &x).unwrap();
        let mc = no_triple_moment_mc(&p, 3, 4, 40_000, 2, &x, 1).unwrap();
        assert!(mc.estimate.within(exact, 3.0), "{:?} vs {exact}", mc.estimate);
        let zero = no_triple_moment_mc(&p, 3, 0, 10, 2, &x, 1).unwrap();
        assert_eq!(zero.estimate.mean, 1.0);
        let degenerate = no_triple_moment_mc(&p, 9, 3, 100, 2, &[Site::ORIGIN; 9], 1).unwrap();
        assert!(degenerate.degenerate_start);
        assert_eq!(degenerate.estimate.mean, 0.0);
        let four = no_triple_moment_mc(&p, 4, 3, 1000, 2, &[Site::ORIGIN; 4], 1).unwrap();
        assert!(four.estimate.mean > 0.0);
    }

    #[test]
    fn moment_increases_with_disorder() {
        let lo = moment_mc(&PolymerParams::new(128, 0.2).unwrap(), 3, 128, 2000, 4, 1).unwrap();
        let hi = moment_mc(&PolymerParams::new(128, 0.5).unwrap(), 3, 128, 2000, 4, 1).unwrap();
        assert!(hi.mean >= lo.mean);
    }

    #[test]
    fn difference_walk_law() {
        // D_1 = 0 with probability 1/4 and D_2 = 0 with probability 9/64.
        let mut one = 0u64;
        let mut both = 0u64;
        let trials = 50_000u64;
        for id in 0..trials {
            let c1 = difference_collisions(&mut sample_rng(9, id), 1);
            one += c1;
            both += difference_collisions(&mut sample_rng(9, id), 2);
        }
        let p1 = one as f64 / trials as f64;
        assert!((p1 - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / trials as f64).sqrt());
        let m2 = both as f64 / trials as f64;
        assert!((m2 - (0.25 + 9.0 / 64.0)).abs() < 0.015);
    }

    #[test]
    fn erdos_taylor_mean_matches_exact() {
        let s = erdos_taylor_summary(1000, 5000, 3, 1).unwrap();
        assert!(s.estimate.within(s.exact_mean, 3.0), "{s:?}");
        assert!(erdos_taylor_stat(1, 10, 0, 1).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = PolymerParams::new(64, 0.5).unwrap();
        let a = moment_mc(&p, 3, 64, 500, 9, 1).unwrap();
        let b = moment_mc(&p, 3, 64, 500, 9, 3).unwrap();
        assert_eq!(a, b);
    }
}
