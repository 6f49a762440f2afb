//! Discrete Khas'minskii bounds: a walk against a fixed nearest-neighbour path,
//! and general finite Markov chains, each checked against exact backward transfer.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Site, STEPS};
use crate::rng::{par_map, sample_rng};

/// Lattice window covering every start point that can meet the path within `k` steps.
struct Window {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
}

impl Window {
    fn around(z: &[Site], k: usize) -> Self {
        let pad = k as i64 + 1;
        let x0 = z.iter().map(|s| s.x).min().unwrap_or(0) - pad;
        let x1 = z.iter().map(|s| s.x).max().unwrap_or(0) + pad;
        let y0 = z.iter().map(|s| s.y).min().unwrap_or(0) - pad;
        let y1 = z.iter().map(|s| s.y).max().unwrap_or(0) + pad;
        Window {
            x0,
            y0,
            w: (x1 - x0 + 1) as usize,
            h: (y1 - y0 + 1) as usize,
        }
    }

    fn index(&self, s: Site) -> Option<usize> {
        let (dx, dy) = (s.x - self.x0, s.y - self.y0);
        if dx < 0 || dy < 0 || dx as usize >= self.w || dy as usize >= self.h {
            None
        } else {
            Some(dy as usize * self.w + dx as usize)
        }
    }

    fn site(&self, i: usize) -> Site {
        Site::new(self.x0 + (i % self.w) as i64, self.y0 + (i / self.w) as i64)
    }

    fn len(&self) -> usize {
        self.w * self.h
    }
}

fn validate_path(z: &[Site], k: usize) -> Result<()> {
    if z.len() != k + 1 {
        return Err(Error::invalid(format!("path must list Z_0..Z_{k}, got {} points", z.len())));
    }
    for (n, w) in z.windows(2).enumerate() {
        if !w[0].is_neighbor(w[1]) {
            return Err(Error::invalid(format!("path step {} -> {} at n = {} is not nearest-neighbour", w[0], w[1], n + 1)));
        }
    }
    Ok(())
}

/// `sup_x E_x[Σ_{n=1}^{k-j} 1{S_n = Z_{j+n}}]` for every shift `j = 0..k`.
fn shifted_hit_sups(z: &[Site], k: usize) -> Vec<f64> {
    let win = Window::around(z, k);
    let mut v = vec![0.0; win.len()];
    let mut next = vec![0.0; win.len()];
    let mut sups = vec![0.0; k + 1];
    for j in (0..k).rev() {
        let target = z[j + 1];
        for i in 0..win.len() {
            let x = win.site(i);
            let mut acc = 0.0;
            for e in STEPS {
                let y = x + e;
                let hit = if y == target { 1.0 } else { 0.0 };
                let rest = win.index(y).map_or(0.0, |iy| v[iy]);
                acc += 0.25 * (hit + rest);
            }
            next[i] = acc;
        }
        std::mem::swap(&mut v, &mut next);
        sups[j] = v.iter().copied().fold(0.0, f64::max);
    }
    sups
}

/// `η = (e^{κ²} - 1) sup_x E_x[Σ_{n=1}^k 1{S_n = Z_n}]` for the path `Z_0..Z_k`.
pub fn eta_mod_khas(kappa_sq: f64, k: usize, z: &[Site]) -> Result<f64> {
    if kappa_sq < 0.0 {
        return Err(Error::domain("κ² must be non-negative"));
    }
    validate_path(z, k)?;
    Ok(kappa_sq.exp_m1() * shifted_hit_sups(z, k)[0])
}

/// `sup_x E_x[exp(κ² Σ_{n=n0}^k 1{S_n = Z_n})]` for `n0 ∈ {0, 1}`.
fn mod_khas_moment(kappa_sq: f64, k: usize, z: &[Site], from_zero: bool) -> f64 {
    let win = Window::around(z, k);
    let gain = kappa_sq.exp();
    let mut m = vec![1.0; win.len()];
    let mut next = vec![0.0; win.len()];
    for j in (0..k).rev() {
        let target = z[j + 1];
        for i in 0..win.len() {
            let x = win.site(i);
            let mut acc = 0.0;
            for e in STEPS {
                let y = x + e;
                let g = if y == target { gain } else { 1.0 };
                acc += 0.25 * g * win.index(y).map_or(1.0, |iy| m[iy]);
            }
            next[i] = acc;
        }
        std::mem::swap(&mut m, &mut next);
    }
    (0..win.len())
        .map(|i| {
            let at_start = from_zero && win.site(i) == z[0];
            m[i] * if at_start { gain } else { 1.0 }
        })
        .fold(1.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModKhasReport {
    pub k: usize,
    pub kappa_sq: f64,
    /// `η` for the path as given.
    pub eta: f64,
    /// `η` with the supremum also taken over time shifts of the path; this is
    /// the quantity the bound needs for a single fixed path.
    pub eta_shifted: f64,
    /// `sup_x E_x[exp(κ² Σ_{n=1}^k 1{S_n = Z_n})]`.
    pub moment: f64,
    /// Same with the sum starting at `n = 0`.
    pub moment_from_zero: f64,
    pub bound: f64,
    pub applicable: bool,
    pub pass: bool,
    /// The `n = 0` form exceeds the bound.
    pub from_zero_exceeds: bool,
}

pub fn check_mod_khas(kappa_sq: f64, k: usize, z: &[Site]) -> Result<ModKhasReport> {
    if kappa_sq < 0.0 {
        return Err(Error::domain("κ² must be non-negative"));
    }
    validate_path(z, k)?;
    let sups = shifted_hit_sups(z, k);
    let lam = kappa_sq.exp_m1();
    let eta = lam * sups[0];
    let eta_shifted = lam * sups.iter().copied().fold(0.0, f64::max);
    let moment = mod_khas_moment(kappa_sq, k, z, false);
    let moment_from_zero = mod_khas_moment(kappa_sq, k, z, true);
    let applicable = eta_shifted < 1.0;
    let bound = if applicable { 1.0 / (1.0 - eta_shifted) } else { f64::INFINITY };
    Ok(ModKhasReport {
        k,
        kappa_sq,
        eta,
        eta_shifted,
        moment,
        moment_from_zero,
        bound,
        applicable,
        pass: !applicable || moment <= bound * (1.0 + 1e-12),
        from_zero_exceeds: applicable && moment_from_zero > bound * (1.0 + 1e-12),
    })
}

/// A finite Markov chain with a non-negative potential, in sparse-row form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSpec {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub f: Vec<f64>,
    pub k: usize,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if n == 0 || self.f.len() != n {
            return Err(Error::invalid("chain needs one row and one potential value per state"));
        }
        for (x, row) in self.rows.iter().enumerate() {
            let s: f64 = row.iter().map(|(_, p)| p).sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|(y, p)| *y >= n || *p < 0.0) {
                return Err(Error::invalid(format!("row {x} is not a probability vector")));
            }
        }
        if self.f.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("potential must be non-negative"));
        }
        Ok(())
    }

    /// `sup_x E_x[Σ_{n=1}^k g(Y_n)]`.
    pub fn sup_additive(&self, g: &[f64]) -> f64 {
        let n = self.rows.len();
        let mut v = vec![0.0; n];
        let mut next = vec![0.0; n];
        for _ in 0..self.k {
            for (x, row) in self.rows.iter().enumerate() {
                next[x] = row.iter().map(|(y, p)| p * (g[*y] + v[*y])).sum();
            }
            std::mem::swap(&mut v, &mut next);
        }
        v.into_iter().fold(0.0, f64::max)
    }

    /// `sup_x E_x[exp(Σ_{n=1}^k f(Y_n))]`.
    pub fn sup_exp_moment(&self) -> f64 {
        let n = self.rows.len();
        let gain: Vec<f64> = self.f.iter().map(|v| v.exp()).collect();
        let mut m = vec![1.0; n];
        let mut next = vec![0.0; n];
        for _ in 0..self.k {
            for (x, row) in self.rows.iter().enumerate() {
                next[x] = row.iter().map(|(y, p)| p * gain[*y] * m[*y]).sum();
            }
            std::mem::swap(&mut m, &mut next);
        }
        m.into_iter().fold(1.0, f64::max)
    }

    pub fn eta0(&self) -> f64 {
        let g: Vec<f64> = self.f.iter().map(|v| v.exp_m1()).collect();
        self.sup_additive(&g)
    }

    pub fn eta1(&self) -> f64 {
        self.sup_additive(&self.f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KhasMode {
    Theorem,
    Corollary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KhasReport {
    pub mode: KhasMode,
    pub eta: f64,
    pub moment: f64,
    /// `1/(1-η₀)` for the theorem; `1/(1 - e η₁)` for the corollary.
    pub bound: f64,
    pub applicable: bool,
    pub pass: bool,
    /// Corollary only: `1/(1-η₁)` as displayed, and whether the moment exceeds it.
    pub stated_bound: Option<f64>,
    pub stated_violation: bool,
}

pub fn check_discrete_khas(spec: &ChainSpec, mode: KhasMode) -> Result<KhasReport> {
    spec.validate()?;
    let moment = spec.sup_exp_moment();
    let rep = match mode {
        KhasMode::Theorem => {
            let eta = spec.eta0();
            let applicable = eta < 1.0;
            let bound = if applicable { 1.0 / (1.0 - eta) } else { f64::INFINITY };
            KhasReport {
                mode,
                eta,
                moment,
                bound,
                applicable,
                pass: !applicable || moment <= bound * (1.0 + 1e-12),
                stated_bound: None,
                stated_violation: false,
            }
        }
        KhasMode::Corollary => {
            if spec.f.iter().any(|v| *v > 1.0) {
                return Err(Error::domain("corollary mode needs f <= 1"));
            }
            let eta = spec.eta1();
            let e_eta = std::f64::consts::E * eta;
            let applicable = e_eta < 1.0;
            let bound = if applicable { 1.0 / (1.0 - e_eta) } else { f64::INFINITY };
            let stated = if eta < 1.0 { 1.0 / (1.0 - eta) } else { f64::INFINITY };
            KhasReport {
                mode,
                eta,
                moment,
                bound,
                applicable,
                pass: !applicable || moment <= bound * (1.0 + 1e-12),
                stated_bound: Some(stated),
                stated_violation: eta < 1.0 && moment > stated * (1.0 + 1e-12),
            }
        }
    };
    Ok(rep)
}

/// Simple random walk on the torus of side `2k + 3` with `f = κ² 1{x = 0}`.
pub fn torus_chain(k: usize, kappa_sq: f64) -> ChainSpec {
    let side = 2 * k + 3;
    let idx = |x: usize, y: usize| y * side + x;
    let mut rows = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            rows.push(vec![
                (idx((x + 1) % side, y), 0.25),
                (idx((x + side - 1) % side, y), 0.25),
                (idx(x, (y + 1) % side), 0.25),
                (idx(x, (y + side - 1) % side), 0.25),
            ]);
        }
    }
    let mut f = vec![0.0; side * side];
    f[0] = kappa_sq;
    ChainSpec { rows, f, k }
}

/// A random sparse chain whose potential is scaled so that `η₀` equals `eta_target`.
pub fn random_chain<R: Rng>(rng: &mut R, eta_target: f64) -> ChainSpec {
    let n = rng.random_range(2..=30usize);
    let k = rng.random_range(1..=20usize);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let nnz = rng.random_range(1..=n.min(5));
        let mut targets: Vec<usize> = (0..n).collect();
        for i in 0..nnz {
            let j = rng.random_range(i..n);
            targets.swap(i, j);
        }
        let weights: Vec<f64> = (0..nnz).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = weights.iter().sum();
        let mut row: Vec<(usize, f64)> = targets[..nnz].iter().zip(&weights).map(|(t, w)| (*t, w / s)).collect();
        // Force the row to sum to one exactly.
        let rest: f64 = row[1..].iter().map(|(_, p)| p).sum();
        row[0].1 = 1.0 - rest;
        rows.push(row);
    }
    let mut f: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { rng.random::<f64>() } else { 0.0 })
        .collect();
    if f.iter().all(|v| *v == 0.0) {
        f[0] = 1.0;
    }
    let mut base = ChainSpec { rows, f, k };
    if base.eta0() == 0.0 {
        // The potential sits on states no walk enters; spread it everywhere.
        base.f.iter_mut().for_each(|v| *v += 0.5);
    }
    scale_to_eta0(base, eta_target)
}

/// Rescales the potential so that `η₀` hits `eta_target` (when reachable).
pub fn scale_to_eta0(mut spec: ChainSpec, eta_target: f64) -> ChainSpec {
    let shape = spec.f.clone();
    let eta_at = |spec: &mut ChainSpec, s: f64| {
        spec.f = shape.iter().map(|v| v * s).collect();
        spec.eta0()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while eta_at(&mut spec, hi) < eta_target && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eta_at(&mut spec, mid) < eta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eta_at(&mut spec, lo);
    spec
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KhasSuiteReport {
    pub trials: usize,
    pub applicable: usize,
    pub failures: usize,
    /// Largest `moment / bound` over applicable trials.
    pub max_ratio: f64,
    pub max_eta: f64,
    /// Descriptive counts: corollary display or the `n = 0` form exceeded.
    pub descriptive_exceedances: usize,
}

impl KhasSuiteReport {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

fn summarize(results: &[(bool, bool, f64, f64, bool)]) -> KhasSuiteReport {
    KhasSuiteReport {
        trials: results.len(),
        applicable: results.iter().filter(|r| r.0).count(),
        failures: results.iter().filter(|r| !r.1).count(),
        max_ratio: results.iter().filter(|r| r.0).map(|r| r.2).fold(0.0, f64::max),
        max_eta: results.iter().map(|r| r.3).fold(0.0, f64::max),
        descriptive_exceedances: results.iter().filter(|r| r.4).count(),
    }
}

/// Theorem-mode checks on `trials` random chains with `η₀` drawn from `(0, 0.95)`.
pub fn chain_suite(trials: usize, seed: u64, threads: usize) -> Result<KhasSuiteReport> {
    let out = par_map(trials, threads, |id| -> Result<_> {
        let mut rng = sample_rng(seed, id as u64);
        let target = 0.01 + 0.94 * rng.random::<f64>();
        let spec = random_chain(&mut rng, target);
        let r = check_discrete_khas(&spec, KhasMode::Theorem)?;
        Ok((r.applicable, r.pass, r.moment / r.bound, r.eta, false))
    });
    let out: Vec<_> = out.into_iter().collect::<Result<_>>()?;
    Ok(summarize(&out))
}

/// Corollary-mode checks on random chains scaled to `e η₁ ∈ (0, 0.95)`.
pub fn corollary_suite(trials: usize, seed: u64, threads: usize) -> Result<KhasSuiteReport> {
    let out = par_map(trials, threads, |id| -> Result<_> {
        let mut rng = sample_rng(seed, id as u64);
        let target = 0.01 + 0.94 * rng.random::<f64>();
        let mut spec = random_chain(&mut rng, 0.5);
        let eta1 = spec.eta1();
        let s = (target / std::f64::consts::E / eta1).min(1.0 / spec.f.iter().copied().fold(0.0, f64::max));
        spec.f.iter_mut().for_each(|v| *v *= s);
        let r = check_discrete_khas(&spec, KhasMode::Corollary)?;
        Ok((r.applicable, r.pass, r.moment / r.bound, r.eta, r.stated_violation))
    });
    let out: Vec<_> = out.into_iter().collect::<Result<_>>()?;
    Ok(summarize(&out))
}

/// A random adversarial path of length `k`: a walk, a back-and-forth, or a near-straight line.
pub fn adversarial_path<R: Rng>(rng: &mut R, k: usize) -> Vec<Site> {
    let mut z = vec![Site::ORIGIN];
    let kind = rng.random_range(0..3);
    let a = STEPS[rng.random_range(0..4)];
    for n in 1..=k {
        let last = z[n - 1];
        let e = match kind {
            // A walk.
            0 => STEPS[rng.random_range(0..4)],
            // Back and forth across one edge.
            1 => {
                if n % 2 == 1 {
                    a
                } else {
                    -a
                }
            }
            // A straight line with occasional turns.
            _ => {
                if rng.random::<f64>() < 0.2 {
                    STEPS[rng.random_range(0..4)]
                } else {
                    a
                }
            }
        };
        z.push(last + e);
    }
    z
}

/// Walk-versus-path checks: `paths` random paths for each `k`, with `κ²` chosen so that `η` is uniform in `(0, 0.95)`.
pub fn path_suite(ks: &[usize], paths: usize, seed: u64, threads: usize) -> Result<KhasSuiteReport> {
    let jobs: Vec<(usize, usize)> = ks.iter().flat_map(|k| (0..paths).map(move |p| (*k, p))).collect();
    let out = par_map(jobs.len(), threads, |id| -> Result<_> {
        let (k, _) = jobs[id];
        let mut rng = sample_rng(seed, id as u64);
        let z = adversarial_path(&mut rng, k);
        let sups = shifted_hit_sups(&z, k);
        let s = sups.iter().copied().fold(0.0, f64::max);
        let target = 0.01 + 0.94 * rng.random::<f64>();
        let kappa_sq = (target / s).ln_1p();
        let r = check_mod_khas(kappa_sq, k, &z)?;
        Ok((r.applicable, r.pass, r.moment / r.bound, r.eta_shifted, r.from_zero_exceeds))
    });
    let out: Vec<_> = out.into_iter().collect::<Result<_>>()?;
    Ok(summarize(&out))
}
