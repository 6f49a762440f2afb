//! The acceptance battery: ten criteria, each producing one pass/fail line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gaussian_polymer::collisions::{erdos_taylor_summary, moment_mc};
use gaussian_polymer::diagrams::{check_induction_suite, check_suite, Indicator};
use gaussian_polymer::kernel::check_pnstar_streaming;
use gaussian_polymer::khasminskii::{chain_suite, check_discrete_khas, corollary_suite, path_suite, torus_chain, KhasMode};
use gaussian_polymer::polymer::{
    chaos_enumerate, decomposition_sum, no_triple_moment_exact, psi_exact, second_moment_exact,
};
use gaussian_polymer::renewal::{build_un, check_partial_sum_identity};
use gaussian_polymer::rng::hash_words;
use gaussian_polymer::{PolymerParams, Site};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{asymptotic_ratio, environment_samples, martingale_stats, pairs, second_moment_rows, Check, Outcome};
use crate::manifest::{data_path, manifest_path, run_experiment};
use crate::output::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} [{status}] {}: {}", self.id, self.title, self.detail)
    }
}

/// Shared settings for a battery run.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub threads: usize,
    /// Scratch space for the reproducibility criterion.
    pub work_dir: PathBuf,
}

impl Context {
    fn seed_for(&self, id: u8) -> u64 {
        hash_words(&[self.seed, id as u64])
    }
}

fn result(id: u8, title: &'static str, pass: bool, detail: String) -> CriterionResult {
    CriterionResult { id, title, pass, detail }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub const TITLES: [&str; 10] = [
    "kernel bound and monotone a_n, b_n",
    "renewal partial-sum identity",
    "second-moment bound and asymptotic ratio",
    "chaos oracle, decomposition, no-triple",
    "moment convergence",
    "Erdos-Taylor statistic",
    "diagram suite",
    "Khas'minskii suite",
    "martingale and Gaussian diagnostics",
    "reproducibility",
];

pub fn criterion_1(_ctx: &Context) -> Result<CriterionResult> {
    let start = Instant::now();
    let rep = check_pnstar_streaming(4096, 2000)?;
    let secs = start.elapsed().as_secs_f64();
    let pass = rep.first_violation.is_none()
        && rep.first_a_decrease.is_none()
        && rep.first_b_decrease.is_none()
        && secs < 60.0;
    let max_ratio = rep.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(result(
        1,
        TITLES[0],
        pass,
        format!(
            "n <= 4096 violations: {:?}; max p*·πn/2 = {max_ratio:.6}; a/b decreases below 2000: {:?}/{:?}; under 60 s: {}",
            rep.first_violation,
            rep.first_a_decrease,
            rep.first_b_decrease,
            secs < 60.0
        ),
    ))
}

pub fn criterion_2(_ctx: &Context) -> Result<CriterionResult> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for m in [1u64, 8, 32, 128] {
        for n in [m, 10 * m] {
            for b in [0.3, 0.5, 0.8] {
                let p = PolymerParams::new(n, b)?;
                let table = build_un(&p, m)?;
                let rep = check_partial_sum_identity(&table, &p, m)?;
                worst = worst.max(rep.rel_err);
                cases += 1;
            }
        }
    }
    Ok(result(2, TITLES[1], worst <= 1e-10, format!("{cases} cases, max rel err {worst:.3e} (tol 1e-10)")))
}

pub fn criterion_3(_ctx: &Context) -> Result<CriterionResult> {
    let mut violations = 0;
    let mut checked = 0;
    for n in [128u64, 1000, 1_000_000] {
        for b in [0.3, 0.5, 0.8] {
            let p = PolymerParams::new(n, b)?;
            let t = second_moment_rows(&p, 128)?;
            for row in &t.rows {
                if let Cell::Float(s) = row[2] {
                    if s < 1.0 {
                        checked += 1;
                    }
                }
                if row[4] == Cell::Bool(false) {
                    violations += 1;
                }
            }
        }
    }
    let mut ratios = Vec::new();
    for big_n in [1000u64, 10_000, 100_000] {
        for b in [0.3, 0.5, 0.8] {
            let p = PolymerParams::new(big_n, b)?;
            ratios.push((big_n, b, asymptotic_ratio(&p, 1000)?));
        }
    }
    let in_band = ratios.iter().all(|r| (0.6..=1.4).contains(&r.2));
    let shown: Vec<String> = ratios.iter().map(|(n, b, r)| format!("N={n},b={b}:{r:.4}")).collect();
    Ok(result(
        3,
        TITLES[2],
        violations == 0 && in_band,
        format!(
            "{violations} bound violations over {checked} applicable (n, N, b); ratio at n=1000 [{}]",
            shown.join(" ")
        ),
    ))
}

pub fn criterion_4(_ctx: &Context) -> Result<CriterionResult> {
    let mut e_chaos = 0.0f64;
    let mut e_dec = 0.0f64;
    let mut triple_ok = true;
    let mut cases = 0;
    let spread2 = [Site::ORIGIN, Site::new(1, 1)];
    for b in [0.3, 0.8] {
        let p = PolymerParams::new(100, b)?;
        for x in [&[Site::ORIGIN; 2][..], &spread2[..]] {
            for t in 1..=5 {
                let psi = psi_exact(&p, 2, t, x)?;
                e_chaos = e_chaos.max(rel_err(chaos_enumerate(&p, 2, t, x, None)?, psi));
                for m in 1..=2 {
                    let c = chaos_enumerate(&p, 2, t, x, Some(m))?;
                    e_dec = e_dec.max(rel_err(decomposition_sum(&p, 2, t, x, Some(m))?, c));
                }
                cases += 1;
            }
        }
        let spread3 = [Site::ORIGIN, Site::new(1, 1), Site::new(2, 0)];
        for x in [&[Site::ORIGIN; 3][..], &spread3[..]] {
            for t in 1..=5 {
                let nt = no_triple_moment_exact(&p, 3, t, x)?;
                triple_ok &= nt <= psi_exact(&p, 3, t, x)? * (1.0 + 1e-14);
            }
        }
    }
    Ok(result(
        4,
        TITLES[3],
        e_chaos <= 1e-10 && e_dec <= 1e-10 && triple_ok,
        format!(
            "q=2 ({cases} cases): chaos vs psi {e_chaos:.3e}, decomposition vs chaos (m<=2) {e_dec:.3e}; q=3 no-triple <= psi: {triple_ok}"
        ),
    ))
}

pub fn criterion_5(ctx: &Context) -> Result<CriterionResult> {
    let seed = ctx.seed_for(5);
    let samples = 100_000;
    let grid = [1u64 << 10, 1 << 12, 1 << 14];
    let mut q2_ok = true;
    let mut lines = Vec::new();
    let mut q3 = Vec::new();
    // One seed per q across the grid: the walks for a smaller N are prefixes of
    // those for a larger N, so the comparison along the grid is coupled.
    for &n in &grid {
        let p = PolymerParams::new(n, 0.3)?;
        let exact = build_un(&p, n)?.partial_sums[n as usize];
        let e2 = moment_mc(&p, 2, n, samples, hash_words(&[seed, 2]), ctx.threads)?;
        let ok = e2.within(exact, 3.0);
        q2_ok &= ok;
        let e3 = moment_mc(&p, 3, n, samples, hash_words(&[seed, 3]), ctx.threads)?;
        let ratio = e3.mean * (-pairs(3) * p.lambda_sq()).exp();
        q3.push(ratio);
        lines.push(format!(
            "N=2^{}: q2 {:.5}+-{:.5} vs {exact:.5} ({}), q3 ratio {ratio:.4}",
            n.trailing_zeros(),
            e2.mean,
            e2.stderr,
            if ok { "ok" } else { "off" }
        ));
    }
    let last_ok = q3[2] > 0.5 && q3[2] < 1.5;
    let monotone = q3.windows(2).all(|w| (w[1] - 1.0).abs() <= (w[0] - 1.0).abs());
    Ok(result(
        5,
        TITLES[4],
        q2_ok && last_ok && monotone,
        format!("{}; |q3 ratio - 1| non-increasing: {monotone}", lines.join("; ")),
    ))
}

pub fn criterion_6(ctx: &Context) -> Result<CriterionResult> {
    let seed = ctx.seed_for(6);
    let mut ks = Vec::new();
    let mut mean_ok = true;
    let mut lines = Vec::new();
    for (i, n) in [1000u64, 30_000, 1_000_000].into_iter().enumerate() {
        let s = erdos_taylor_summary(n, 10_000, hash_words(&[seed, i as u64]), ctx.threads)?;
        let ok = s.estimate.within(s.exact_mean, 3.0);
        mean_ok &= ok;
        ks.push(s.ks_exp1);
        lines.push(format!(
            "N={n}: {:.4}+-{:.4} vs {:.4}, KS {:.4}",
            s.estimate.mean, s.estimate.stderr, s.exact_mean, s.ks_exp1
        ));
    }
    let decreasing = ks.windows(2).all(|w| w[1] < w[0]);
    Ok(result(
        6,
        TITLES[5],
        mean_ok && decreasing,
        format!("{}; KS strictly decreasing: {decreasing}", lines.join("; ")),
    ))
}

pub fn criterion_7(_ctx: &Context) -> Result<CriterionResult> {
    let suite = check_suite(4, 6, 3)?;
    let mut worst = 0.0f64;
    let mut instances = 0;
    let mut violations = 0;
    let mut example = None;
    for (n, b) in [(6u64, 0.3), (6, 0.8), (1000, 0.5), (1_000_000, 0.3), (1_000_000, 0.9)] {
        let p = PolymerParams::new(n, b)?;
        let (ind, red) = check_induction_suite(&p, 4, 4, 6, 3, Indicator::Full)?;
        for r in [ind, red] {
            worst = worst.max(r.max_ratio);
            instances += r.instances;
            violations += r.violations;
            if example.is_none() {
                example = r.counterexample;
            }
        }
    }
    let pass = suite.pass() && violations == 0;
    let mut detail = format!(
        "{} diagrams (q<=4, m<=6, L=3): count mismatches {}, structural {}, coefficient {}, count-bound {}; \
         induction and single-step inequalities: {violations} violations in {instances} instances, max lhs/rhs {worst:.4}",
        suite.diagrams,
        suite.count_mismatches.len(),
        suite.structural_failures,
        suite.coeff_failures,
        suite.small_jump_count_failures,
    );
    if let Some(c) = suite.counterexample.or(example) {
        detail.push_str(&format!("; first counterexample {c}"));
    }
    Ok(result(7, TITLES[6], pass, detail))
}

pub fn criterion_8(ctx: &Context) -> Result<CriterionResult> {
    let seed = ctx.seed_for(8);
    let thm = chain_suite(500, hash_words(&[seed, 0]), ctx.threads)?;
    let cor = corollary_suite(500, hash_words(&[seed, 1]), ctx.threads)?;
    let paths = path_suite(&[4, 8, 16], 100, hash_words(&[seed, 2]), ctx.threads)?;
    let torus = check_discrete_khas(&torus_chain(16, 0.1), KhasMode::Theorem)?;
    let etas_ok = thm.max_eta < 0.95 && paths.max_eta < 0.95;
    let pass = thm.pass() && cor.pass() && paths.pass() && torus.pass && etas_ok;
    Ok(result(
        8,
        TITLES[7],
        pass,
        format!(
            "chains {}/{} ok (max moment/bound {:.4}); corollary {}/{} ok, display bound exceeded {}; \
             paths {}/{} ok (max {:.4}), n=0 form exceeded {}; torus k=16 eta {:.4} moment {:.4} bound {:.4}",
            thm.trials - thm.failures,
            thm.trials,
            thm.max_ratio,
            cor.trials - cor.failures,
            cor.trials,
            cor.descriptive_exceedances,
            paths.trials - paths.failures,
            paths.trials,
            paths.max_ratio,
            paths.descriptive_exceedances,
            torus.eta,
            torus.moment,
            torus.bound
        ),
    ))
}

pub fn criterion_9(ctx: &Context) -> Result<CriterionResult> {
    let seed = ctx.seed_for(9);
    let betas = [0.3, 0.5];
    let mut pass = true;
    let mut lines = Vec::new();
    for n in [64u64, 256] {
        let rows = environment_samples(n, &betas, 2000, hash_words(&[seed, n]), ctx.threads)?;
        let mut mean_logs = Vec::new();
        for (j, b) in betas.iter().enumerate() {
            let w: Vec<f64> = rows.iter().map(|r| r[j].0).collect();
            let lw: Vec<f64> = rows.iter().map(|r| r[j].1).collect();
            let p = PolymerParams::new(n, *b)?;
            let st = martingale_stats(&w, &lw, second_moment_exact(&p, n)?);
            let mean_ok = (st.mean - 1.0).abs() <= 3.0 * st.mean_stderr;
            let var_ok = (st.var - st.exact_var).abs() <= 3.0 * st.var_stderr;
            pass &= mean_ok && var_ok;
            mean_logs.push(st.mean_log);
            lines.push(format!(
                "N={n},b={b}: mean {:.4}+-{:.4}, var {:.4}+-{:.4} vs {:.4}, E log W {:.4}",
                st.mean, st.mean_stderr, st.var, st.var_stderr, st.exact_var, st.mean_log
            ));
        }
        let ordered = mean_logs[0] < 0.0 && mean_logs[1] < mean_logs[0];
        pass &= ordered;
    }
    Ok(result(9, TITLES[8], pass, lines.join("; ")))
}

fn body_after_metadata(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

/// Runs `cfg` at 1 and 2 threads, re-runs each from its manifest, and compares outputs.
fn reproducibility_case(cfg: &ExperimentConfig, dir: &Path) -> Result<(bool, bool)> {
    let mut bytes_ok = true;
    let mut bodies = Vec::new();
    let mut measures = Vec::new();
    for threads in [1usize, 2] {
        let mut c = cfg.clone();
        c.threads = threads;
        let first = dir.join(format!("{}-t{threads}-a", cfg.experiment));
        c.out = Some(first.clone());
        let (m1, _) = run_experiment(&c)?;
        let mut again = ExperimentConfig::load(&manifest_path(&first, &c))?;
        let second = dir.join(format!("{}-t{threads}-b", cfg.experiment));
        again.out = Some(second.clone());
        let (m2, _) = run_experiment(&again)?;
        let a = std::fs::read(data_path(&first, &c))?;
        let b = std::fs::read(data_path(&second, &again))?;
        bytes_ok &= a == b && m1.outputs[0].sha256 == m2.outputs[0].sha256;
        bodies.push(body_after_metadata(&String::from_utf8_lossy(&a)));
        measures.push(serde_json::to_string(&m1.measurements).expect("measurements encode"));
    }
    Ok((bytes_ok, bodies[0] == bodies[1] && measures[0] == measures[1]))
}

pub fn criterion_10(ctx: &Context) -> Result<CriterionResult> {
    let seed = ctx.seed_for(10);
    let mut cases = Vec::new();
    let mut mc = ExperimentConfig::new("moment-mc");
    mc.params.q = Some(3);
    mc.params.n = Some(256);
    mc.params.samples = Some(2000);
    cases.push(mc);
    let mut et = ExperimentConfig::new("erdos-taylor");
    et.params.n = Some(1000);
    et.params.samples = Some(2000);
    cases.push(et);
    let mut gl = ExperimentConfig::new("gaussian-limit");
    gl.params.n = Some(32);
    gl.params.samples = Some(200);
    cases.push(gl);
    let mut kh = ExperimentConfig::new("khas");
    kh.params.mode = Some("suite".into());
    cases.push(kh);
    let mut pn = ExperimentConfig::new("check-pnstar");
    pn.params.max_time = Some(256);
    pn.params.ab_horizon = Some(256);
    cases.push(pn);
    std::fs::create_dir_all(&ctx.work_dir)?;
    let mut pass = true;
    let mut lines = Vec::new();
    for mut c in cases {
        c.seed = Some(seed);
        let (bytes, threads) = reproducibility_case(&c, &ctx.work_dir)?;
        pass &= bytes && threads;
        lines.push(format!("{}: rerun identical {bytes}, thread-invariant {threads}", c.experiment));
    }
    Ok(result(10, TITLES[9], pass, lines.join("; ")))
}

pub fn run_criterion(id: u8, ctx: &Context) -> Result<CriterionResult> {
    match id {
        1 => criterion_1(ctx),
        2 => criterion_2(ctx),
        3 => criterion_3(ctx),
        4 => criterion_4(ctx),
        5 => criterion_5(ctx),
        6 => criterion_6(ctx),
        7 => criterion_7(ctx),
        8 => criterion_8(ctx),
        9 => criterion_9(ctx),
        10 => criterion_10(ctx),
        _ => Err(HarnessError::Config(format!("no criterion {id}; choose 1-10"))),
    }
}

/// Criterion ids from `check`, a comma-separated list; all ten when absent.
fn selected(check: Option<&str>) -> Result<Vec<u8>> {
    match check {
        None => Ok((1..=10).collect()),
        Some(s) => s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u8>()
                    .ok()
                    .filter(|v| (1..=10).contains(v))
                    .ok_or_else(|| HarnessError::Config(format!("bad criterion '{p}' in check list")))
            })
            .collect(),
    }
}

pub fn suite_outcome(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = cfg.seed.ok_or_else(|| HarnessError::Config("suite needs a seed".into()))?;
    let ids = selected(cfg.params.check.as_deref())?;
    let work_dir = match &cfg.out {
        Some(d) => d.join("reproducibility"),
        None => std::env::temp_dir().join(format!("gpolymer-repro-{}", std::process::id())),
    };
    let ctx = Context {
        seed,
        threads: cfg.threads,
        work_dir,
    };
    let mut table = Table::new(&["criterion", "title", "pass", "detail"]);
    let mut checks = Vec::new();
    for id in ids {
        let r = run_criterion(id, &ctx)?;
        eprintln!("{r}");
        table.push(vec![Cell::Int(id as i64), r.title.into(), r.pass.into(), r.detail.clone().into()]);
        checks.push(Check::new(format!("criterion_{id}"), r.pass, r.detail));
    }
    if cfg.out.is_none() {
        let _ = std::fs::remove_dir_all(&ctx.work_dir);
    }
    Ok(Outcome {
        table,
        checks,
        measurements: Vec::new(),
    })
}
