//! One function per experiment; each returns a table plus its checks.

use gaussian_polymer::collisions::{erdos_taylor_summary, moment_mc};
use gaussian_polymer::diagrams::{
    check_induction_suite, check_suite, coeff_table_from_gammas, diagram_count, enumerate_diagrams, Indicator,
};
use gaussian_polymer::kernel::{check_pnstar_streaming, KernelTable};
use gaussian_polymer::khasminskii::{
    adversarial_path, chain_suite, check_discrete_khas, check_mod_khas, corollary_suite, path_suite, torus_chain,
    KhasMode,
};
use gaussian_polymer::polymer::{
    chaos_enumerate, decomposition_sum, moment_exact, no_triple_moment_exact, partition_dp_many, psi_exact,
    second_moment_exact, second_moment_profile, Environment,
};
use gaussian_polymer::renewal::{build_un, check_partial_sum_identity, renewal_residual, rho, MAX_UN_HORIZON};
use gaussian_polymer::rng::{hash_words, par_map, sample_rng};
use gaussian_polymer::scaling::chebyshev_max_exponent;
use gaussian_polymer::stats::mean_var;
use gaussian_polymer::{PolymerParams, Site};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl Measurement {
    pub fn new(name: impl Into<String>, value: f64, stderr: Option<f64>) -> Self {
        Measurement {
            name: name.into(),
            value,
            stderr,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub table: Table,
    pub checks: Vec<Check>,
    pub measurements: Vec<Measurement>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Outcome {
            table,
            ..Default::default()
        }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn need<T>(v: Option<T>, name: &str, exp: &str) -> Result<T> {
    v.ok_or_else(|| HarnessError::Config(format!("experiment '{exp}' needs parameter '{name}'")))
}

fn origins(q: usize) -> Vec<Site> {
    vec![Site::ORIGIN; q]
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.experiment.as_str() {
        "kernel-table" => kernel_table(cfg),
        "check-pnstar" => check_pnstar(cfg),
        "un" => un(cfg),
        "second-moment" => second_moment(cfg),
        "moment-mc" => moment_mc_exp(cfg),
        "moment-exact" => moment_exact_exp(cfg),
        "erdos-taylor" => erdos_taylor(cfg),
        "gaussian-limit" => gaussian_limit(cfg),
        "chaos-oracle" => chaos_oracle(cfg),
        "diagrams" => diagrams(cfg),
        "khas" => khas(cfg),
        "max-bound" => max_bound(cfg),
        "suite" => crate::acceptance::suite_outcome(cfg),
        other => Err(HarnessError::Config(format!("unknown experiment '{other}'"))),
    }
}

fn kernel_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    let max_time = cfg.params.max_time.unwrap_or(64);
    let kt = KernelTable::build(max_time)?;
    let mut t = Table::new(&["n", "pstar", "p2n_origin", "r_n"]);
    let mut mass_err = 0.0f64;
    for n in 1..=max_time {
        t.push(vec![n.into(), kt.pstar(n)?.into(), kt.return2n(n)?.into(), kt.r_n(n)?.into()]);
        mass_err = mass_err.max((kt.mass(n) - 1.0).abs());
    }
    let mut out = Outcome::new(t);
    out.checks.push(Check::new("slab_mass", mass_err <= 1e-12, format!("max |mass - 1| = {mass_err:.3e}")));
    Ok(out)
}

fn check_pnstar(cfg: &ExperimentConfig) -> Result<Outcome> {
    let max_time = cfg.params.max_time.unwrap_or(4096);
    let ab = cfg.params.ab_horizon.unwrap_or(2000);
    let rep = check_pnstar_streaming(max_time, ab)?;
    let mut t = Table::new(&["n", "pstar", "bound", "ratio", "pass"]);
    for r in &rep.rows {
        t.push(vec![r.n.into(), r.pstar.into(), r.bound.into(), r.ratio.into(), r.pass.into()]);
    }
    let mut out = Outcome::new(t);
    out.checks.push(Check::new(
        "pstar_bound",
        rep.first_violation.is_none(),
        format!("first violation: {:?}", rep.first_violation),
    ));
    out.checks.push(Check::new(
        "ab_monotone",
        rep.first_a_decrease.is_none() && rep.first_b_decrease.is_none(),
        format!(
            "n <= {}: first a decrease {:?}, first b decrease {:?}",
            rep.ab_horizon, rep.first_a_decrease, rep.first_b_decrease
        ),
    ));
    out.checks.push(Check::new("mass", rep.max_mass_error <= 1e-12, format!("{:.3e}", rep.max_mass_error)));
    out.checks.push(Check::new("pstar_nonincreasing", rep.nonincreasing, ""));
    Ok(out)
}

fn un(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = need(cfg.params.m, "m", "un")?;
    let n = cfg.params.n.unwrap_or(m);
    let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.5))?;
    let table = build_un(&params, m)?;
    let mut t = Table::new(&["n", "w", "u", "partial_sum", "rho"]);
    for k in 0..=m {
        let r = if k == 0 || params.beta_hat() == 0.0 { f64::NAN } else { rho(&table, &params, k) };
        t.push(vec![
            k.into(),
            table.step_law[k as usize].into(),
            table.u(k).into(),
            table.partial_sums[k as usize].into(),
            r.into(),
        ]);
    }
    let mut out = Outcome::new(t);
    let res = renewal_residual(&table);
    out.checks.push(Check::new("renewal_residual", res <= cfg.tolerances.rel(), format!("{res:.3e}")));
    if m <= 512 {
        let rep = check_partial_sum_identity(&table, &params, m)?;
        out.checks.push(Check::new(
            "partial_sum_identity",
            rep.rel_err <= cfg.tolerances.rel(),
            format!("sum {:.12} vs transfer {:.12}, rel err {:.3e}", rep.partial_sum, rep.second_moment, rep.rel_err),
        ));
    }
    out.measurements.push(Measurement::new("partial_sum", table.partial_sums[m as usize], None));
    Ok(out)
}

/// `E[W_n²]` from the transfer, against `1/(1 - σ² R_n)`, for `n ≤ max_time`.
pub fn second_moment_rows(params: &PolymerParams, max_time: u64) -> Result<Table> {
    let kt = KernelTable::build(max_time)?;
    let profile = second_moment_profile(params, max_time)?;
    let mut t = Table::new(&["n", "second_moment", "sigma2_rn", "bound", "pass"]);
    for n in 1..=max_time {
        let v = profile[n as usize];
        let s = params.sigma_n_sq() * kt.r_n(n)?;
        let (bound, pass) = if s < 1.0 {
            let b = 1.0 / (1.0 - s);
            (b, v <= b * (1.0 + 1e-14))
        } else {
            (f64::INFINITY, true)
        };
        t.push(vec![n.into(), v.into(), s.into(), bound.into(), pass.into()]);
    }
    Ok(t)
}

/// `E[W_n²] (1 - β̂² log n / log N)` with `E[W_n²]` read from the renewal table.
pub fn asymptotic_ratio(params: &PolymerParams, n: u64) -> Result<f64> {
    let table = build_un(params, n)?;
    let b2 = params.beta_hat() * params.beta_hat();
    Ok(table.partial_sums[n as usize] * (1.0 - b2 * (n as f64).ln() / params.log_n()))
}

fn second_moment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.params.n.unwrap_or(128);
    let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.5))?;
    let horizon = cfg.params.max_time.unwrap_or(n.min(128));
    let t = second_moment_rows(&params, horizon)?;
    let failures = t.rows.iter().filter(|r| r[4] == Cell::Bool(false)).count();
    let mut out = Outcome::new(t);
    out.checks.push(Check::new("bound", failures == 0, format!("{failures} violations for n <= {horizon}")));
    if n >= 2 && n <= MAX_UN_HORIZON {
        let r = asymptotic_ratio(&params, n)?;
        out.measurements.push(Measurement::new("asymptotic_ratio_at_n", r, None));
    }
    Ok(out)
}

/// `binom(q, 2)`.
pub fn pairs(q: usize) -> f64 {
    (q * (q - 1) / 2) as f64
}

fn moment_mc_exp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.params.q.unwrap_or(2);
    let n = cfg.params.n.unwrap_or(1024);
    let samples = cfg.params.samples.unwrap_or(10_000);
    let seed = need(cfg.seed, "seed", "moment-mc")?;
    let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.3))?;
    let est = moment_mc(&params, q, n, samples, seed, cfg.threads)?;
    let norm = (-pairs(q) * params.lambda_sq()).exp();
    let exact = if q == 2 && n <= MAX_UN_HORIZON {
        build_un(&params, n)?.partial_sums[n as usize]
    } else {
        f64::NAN
    };
    let mut t = Table::new(&["q", "n", "beta_hat", "samples", "mean", "stderr", "ratio", "ratio_stderr", "exact"]);
    t.push(vec![
        q.into(),
        n.into(),
        params.beta_hat().into(),
        samples.into(),
        est.mean.into(),
        est.stderr.into(),
        (est.mean * norm).into(),
        (est.stderr * norm).into(),
        exact.into(),
    ]);
    let mut out = Outcome::new(t);
    if exact.is_finite() {
        out.checks.push(Check::new(
            "q2_exact",
            est.within(exact, cfg.tolerances.z()),
            format!("{:.6} +- {:.6} vs {exact:.6}", est.mean, est.stderr),
        ));
    }
    out.measurements.push(Measurement::new("moment", est.mean, Some(est.stderr)));
    out.measurements.push(Measurement::new("ratio", est.mean * norm, Some(est.stderr * norm)));
    Ok(out)
}

fn moment_exact_exp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.params.q.unwrap_or(2);
    let t_max = need(cfg.params.t, "t", "moment-exact")?;
    let n = cfg.params.n.unwrap_or(t_max.max(2));
    let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.5))?;
    let x = origins(q);
    let mut t = Table::new(&["t", "moment", "psi", "no_triple"]);
    for s in 1..=t_max {
        t.push(vec![
            s.into(),
            moment_exact(&params, q, s, &x)?.into(),
            psi_exact(&params, q, s, &x)?.into(),
            no_triple_moment_exact(&params, q, s, &x)?.into(),
        ]);
    }
    let ordered = t.rows.iter().all(|r| match (&r[1], &r[2], &r[3]) {
        (Cell::Float(m), Cell::Float(p), Cell::Float(nt)) => nt <= p && p <= m,
        _ => false,
    });
    let mut out = Outcome::new(t);
    out.checks.push(Check::new("no_triple <= psi <= moment", ordered, ""));
    Ok(out)
}

fn erdos_taylor(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.params.n.unwrap_or(1000);
    let samples = cfg.params.samples.unwrap_or(10_000);
    let seed = need(cfg.seed, "seed", "erdos-taylor")?;
    let s = erdos_taylor_summary(n, samples, seed, cfg.threads)?;
    let mut t = Table::new(&["n", "samples", "mean", "stderr", "exact_mean", "ks_exp1"]);
    t.push(vec![
        n.into(),
        samples.into(),
        s.estimate.mean.into(),
        s.estimate.stderr.into(),
        s.exact_mean.into(),
        s.ks_exp1.into(),
    ]);
    let mut out = Outcome::new(t);
    out.checks.push(Check::new(
        "mean",
        s.estimate.within(s.exact_mean, cfg.tolerances.z()),
        format!("{:.6} +- {:.6} vs {:.6}", s.estimate.mean, s.estimate.stderr, s.exact_mean),
    ));
    out.measurements.push(Measurement::new("mean", s.estimate.mean, Some(s.estimate.stderr)));
    out.measurements.push(Measurement::new("ks_exp1", s.ks_exp1, None));
    Ok(out)
}

/// `(W_N, log W_N)` per environment and per `β̂`, with every `β̂` sharing each environment.
pub fn environment_samples(
    n: u64,
    betas: &[f64],
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let params: Vec<PolymerParams> = betas.iter().map(|b| PolymerParams::new(n, *b)).collect::<gaussian_polymer::Result<_>>()?;
    let rows = par_map(samples, threads, |id| {
        let env = Environment::new(hash_words(&[seed, id as u64]), n);
        partition_dp_many(&env, &params, n, Site::ORIGIN)
            .map(|rs| rs.into_iter().map(|r| (r.value, r.log_value)).collect::<Vec<_>>())
    });
    Ok(rows.into_iter().collect::<gaussian_polymer::Result<_>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleStats {
    pub mean: f64,
    pub mean_stderr: f64,
    pub var: f64,
    pub var_stderr: f64,
    pub exact_var: f64,
    pub mean_log: f64,
    pub mean_log_stderr: f64,
}

/// Mean and variance of `W_N` (with delta-method standard errors) and the mean of `log W_N`.
pub fn martingale_stats(w: &[f64], log_w: &[f64], exact_second_moment: f64) -> MartingaleStats {
    let n = w.len() as f64;
    let (mean, var) = mean_var(w);
    let m4 = w.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let (mean_log, var_log) = mean_var(log_w);
    MartingaleStats {
        mean,
        mean_stderr: (var / n).sqrt(),
        var,
        var_stderr: ((m4 - var * var).max(0.0) / n).sqrt(),
        exact_var: exact_second_moment - 1.0,
        mean_log,
        mean_log_stderr: (var_log / n).sqrt(),
    }
}

fn gaussian_limit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.params.n.unwrap_or(64);
    let beta = cfg.params.beta_hat.unwrap_or(0.5);
    let samples = cfg.params.samples.unwrap_or(2000);
    let seed = need(cfg.seed, "seed", "gaussian-limit")?;
    let rows = environment_samples(n, &[beta], samples, seed, cfg.threads)?;
    let mut t = Table::new(&["sample", "w", "log_w"]);
    for (i, r) in rows.iter().enumerate() {
        t.push(vec![i.into(), r[0].0.into(), r[0].1.into()]);
    }
    let w: Vec<f64> = rows.iter().map(|r| r[0].0).collect();
    let lw: Vec<f64> = rows.iter().map(|r| r[0].1).collect();
    let params = PolymerParams::new(n, beta)?;
    let st = martingale_stats(&w, &lw, second_moment_exact(&params, n)?);
    let z = cfg.tolerances.z();
    let mut out = Outcome::new(t);
    out.checks.push(Check::new(
        "mean_is_one",
        (st.mean - 1.0).abs() <= z * st.mean_stderr,
        format!("{:.6} +- {:.6}", st.mean, st.mean_stderr),
    ));
    out.checks.push(Check::new(
        "variance",
        (st.var - st.exact_var).abs() <= z * st.var_stderr,
        format!("{:.6} +- {:.6} vs {:.6}", st.var, st.var_stderr, st.exact_var),
    ));
    out.measurements.push(Measurement::new("mean_w", st.mean, Some(st.mean_stderr)));
    out.measurements.push(Measurement::new("var_w", st.var, Some(st.var_stderr)));
    out.measurements.push(Measurement::new("mean_log_w", st.mean_log, Some(st.mean_log_stderr)));
    out.measurements.push(Measurement::new("minus_half_lambda_sq", -0.5 * params.lambda_sq(), None));
    Ok(out)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn chaos_oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.params.q.unwrap_or(2);
    let t_max = cfg.params.t.unwrap_or(5);
    let n = cfg.params.n.unwrap_or(100);
    let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.5))?;
    let x = origins(q);
    let tol = cfg.tolerances.rel();
    let mut t = Table::new(&["t", "psi", "chaos", "chaos_m2", "decomposition_m2", "no_triple"]);
    let (mut e_chaos, mut e_dec, mut ordered) = (0.0f64, 0.0f64, true);
    for s in 1..=t_max {
        let psi = psi_exact(&params, q, s, &x)?;
        let chaos = chaos_enumerate(&params, q, s, &x, None)?;
        let chaos2 = chaos_enumerate(&params, q, s, &x, Some(2))?;
        let dec2 = decomposition_sum(&params, q, s, &x, Some(2))?;
        let nt = no_triple_moment_exact(&params, q, s, &x)?;
        e_chaos = e_chaos.max(rel_err(chaos, psi));
        e_dec = e_dec.max(rel_err(dec2, chaos2));
        ordered &= nt <= psi * (1.0 + 1e-14);
        t.push(vec![s.into(), psi.into(), chaos.into(), chaos2.into(), dec2.into(), nt.into()]);
    }
    let mut out = Outcome::new(t);
    out.checks.push(Check::new("chaos_equals_psi", e_chaos <= tol, format!("max rel err {e_chaos:.3e}")));
    out.checks.push(Check::new("decomposition_m2", e_dec <= tol, format!("max rel err {e_dec:.3e}")));
    out.checks.push(Check::new("no_triple_le_psi", ordered, ""));
    Ok(out)
}

fn diagrams(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.params.q.unwrap_or(3);
    let m = cfg.params.m.unwrap_or(4) as usize;
    let l = cfg.params.l.unwrap_or(3);
    let checks: Vec<&str> = match cfg.params.check.as_deref() {
        None => vec!["lemmas", "counts", "coeffs", "fibo", "induction"],
        Some(c @ ("lemmas" | "counts" | "coeffs" | "fibo" | "induction")) => vec![c],
        Some(other) => {
            return Err(HarnessError::Config(format!(
                "unknown diagram check '{other}' (lemmas, counts, coeffs, fibo, induction)"
            )))
        }
    };
    let mut t = Table::new(&["check", "pass", "instances", "detail"]);
    let mut out_checks = Vec::new();
    let mut push = |t: &mut Table, name: &str, pass: bool, instances: u64, detail: String| {
        t.push(vec![name.into(), pass.into(), instances.into(), detail.clone().into()]);
        out_checks.push(Check::new(name, pass, detail));
    };
    let suite = if checks.iter().any(|c| ["lemmas", "coeffs"].contains(c)) {
        Some(check_suite(q, m, l)?)
    } else {
        None
    };
    for c in &checks {
        match *c {
            "lemmas" => {
                let s = suite.as_ref().expect("suite computed");
                let pass = s.structural_failures == 0 && s.small_jump_count_failures == 0;
                let detail = if pass {
                    String::new()
                } else {
                    s.counterexample.clone().unwrap_or_default()
                };
                push(&mut t, "lemmas", pass, s.diagrams, detail);
            }
            "counts" => {
                let mut bad = Vec::new();
                let mut total = 0u64;
                for qq in 2..=q {
                    for mm in 0..=m {
                        let got = enumerate_diagrams(qq, mm)?.count() as u128;
                        total += got as u64;
                        if got != diagram_count(qq, mm) {
                            bad.push(format!("q={qq} m={mm}: {got} vs {}", diagram_count(qq, mm)));
                        }
                    }
                }
                push(&mut t, "counts", bad.is_empty(), total, bad.join("; "));
            }
            "coeffs" => {
                let s = suite.as_ref().expect("suite computed");
                let detail = if s.coeff_failures == 0 {
                    String::new()
                } else {
                    s.counterexample.clone().unwrap_or_default()
                };
                push(&mut t, "coeffs", s.coeff_failures == 0, s.diagrams, detail);
            }
            "fibo" => {
                // Worst case: every index bad.
                let table = coeff_table_from_gammas(&vec![true; m + 1]);
                let pass = table.bound_holds();
                let last: Vec<String> = table.rows[m.max(1)].iter().map(|v| format!("{v}")).collect();
                push(&mut t, "fibo", pass, m as u64, format!("row {}: {}", m.max(1), last.join(" ")));
            }
            "induction" => {
                let n = cfg.params.n.unwrap_or(1000);
                let params = PolymerParams::new(n, cfg.params.beta_hat.unwrap_or(0.5))?;
                let horizon = cfg.params.t.unwrap_or(6);
                let (ind, red) = check_induction_suite(&params, q.min(4), m.min(4), horizon, l, Indicator::Full)?;
                for (name, r) in [("induction", ind), ("reduction", red)] {
                    let detail = match &r.counterexample {
                        Some(c) => c.clone(),
                        None => format!("max ratio {:.4}", r.max_ratio),
                    };
                    push(&mut t, name, r.pass(), r.instances as u64, detail);
                }
            }
            _ => unreachable!(),
        }
    }
    let mut out = Outcome::new(t);
    out.checks = out_checks;
    Ok(out)
}

fn khas(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mode = cfg.params.mode.as_deref().unwrap_or("mod");
    let k = cfg.params.k.unwrap_or(8);
    let kappa_sq = cfg.params.kappa_sq.unwrap_or(0.1);
    let seed = need(cfg.seed, "seed", "khas")?;
    let mut t = Table::new(&["mode", "k", "kappa_sq", "eta", "moment", "bound", "applicable", "pass"]);
    let mut out_checks = Vec::new();
    match mode {
        "mod" => {
            let z = adversarial_path(&mut sample_rng(seed, 0), k);
            let r = check_mod_khas(kappa_sq, k, &z)?;
            t.push(vec![
                "mod".into(),
                k.into(),
                kappa_sq.into(),
                r.eta_shifted.into(),
                r.moment.into(),
                r.bound.into(),
                r.applicable.into(),
                r.pass.into(),
            ]);
            out_checks.push(Check::new("mod_bound", r.pass, format!("path eta {:.6}, n=0 form {:.6}", r.eta, r.moment_from_zero)));
        }
        "thm" | "cor" => {
            let spec = torus_chain(k, kappa_sq);
            let m = if mode == "thm" { KhasMode::Theorem } else { KhasMode::Corollary };
            let r = check_discrete_khas(&spec, m)?;
            t.push(vec![
                mode.into(),
                k.into(),
                kappa_sq.into(),
                r.eta.into(),
                r.moment.into(),
                r.bound.into(),
                r.applicable.into(),
                r.pass.into(),
            ]);
            let detail = match r.stated_bound {
                Some(s) => format!("stated display bound {s:.6}, exceeded: {}", r.stated_violation),
                None => String::new(),
            };
            out_checks.push(Check::new(format!("{mode}_bound"), r.pass, detail));
        }
        "suite" => {
            let reps = [
                ("thm", chain_suite(500, seed, cfg.threads)?),
                ("cor", corollary_suite(500, seed ^ 1, cfg.threads)?),
                ("mod", path_suite(&[4, 8, 16], 100, seed ^ 2, cfg.threads)?),
            ];
            for (name, r) in reps {
                t.push(vec![
                    name.into(),
                    Cell::Int(r.trials as i64),
                    f64::NAN.into(),
                    r.max_eta.into(),
                    r.max_ratio.into(),
                    f64::NAN.into(),
                    Cell::Int(r.applicable as i64),
                    r.pass().into(),
                ]);
                out_checks.push(Check::new(
                    format!("{name}_suite"),
                    r.pass(),
                    format!("{} failures of {}, descriptive exceedances {}", r.failures, r.trials, r.descriptive_exceedances),
                ));
            }
        }
        other => return Err(HarnessError::Config(format!("unknown khas mode '{other}' (mod, thm, cor, suite)"))),
    }
    let mut out = Outcome::new(t);
    out.checks = out_checks;
    Ok(out)
}

fn max_bound(cfg: &ExperimentConfig) -> Result<Outcome> {
    let gamma = need(cfg.params.gamma, "gamma", "max-bound")?;
    let beta = need(cfg.params.beta_hat, "beta_hat", "max-bound")?;
    let c = chebyshev_max_exponent(gamma, beta)?;
    let mut t = Table::new(&["gamma", "beta_hat", "delta_star", "q_over_sqrt_log_n", "admissible"]);
    t.push(vec![gamma.into(), beta.into(), c.delta_star.into(), c.q_over_sqrt_log_n.into(), c.admissible.into()]);
    Ok(Outcome::new(t))
}
