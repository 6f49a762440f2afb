//! Subcritical scaling `β_N = β̂ / √R_N` and the scalar functions built on it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{mean_intersection, KernelTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolymerParams {
    n: u64,
    beta_hat: f64,
    r_n: f64,
    beta_n_sq: f64,
    sigma_n_sq: f64,
    lambda_sq: f64,
}

fn check_beta_hat(beta_hat: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta_hat) {
        return Err(Error::domain(format!(
            "beta_hat = {beta_hat} is outside the subcritical window [0, 1)"
        )));
    }
    Ok(())
}

/// `log(1 / (1 - x))` for `x < 1`.
fn log_inv_one_minus(x: f64) -> Result<f64> {
    if x >= 1.0 {
        return Err(Error::domain(format!("log(1/(1-x)) needs x < 1, got {x}")));
    }
    Ok(-(-x).ln_1p())
}

impl PolymerParams {
    /// Parameters with `R_N` from the exact binomial formula.
    pub fn new(n: u64, beta_hat: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        check_beta_hat(beta_hat)?;
        Ok(Self::with_r(n, beta_hat, mean_intersection(n)))
    }

    fn with_r(n: u64, beta_hat: f64, r_n: f64) -> Self {
        let beta_n_sq = beta_hat * beta_hat / r_n;
        PolymerParams {
            n,
            beta_hat,
            r_n,
            beta_n_sq,
            sigma_n_sq: beta_n_sq.exp_m1(),
            lambda_sq: -(-beta_hat * beta_hat).ln_1p(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }
    pub fn r_n(&self) -> f64 {
        self.r_n
    }
    pub fn beta_n_sq(&self) -> f64 {
        self.beta_n_sq
    }
    pub fn beta_n(&self) -> f64 {
        self.beta_n_sq.sqrt()
    }
    pub fn sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq
    }
    pub fn lambda_sq(&self) -> f64 {
        self.lambda_sq
    }
    pub fn log_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    /// `δ_N = σ_N² / β_N² - 1`.
    pub fn delta_n(&self) -> f64 {
        if self.beta_n_sq == 0.0 {
            0.0
        } else {
            self.sigma_n_sq / self.beta_n_sq - 1.0
        }
    }

    fn log_scale(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::domain("the log N scale needs N >= 2"));
        }
        Ok(())
    }

    fn ratio(&self, t: f64) -> f64 {
        self.beta_hat * self.beta_hat * t.ln() / self.log_n()
    }

    /// `λ_{T,N}² = log(1 / (1 - β̂² log T / log N))`, for real `T ∈ [1, N]`.
    pub fn lambda_tn_sq(&self, t: f64) -> Result<f64> {
        self.log_scale()?;
        if !(1.0..=self.n as f64).contains(&t) {
            return Err(Error::domain(format!("T = {t} outside [1, {}]", self.n)));
        }
        log_inv_one_minus(self.ratio(t))
    }

    /// `F(u) = (1/u) / (1 - β̂² log u / log N)` for `u ≥ 1` with a positive denominator
    /// (all of `[1, N]`, and beyond it while `β̂² log u < log N`).
    pub fn big_f(&self, u: f64) -> Result<f64> {
        self.log_scale()?;
        if !(u >= 1.0 && self.ratio(u) < 1.0) {
            return Err(Error::domain(format!("F is undefined at u = {u}")));
        }
        Ok(1.0 / (u * (1.0 - self.ratio(u))))
    }

    /// `f(v) = (log N / β̂²) log((1 - β̂² log v/log N) / (1 - β̂² log T/log N))` on `[1, T]`.
    ///
    /// At `β̂ = 0` this is the limit `log(T / v)`.
    pub fn small_f(&self, t: f64, v: f64) -> Result<f64> {
        self.log_scale()?;
        if !(1.0..=self.n as f64).contains(&t) {
            return Err(Error::domain(format!("T = {t} outside [1, {}]", self.n)));
        }
        if !(1.0..=t).contains(&v) {
            return Err(Error::domain(format!("f needs v in [1, {t}], got {v}")));
        }
        if self.beta_hat == 0.0 {
            return Ok((t / v).ln());
        }
        let b2 = self.beta_hat * self.beta_hat;
        let num = (-self.ratio(v)).ln_1p();
        let den = (-self.ratio(t)).ln_1p();
        Ok(self.log_n() / b2 * (num - den))
    }
}

/// Parameters with `R_N` read from `kernel` when `N` is inside its horizon.
pub fn make_params(n: u64, beta_hat: f64, kernel: &KernelTable) -> Result<PolymerParams> {
    if n == 0 {
        return Err(Error::domain("N must be at least 1"));
    }
    check_beta_hat(beta_hat)?;
    let r = if n <= kernel.max_time() {
        kernel.r_n(n)?
    } else {
        mean_intersection(n)
    };
    Ok(PolymerParams::with_r(n, beta_hat, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevExponent {
    /// `δ* = 2√(γλ²)`: the tail bound decays for `δ > δ*`.
    pub delta_star: f64,
    /// Optimising `q / √log N = δ / λ²`, evaluated at `δ = δ*`.
    pub q_over_sqrt_log_n: f64,
    /// Whether `γ < λ²(1 - β̂²) / (6β̂²)`.
    pub admissible: bool,
}

pub fn chebyshev_max_exponent(gamma: f64, beta_hat: f64) -> Result<ChebyshevExponent> {
    if gamma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(beta_hat > 0.0 && beta_hat < 1.0) {
        return Err(Error::domain(format!("beta_hat must lie in (0, 1), got {beta_hat}")));
    }
    let b2 = beta_hat * beta_hat;
    let lambda_sq = -(-b2).ln_1p();
    let delta_star = 2.0 * (gamma * lambda_sq).sqrt();
    Ok(ChebyshevExponent {
        delta_star,
        q_over_sqrt_log_n: delta_star / lambda_sq,
        admissible: gamma < lambda_sq * (1.0 - b2) / (6.0 * b2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_disorder() {
        let p = PolymerParams::new(1000, 0.0).unwrap();
        assert_eq!(p.beta_n_sq(), 0.0);
        assert_eq!(p.sigma_n_sq(), 0.0);
        assert_eq!(p.lambda_sq(), 0.0);
        assert_eq!(p.delta_n(), 0.0);
    }

    #[test]
    fn lambda_at_half() {
        let p = PolymerParams::new(1000, 0.5).unwrap();
        assert_relative_eq!(p.lambda_sq(), (4.0f64 / 3.0).ln(), max_relative = 1e-15);
        assert_relative_eq!(p.lambda_sq(), 0.287682, epsilon = 1e-6);
    }

    #[test]
    fn million_step_params() {
        let p = PolymerParams::new(1_000_000, 0.5).unwrap();
        let r = mean_intersection(1_000_000);
        assert_relative_eq!(p.beta_n_sq(), 0.25 / r, max_relative = 1e-15);
        let diff = p.sigma_n_sq() - p.beta_n_sq();
        assert!(diff > 0.0 && diff < p.beta_n_sq().powi(2));
        assert!(p.delta_n() >= 0.0 && p.delta_n() <= std::f64::consts::E - 2.0);
    }

    #[test]
    fn rejects_out_of_window() {
        assert!(PolymerParams::new(100, 1.0).is_err());
        assert!(PolymerParams::new(100, -0.1).is_err());
        assert!(PolymerParams::new(0, 0.5).is_err());
        let one = PolymerParams::new(1, 0.5).unwrap();
        assert_eq!(one.r_n(), 0.25);
        assert!(one.lambda_tn_sq(1.0).is_err());
        assert!(one.big_f(1.0).is_err());
        assert!(one.small_f(1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_and_formula_agree() {
        let t = KernelTable::build(50).unwrap();
        let a = make_params(50, 0.4, &t).unwrap();
        let b = PolymerParams::new(50, 0.4).unwrap();
        assert_relative_eq!(a.r_n(), b.r_n(), max_relative = 1e-14);
        let c = make_params(500, 0.4, &t).unwrap();
        assert_relative_eq!(c.r_n(), mean_intersection(500), max_relative = 1e-15);
    }

    #[test]
    fn lambda_tn_boundary_values() {
        let p = PolymerParams::new(10_000, 0.5).unwrap();
        assert_eq!(p.lambda_tn_sq(1.0).unwrap(), 0.0);
        assert_relative_eq!(p.lambda_tn_sq(10_000.0).unwrap(), p.lambda_sq(), max_relative = 1e-14);
        assert_relative_eq!(p.lambda_tn_sq(100.0).unwrap(), (8.0f64 / 7.0).ln(), max_relative = 1e-14);
        assert_relative_eq!(p.lambda_tn_sq(100.0).unwrap(), 0.133531, epsilon = 1e-6);
        assert!(p.lambda_tn_sq(0.5).is_err());
        assert!(p.lambda_tn_sq(20_000.0).is_err());
    }

    #[test]
    fn f_functions_boundary_values() {
        let p = PolymerParams::new(10_000, 0.6).unwrap();
        let t = 500.0;
        assert_eq!(p.big_f(1.0).unwrap(), 1.0);
        assert!(p.small_f(t, t).unwrap().abs() < 1e-12);
        let f1 = p.small_f(t, 1.0).unwrap();
        let expect = p.log_n() / 0.36 * p.lambda_tn_sq(t).unwrap();
        assert_relative_eq!(f1, expect, max_relative = 1e-13);
        assert!(p.big_f(0.5).is_err());
        assert!(p.small_f(t, t + 1.0).is_err());
    }

    #[test]
    fn f_derivative_is_minus_big_f() {
        let p = PolymerParams::new(100_000, 0.7).unwrap();
        let t = 4096.0;
        for v in [2.0, 10.0, t / 2.0] {
            let h = 1e-4 * v;
            let d = (p.small_f(t, v + h).unwrap() - p.small_f(t, v - h).unwrap()) / (2.0 * h);
            let big = p.big_f(v).unwrap();
            assert!(((d + big) / big).abs() < 1e-6, "v = {v}");
        }
    }

    #[test]
    fn chebyshev_examples() {
        let c = chebyshev_max_exponent(0.04, 0.5).unwrap();
        let lambda_sq = (4.0f64 / 3.0).ln();
        assert_relative_eq!(c.delta_star, 2.0 * (0.04 * lambda_sq).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.delta_star, 0.214544, epsilon = 1e-6);
        assert_relative_eq!(c.q_over_sqrt_log_n, c.delta_star / (4.0f64 / 3.0).ln());
        assert!(c.admissible);
        assert!(!chebyshev_max_exponent(0.2, 0.01).unwrap().admissible);
        assert!(chebyshev_max_exponent(1e-12, 0.5).unwrap().delta_star < 1e-5);
        assert!(chebyshev_max_exponent(0.0, 0.5).is_err());
        assert!(chebyshev_max_exponent(0.1, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn lambda_tn_sandwich(b in 0.01f64..0.99, n in 2u64..1_000_000, frac in 0.0f64..1.0) {
            let p = PolymerParams::new(n, b).unwrap();
            let t = (n as f64).powf(frac).clamp(1.0, n as f64);
            let x = b * b * t.ln() / (n as f64).ln();
            let l = p.lambda_tn_sq(t).unwrap();
            prop_assert!(x <= l * (1.0 + 1e-12) + 1e-300);
            prop_assert!(l <= x / (1.0 - x) * (1.0 + 1e-12) + 1e-300);
            let t2 = (t * 1.5).min(n as f64);
            prop_assert!(p.lambda_tn_sq(t2).unwrap() >= l);
        }

        #[test]
        fn f_times_power_is_nonincreasing(b in 0.05f64..0.95, j in 0i32..6, a in 1.0f64..400.0, d in 0.0f64..100.0) {
            let p = PolymerParams::new(1_000_000, b).unwrap();
            let t = 512.0;
            let (u1, u2) = (a.min(t), (a + d).min(t));
            let g = |u: f64| p.big_f(u).unwrap() * p.small_f(t, u).unwrap().powi(j);
            prop_assert!(g(u2) <= g(u1) * (1.0 + 1e-12));
        }
    }
}
