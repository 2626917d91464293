//! Gamma-family special functions and the dimension/order dependent constants
//! used throughout the crate.
//!
//! Everything here is a pure function of its arguments. Constants that depend
//! on the fractional order `s` are evaluated through `Γ(1+s)` rather than
//! `Γ(s)` wherever possible so they stay well conditioned as `s → 0+`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Minimum of `Γ` on `(0, ∞)`, attained at `x ≈ 1.4616321449683622`.
pub const GAMMA_MIN: f64 = 0.885_603_194_410_888_7;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    acc
}

/// `Γ(x)` for any real `x` that is not a non-positive integer.
fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        PI / ((PI * x).sin() * gamma_unchecked(1.0 - x))
    } else {
        let z = x - 1.0;
        let t = z + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
    }
}

/// Gamma function on the positive half line.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(gamma_unchecked(x))
}

/// `ln Γ(x)` for `x > 0`; stays finite where `Γ` itself overflows.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x)
    } else {
        let z = x - 1.0;
        let t = z + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
    }
}

/// Digamma `ψ = Γ'/Γ` on the positive half line.
///
/// Upward recurrence `ψ(x) = ψ(x+1) − 1/x` until the argument reaches 10, then
/// the Stirling-type asymptotic series with seven Bernoulli terms.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k) coefficients for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!(
            "inc_beta_reg requires a, b > 0, got a={a}, b={b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!(
            "inc_beta_reg requires x in [0,1], got {x}"
        )));
    }
    Ok(inc_beta_reg_unchecked(a, b, x))
}

pub(crate) fn inc_beta_reg_unchecked(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma_unchecked(a + b) - ln_gamma_unchecked(a) - ln_gamma_unchecked(b)
        + a * x.ln()
        + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Complete beta function `B(a, b)`.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)).exp()
}

fn check_dim(n: usize) {
    assert!(n >= 2, "dimension must be at least 2, got {n}");
}

/// `|S^{N-1}|`, the surface measure of the unit sphere in `R^N`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / gamma_unchecked(h)
}

/// `|B_1|`, the volume of the unit ball in `R^N`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    PI.powf(h) / gamma_unchecked(h + 1.0)
}

/// `c_N = Γ(N/2)/π^{N/2} = 2/|S^{N-1}|`.
pub fn c_n(n: usize) -> f64 {
    check_dim(n);
    let h = n as f64 / 2.0;
    gamma_unchecked(h) / PI.powf(h)
}

/// `ρ_N = 2 ln 2 + ψ(N/2) − γ`.
pub fn rho_n(n: usize) -> f64 {
    check_dim(n);
    2.0 * LN_2 + digamma_unchecked(n as f64 / 2.0) - EULER_GAMMA
}

/// Critical radius `r_N = 2 exp((ψ(N/2) − γ)/2)`.
pub fn r_n(n: usize) -> f64 {
    check_dim(n);
    2.0 * (0.5 * (digamma_unchecked(n as f64 / 2.0) - EULER_GAMMA)).exp()
}

/// Torsion coefficient `γ_{N,s} = Γ(N/2) / (4^s Γ(s+1) Γ(N/2+s))`.
pub fn torsion_coeff(n: usize, s: f64) -> f64 {
    check_dim(n);
    let h = n as f64 / 2.0;
    (ln_gamma_unchecked(h) - s * 4f64.ln() - ln_gamma_unchecked(s + 1.0) - ln_gamma_unchecked(h + s))
        .exp()
}

/// Riesz constant `κ_{N,s} = s Γ(N/2 − s) / (4^s π^{N/2} Γ(1+s))` of the
/// fundamental solution `F_s(z) = κ_{N,s}|z|^{2s−N}`.
pub fn kappa_ns(n: usize, s: f64) -> f64 {
    check_dim(n);
    let h = n as f64 / 2.0;
    s * gamma_unchecked(h - s) / (4f64.powf(s) * PI.powf(h) * gamma_unchecked(1.0 + s))
}

/// Ball Poisson-kernel constant `τ_{N,s} = 2 / (Γ(s)Γ(1−s)|S^{N−1}|)`.
pub fn tau_ns(n: usize, s: f64) -> f64 {
    check_dim(n);
    // Γ(s)Γ(1−s) = π / sin(πs)
    2.0 * (PI * s).sin() / (PI * sphere_area(n))
}

/// Normalisation constant of `(−Δ)^σ`:
/// `c_{N,σ} = σ 4^σ Γ(N/2+σ) / (π^{N/2} Γ(1−σ))`.
pub fn c_ns(n: usize, sigma: f64) -> f64 {
    check_dim(n);
    let h = n as f64 / 2.0;
    sigma * 4f64.powf(sigma) * gamma_unchecked(h + sigma) / (PI.powf(h) * gamma_unchecked(1.0 - sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_values() {
        assert!(rel(gamma_fn(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_fn(1.5).unwrap(), 0.886_226_925_452_758) < 1e-13);
        assert!(rel(gamma_fn(5.0).unwrap(), 24.0) < 1e-13);
        assert!(rel(gamma_fn(0.5).unwrap(), PI.sqrt()) < 1e-13);
        assert!(rel(gamma_fn(0.1).unwrap(), 9.513_507_698_668_732) < 1e-12);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
    }

    #[test]
    fn ln_gamma_matches_gamma() {
        for &x in &[0.05, 0.3, 1.0, 2.5, 7.25, 40.0] {
            let lg = ln_gamma(x).unwrap();
            assert!((lg - gamma_fn(x).unwrap().ln()).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn digamma_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-14);
        assert!(rel(digamma(0.5).unwrap(), -1.963_510_026_021_423_5) < 1e-13);
        assert!(rel(digamma(2.0).unwrap(), 0.422_784_335_098_467_1) < 1e-13);
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn digamma_matches_gamma_log_derivative() {
        for &x in &[0.2, 0.9, 1.7, 3.3, 12.0] {
            let h = 1e-5;
            let fd = (ln_gamma(x + h).unwrap() - ln_gamma(x - h).unwrap()) / (2.0 * h);
            assert!((fd - digamma(x).unwrap()).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn rho_and_r_n() {
        assert!((rho_n(2) - 0.231_863_031_316_824_9).abs() < 1e-14);
        assert!((rho_n(4) - rho_n(2) - 1.0).abs() < 1e-14);
        assert!((r_n(2) - 2.0 * (-EULER_GAMMA).exp()).abs() < 1e-14);
        assert!((r_n(3) - (1.0 - EULER_GAMMA).exp()).abs() < 1e-13);
        assert!(r_n(2) < r_n(3) && r_n(3) < r_n(4));
    }

    #[test]
    fn torsion_coeff_values() {
        assert!((torsion_coeff(2, 1.0) - 0.25).abs() < 1e-14);
        assert!((torsion_coeff(2, 0.5) - 2.0 / PI).abs() < 1e-14);
        assert!((torsion_coeff(2, 1e-12) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sphere_and_ball_constants() {
        assert!((c_n(2) - 1.0 / PI).abs() < 1e-15);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-13);
        for n in 2..8 {
            assert!((c_n(n) * sphere_area(n) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn kappa_tau_c_values() {
        assert!((kappa_ns(2, 0.5) - 1.0 / (2.0 * PI)).abs() < 1e-14);
        assert!((tau_ns(2, 0.5) - 1.0 / (PI * PI)).abs() < 1e-14);
        // c_{N,σ} in the form used by the hypersingular integral: for N=1... use N=3, σ=1/2: 2/π²
        assert!((c_ns(3, 0.5) - 1.0 / (PI * PI)).abs() < 1e-14);
        for n in 2..6 {
            for &s in &[0.1, 0.5, 0.9] {
                assert!(kappa_ns(n, s) > 0.0 && tau_ns(n, s) > 0.0 && c_ns(n, s) > 0.0);
            }
        }
    }

    #[test]
    fn inc_beta_known_values() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a
        assert!((inc_beta_reg(1.0, 1.0, 0.3).unwrap() - 0.3).abs() < 1e-14);
        assert!((inc_beta_reg(2.5, 1.0, 0.4).unwrap() - 0.4f64.powf(2.5)).abs() < 1e-14);
        // I_x(1/2, 1/2) = (2/π) asin(√x)
        let x: f64 = 0.37;
        let expect = 2.0 / PI * x.sqrt().asin();
        assert!((inc_beta_reg(0.5, 0.5, x).unwrap() - expect).abs() < 1e-13);
        // symmetry I_x(a,b) = 1 − I_{1−x}(b,a)
        let a = inc_beta_reg(0.3, 1.7, 0.8).unwrap();
        let b = inc_beta_reg(1.7, 0.3, 0.2).unwrap();
        assert!((a + b - 1.0).abs() < 1e-13);
    }
}
