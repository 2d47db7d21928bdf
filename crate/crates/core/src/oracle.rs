//! Reference machinery independent of the wavelet pipeline: Gauss-Hermite
//! expectations under the Euler increment, Black-Scholes prices and
//! least-squares convergence orders.

use std::cell::RefCell;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::rc::Rc;

use gauss_quad::hermite::GaussHermite;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::problem::{FbsdeProblem, Reference};
use crate::quadrature::composite_legendre;
use crate::solver::{solve, SolverConfig};

/// Standard normal nodes `u_i` and weights `w_i` with `sum w_i f(u_i) ~ E[f(U)]`.
pub fn standard_normal_rule(nodes: usize) -> Result<Vec<(f64, f64)>> {
    if nodes < 16 {
        return Err(Error::invalid(
            "nodes",
            format!("need at least 16, got {nodes}"),
        ));
    }
    let rule = GaussHermite::new(NonZeroUsize::new(nodes).expect("nonzero"));
    let norm = std::f64::consts::PI.sqrt();
    Ok(rule
        .iter()
        .map(|(s, w)| (std::f64::consts::SQRT_2 * s, w / norm))
        .collect())
}

type Rule = Rc<Vec<(f64, f64)>>;

thread_local! {
    static RULES: RefCell<HashMap<usize, Rule>> = RefCell::new(HashMap::new());
}

fn cached_rule(nodes: usize) -> Result<Rule> {
    if let Some(rule) = RULES.with(|r| r.borrow().get(&nodes).cloned()) {
        return Ok(rule);
    }
    let rule = Rc::new(standard_normal_rule(nodes)?);
    RULES.with(|r| r.borrow_mut().insert(nodes, rule.clone()));
    Ok(rule)
}

fn gaussian_sum(
    problem: &FbsdeProblem,
    t: f64,
    x: f64,
    dt: f64,
    nodes: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let mean = x + problem.drift(t, x) * dt;
    let sd = problem.diffusion(t, x) * dt.sqrt();
    let v: f64 = cached_rule(nodes)?
        .iter()
        .map(|&(u, w)| w * f(mean + sd * u, sd * u))
        .sum();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("quadrature oracle".into()))
    }
}

/// `E[v(x + mu dt + sigma sqrt(dt) U)]`, `U ~ N(0, 1)`, by Gauss-Hermite.
pub fn quad_expectation(
    problem: &FbsdeProblem,
    t: f64,
    x: f64,
    v: impl Fn(f64) -> f64,
    dt: f64,
    nodes: usize,
) -> Result<f64> {
    gaussian_sum(problem, t, x, dt, nodes, |xi, _| v(xi))
}

/// `E[v(X) dW]` with `dW = sqrt(dt) U`: the integrand carries `sigma sqrt(dt) U`
/// divided by `sigma`, i.e. `v(X) * sqrt(dt) * U`.
pub fn quad_expectation_brownian(
    problem: &FbsdeProblem,
    t: f64,
    x: f64,
    v: impl Fn(f64) -> f64,
    dt: f64,
    nodes: usize,
) -> Result<f64> {
    let sigma = problem.diffusion(t, x);
    if sigma == 0.0 {
        return Ok(0.0);
    }
    // the Gaussian sum hands over sigma sqrt(dt) U
    gaussian_sum(problem, t, x, dt, nodes, |xi, incr| v(xi) * incr / sigma)
}

/// Composite Gauss-Legendre over `u in [-12, 12]` split at the kinks of `v`,
/// for piecewise-smooth integrands. Returns `(E[v], E[v dW])`.
pub fn quad_expectation_kinked(
    problem: &FbsdeProblem,
    t: f64,
    x: f64,
    v: impl Fn(f64) -> f64,
    dt: f64,
    kinks: &[f64],
) -> Result<(f64, f64)> {
    let mean = x + problem.drift(t, x) * dt;
    let sd = problem.diffusion(t, x) * dt.sqrt();
    if !(sd > 0.0) {
        return Ok((v(mean), 0.0));
    }
    let breaks: Vec<f64> = kinks.iter().map(|k| (k - mean) / sd).collect();
    let density = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let plain = composite_legendre(
        |u| v(mean + sd * u) * density(u),
        -12.0,
        12.0,
        &breaks,
        48,
        20,
    );
    let brownian = composite_legendre(
        |u| v(mean + sd * u) * dt.sqrt() * u * density(u),
        -12.0,
        12.0,
        &breaks,
        48,
        20,
    );
    Ok((plain, brownian))
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn d1_d2(s0: f64, k: f64, r: f64, sigma: f64, t: f64) -> Result<(f64, f64)> {
    if !(s0 > 0.0 && k > 0.0) {
        return Err(Error::invalid("S0", "spot and strike must be positive"));
    }
    if !(sigma > 0.0) || !(t > 0.0) {
        return Err(Error::invalid(
            "sigma",
            format!("need sigma > 0 and T > 0, got {sigma}, {t}"),
        ));
    }
    let vol = sigma * t.sqrt();
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / vol;
    Ok((d1, d1 - vol))
}

/// Black-Scholes call price and `Z_0 = sigma S_0 N(d1)`.
pub fn black_scholes_reference(s0: f64, k: f64, r: f64, sigma: f64, t: f64) -> Result<(f64, f64)> {
    let (d1, d2) = d1_d2(s0, k, r, sigma, t)?;
    let price = s0 * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d2);
    Ok((price, sigma * s0 * norm_cdf(d1)))
}

/// Black-Scholes put price and `sigma S_0 (N(d1) - 1)`.
pub fn black_scholes_put(s0: f64, k: f64, r: f64, sigma: f64, t: f64) -> Result<(f64, f64)> {
    let (d1, d2) = d1_d2(s0, k, r, sigma, t)?;
    let price = k * (-r * t).exp() * norm_cdf(-d2) - s0 * norm_cdf(-d1);
    Ok((price, -sigma * s0 * norm_cdf(-d1)))
}

/// Least-squares slope of `log(error)` against `log(dt)`, `dt ~ 1/P`.
pub fn estimate_order(steps: &[usize], errors: &[f64]) -> Result<f64> {
    if steps.len() != errors.len() {
        return Err(Error::LengthMismatch {
            expected: steps.len(),
            got: errors.len(),
        });
    }
    if steps.len() < 3 {
        return Err(Error::invalid(
            "steps",
            format!("need at least 3 points, got {}", steps.len()),
        ));
    }
    if steps.contains(&0) {
        return Err(Error::invalid("steps", "P must be positive"));
    }
    if errors.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(
            "errors",
            "all errors must be positive and finite",
        ));
    }
    let xs: Vec<f64> = steps.iter().map(|&p| -(p as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("steps", "P values must not all be equal"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    pub errors_y: Vec<f64>,
    pub errors_z: Vec<f64>,
    pub order_y: f64,
    pub order_z: f64,
    pub reference: Reference,
}

/// Solves at every `P` in `steps` (strictly increasing, at least three)
/// and fits the orders against `reference`.
pub fn convergence_study(
    problem: &FbsdeProblem,
    config: &SolverConfig,
    steps: &[usize],
    reference: Reference,
) -> Result<ConvergenceReport> {
    if steps.len() < 3 {
        return Err(Error::invalid(
            "P-list",
            format!("need at least 3 values, got {}", steps.len()),
        ));
    }
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "P-list",
            "values must be strictly increasing",
        ));
    }
    let mut report = ConvergenceReport {
        steps: steps.to_vec(),
        y0: Vec::new(),
        z0: Vec::new(),
        errors_y: Vec::new(),
        errors_z: Vec::new(),
        order_y: f64::NAN,
        order_z: f64::NAN,
        reference,
    };
    for &p in steps {
        let res = solve(
            problem,
            &SolverConfig {
                steps: p,
                ..config.clone()
            },
        )?;
        report.y0.push(res.y0);
        report.z0.push(res.z0);
        report.errors_y.push((res.y0 - reference.y).abs());
        report.errors_z.push((res.z0 - reference.z).abs());
    }
    report.order_y = estimate_order(steps, &report.errors_y).unwrap_or(f64::NAN);
    report.order_z = estimate_order(steps, &report.errors_z).unwrap_or(f64::NAN);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_builtin_problem, CoefficientDependence};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine(mu: f64, sigma: f64) -> FbsdeProblem {
        FbsdeProblem::new(
            "a",
            move |_, _| mu,
            move |_, _| sigma,
            |_, _, _, _| 0.0,
            |_| 0.0,
            |_| 0.0,
            0.0,
            1.0,
        )
        .unwrap()
        .with_dependence(CoefficientDependence::CONSTANT)
    }

    #[test]
    fn normalization_and_moments() {
        let p = affine(0.3, 0.7);
        let (t, x, dt) = (0.0, 1.5, 0.2);
        assert_abs_diff_eq!(
            quad_expectation(&p, t, x, |_| 1.0, dt, 64).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quad_expectation(&p, t, x, |v| v, dt, 64).unwrap(),
            x + 0.3 * dt,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quad_expectation_brownian(&p, t, x, |_| 1.0, dt, 64).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quad_expectation_brownian(&p, t, x, |v| v, dt, 64).unwrap(),
            0.7 * dt,
            epsilon = 1e-12
        );
        assert!(quad_expectation(&p, t, x, |v| v, dt, 8).is_err());
        let unit = affine(0.0, 1.0);
        assert_abs_diff_eq!(
            quad_expectation_brownian(&unit, t, x, |v| v, dt, 64).unwrap(),
            dt,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sine_expectation() {
        let p = make_builtin_problem("ex1").unwrap();
        let dt = 0.5;
        let v = quad_expectation(&p, 0.5, 0.0, |xi| (xi + 1.0).sin(), dt, 64).unwrap();
        assert_abs_diff_eq!(v, (-dt / 2.0).exp() * 1f64.sin(), epsilon = 1e-10);
    }

    #[test]
    fn brownian_matches_derivative_identity() {
        let p = make_builtin_problem("ex4").unwrap();
        let (t, x, dt) = (0.2, 0.8, 0.05);
        let s = p.diffusion(t, x);
        for (v, dv) in [
            (
                Box::new(|u: f64| u.sin()) as Box<dyn Fn(f64) -> f64>,
                Box::new(|u: f64| u.cos()) as Box<dyn Fn(f64) -> f64>,
            ),
            (
                Box::new(|u: f64| (-u * u).exp()),
                Box::new(|u: f64| -2.0 * u * (-u * u).exp()),
            ),
        ] {
            let lhs = quad_expectation_brownian(&p, t, x, &v, dt, 64).unwrap();
            let rhs = s * dt * quad_expectation(&p, t, x, &dv, dt, 64).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
        }
    }

    #[test]
    fn node_saturation() {
        let p = make_builtin_problem("ex4").unwrap();
        let f = |u: f64| (u * 0.5).cos() * (-0.1 * u * u).exp();
        let a = quad_expectation(&p, 0.0, 1.0, f, 0.1, 64).unwrap();
        let b = quad_expectation(&p, 0.0, 1.0, f, 0.1, 128).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn kinked_oracle_agrees_with_hermite_on_smooth_input() {
        let p = make_builtin_problem("ex1").unwrap();
        let (a, b) = quad_expectation_kinked(&p, 0.0, 0.3, |u| u.sin(), 0.1, &[]).unwrap();
        assert_abs_diff_eq!(
            a,
            quad_expectation(&p, 0.0, 0.3, |u| u.sin(), 0.1, 64).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            b,
            quad_expectation_brownian(&p, 0.0, 0.3, |u| u.sin(), 0.1, 64).unwrap(),
            epsilon = 1e-12
        );
        // E[(X - K)^+] for X ~ N(m, s^2) at K = m is s / sqrt(2 pi)
        let (c, _) = quad_expectation_kinked(&p, 0.0, 0.0, |u| u.max(0.0), 0.25, &[0.0]).unwrap();
        assert_abs_diff_eq!(
            c,
            0.5 / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn black_scholes_values() {
        let (y, z) = black_scholes_reference(100.0, 100.0, 0.1, 0.25, 0.1).unwrap();
        assert_abs_diff_eq!(y, 3.65997, epsilon = 5e-6);
        assert_abs_diff_eq!(z, 14.14823, epsilon = 5e-6);
        let (y, z) = black_scholes_reference(110.0, 100.0, 0.0, 1e-8, 0.1).unwrap();
        assert_abs_diff_eq!(y, 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(z / (1e-8 * 110.0), 1.0, epsilon = 1e-12);
        assert!(black_scholes_reference(100.0, 100.0, 0.1, 0.0, 0.1).is_err());
        assert!(black_scholes_reference(100.0, 100.0, 0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn put_call_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s0 = rng.random_range(50.0..150.0);
            let k = rng.random_range(50.0..150.0);
            let r = rng.random_range(-0.02..0.1);
            let sigma = rng.random_range(0.05..0.8);
            let t = rng.random_range(0.01..3.0);
            let (c, zc) = black_scholes_reference(s0, k, r, sigma, t).unwrap();
            let (p, zp) = black_scholes_put(s0, k, r, sigma, t).unwrap();
            assert_abs_diff_eq!(c - p, s0 - k * (-r * t).exp(), epsilon = 1e-10);
            assert_abs_diff_eq!(zc - zp, sigma * s0, epsilon = 1e-10);
        }
    }

    #[test]
    fn order_fits() {
        let steps = [16usize, 32, 64, 128, 256];
        let e2: Vec<f64> = steps.iter().map(|&p| 3.0 / (p as f64).powi(2)).collect();
        assert_abs_diff_eq!(estimate_order(&steps, &e2).unwrap(), 2.0, epsilon = 1e-10);
        let e1: Vec<f64> = steps.iter().map(|&p| 0.2 / p as f64).collect();
        assert_abs_diff_eq!(estimate_order(&steps, &e1).unwrap(), 1.0, epsilon = 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy: Vec<f64> = steps
            .iter()
            .map(|&p| (p as f64).powf(-1.5) * (1.0 + 0.05 * rng.random_range(-1.0..1.0)))
            .collect();
        assert!((estimate_order(&steps, &noisy).unwrap() - 1.5).abs() < 0.15);
        assert!(estimate_order(&steps[..2], &e1[..2]).is_err());
        assert!(estimate_order(&steps, &[1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
        assert!(estimate_order(&steps, &[1.0, -1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
