//! FBSDE problem definitions, theta schemes and computational domains.

mod builtin;
mod document;
pub mod expr;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{
    bid_ask_spread, european_call, make_builtin_problem, BuiltinProblem, CallParams, SpreadParams,
    SPREAD_REFERENCE_Y0, SPREAD_REFERENCE_Z0,
};
pub use document::{ExactDocument, ProblemDocument};

pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// Which arguments the forward coefficients (drift and diffusion) depend on.
///
/// The expectation kernel is rebuilt every step when `time` is set and has
/// per-row structure when `state` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoefficientDependence {
    pub time: bool,
    pub state: bool,
}

impl CoefficientDependence {
    pub const CONSTANT: Self = Self {
        time: false,
        state: false,
    };
    pub const FULL: Self = Self {
        time: true,
        state: true,
    };
}

/// Where a reference value for `(Y_0, Z_0)` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Closed-form solution of the problem evaluated at `(0, x0)`.
    ClosedForm,
    /// Black-Scholes price and hedge.
    BlackScholes,
    /// Published high-accuracy numerical value.
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub y: f64,
    pub z: f64,
    pub source: ReferenceSource,
}

/// A decoupled FBSDE in one space dimension.
///
/// Coefficient functions are always called with the original (uncentered)
/// state variable.
#[derive(Clone)]
pub struct FbsdeProblem {
    name: String,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    driver: DriverFn,
    terminal: TerminalFn,
    terminal_dx: TerminalFn,
    x0: f64,
    horizon: f64,
    exact: Option<ExactFn>,
    lipschitz_y: Option<f64>,
    kinks: Vec<f64>,
    dependence: CoefficientDependence,
    reference: Option<Reference>,
}

impl fmt::Debug for FbsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbsdeProblem")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("has_exact", &self.exact.is_some())
            .field("lipschitz_y", &self.lipschitz_y)
            .field("kinks", &self.kinks)
            .field("dependence", &self.dependence)
            .field("reference", &self.reference)
            .finish()
    }
}

impl FbsdeProblem {
    /// Creates a problem with fully time- and state-dependent coefficients.
    /// Use [`with_dependence`](Self::with_dependence) to enable the
    /// constant-coefficient fast paths.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        driver: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        terminal_dx: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(
                "horizon_T",
                format!("must be positive and finite, got {horizon}"),
            ));
        }
        if !x0.is_finite() {
            return Err(Error::invalid("x0", format!("must be finite, got {x0}")));
        }
        Ok(Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            driver: Arc::new(driver),
            terminal: Arc::new(terminal),
            terminal_dx: Arc::new(terminal_dx),
            x0,
            horizon,
            exact: None,
            lipschitz_y: None,
            kinks: Vec::new(),
            dependence: CoefficientDependence::FULL,
            reference: None,
        })
    }

    /// Attaches the exact solution `(t, x) -> (y, z)`.
    pub fn with_exact(
        mut self,
        exact: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_lipschitz_y(mut self, lip: f64) -> Result<Self> {
        if !(lip >= 0.0) || !lip.is_finite() {
            return Err(Error::invalid(
                "lipschitz_y",
                format!("must be non-negative and finite, got {lip}"),
            ));
        }
        self.lipschitz_y = Some(lip);
        Ok(self)
    }

    /// Abscissae where the terminal data is not smooth. Quadrature splits
    /// its panels there.
    pub fn with_kinks(mut self, mut kinks: Vec<f64>) -> Self {
        kinks.retain(|k| k.is_finite());
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        self.kinks = kinks;
        self
    }

    pub fn with_dependence(mut self, dependence: CoefficientDependence) -> Self {
        self.dependence = dependence;
        self
    }

    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    #[inline]
    pub fn driver(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.driver)(t, x, y, z)
    }

    #[inline]
    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    /// Derivative of the terminal function; right-sided at kinks.
    #[inline]
    pub fn terminal_dx(&self, x: f64) -> f64 {
        (self.terminal_dx)(x)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exact(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        self.exact.as_ref().map(|e| e(t, x))
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn lipschitz_y(&self) -> Option<f64> {
        self.lipschitz_y
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn dependence(&self) -> CoefficientDependence {
        self.dependence
    }

    /// Reference value for `(Y_0(x0), Z_0(x0))`: an explicitly attached one
    /// wins, otherwise the exact solution at `(0, x0)`.
    pub fn reference(&self) -> Option<Reference> {
        self.reference.or_else(|| {
            self.exact(0.0, self.x0).map(|(y, z)| Reference {
                y,
                z,
                source: ReferenceSource::ClosedForm,
            })
        })
    }

    /// Checks the sampled invariants: non-negative diffusion on `samples`
    /// across `[0, T]`, and agreement of the exact solution with the
    /// terminal condition at `t = T`.
    pub fn check_invariants(&self, samples: &[f64]) -> Result<()> {
        let times = [0.0, 0.5 * self.horizon, self.horizon];
        for &x in samples {
            for &t in &times {
                let s = self.diffusion(t, x);
                if !(s >= 0.0) {
                    return Err(Error::invalid(
                        "diffusion",
                        format!("sigma({t}, {x}) = {s} is negative or NaN"),
                    ));
                }
            }
            if let Some((y, _)) = self.exact(self.horizon, x) {
                let g = self.terminal(x);
                if (y - g).abs() > 1e-12 * (1.0 + g.abs()) {
                    return Err(Error::invalid(
                        "exact",
                        format!("exact(T, {x}).y = {y} disagrees with terminal(x) = {g}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Identifier of a theta scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeLabel {
    A,
    B,
    C,
    D,
    Custom,
}

/// Weights of the theta time discretization: `theta1` for the `Y`
/// integral, `theta2` for the `Z` integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaScheme {
    pub theta1: f64,
    pub theta2: f64,
    pub label: SchemeLabel,
}

impl ThetaScheme {
    pub const A: Self = Self {
        theta1: 0.0,
        theta2: 1.0,
        label: SchemeLabel::A,
    };
    pub const B: Self = Self {
        theta1: 0.5,
        theta2: 1.0,
        label: SchemeLabel::B,
    };
    pub const C: Self = Self {
        theta1: 1.0,
        theta2: 1.0,
        label: SchemeLabel::C,
    };
    pub const D: Self = Self {
        theta1: 0.5,
        theta2: 0.5,
        label: SchemeLabel::D,
    };

    pub const ALL: [Self; 4] = [Self::A, Self::B, Self::C, Self::D];

    /// A custom pair. `theta2 = 0` is rejected: the `Z` update divides by it.
    pub fn custom(theta1: f64, theta2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta1) {
            return Err(Error::invalid(
                "theta1",
                format!("must lie in [0, 1], got {theta1}"),
            ));
        }
        if !(theta2 > 0.0 && theta2 <= 1.0) {
            return Err(Error::invalid(
                "theta2",
                format!("must lie in (0, 1], got {theta2}"),
            ));
        }
        Ok(Self {
            theta1,
            theta2,
            label: SchemeLabel::Custom,
        })
    }

    pub fn name(&self) -> String {
        match self.label {
            SchemeLabel::A => "A".into(),
            SchemeLabel::B => "B".into(),
            SchemeLabel::C => "C".into(),
            SchemeLabel::D => "D".into(),
            SchemeLabel::Custom => format!("{},{}", self.theta1, self.theta2),
        }
    }
}

impl FromStr for ThetaScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        scheme_params(s)
    }
}

/// Parses `A`..`D` or an explicit `theta1,theta2` pair.
pub fn scheme_params(label: &str) -> Result<ThetaScheme> {
    let trimmed = label.trim();
    match trimmed.to_ascii_uppercase().as_str() {
        "A" => return Ok(ThetaScheme::A),
        "B" => return Ok(ThetaScheme::B),
        "C" => return Ok(ThetaScheme::C),
        "D" => return Ok(ThetaScheme::D),
        _ => {}
    }
    let trimmed = trimmed.trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::UnknownScheme(label.to_string()));
    }
    let parse = |p: &str| {
        p.parse::<f64>()
            .map_err(|_| Error::UnknownScheme(label.to_string()))
    };
    ThetaScheme::custom(parse(parts[0])?, parse(parts[1])?)
}

/// Cumulant-based computational domain `[k1 - L sqrt(k2), k1 + L sqrt(k2)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kappa1: f64,
    pub kappa2: f64,
    pub width_multiplier: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DomainSpec {
    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// `k1 = x0 + mu(0, x0) T`, `k2 = sigma(0, x0)^2 T`.
pub fn compute_domain(problem: &FbsdeProblem, width_multiplier: f64) -> Result<DomainSpec> {
    if !(width_multiplier > 0.0) || !width_multiplier.is_finite() {
        return Err(Error::invalid(
            "L",
            format!("must be positive and finite, got {width_multiplier}"),
        ));
    }
    let x0 = problem.x0();
    let t = problem.horizon();
    let sigma = problem.diffusion(0.0, x0);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateDomain(format!(
            "sigma(0, x0) = {sigma}; the domain width would vanish"
        )));
    }
    let kappa1 = x0 + problem.drift(0.0, x0) * t;
    let kappa2 = sigma * sigma * t;
    if !kappa1.is_finite() {
        return Err(Error::DegenerateDomain(format!("kappa1 = {kappa1}")));
    }
    let half = width_multiplier * kappa2.sqrt();
    Ok(DomainSpec {
        kappa1,
        kappa2,
        width_multiplier,
        lower: kappa1 - half,
        upper: kappa1 + half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scheme_table() {
        assert_eq!(scheme_params("A").unwrap(), ThetaScheme::A);
        assert_eq!((ThetaScheme::A.theta1, ThetaScheme::A.theta2), (0.0, 1.0));
        assert_eq!((ThetaScheme::B.theta1, ThetaScheme::B.theta2), (0.5, 1.0));
        assert_eq!((ThetaScheme::C.theta1, ThetaScheme::C.theta2), (1.0, 1.0));
        let d = scheme_params("d").unwrap();
        assert_eq!((d.theta1, d.theta2), (0.5, 0.5));
        assert_eq!(d.label, SchemeLabel::D);
    }

    #[test]
    fn custom_schemes() {
        let s = scheme_params("0.3,0.7").unwrap();
        assert_eq!(
            (s.theta1, s.theta2, s.label),
            (0.3, 0.7, SchemeLabel::Custom)
        );
        assert!(scheme_params("(0.3, 0.7)").is_ok());
        assert!(matches!(
            scheme_params("0.3,0"),
            Err(Error::InvalidParameter { name: "theta2", .. })
        ));
        assert!(matches!(
            scheme_params("1.5,0.5"),
            Err(Error::InvalidParameter { name: "theta1", .. })
        ));
        assert!(matches!(scheme_params("E"), Err(Error::UnknownScheme(_))));
        assert!(matches!(
            scheme_params("0.1,0.2,0.3"),
            Err(Error::UnknownScheme(_))
        ));
    }

    #[test]
    fn domain_ex1() {
        let p = make_builtin_problem("ex1").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        assert_abs_diff_eq!(d.kappa1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.kappa2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.lower, -10.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.upper, 10.0, epsilon = 1e-14);
    }

    #[test]
    fn domain_ex2() {
        let p = make_builtin_problem("ex2_call").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        // log(100) + (0.2 - 0.25^2/2) * 0.1, 0.25^2 * 0.1
        assert_abs_diff_eq!(d.kappa1, 4.622_045_185_988_092, epsilon = 1e-12);
        assert_abs_diff_eq!(d.kappa2, 0.00625, epsilon = 1e-15);
        assert_abs_diff_eq!(d.half_width(), 0.790_569_415_042_094_8, epsilon = 1e-12);
        // symmetric about kappa1
        assert_abs_diff_eq!(d.center(), d.kappa1, epsilon = 1e-15);
        assert_abs_diff_eq!(d.upper - d.kappa1, d.kappa1 - d.lower, epsilon = 1e-15);
    }

    #[test]
    fn domain_rejects_bad_inputs() {
        let p = make_builtin_problem("ex1").unwrap();
        assert!(matches!(
            compute_domain(&p, 0.0),
            Err(Error::InvalidParameter { name: "L", .. })
        ));
        assert!(compute_domain(&p, -1.0).is_err());
        let flat = FbsdeProblem::new(
            "flat",
            |_, _| 0.0,
            |_, _| 0.0,
            |_, _, _, _| 0.0,
            |_| 0.0,
            |_| 0.0,
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            compute_domain(&flat, 10.0),
            Err(Error::DegenerateDomain(_))
        ));
    }

    #[test]
    fn problem_rejects_bad_horizon() {
        let r = FbsdeProblem::new(
            "bad",
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, _, _| 0.0,
            |_| 0.0,
            |_| 0.0,
            0.0,
            0.0,
        );
        assert!(matches!(
            r,
            Err(Error::InvalidParameter {
                name: "horizon_T",
                ..
            })
        ));
    }

    #[test]
    fn invariant_check_catches_mismatched_exact() {
        let p = FbsdeProblem::new(
            "bad",
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, _, _| 0.0,
            |x| x,
            |_| 1.0,
            0.0,
            1.0,
        )
        .unwrap()
        .with_exact(|_, x| (x + 1.0, 1.0));
        assert!(p.check_invariants(&[0.0, 1.0]).is_err());
        let neg = FbsdeProblem::new(
            "neg",
            |_, _| 0.0,
            |_, x| x,
            |_, _, _, _| 0.0,
            |x| x,
            |_| 1.0,
            0.0,
            1.0,
        )
        .unwrap();
        assert!(neg.check_invariants(&[-1.0]).is_err());
    }
}
