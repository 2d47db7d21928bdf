use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CoefficientDependence, FbsdeProblem, Reference, ReferenceSource};
use crate::error::{Error, Result};
use crate::oracle::black_scholes_reference;

/// Published reference values for the default bid-ask spread problem.
pub const SPREAD_REFERENCE_Y0: f64 = 2.958_454_4;
pub const SPREAD_REFERENCE_Z0: f64 = 0.553_19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinProblem {
    #[serde(rename = "ex1")]
    Ex1,
    #[serde(rename = "ex2_call")]
    Ex2Call,
    #[serde(rename = "ex3_spread")]
    Ex3Spread,
    #[serde(rename = "ex4")]
    Ex4,
}

impl BuiltinProblem {
    pub const ALL: [Self; 4] = [Self::Ex1, Self::Ex2Call, Self::Ex3Spread, Self::Ex4];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2Call => "ex2_call",
            Self::Ex3Spread => "ex3_spread",
            Self::Ex4 => "ex4",
        }
    }

    pub fn build(&self) -> FbsdeProblem {
        match self {
            Self::Ex1 => smooth_trigonometric(),
            Self::Ex2Call => {
                european_call(&CallParams::default()).expect("default call parameters are valid")
            }
            Self::Ex3Spread => bid_ask_spread(&SpreadParams::default())
                .expect("default spread parameters are valid"),
            Self::Ex4 => logistic_state_dependent(),
        }
    }
}

impl FromStr for BuiltinProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.id() == s.trim())
            .ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

pub fn make_builtin_problem(name: &str) -> Result<FbsdeProblem> {
    Ok(name.parse::<BuiltinProblem>()?.build())
}

/// `dX = dW`, driver `yz - z + 2.5y - sin(t+x)cos(t+x) - 2sin(t+x)`,
/// solution `(sin(x+t), cos(x+t))`.
fn smooth_trigonometric() -> FbsdeProblem {
    let horizon = 1.0;
    FbsdeProblem::new(
        "ex1",
        |_, _| 0.0,
        |_, _| 1.0,
        |t, x, y, z| {
            let (s, c) = (t + x).sin_cos();
            y * z - z + 2.5 * y - s * c - 2.0 * s
        },
        move |x| (x + horizon).sin(),
        move |x| (x + horizon).cos(),
        0.0,
        horizon,
    )
    .expect("valid builtin")
    .with_exact(|t, x| {
        let (s, c) = (x + t).sin_cos();
        (s, c)
    })
    // |df/dy| = |z + 2.5| with |z| <= 1 along the solution
    .with_lipschitz_y(3.5)
    .expect("valid builtin")
    .with_dependence(CoefficientDependence::CONSTANT)
}

/// Parameters of the European call in log-asset coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CallParams {
    pub s0: f64,
    pub strike: f64,
    pub rate: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub maturity: f64,
}

impl Default for CallParams {
    fn default() -> Self {
        Self {
            s0: 100.0,
            strike: 100.0,
            rate: 0.1,
            mu_bar: 0.2,
            sigma_bar: 0.25,
            maturity: 0.1,
        }
    }
}

fn check_market(s0: f64, sigma_bar: f64, maturity: f64, strikes: &[f64]) -> Result<()> {
    if !(s0 > 0.0) {
        return Err(Error::invalid("s0", format!("must be positive, got {s0}")));
    }
    if !(sigma_bar > 0.0) {
        return Err(Error::invalid(
            "sigma_bar",
            format!("must be positive, got {sigma_bar}"),
        ));
    }
    if !(maturity > 0.0) {
        return Err(Error::invalid(
            "maturity",
            format!("must be positive, got {maturity}"),
        ));
    }
    if strikes.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::invalid("strike", "strikes must be positive"));
    }
    Ok(())
}

/// Black-Scholes call as an FBSDE in `X = log S`: `dX = (mu - sigma^2/2) dt
/// + sigma dW`, driver `-r y - (mu - r)/sigma z`, payoff `(e^x - K)^+`.
pub fn european_call(p: &CallParams) -> Result<FbsdeProblem> {
    check_market(p.s0, p.sigma_bar, p.maturity, &[p.strike])?;
    let CallParams {
        s0,
        strike,
        rate,
        mu_bar,
        sigma_bar,
        maturity,
    } = *p;
    let drift = mu_bar - 0.5 * sigma_bar * sigma_bar;
    let premium = (mu_bar - rate) / sigma_bar;
    let log_strike = strike.ln();
    let (y0, z0) = black_scholes_reference(s0, strike, rate, sigma_bar, maturity)?;
    let problem = FbsdeProblem::new(
        "ex2_call",
        move |_, _| drift,
        move |_, _| sigma_bar,
        move |_, _, y, z| -rate * y - premium * z,
        move |x| strike * ((x - log_strike).exp() - 1.0).max(0.0),
        // right-sided derivative at the strike
        move |x| if x >= log_strike { x.exp() } else { 0.0 },
        s0.ln(),
        maturity,
    )?
    .with_exact(move |t, x| {
        let s = x.exp();
        let tau = maturity - t;
        if tau <= 0.0 {
            let itm = x >= log_strike;
            ((s - strike).max(0.0), if itm { sigma_bar * s } else { 0.0 })
        } else {
            black_scholes_reference(s, strike, rate, sigma_bar, tau).unwrap_or((f64::NAN, f64::NAN))
        }
    })
    .with_lipschitz_y(rate.abs())?
    .with_kinks(vec![log_strike])
    .with_dependence(CoefficientDependence::CONSTANT)
    .with_reference(Reference {
        y: y0,
        z: z0,
        source: ReferenceSource::BlackScholes,
    });
    Ok(problem)
}

/// Parameters of the call spread under different lending and borrowing rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpreadParams {
    pub s0: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub maturity: f64,
    pub strike_long: f64,
    pub strike_short: f64,
}

impl Default for SpreadParams {
    fn default() -> Self {
        Self {
            s0: 100.0,
            rate: 0.01,
            borrow_rate: 0.06,
            mu_bar: 0.05,
            sigma_bar: 0.2,
            maturity: 0.25,
            strike_long: 95.0,
            strike_short: 105.0,
        }
    }
}

/// Long one call at `K1`, short two calls at `K2`, with the nonlinear
/// driver `-r y - (mu - r)/sigma z - (R - r) min(y - z/sigma, 0)`.
///
/// The published reference `(Y_0, Z_0)` is attached only for the default
/// parameters.
pub fn bid_ask_spread(p: &SpreadParams) -> Result<FbsdeProblem> {
    check_market(
        p.s0,
        p.sigma_bar,
        p.maturity,
        &[p.strike_long, p.strike_short],
    )?;
    if p.borrow_rate < p.rate {
        return Err(Error::invalid(
            "borrow_rate",
            "must not be below the lending rate",
        ));
    }
    let SpreadParams {
        s0,
        rate,
        borrow_rate,
        mu_bar,
        sigma_bar,
        maturity,
        strike_long,
        strike_short,
    } = *p;
    let drift = mu_bar - 0.5 * sigma_bar * sigma_bar;
    let premium = (mu_bar - rate) / sigma_bar;
    let spread = borrow_rate - rate;
    let (log_k1, log_k2) = (strike_long.ln(), strike_short.ln());
    let mut problem = FbsdeProblem::new(
        "ex3_spread",
        move |_, _| drift,
        move |_, _| sigma_bar,
        move |_, _, y, z| -rate * y - premium * z - spread * (y - z / sigma_bar).min(0.0),
        move |x| {
            strike_long * ((x - log_k1).exp() - 1.0).max(0.0)
                - 2.0 * strike_short * ((x - log_k2).exp() - 1.0).max(0.0)
        },
        move |x| {
            let s = x.exp();
            let mut d = 0.0;
            if x >= log_k1 {
                d += s;
            }
            if x >= log_k2 {
                d -= 2.0 * s;
            }
            d
        },
        s0.ln(),
        maturity,
    )?
    // |df/dy| <= r + (R - r) for every fixed z
    .with_lipschitz_y(rate.abs() + spread)?
    .with_kinks(vec![log_k1, log_k2])
    .with_dependence(CoefficientDependence::CONSTANT);
    if *p == SpreadParams::default() {
        problem = problem.with_reference(Reference {
            y: SPREAD_REFERENCE_Y0,
            z: SPREAD_REFERENCE_Z0,
            source: ReferenceSource::Published,
        });
    }
    Ok(problem)
}

/// Time- and state-dependent coefficients with a logistic solution
/// `Y = e/(1+e)`, `Z = e^2/(1+e)^3`, `e = exp(t + x)`.
fn logistic_state_dependent() -> FbsdeProblem {
    let horizon = 1.0;
    let logistic = |u: f64| 1.0 / (1.0 + (-u).exp());
    FbsdeProblem::new(
        "ex4",
        |t, x| 1.0 / (1.0 + 2.0 * (t + x).exp()),
        move |t, x| logistic(t + x),
        |t, x, y, z| {
            let e = (t + x).exp();
            -2.0 * y / (1.0 + 2.0 * e) - 0.5 * (y * z / (1.0 + e) - y * y * z)
        },
        move |x| logistic(horizon + x),
        move |x| {
            let l = logistic(horizon + x);
            l * (1.0 - l)
        },
        1.0,
        horizon,
    )
    .expect("valid builtin")
    .with_exact(move |t, x| {
        let l = logistic(t + x);
        // e^2/(1+e)^3 = l^2 (1 - l)
        (l, l * l * (1.0 - l))
    })
    // |df/dy| <= 2 + |z|/2 + |yz| with y in [0, 1], z in [0, 4/27]
    .with_lipschitz_y(2.5)
    .expect("valid builtin")
    .with_dependence(CoefficientDependence::FULL)
}
