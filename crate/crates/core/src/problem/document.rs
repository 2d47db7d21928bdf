use serde::{Deserialize, Serialize};

use super::builtin::{bid_ask_spread, european_call, BuiltinProblem, CallParams, SpreadParams};
use super::expr::{Expr, Var};
use super::{CoefficientDependence, FbsdeProblem};
use crate::error::{Error, Result};

/// Closed-form solution `(y, z)` as expressions in `t` and `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactDocument {
    pub y: String,
    pub z: String,
}

/// JSON form of a problem.
///
/// Either a builtin shortcut:
///
/// ```json
/// {"builtin": "ex2_call", "params": {"mu_bar": 0.4}}
/// ```
///
/// or inline expressions (see [`expr`](super::expr) for the syntax):
///
/// ```json
/// {"drift": "0", "diffusion": "1", "driver": "-0.1*y",
///  "terminal": "sin(x)", "terminal_dx": "cos(x)", "x0": 0, "horizon_T": 1}
/// ```
///
/// Drift and diffusion may use `t, x`; the driver `t, x, y, z`; terminal
/// data `x` only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_dx: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, rename = "horizon_T", skip_serializing_if = "Option::is_none")]
    pub horizon_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinks: Vec<f64>,
}

impl ProblemDocument {
    pub fn builtin(name: &str) -> Self {
        Self {
            builtin: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn build(&self) -> Result<FbsdeProblem> {
        match &self.builtin {
            Some(name) => self.build_builtin(name),
            None => self.build_inline(),
        }
    }

    fn build_builtin(&self, name: &str) -> Result<FbsdeProblem> {
        let inline_fields = [
            self.drift.is_some(),
            self.diffusion.is_some(),
            self.driver.is_some(),
            self.terminal.is_some(),
            self.terminal_dx.is_some(),
            self.x0.is_some(),
            self.horizon_t.is_some(),
            self.exact.is_some(),
            self.lipschitz_y.is_some(),
            !self.kinks.is_empty(),
        ];
        if inline_fields.into_iter().any(|b| b) {
            return Err(Error::Document(
                "a builtin problem cannot be combined with inline fields".into(),
            ));
        }
        let params = self
            .params
            .clone()
            .unwrap_or(serde_json::Value::Object(Default::default()));
        let bad = |e: serde_json::Error| Error::Document(format!("params for {name}: {e}"));
        match name.parse::<BuiltinProblem>()? {
            BuiltinProblem::Ex2Call => {
                european_call(&serde_json::from_value::<CallParams>(params).map_err(bad)?)
            }
            BuiltinProblem::Ex3Spread => {
                bid_ask_spread(&serde_json::from_value::<SpreadParams>(params).map_err(bad)?)
            }
            p => {
                let empty = params.as_object().is_some_and(|m| m.is_empty());
                if !empty {
                    return Err(Error::Document(format!("{name} takes no params")));
                }
                Ok(p.build())
            }
        }
    }
}

fn need<'a>(v: &'a Option<String>, field: &str) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| Error::Document(format!("missing field '{field}'")))
}

impl ProblemDocument {
    fn build_inline(&self) -> Result<FbsdeProblem> {
        if self.params.is_some() {
            return Err(Error::Document("params requires builtin".into()));
        }
        let tx = [Var::T, Var::X];
        let drift = Expr::parse(need(&self.drift, "drift")?)?.restrict(&tx, "drift")?;
        let diffusion =
            Expr::parse(need(&self.diffusion, "diffusion")?)?.restrict(&tx, "diffusion")?;
        let driver = Expr::parse(need(&self.driver, "driver")?)?;
        let terminal =
            Expr::parse(need(&self.terminal, "terminal")?)?.restrict(&[Var::X], "terminal")?;
        let terminal_dx = Expr::parse(need(&self.terminal_dx, "terminal_dx")?)?
            .restrict(&[Var::X], "terminal_dx")?;
        let x0 = self
            .x0
            .ok_or_else(|| Error::Document("missing field 'x0'".into()))?;
        let horizon = self
            .horizon_t
            .ok_or_else(|| Error::Document("missing field 'horizon_T'".into()))?;

        let dependence = CoefficientDependence {
            time: drift.uses(Var::T) || diffusion.uses(Var::T),
            state: drift.uses(Var::X) || diffusion.uses(Var::X),
        };
        let mut problem = FbsdeProblem::new(
            self.name.clone().unwrap_or_else(|| "custom".into()),
            move |t, x| drift.eval(t, x, 0.0, 0.0),
            move |t, x| diffusion.eval(t, x, 0.0, 0.0),
            move |t, x, y, z| driver.eval(t, x, y, z),
            move |x| terminal.eval(0.0, x, 0.0, 0.0),
            move |x| terminal_dx.eval(0.0, x, 0.0, 0.0),
            x0,
            horizon,
        )?
        .with_dependence(dependence)
        .with_kinks(self.kinks.clone());
        if let Some(exact) = &self.exact {
            let y = Expr::parse(&exact.y)?.restrict(&tx, "exact.y")?;
            let z = Expr::parse(&exact.z)?.restrict(&tx, "exact.z")?;
            problem =
                problem.with_exact(move |t, x| (y.eval(t, x, 0.0, 0.0), z.eval(t, x, 0.0, 0.0)));
        }
        if let Some(lip) = self.lipschitz_y {
            problem = problem.with_lipschitz_y(lip)?;
        }
        Ok(problem)
    }
}
