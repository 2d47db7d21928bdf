//! The backward theta-scheme recursion on the wavelet grid.
//!
//! Per grid row `s`, with `A`, `B` the expectation kernels and values from
//! the next time level,
//!
//! ```text
//! z = -(1-th2)/th2 E[z'] + E[y' dW]/(th2 dt) + (1-th2)/th2 E[f' dW]
//! h = E[y'] + dt (1-th1) E[f']
//! y = dt th1 f(t, x, y, z) + h          (Picard, exactly I iterations)
//! ```

mod antireflective;
mod step;

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::WaveletGrid;
use crate::error::{Error, Result};
use crate::expectation::{ExpectationEngine, ExpectationKernel};
use crate::problem::{compute_domain, DomainSpec, FbsdeProblem, ThetaScheme};

pub use antireflective::{antireflective_adjust, antireflective_bounds};
pub use step::{
    backward_step, evaluate_at, picard_solve, terminal_slice_mixed, terminal_slice_quick,
    PicardOutcome, SolutionSlice, StepDiagnostic,
};

/// How the terminal slice is formed; later steps always use point values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Point samples of the terminal data.
    Quick,
    /// Projection coefficients of the terminal data.
    #[default]
    Mixed,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quick" => Ok(Variant::Quick),
            "mixed" => Ok(Variant::Mixed),
            _ => Err(Error::invalid(
                "variant",
                format!("expected quick or mixed, got {s:?}"),
            )),
        }
    }
}

/// Which kernel construction the solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPath {
    /// Shifted generator when the coefficients ignore the state.
    #[default]
    Auto,
    /// One transform per row regardless.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: ThetaScheme,
    /// Number of time steps `P`.
    pub steps: usize,
    /// Wavelet order `J`.
    pub order: usize,
    /// Domain width multiplier `L`.
    pub width_multiplier: f64,
    pub picard_iters: usize,
    pub variant: Variant,
    /// Fraction of the grid treated as unreliable at each end.
    pub antireflective: Option<f64>,
    /// Keep every grid slice, including one at `t = 0`.
    pub keep_slices: bool,
    pub kernel_path: KernelPath,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: ThetaScheme::D,
            steps: 128,
            order: 512,
            width_multiplier: 10.0,
            picard_iters: 5,
            variant: Variant::Mixed,
            antireflective: None,
            keep_slices: false,
            kernel_path: KernelPath::Auto,
        }
    }
}

impl SolverConfig {
    pub fn new(scheme: ThetaScheme, steps: usize, order: usize) -> Self {
        Self {
            scheme,
            steps,
            order,
            ..Default::default()
        }
    }

    pub fn dt(&self, problem: &FbsdeProblem) -> f64 {
        problem.horizon() / self.steps as f64
    }

    /// Checks the configuration against `problem`, including the Picard
    /// contraction condition `dt * theta1 * Lip < 1`.
    pub fn validate(&self, problem: &FbsdeProblem) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("P", "must be positive"));
        }
        if self.order == 0 {
            return Err(Error::invalid("J", "must be positive"));
        }
        if !(self.width_multiplier > 0.0) || !self.width_multiplier.is_finite() {
            return Err(Error::invalid(
                "L",
                format!("must be positive, got {}", self.width_multiplier),
            ));
        }
        ThetaScheme::custom(self.scheme.theta1, self.scheme.theta2)?;
        if let Some(f) = self.antireflective {
            antireflective_bounds(2 * self.order, f)?;
        }
        let dt = self.dt(problem);
        if let Some(lip) = problem.lipschitz_y() {
            let q = dt * self.scheme.theta1 * lip;
            if self.scheme.theta1 > 0.0 && q >= 1.0 {
                return Err(Error::invalid(
                    "P",
                    format!("Picard contraction fails: dt * theta1 * Lip = {q} >= 1; increase P"),
                ));
            }
        }
        Ok(())
    }
}

/// Wall time per phase, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub terminal_ms: f64,
    pub kernel_build_ms: f64,
    pub matvec_ms: f64,
    pub picard_ms: f64,
    pub driver_eval_ms: f64,
    pub antireflective_ms: f64,
    pub final_eval_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: Vec<StepDiagnostic>,
    /// Rows (over all steps) where Picard updates grew three times in a row.
    pub picard_warnings: usize,
    pub kernel_builds: usize,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub y0: f64,
    pub z0: f64,
    pub domain: DomainSpec,
    pub grid: WaveletGrid,
    /// Retained slices ordered from `t = T` down to `t = 0`; empty unless
    /// requested.
    pub slices: Vec<SolutionSlice>,
    pub diagnostics: Diagnostics,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

struct Stepper<'a> {
    problem: &'a FbsdeProblem,
    config: &'a SolverConfig,
    engine: ExpectationEngine,
    dt: f64,
    cached: Option<ExpectationKernel>,
    diag: Diagnostics,
}

impl Stepper<'_> {
    fn kernel(&mut self, t: f64) -> Result<()> {
        let reuse = !self.problem.dependence().time && self.cached.is_some();
        if reuse {
            return Ok(());
        }
        let started = Instant::now();
        let k = match self.config.kernel_path {
            KernelPath::Auto => self.engine.build_kernel(self.problem, t, self.dt)?,
            KernelPath::General => self.engine.build_kernel_general(self.problem, t, self.dt)?,
        };
        self.cached = Some(k);
        self.diag.kernel_builds += 1;
        self.diag.timings.kernel_build_ms += ms(started);
        Ok(())
    }

    fn step(&mut self, next: &SolutionSlice, index: usize) -> Result<SolutionSlice> {
        let t = index as f64 * self.dt;
        self.kernel(t)?;
        let grid = *self.engine.grid();
        let kernel = self.cached.as_ref().expect("kernel built");

        let started = Instant::now();
        let products = step::kernel_products(kernel, next);
        self.diag.timings.matvec_ms += ms(started);

        let started = Instant::now();
        let (mut y, mut z, sd) = step::finish_rows(
            &products,
            &self.config.scheme,
            self.problem,
            &grid,
            index,
            t,
            self.dt,
            self.config.picard_iters,
        )?;
        self.diag.timings.picard_ms += ms(started);
        self.diag.picard_warnings += sd.diverged_rows;
        self.diag.steps.push(sd);

        if let Some(f) = self.config.antireflective {
            let started = Instant::now();
            antireflective_adjust(&mut y, f)?;
            antireflective_adjust(&mut z, f)?;
            self.diag.timings.antireflective_ms += ms(started);
        }

        let started = Instant::now();
        let mut slice = SolutionSlice {
            t,
            y,
            z,
            fvals: Vec::new(),
        };
        slice.refresh_driver(self.problem, &grid);
        self.diag.timings.driver_eval_ms += ms(started);
        slice.check_finite().map_err(|e| Error::StepFailure {
            step: index,
            row: 0,
            reason: e.to_string(),
        })?;
        Ok(slice)
    }
}

/// Solves `problem` backwards from `T` and evaluates `(y, z)` at `(0, x0)`.
pub fn solve(problem: &FbsdeProblem, config: &SolverConfig) -> Result<SolveResult> {
    let started_total = Instant::now();
    config.validate(problem)?;
    let domain = compute_domain(problem, config.width_multiplier)?;
    let grid = WaveletGrid::from_domain(&domain, config.order)?;
    let mut st = Stepper {
        problem,
        config,
        engine: ExpectationEngine::new(grid),
        dt: config.dt(problem),
        cached: None,
        diag: Diagnostics::default(),
    };

    let started = Instant::now();
    let mut next = match config.variant {
        Variant::Quick => terminal_slice_quick(problem, &grid)?,
        Variant::Mixed => terminal_slice_mixed(problem, &grid)?,
    };
    st.diag.timings.terminal_ms += ms(started);

    let mut slices = Vec::new();
    for index in (1..config.steps).rev() {
        let slice = st.step(&next, index)?;
        if config.keep_slices {
            slices.push(std::mem::replace(&mut next, slice));
        } else {
            next = slice;
        }
    }

    let started = Instant::now();
    let row = st.engine.eval_row(problem, 0.0, st.dt, problem.x0())?;
    let (y0, z0, outcome) = evaluate_at(
        &next,
        &row,
        &config.scheme,
        problem,
        0.0,
        st.dt,
        config.picard_iters,
    )
    .map_err(|e| match e {
        Error::StepFailure { reason, .. } => Error::StepFailure {
            step: 0,
            row: 0,
            reason,
        },
        other => other,
    })?;
    st.diag.picard_warnings += outcome.diverged as usize;
    st.diag.timings.final_eval_ms += ms(started);

    if config.keep_slices {
        let first = st.step(&next, 0)?;
        slices.push(next);
        slices.push(first);
    }
    st.diag.timings.total_ms = ms(started_total);

    Ok(SolveResult {
        y0,
        z0,
        domain,
        grid,
        slices,
        diagnostics: st.diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{project_coefficients, ProjectionOptions};
    use crate::oracle::{quad_expectation, quad_expectation_brownian};
    use crate::problem::{make_builtin_problem, CoefficientDependence};
    use approx::assert_abs_diff_eq;

    fn heat(terminal: fn(f64) -> f64, dterminal: fn(f64) -> f64) -> FbsdeProblem {
        FbsdeProblem::new(
            "heat",
            |_, _| 0.1,
            |_, _| 0.5,
            |_, _, _, _| 0.0,
            terminal,
            dterminal,
            0.2,
            1.0,
        )
        .unwrap()
        .with_dependence(CoefficientDependence::CONSTANT)
    }

    fn small(scheme: ThetaScheme, steps: usize, variant: Variant) -> SolverConfig {
        SolverConfig {
            variant,
            order: 64,
            ..SolverConfig::new(scheme, steps, 64)
        }
    }

    #[test]
    fn config_validation() {
        let p = make_builtin_problem("ex1").unwrap();
        let ok = SolverConfig::default();
        assert!(ok.validate(&p).is_ok());
        for bad in [
            SolverConfig {
                steps: 0,
                ..ok.clone()
            },
            SolverConfig {
                order: 0,
                ..ok.clone()
            },
            SolverConfig {
                width_multiplier: 0.0,
                ..ok.clone()
            },
            SolverConfig {
                antireflective: Some(0.5),
                ..ok.clone()
            },
            SolverConfig {
                scheme: ThetaScheme {
                    theta2: 0.0,
                    ..ThetaScheme::A
                },
                ..ok.clone()
            },
        ] {
            assert!(
                matches!(bad.validate(&p), Err(Error::InvalidParameter { .. })),
                "{bad:?}"
            );
        }
        // Lip 3.5, theta1 = 1, dt = 1/3
        let coarse = SolverConfig {
            steps: 3,
            scheme: ThetaScheme::C,
            ..ok.clone()
        };
        assert!(matches!(
            coarse.validate(&p),
            Err(Error::InvalidParameter { name: "P", .. })
        ));
        assert!(SolverConfig {
            steps: 3,
            scheme: ThetaScheme::A,
            ..ok
        }
        .validate(&p)
        .is_ok());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("quick".parse::<Variant>().unwrap(), Variant::Quick);
        assert_eq!("Mixed".parse::<Variant>().unwrap(), Variant::Mixed);
        assert!("fast".parse::<Variant>().is_err());
    }

    #[test]
    fn terminal_slices() {
        let p = make_builtin_problem("ex1").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        let g = WaveletGrid::from_domain(&d, 32).unwrap();
        let s = terminal_slice_quick(&p, &g).unwrap();
        for (i, x) in g.points().into_iter().enumerate() {
            assert_eq!(s.y[i], (x + 1.0).sin());
            assert_eq!(s.z[i], (x + 1.0).cos());
            assert_eq!(s.fvals[i], p.driver(1.0, x, s.y[i], s.z[i]));
        }

        let p = make_builtin_problem("ex2_call").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        let g = WaveletGrid::new(64, d.lower, d.upper).unwrap();
        let atm = FbsdeProblem::new(
            "atm",
            |_, _| 0.0,
            |_, _| 0.25,
            |_, _, _, _| 0.0,
            |x| 100.0 * ((x - 100f64.ln()).exp() - 1.0).max(0.0),
            |x| if x >= 100f64.ln() { x.exp() } else { 0.0 },
            100f64.ln(),
            0.1,
        )
        .unwrap();
        // a grid with log(100) as a node
        let gk = WaveletGrid::new(8, 100f64.ln() - 0.8, 100f64.ln() + 0.8).unwrap();
        let s = terminal_slice_quick(&atm, &gk).unwrap();
        let i = gk.index(0);
        assert_eq!(s.y[i], 0.0);
        assert_abs_diff_eq!(s.z[i], 0.25 * 100.0, epsilon = 1e-10);

        let quick = terminal_slice_quick(&p, &g).unwrap();
        let mixed = terminal_slice_mixed(&p, &g).unwrap();
        let diff = quick
            .y
            .iter()
            .zip(&mixed.y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff > 0.0);

        let zero = FbsdeProblem::new(
            "zero",
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, _, _| 0.0,
            |_| 0.0,
            |_| 0.0,
            0.0,
            1.0,
        )
        .unwrap();
        for s in [
            terminal_slice_quick(&zero, &g).unwrap(),
            terminal_slice_mixed(&zero, &g).unwrap(),
        ] {
            assert!(s.y.iter().chain(&s.z).chain(&s.fvals).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mixed_equals_quick_in_vj() {
        // terminal data that lies in V_J for the ex1 grid
        let p = make_builtin_problem("ex1").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        let g = WaveletGrid::from_domain(&d, 32).unwrap();
        let rho = g.angular(3);
        let c = g.center();
        let v = FbsdeProblem::new(
            "vj",
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, y, _| -0.5 * y,
            move |x| (rho * (x - c)).cos(),
            move |x| -rho * (rho * (x - c)).sin(),
            0.0,
            1.0,
        )
        .unwrap()
        .with_dependence(CoefficientDependence::CONSTANT);
        let q = terminal_slice_quick(&v, &g).unwrap();
        let m = terminal_slice_mixed(&v, &g).unwrap();
        for i in 0..g.len() {
            assert!((q.y[i] - m.y[i]).abs() < 1e-8);
            assert!((q.z[i] - m.z[i]).abs() < 1e-8);
            assert!((q.fvals[i] - m.fvals[i]).abs() < 1e-8);
        }
        let a = solve(&v, &small(ThetaScheme::D, 8, Variant::Quick)).unwrap();
        let b = solve(&v, &small(ThetaScheme::D, 8, Variant::Mixed)).unwrap();
        assert!((a.y0 - b.y0).abs() < 1e-8 && (a.z0 - b.z0).abs() < 1e-8);
    }

    #[test]
    fn picard_behaviour() {
        let p = make_builtin_problem("ex2_call").unwrap();
        let r: f64 = 0.1;
        let dt = 0.01;
        let h = 3.7;
        assert_eq!(picard_solve(&p, 0.0, 4.6, 0.0, h, 0.0, dt, 5, 123.0).y, h);
        let out = picard_solve(&p, 0.0, 4.6, 0.0, h, 1.0, dt, 5, h);
        let fixed = h / (1.0 + r * dt);
        // the contraction bound is below one ulp of h here
        assert!((out.y - fixed).abs() <= (r * dt).powi(6) * h.abs() + 2.0 * f64::EPSILON * h.abs());
        assert!(!out.diverged);

        let bad = FbsdeProblem::new(
            "bad",
            |_, _| 0.0,
            |_, _| 1.0,
            |_, _, y, _| -150.0 * y,
            |_| 0.0,
            |_| 0.0,
            0.0,
            1.0,
        )
        .unwrap();
        // dt * theta1 * Lip = 0.01 * 1 * 150 = 1.5
        let out = picard_solve(&bad, 0.0, 0.0, 0.0, 1.0, 1.0, dt, 5, 0.0);
        assert!(out.diverged);
    }

    #[test]
    fn driver_free_step_is_pure_expectation() {
        let p = heat(|x| x.sin(), |x| x.cos());
        let d = compute_domain(&p, 10.0).unwrap();
        let g = WaveletGrid::from_domain(&d, 128).unwrap();
        let e = ExpectationEngine::new(g);
        let dt = 0.05;
        let k = e.build_kernel(&p, 0.0, dt).unwrap();
        let next = terminal_slice_quick(&p, &g).unwrap();
        let (s, _) = backward_step(&next, &k, &ThetaScheme::A, &p, &g, 3, 0.0, dt, 5).unwrap();
        let i = g.index(5);
        let x = g.point(5);
        let ey = quad_expectation(&p, 0.0, x, |u| u.sin(), dt, 64).unwrap();
        let ez = quad_expectation_brownian(&p, 0.0, x, |u| u.sin(), dt, 64).unwrap() / dt;
        assert!((s.y[i] - ey).abs() < 1e-8);
        assert!((s.z[i] - ez).abs() < 1e-8);
    }

    #[test]
    fn theta1_zero_is_h_and_zero_driver_paths_agree() {
        let p = heat(|x| x.cos(), |x| -x.sin());
        let a = solve(
            &p,
            &SolverConfig {
                keep_slices: true,
                ..small(ThetaScheme::A, 6, Variant::Quick)
            },
        )
        .unwrap();
        let c = solve(
            &p,
            &SolverConfig {
                keep_slices: true,
                ..small(ThetaScheme::C, 6, Variant::Quick)
            },
        )
        .unwrap();
        for (sa, sc) in a.slices.iter().zip(&c.slices) {
            for (ya, yc) in sa.y.iter().zip(&sc.y) {
                assert!((ya - yc).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn tower_property_without_driver() {
        let p = heat(|x| (-x * x).exp(), |x| -2.0 * x * (-x * x).exp());
        let cfg = SolverConfig {
            order: 256,
            ..small(ThetaScheme::A, 1, Variant::Quick)
        };
        let one = solve(&p, &cfg).unwrap();
        let two = solve(&p, &SolverConfig { steps: 2, ..cfg }).unwrap();
        assert!((one.y0 - two.y0).abs() < 1e-6, "{} vs {}", one.y0, two.y0);
    }

    #[test]
    fn slice_invariants() {
        let p = make_builtin_problem("ex4").unwrap();
        let cfg = SolverConfig {
            keep_slices: true,
            ..small(ThetaScheme::B, 5, Variant::Quick)
        };
        let r = solve(&p, &cfg).unwrap();
        assert_eq!(r.slices.len(), 6);
        assert_eq!(r.slices[0].t, 1.0);
        assert_eq!(r.slices[5].t, 0.0);
        for s in &r.slices {
            for i in 0..s.len() {
                let x = r.grid.point(r.grid.label(i));
                assert!((s.fvals[i] - p.driver(s.t, x, s.y[i], s.z[i])).abs() <= 1e-14);
            }
        }
        assert_eq!(r.diagnostics.steps.len(), 5);
        assert_eq!(r.diagnostics.kernel_builds, 5);
    }

    #[test]
    fn antireflective_solve_keeps_interior_bounds() {
        let p = make_builtin_problem("ex2_call").unwrap();
        let cfg = SolverConfig {
            antireflective: Some(0.1),
            keep_slices: true,
            ..small(ThetaScheme::D, 8, Variant::Mixed)
        };
        let r = solve(&p, &cfg).unwrap();
        let (lo, hi) = antireflective_bounds(r.grid.len(), 0.1).unwrap();
        for s in &r.slices[1..] {
            for i in 0..lo {
                assert!((s.y[i] - (2.0 * s.y[lo] - s.y[2 * lo - i])).abs() < 1e-12);
            }
            for i in hi + 1..s.len() {
                assert!((s.y[i] - (2.0 * s.y[hi] - s.y[2 * hi - i])).abs() < 1e-12);
            }
        }
        assert_eq!(r.diagnostics.kernel_builds, 1);
    }

    #[test]
    fn ex1_one_step_matches_oracle() {
        // P = 1, scheme A: y = E[g], z = E[g dW] / dt at x0
        let p = make_builtin_problem("ex1").unwrap();
        let r = solve(&p, &SolverConfig::new(ThetaScheme::A, 1, 512)).unwrap();
        let g = |x: f64| (x + 1.0).sin();
        let t = 0.0;
        let zo = quad_expectation_brownian(&p, t, 0.0, g, 1.0, 64).unwrap();
        let fo = quad_expectation(
            &p,
            t,
            0.0,
            |x| p.driver(1.0, x, g(x), (x + 1.0).cos()),
            1.0,
            64,
        )
        .unwrap();
        let yo = quad_expectation(&p, t, 0.0, g, 1.0, 64).unwrap() + fo;
        assert!((r.z0 - zo).abs() < 1e-5, "{} vs {zo}", r.z0);
        assert!((r.y0 - yo).abs() < 1e-5, "{} vs {yo}", r.y0);
    }

    #[test]
    fn mixed_projection_uses_problem_kinks() {
        let p = make_builtin_problem("ex3_spread").unwrap();
        let d = compute_domain(&p, 10.0).unwrap();
        let g = WaveletGrid::from_domain(&d, 64).unwrap();
        let s = terminal_slice_mixed(&p, &g).unwrap();
        let direct = project_coefficients(
            |x| p.terminal(x),
            &g,
            &ProjectionOptions::with_kinks(p.kinks()),
        )
        .unwrap();
        assert_eq!(s.y, direct.into_values());
    }
}
