use serde::{Deserialize, Serialize};

use crate::basis::{project_coefficients, ProjectionOptions, WaveletGrid};
use crate::error::{Error, Result};
use crate::expectation::{pair, ExpectationKernel, RowEvaluation};
use crate::problem::{FbsdeProblem, ThetaScheme};

/// Grid values of `y`, `z` and the driver at one time level, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSlice {
    pub t: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub fvals: Vec<f64>,
}

impl SolutionSlice {
    /// A slice with `fvals` evaluated from `y` and `z`.
    pub fn from_values(
        problem: &FbsdeProblem,
        grid: &WaveletGrid,
        t: f64,
        y: Vec<f64>,
        z: Vec<f64>,
    ) -> Result<Self> {
        let mut slice = Self {
            t,
            y,
            z,
            fvals: Vec::new(),
        };
        slice.refresh_driver(problem, grid);
        slice.check_finite()?;
        Ok(slice)
    }

    pub fn refresh_driver(&mut self, problem: &FbsdeProblem, grid: &WaveletGrid) {
        self.fvals = (0..self.y.len())
            .map(|i| problem.driver(self.t, grid.point(grid.label(i)), self.y[i], self.z[i]))
            .collect();
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self
            .y
            .iter()
            .chain(&self.z)
            .chain(&self.fvals)
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite(format!(
                "solution slice at t = {}",
                self.t
            )))
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Terminal slice from point samples of `g` and `sigma(T, .) g'`.
pub fn terminal_slice_quick(problem: &FbsdeProblem, grid: &WaveletGrid) -> Result<SolutionSlice> {
    let t = problem.horizon();
    let xs = grid.points();
    let y = xs.iter().map(|&x| problem.terminal(x)).collect();
    let z = xs
        .iter()
        .map(|&x| problem.diffusion(t, x) * problem.terminal_dx(x))
        .collect();
    SolutionSlice::from_values(problem, grid, t, y, z)
}

/// Terminal slice from projection coefficients of `g`, `sigma(T, .) g'` and
/// `f(T, x, g, sigma g')`.
///
/// The driver entry holds the projection of the terminal driver, not the
/// driver of the projected values.
pub fn terminal_slice_mixed(problem: &FbsdeProblem, grid: &WaveletGrid) -> Result<SolutionSlice> {
    let t = problem.horizon();
    let opts = ProjectionOptions::with_kinks(problem.kinks());
    let zt = |x: f64| problem.diffusion(t, x) * problem.terminal_dx(x);
    let y = project_coefficients(|x| problem.terminal(x), grid, &opts)?.into_values();
    let z = project_coefficients(zt, grid, &opts)?.into_values();
    let fvals = project_coefficients(
        |x| problem.driver(t, x, problem.terminal(x), zt(x)),
        grid,
        &opts,
    )?
    .into_values();
    let slice = SolutionSlice { t, y, z, fvals };
    slice.check_finite()?;
    Ok(slice)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOutcome {
    pub y: f64,
    /// `|y_I - y_{I-1}|`, zero when no iteration ran.
    pub residual: f64,
    /// The update grew three times in a row.
    pub diverged: bool,
}

/// Exactly `iters` fixed-point updates `y <- dt theta1 f(t, x, y, z) + h`
/// from `y_init`; `theta1 = 0` returns `h`.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    problem: &FbsdeProblem,
    t: f64,
    x: f64,
    z: f64,
    h: f64,
    theta1: f64,
    dt: f64,
    iters: usize,
    y_init: f64,
) -> PicardOutcome {
    if theta1 == 0.0 {
        return PicardOutcome {
            y: h,
            residual: 0.0,
            diverged: false,
        };
    }
    let mut y = y_init;
    let mut last = f64::INFINITY;
    let mut growth = 0;
    let mut diverged = false;
    let mut residual = 0.0;
    for _ in 0..iters {
        let next = dt * theta1 * problem.driver(t, x, y, z) + h;
        residual = (next - y).abs();
        if residual > last {
            growth += 1;
            diverged |= growth >= 3;
        } else {
            growth = 0;
        }
        last = residual;
        y = next;
    }
    PicardOutcome {
        y,
        residual,
        diverged,
    }
}

/// The five kernel-vector products a step needs, per row.
#[derive(Debug, Clone, Default)]
pub(crate) struct KernelProducts {
    pub ay: Vec<f64>,
    pub az: Vec<f64>,
    pub af: Vec<f64>,
    pub by: Vec<f64>,
    pub bf: Vec<f64>,
}

pub(crate) fn kernel_products(kernel: &ExpectationKernel, next: &SolutionSlice) -> KernelProducts {
    let n = kernel.size();
    let inv_j = 2.0 / n as f64;
    let mut out = KernelProducts {
        ay: Vec::with_capacity(n),
        az: Vec::with_capacity(n),
        af: Vec::with_capacity(n),
        by: Vec::with_capacity(n),
        bf: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (mut ay, mut az, mut af) = (0.0, 0.0, 0.0);
        for ((a, y), (z, f)) in kernel
            .a_row(i)
            .iter()
            .zip(&next.y)
            .zip(next.z.iter().zip(&next.fvals))
        {
            ay += a * y;
            az += a * z;
            af += a * f;
        }
        let (mut by, mut bf) = (0.0, 0.0);
        for (b, (y, f)) in kernel.b_row(i).iter().zip(next.y.iter().zip(&next.fvals)) {
            by += b * y;
            bf += b * f;
        }
        out.ay.push(ay * inv_j);
        out.az.push(az * inv_j);
        out.af.push(af * inv_j);
        out.by.push(by * inv_j);
        out.bf.push(bf * inv_j);
    }
    out
}

/// `(z, h)` from the products at one point.
#[inline]
pub(crate) fn z_and_h(
    scheme: &ThetaScheme,
    dt: f64,
    ay: f64,
    az: f64,
    af: f64,
    by: f64,
    bf: f64,
) -> (f64, f64) {
    let (t1, t2) = (scheme.theta1, scheme.theta2);
    let c = (1.0 - t2) / t2;
    let z = -c * az + by / (t2 * dt) + c * bf;
    let h = ay + dt * (1.0 - t1) * af;
    (z, h)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    /// Time index `p` of the computed slice.
    pub index: usize,
    pub t: f64,
    pub max_picard_residual: f64,
    pub diverged_rows: usize,
}

/// Turns kernel products into the new slice (without driver values).
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_rows(
    products: &KernelProducts,
    scheme: &ThetaScheme,
    problem: &FbsdeProblem,
    grid: &WaveletGrid,
    index: usize,
    t_p: f64,
    dt: f64,
    picard_iters: usize,
) -> Result<(Vec<f64>, Vec<f64>, StepDiagnostic)> {
    let n = products.ay.len();
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut diag = StepDiagnostic {
        index,
        t: t_p,
        ..Default::default()
    };
    for i in 0..n {
        let p = products;
        let (zi, hi) = z_and_h(scheme, dt, p.ay[i], p.az[i], p.af[i], p.by[i], p.bf[i]);
        let x = grid.point(grid.label(i));
        let out = picard_solve(
            problem,
            t_p,
            x,
            zi,
            hi,
            scheme.theta1,
            dt,
            picard_iters,
            p.ay[i],
        );
        if !(zi.is_finite() && out.y.is_finite()) {
            return Err(Error::StepFailure {
                step: index,
                row: grid.label(i),
                reason: format!("non-finite values y = {}, z = {zi}", out.y),
            });
        }
        diag.max_picard_residual = diag.max_picard_residual.max(out.residual);
        diag.diverged_rows += out.diverged as usize;
        y.push(out.y);
        z.push(zi);
    }
    Ok((y, z, diag))
}

/// One backward step on the grid: `next` lives at `t_p + dt`, `kernel` was
/// built for `(t_p, dt)`.
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    next: &SolutionSlice,
    kernel: &ExpectationKernel,
    scheme: &ThetaScheme,
    problem: &FbsdeProblem,
    grid: &WaveletGrid,
    index: usize,
    t_p: f64,
    dt: f64,
    picard_iters: usize,
) -> Result<(SolutionSlice, StepDiagnostic)> {
    if next.len() != kernel.size() {
        return Err(Error::LengthMismatch {
            expected: kernel.size(),
            got: next.len(),
        });
    }
    let products = kernel_products(kernel, next);
    let (y, z, diag) = finish_rows(
        &products,
        scheme,
        problem,
        grid,
        index,
        t_p,
        dt,
        picard_iters,
    )?;
    let mut slice = SolutionSlice {
        t: t_p,
        y,
        z,
        fvals: Vec::new(),
    };
    slice.refresh_driver(problem, grid);
    slice.check_finite().map_err(|e| Error::StepFailure {
        step: index,
        row: 0,
        reason: e.to_string(),
    })?;
    Ok((slice, diag))
}

/// The step formulas at a single off-grid state.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_at(
    next: &SolutionSlice,
    row: &RowEvaluation,
    scheme: &ThetaScheme,
    problem: &FbsdeProblem,
    t: f64,
    dt: f64,
    picard_iters: usize,
) -> Result<(f64, f64, PicardOutcome)> {
    if next.len() != row.a.len() {
        return Err(Error::LengthMismatch {
            expected: row.a.len(),
            got: next.len(),
        });
    }
    let ay = pair(&row.a, &next.y);
    let (z, h) = z_and_h(
        scheme,
        dt,
        ay,
        pair(&row.a, &next.z),
        pair(&row.a, &next.fvals),
        pair(&row.b, &next.y),
        pair(&row.b, &next.fvals),
    );
    let out = picard_solve(problem, t, row.x, z, h, scheme.theta1, dt, picard_iters, ay);
    if !(z.is_finite() && out.y.is_finite()) {
        return Err(Error::StepFailure {
            step: 0,
            row: 0,
            reason: format!("non-finite result at x = {}", row.x),
        });
    }
    Ok((out.y, z, out))
}
