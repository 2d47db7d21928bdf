//! Conditional expectations of the scaling functions under one Euler step.
//!
//! With `Phi(t, x, rho) = exp(i rho mu dt - rho^2 sigma^2 dt / 2)` and
//! `rho_k = 2^m C_k`,
//!
//! ```text
//! E[phi_{J,r}(X_{p+1}) | X_p = x]     = Re sum_k exp(i rho_k (x - c)) Phi_k e^{-i C_k r}
//! E[phi_{J,r}(X_{p+1}) dW | X_p = x]  = Re sum_k i sigma dt rho_k exp(i rho_k (x - c)) Phi_k e^{-i C_k r}
//! ```
//!
//! On grid rows `x_s` the modulation is `e^{i C_k s}`, so row `s` is the
//! odd-frequency sum read at `r - s`.

use num_complex::Complex64;

use crate::basis::{BasisCoefficients, WaveletGrid};
use crate::error::{Error, Result};
use crate::problem::FbsdeProblem;
use crate::transform::{OddFrequencyTransform, PairWorkspace};

/// `exp(i rho mu(t,x) dt - rho^2 sigma(t,x)^2 dt / 2)`.
pub fn char_increment(problem: &FbsdeProblem, t: f64, x: f64, rho: f64, dt: f64) -> Complex64 {
    let mu = problem.drift(t, x);
    let sigma = problem.diffusion(t, x);
    gaussian_increment_cf(mu, sigma, rho, dt)
}

#[inline]
fn gaussian_increment_cf(mu: f64, sigma: f64, rho: f64, dt: f64) -> Complex64 {
    Complex64::from_polar((-0.5 * rho * rho * sigma * sigma * dt).exp(), rho * mu * dt)
}

/// The `2J x 2J` matrices `A[s][r]` and `B[s][r]`, row-major in grid order.
#[derive(Debug, Clone)]
pub struct ExpectationKernel {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub toeplitz: bool,
}

impl ExpectationKernel {
    /// Side length `2J`.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn b_row(&self, i: usize) -> &[f64] {
        &self.b[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn a(&self, i: usize, r: usize) -> f64 {
        self.a[i * self.n + r]
    }

    #[inline]
    pub fn b(&self, i: usize, r: usize) -> f64 {
        self.b[i * self.n + r]
    }
}

/// One kernel row for an arbitrary starting state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowEvaluation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x: f64,
}

#[derive(Debug, Clone)]
pub struct ExpectationEngine {
    grid: WaveletGrid,
    transform: OddFrequencyTransform,
    rho: Vec<f64>,
}

impl ExpectationEngine {
    pub fn new(grid: WaveletGrid) -> Self {
        let rho = (1..=grid.order()).map(|k| grid.angular(k)).collect();
        Self {
            transform: OddFrequencyTransform::new(grid.order()),
            grid,
            rho,
        }
    }

    pub fn grid(&self) -> &WaveletGrid {
        &self.grid
    }

    pub fn transform(&self) -> &OddFrequencyTransform {
        &self.transform
    }

    /// Plain and Brownian weights `Phi_k` and `i sigma dt rho_k Phi_k`.
    fn weights_into(
        &self,
        problem: &FbsdeProblem,
        (t, x, dt): (f64, f64, f64),
        plain: &mut Vec<Complex64>,
        brownian: &mut Vec<Complex64>,
    ) {
        let mu = problem.drift(t, x);
        let sigma = problem.diffusion(t, x);
        plain.clear();
        brownian.clear();
        // rho_k = (2k - 1) rho_1, so the drift phases follow a recurrence
        let theta = self.rho[0] * mu * dt;
        let step = Complex64::from_polar(1.0, 2.0 * theta);
        let mut phase = Complex64::from_polar(1.0, theta);
        let damp = -0.5 * sigma * sigma * dt;
        for &rho in &self.rho {
            let p = phase * (damp * rho * rho).exp();
            plain.push(p);
            brownian.push(p * Complex64::new(0.0, sigma * dt * rho));
            phase *= step;
        }
    }

    fn weights(
        &self,
        problem: &FbsdeProblem,
        t: f64,
        x: f64,
        dt: f64,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let (mut w, mut u) = (Vec::new(), Vec::new());
        self.weights_into(problem, (t, x, dt), &mut w, &mut u);
        (w, u)
    }

    /// Transforms `(w, u)` once and appends the rows for `shifts` to `a`, `b`.
    /// A vanishing diffusion leaves the Brownian weights identically zero;
    /// the packed transform would leak rounding noise into them, so those
    /// rows are written as exact zeros.
    fn append_rows(
        &self,
        w: &[Complex64],
        u: &[Complex64],
        shifts: impl IntoIterator<Item = i64>,
        ws: &mut PairWorkspace,
        a: &mut Vec<f64>,
        b: &mut Vec<f64>,
    ) {
        self.transform.full_pair_in(w, u, ws);
        let silent = u.iter().all(|c| c.re == 0.0 && c.im == 0.0);
        for s in shifts {
            let from = b.len();
            self.transform.select_pair(&ws.buf, s, a, b);
            if silent {
                b[from..].fill(0.0);
            }
        }
    }

    /// Kernel for the step starting at `t`. Uses the shifted-generator path
    /// when the coefficients do not depend on the state.
    pub fn build_kernel(
        &self,
        problem: &FbsdeProblem,
        t: f64,
        dt: f64,
    ) -> Result<ExpectationKernel> {
        if problem.dependence().state {
            self.build_kernel_general(problem, t, dt)
        } else {
            self.build_kernel_toeplitz(problem, t, dt)
        }
    }

    fn check_dt(dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        Ok(())
    }

    /// One transform per row.
    pub fn build_kernel_general(
        &self,
        problem: &FbsdeProblem,
        t: f64,
        dt: f64,
    ) -> Result<ExpectationKernel> {
        Self::check_dt(dt)?;
        let n = self.grid.len();
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n * n);
        let mut ws = self.transform.workspace();
        let (mut w, mut u) = (Vec::new(), Vec::new());
        for i in 0..n {
            let s = self.grid.label(i);
            self.weights_into(problem, (t, self.grid.point(s), dt), &mut w, &mut u);
            self.append_rows(&w, &u, [s], &mut ws, &mut a, &mut b);
        }
        finite_kernel(&a, &b)?;
        Ok(ExpectationKernel {
            n,
            a,
            b,
            t,
            dt,
            toeplitz: false,
        })
    }

    /// One generator transform, shifted into every row. Only valid when
    /// drift and diffusion do not depend on the state.
    pub fn build_kernel_toeplitz(
        &self,
        problem: &FbsdeProblem,
        t: f64,
        dt: f64,
    ) -> Result<ExpectationKernel> {
        Self::check_dt(dt)?;
        let n = self.grid.len();
        let (w, u) = self.weights(problem, t, self.grid.center(), dt);
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n * n);
        let mut ws = self.transform.workspace();
        let shifts = (0..n).map(|i| self.grid.label(i));
        self.append_rows(&w, &u, shifts, &mut ws, &mut a, &mut b);
        finite_kernel(&a, &b)?;
        Ok(ExpectationKernel {
            n,
            a,
            b,
            t,
            dt,
            toeplitz: true,
        })
    }

    /// Kernel row at an arbitrary (possibly off-grid) state `x`.
    pub fn eval_row(
        &self,
        problem: &FbsdeProblem,
        t: f64,
        dt: f64,
        x: f64,
    ) -> Result<RowEvaluation> {
        Self::check_dt(dt)?;
        let (mut w, mut u) = self.weights(problem, t, x, dt);
        let xi = x - self.grid.center();
        for ((wk, uk), &rho) in w.iter_mut().zip(u.iter_mut()).zip(&self.rho) {
            let m = Complex64::from_polar(1.0, rho * xi);
            *wk *= m;
            *uk *= m;
        }
        let mut row = RowEvaluation {
            a: Vec::new(),
            b: Vec::new(),
            x,
        };
        let mut ws = self.transform.workspace();
        self.append_rows(&w, &u, [0], &mut ws, &mut row.a, &mut row.b);
        finite_kernel(&row.a, &row.b)?;
        Ok(row)
    }
}

fn finite_kernel(a: &[f64], b: &[f64]) -> Result<()> {
    if a.iter().chain(b).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("expectation kernel".into()))
    }
}

/// `(1/J) sum_r row[r] * v[r]`, unchecked.
#[inline]
pub(crate) fn pair(row: &[f64], v: &[f64]) -> f64 {
    let j = (row.len() / 2) as f64;
    row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / j
}

fn checked_pair(row: &[f64], coeffs: &BasisCoefficients) -> Result<f64> {
    if row.len() != coeffs.len() || row.is_empty() {
        return Err(Error::LengthMismatch {
            expected: row.len(),
            got: coeffs.len(),
        });
    }
    Ok(pair(row, coeffs.values()))
}

/// `E[v(X_{p+1}) | X_p = x]` from an `A` row and the coefficients of `v`.
pub fn expect_plain(a_row: &[f64], coeffs: &BasisCoefficients) -> Result<f64> {
    checked_pair(a_row, coeffs)
}

/// `E[v(X_{p+1}) dW | X_p = x]` from a `B` row and the coefficients of `v`.
pub fn expect_brownian(b_row: &[f64], coeffs: &BasisCoefficients) -> Result<f64> {
    checked_pair(b_row, coeffs)
}
