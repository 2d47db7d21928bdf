//! Shannon-type scaling functions on a centered finite domain.
//!
//! With half-width `a` and order `J` the scale is `2^m = J / a`, grid points
//! are `x_r = c + r / 2^m` for `r = 1-J..=J`, and
//!
//! ```text
//! phi_{J,r}(x) = sum_{k=1..J} cos(C_k (2^m (x - c) - r)),  C_k = (2k-1) pi / (2J)
//! ```

use std::f64::consts::PI;
use std::ops::Index;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::DomainSpec;
use crate::quadrature::{legendre_rule, mapped, simpson_weights};
use crate::transform::OddFrequencyTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletGrid {
    j: usize,
    scale: f64,
    center: f64,
    half_width: f64,
}

impl WaveletGrid {
    /// Grid of order `j` on `(lower, upper]`.
    pub fn new(j: usize, lower: f64, upper: f64) -> Result<Self> {
        if j == 0 {
            return Err(Error::invalid("J", "must be positive"));
        }
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::DegenerateDomain(format!(
                "need lower < upper, got [{lower}, {upper}]"
            )));
        }
        let half_width = 0.5 * (upper - lower);
        Ok(Self {
            j,
            scale: j as f64 / half_width,
            center: 0.5 * (lower + upper),
            half_width,
        })
    }

    pub fn from_domain(domain: &DomainSpec, j: usize) -> Result<Self> {
        Self::new(j, domain.lower, domain.upper)
    }

    /// Wavelet order `J`.
    pub fn order(&self) -> usize {
        self.j
    }

    /// Number of grid points, `2J`.
    pub fn len(&self) -> usize {
        2 * self.j
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `2^m`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `m = log2(J / a)`.
    pub fn m(&self) -> f64 {
        self.scale.log2()
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    /// Grid spacing `2^-m`.
    pub fn step(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn r_min(&self) -> i64 {
        1 - self.j as i64
    }

    pub fn r_max(&self) -> i64 {
        self.j as i64
    }

    /// Array position of label `r`.
    #[inline]
    pub fn index(&self, r: i64) -> usize {
        (r - self.r_min()) as usize
    }

    /// Label `r` of array position `i`.
    #[inline]
    pub fn label(&self, i: usize) -> i64 {
        i as i64 + self.r_min()
    }

    #[inline]
    pub fn point(&self, r: i64) -> f64 {
        self.center + r as f64 / self.scale
    }

    pub fn points(&self) -> Vec<f64> {
        (self.r_min()..=self.r_max())
            .map(|r| self.point(r))
            .collect()
    }

    /// `C_k` for `k = 1..=J`.
    #[inline]
    pub fn frequency(&self, k: usize) -> f64 {
        (2 * k - 1) as f64 * PI / (2 * self.j) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.j).map(|k| self.frequency(k)).collect()
    }

    /// Angular frequency `2^m C_k` in the state variable.
    #[inline]
    pub fn angular(&self, k: usize) -> f64 {
        self.scale * self.frequency(k)
    }

    /// `phi_{J,r}(x)` by the closed form, with the argument reduced modulo
    /// the period `2J` before the ratio of sines is formed.
    pub fn eval_scaling(&self, r: i64, x: f64) -> f64 {
        let j = self.j as f64;
        let u = self.scale * (x - self.center) - r as f64;
        let l = (u / (2.0 * j)).round();
        let delta = u - 2.0 * j * l;
        let sign = if (l as i64).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        let den = (PI * delta / (2.0 * j)).sin();
        if den.abs() < 1e-12 {
            return sign * j;
        }
        sign * (PI * delta).sin() / (2.0 * den)
    }

    /// `phi_{J,r}(x)` by summing the `J` cosines.
    pub fn eval_scaling_direct(&self, r: i64, x: f64) -> f64 {
        let u = self.scale * (x - self.center) - r as f64;
        (1..=self.j).map(|k| (self.frequency(k) * u).cos()).sum()
    }

    /// `H v(x) = (1/J) sum_r coeffs[r] phi_{J,r}(x)`.
    pub fn projection_eval(&self, coeffs: &BasisCoefficients, x: f64) -> f64 {
        let s: f64 = coeffs
            .values
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.eval_scaling(self.label(i), x))
            .sum();
        s / self.j as f64
    }

    /// Reduces `x` into `(lower, upper]` and returns the reduced point with
    /// the sign `(-1)^n` of the alternating extension.
    pub fn reduce(&self, x: f64) -> (f64, f64) {
        let period = 2.0 * self.half_width;
        let n = ((x - self.upper()) / period).ceil();
        let mut y = x - n * period;
        let mut n = n as i64;
        // guard the half-open boundary against rounding
        if y <= self.lower() {
            y += period;
            n -= 1;
        } else if y > self.upper() {
            y -= period;
            n += 1;
        }
        (y, if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 })
    }
}

/// Values indexed by `r = 1-J..=J`, stored at positions `0..2J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCoefficients {
    values: Vec<f64>,
}

impl BasisCoefficients {
    pub fn new(grid: &WaveletGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    /// Point samples `v(x_r)`, the quick-variant coefficients.
    pub fn sample(grid: &WaveletGrid, v: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.points().into_iter().map(v).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Index<usize> for BasisCoefficients {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// `(2^m / J) * int v w` over the domain by composite Simpson with `panels`
/// intervals (rounded up to even and to at least `2J`).
pub fn inner_product(
    v: impl Fn(f64) -> f64,
    w: impl Fn(f64) -> f64,
    grid: &WaveletGrid,
    panels: usize,
) -> Result<f64> {
    let n = panels.max(grid.len()).next_multiple_of(2);
    let h = 2.0 * grid.half_width / n as f64;
    let weights = simpson_weights(n, h);
    let mut sum = 0.0;
    for (j, wj) in weights.iter().enumerate() {
        let x = grid.lower() + j as f64 * h;
        let f = v(x) * w(x);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("integrand at x = {x}")));
        }
        sum += wj * f;
    }
    Ok(sum * grid.scale / grid.j as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOptions {
    /// Initial Simpson intervals per grid point, before doubling.
    pub oversample: usize,
    /// Relative agreement between successive refinements.
    pub tolerance: f64,
    /// Cap on the number of Simpson intervals.
    pub max_points: usize,
    /// Abscissae where `v` is not smooth; panels touching them are replaced
    /// by Gauss-Legendre on each side.
    pub kinks: Vec<f64>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            oversample: 16,
            tolerance: 1e-10,
            max_points: 1 << 20,
            kinks: Vec::new(),
        }
    }
}

impl ProjectionOptions {
    pub fn with_kinks(kinks: &[f64]) -> Self {
        Self {
            kinks: kinks.to_vec(),
            ..Default::default()
        }
    }
}

const KINK_LEGENDRE_DEGREE: usize = 24;

/// `W_k = (2^m/J) int v(x) exp(i 2^m C_k (x - c)) dx` for `k = 1..=J`, with
/// `n` Simpson intervals.
fn frequency_moments(
    v: &dyn Fn(f64) -> f64,
    grid: &WaveletGrid,
    n: usize,
    kinks: &[f64],
) -> Result<Vec<Complex64>> {
    let j = grid.j;
    let a = grid.half_width;
    let h = 2.0 * a / n as f64;
    let mut weights = simpson_weights(n, h);

    // Simpson panels [xi_{2p}, xi_{2p+2}] whose closed span contains a kink
    let last_panel = (n / 2 - 1) as f64;
    let mut split_panels: Vec<(usize, f64)> = Vec::new();
    for &k in kinks {
        let xi = k - grid.center;
        if xi < -a || xi > a {
            continue;
        }
        let pos = (xi + a) / (2.0 * h);
        let first = (pos - 1e-9).floor().clamp(0.0, last_panel) as usize;
        let last = (pos + 1e-9).floor().clamp(0.0, last_panel) as usize;
        split_panels.extend((first..=last).map(|p| (p, xi)));
    }
    let mut panels_done: Vec<usize> = split_panels.iter().map(|s| s.0).collect();
    panels_done.sort_unstable();
    panels_done.dedup();
    for &p in &panels_done {
        weights[2 * p] -= h / 3.0;
        weights[2 * p + 1] -= 4.0 * h / 3.0;
        weights[2 * p + 2] -= h / 3.0;
    }

    let len = 2 * n;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (jj, wj) in weights.iter().enumerate() {
        if *wj == 0.0 {
            continue;
        }
        let x = grid.center - a + jj as f64 * h;
        let f = v(x);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("integrand at x = {x}")));
        }
        buf[jj] = Complex64::new(wj * f, 0.0);
    }
    // sum_j c_j exp(2 pi i (2k-1) j / (2n)) is an unnormalized inverse DFT
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);

    let norm = grid.scale / j as f64;
    let mut out: Vec<Complex64> = (1..=j)
        .map(|k| {
            // exp(-i rho_k a) = (-i)^(2k-1)
            let phase = if k % 2 == 1 {
                Complex64::new(0.0, -1.0)
            } else {
                Complex64::new(0.0, 1.0)
            };
            phase * buf[2 * k - 1] * norm
        })
        .collect();

    if !panels_done.is_empty() {
        let rule = legendre_rule(KINK_LEGENDRE_DEGREE);
        for &p in &panels_done {
            let lo = -a + 2.0 * p as f64 * h;
            let hi = lo + 2.0 * h;
            let mut edges = vec![lo, hi];
            edges.extend(
                split_panels
                    .iter()
                    .filter(|s| s.0 == p)
                    .map(|s| s.1)
                    .filter(|&k| k > lo && k < hi),
            );
            edges.sort_by(f64::total_cmp);
            for e in edges.windows(2) {
                for (xi, w) in mapped(&rule, e[0], e[1]) {
                    let f = v(grid.center + xi);
                    if !f.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "integrand at x = {}",
                            grid.center + xi
                        )));
                    }
                    for (k, o) in out.iter_mut().enumerate() {
                        let rho = grid.angular(k + 1);
                        *o += Complex64::from_polar(norm * w * f, rho * xi);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The moments `W_k` refined by doubling until successive values agree.
pub fn projection_moments(
    v: impl Fn(f64) -> f64,
    grid: &WaveletGrid,
    opts: &ProjectionOptions,
) -> Result<Vec<Complex64>> {
    if opts.oversample == 0 {
        return Err(Error::invalid("oversample", "must be positive"));
    }
    let mut n = (opts.oversample * grid.len())
        .next_multiple_of(2)
        .min(opts.max_points.max(2));
    let mut prev = frequency_moments(&v, grid, n, &opts.kinks)?;
    while 2 * n <= opts.max_points {
        n *= 2;
        let next = frequency_moments(&v, grid, n, &opts.kinks)?;
        let scale = next.iter().fold(0.0f64, |m, w| m.max(w.norm()));
        let diff = next
            .iter()
            .zip(&prev)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        prev = next;
        if diff <= opts.tolerance * scale {
            break;
        }
    }
    Ok(prev)
}

/// `<v, phi_{J,r}>` for all `r`, via the odd-frequency moments of `v`.
pub fn project_coefficients(
    v: impl Fn(f64) -> f64,
    grid: &WaveletGrid,
    opts: &ProjectionOptions,
) -> Result<BasisCoefficients> {
    let moments = projection_moments(v, grid, opts)?;
    let values = OddFrequencyTransform::new(grid.j).apply(&moments);
    Ok(BasisCoefficients { values })
}

/// `<v, phi_{J,r}>` for a single `r` by direct Simpson quadrature with
/// kink-aligned panel edges. Slow; a check on [`project_coefficients`].
pub fn project_single(
    v: impl Fn(f64) -> f64,
    grid: &WaveletGrid,
    r: i64,
    panels: usize,
    kinks: &[f64],
) -> f64 {
    let mut edges = vec![grid.lower(), grid.upper()];
    edges.extend(
        kinks
            .iter()
            .copied()
            .filter(|&k| k > grid.lower() && k < grid.upper()),
    );
    edges.sort_by(f64::total_cmp);
    let total = grid.upper() - grid.lower();
    let mut sum = 0.0;
    for e in edges.windows(2) {
        let n = (((e[1] - e[0]) / total * panels as f64).ceil() as usize)
            .max(2)
            .next_multiple_of(2);
        let h = (e[1] - e[0]) / n as f64;
        for (i, w) in simpson_weights(n, h).into_iter().enumerate() {
            // nudge the sample off the kink towards the interior of the piece
            let x = match i {
                0 => e[0] + 1e-13 * total,
                _ if i == n => e[1] - 1e-13 * total,
                _ => e[0] + i as f64 * h,
            };
            sum += w * v(x) * grid.eval_scaling(r, x);
        }
    }
    sum * grid.scale / grid.j as f64
}

/// The alternating extension of `v` from `(lower, upper]`: period
/// `4 * half_width`, sign flip every `2 * half_width`.
pub fn alternating_extension_eval(v: impl Fn(f64) -> f64, grid: &WaveletGrid, x: f64) -> f64 {
    let (y, sign) = grid.reduce(x);
    sign * v(y)
}
