//! The odd-frequency sum `Re sum_k w_k exp(-i (2k-1) pi r / (2J))`.
//!
//! The weights are embedded at the odd indices of a length-`4J` array and a
//! single forward DFT produces the sum for every residue of `r` mod `4J`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Reusable buffers for repeated pair transforms.
pub(crate) struct PairWorkspace {
    pub(crate) buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

#[derive(Clone)]
pub struct OddFrequencyTransform {
    j: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for OddFrequencyTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OddFrequencyTransform")
            .field("j", &self.j)
            .finish()
    }
}

impl OddFrequencyTransform {
    pub fn new(j: usize) -> Self {
        assert!(j >= 1, "transform order must be positive");
        let fft = FftPlanner::new().plan_fft_forward(4 * j);
        Self { j, fft }
    }

    pub fn order(&self) -> usize {
        self.j
    }

    fn embed(&self, w: &[Complex64], buf: &mut Vec<Complex64>) {
        assert_eq!(w.len(), self.j, "expected {} weights", self.j);
        buf.clear();
        buf.resize(4 * self.j, Complex64::new(0.0, 0.0));
        for (k, wk) in w.iter().enumerate() {
            buf[2 * k + 1] = *wk;
        }
    }

    /// All `4J` sums, indexed by `r mod 4J`. Entries are complex; the real
    /// part is the odd-frequency sum.
    pub fn full_complex(&self, w: &[Complex64]) -> Vec<Complex64> {
        let mut buf = Vec::new();
        self.embed(w, &mut buf);
        self.fft.process(&mut buf);
        buf
    }

    /// Real parts of all `4J` sums, indexed by `r mod 4J`.
    pub fn full(&self, w: &[Complex64]) -> Vec<f64> {
        self.full_complex(w).into_iter().map(|c| c.re).collect()
    }

    /// Real parts of the sums for `w` and `u` at once, from one complex DFT.
    ///
    /// `Re F(w)` is the transform of the Hermitian-symmetrized input, which
    /// has a real spectrum, so packing two symmetrized inputs as real and
    /// imaginary parts separates cleanly.
    pub fn full_pair(&self, w: &[Complex64], u: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut ws = self.workspace();
        self.full_pair_in(w, u, &mut ws);
        ws.buf.into_iter().map(|c| (c.re, c.im)).unzip()
    }

    pub(crate) fn workspace(&self) -> PairWorkspace {
        PairWorkspace {
            buf: Vec::with_capacity(4 * self.j),
            scratch: vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
        }
    }

    /// [`full_pair`](Self::full_pair) into `ws.buf`: `w` sums in the real
    /// parts, `u` sums in the imaginary parts.
    pub(crate) fn full_pair_in(&self, w: &[Complex64], u: &[Complex64], ws: &mut PairWorkspace) {
        assert!(
            w.len() == self.j && u.len() == self.j,
            "expected {} weights",
            self.j
        );
        let n = 4 * self.j;
        let i = Complex64::new(0.0, 1.0);
        ws.buf.clear();
        ws.buf.resize(n, Complex64::new(0.0, 0.0));
        // the mirror of odd index 2k+1 < 2J lands in the upper half, where
        // the embedded weights vanish
        for (k, (wk, uk)) in w.iter().zip(u).enumerate() {
            ws.buf[2 * k + 1] = 0.5 * (wk + i * uk);
            ws.buf[n - 2 * k - 1] = 0.5 * (wk.conj() + i * uk.conj());
        }
        self.fft.process_with_scratch(&mut ws.buf, &mut ws.scratch);
    }

    /// Appends `Re` and `Im` of `full[(r - shift) mod 4J]`, `r = 1-J..=J`.
    pub(crate) fn select_pair(
        &self,
        full: &[Complex64],
        shift: i64,
        re: &mut Vec<f64>,
        im: &mut Vec<f64>,
    ) {
        let j = self.j as i64;
        let n = 4 * self.j;
        let start = (1 - j - shift).rem_euclid(4 * j) as usize;
        let head = (2 * self.j).min(n - start);
        for c in full[start..start + head]
            .iter()
            .chain(&full[..2 * self.j - head])
        {
            re.push(c.re);
            im.push(c.im);
        }
    }

    /// The `2J` sums for `r = 1-J..=J`.
    pub fn apply(&self, w: &[Complex64]) -> Vec<f64> {
        let full = self.full(w);
        self.select(&full, 0)
    }

    /// Picks `full[(r - shift) mod 4J]` for `r = 1-J..=J`.
    pub(crate) fn select(&self, full: &[f64], shift: i64) -> Vec<f64> {
        let j = self.j as i64;
        let n = 4 * j;
        (1 - j..=j)
            .map(|r| full[(r - shift).rem_euclid(n) as usize])
            .collect()
    }
}

/// Direct `O(J^2)` evaluation, kept as an independent check on the FFT route.
pub fn odd_frequency_direct(w: &[Complex64]) -> Vec<f64> {
    let j = w.len() as i64;
    (1 - j..=j)
        .map(|r| {
            w.iter()
                .enumerate()
                .map(|(k, wk)| {
                    let c = (2 * k + 1) as f64 * std::f64::consts::PI / (2 * j) as f64;
                    let (s, co) = (c * r as f64).sin_cos();
                    wk.re * co + wk.im * s
                })
                .sum()
        })
        .collect()
}

/// `Re sum_k w_k exp(-i C_k r)` for the given `r`.
pub fn odd_frequency_at(w: &[Complex64], r: i64) -> f64 {
    let j = w.len();
    w.iter()
        .enumerate()
        .map(|(k, wk)| {
            let c = (2 * k + 1) as f64 * std::f64::consts::PI / (2 * j) as f64;
            let (s, co) = (c * r as f64).sin_cos();
            wk.re * co + wk.im * s
        })
        .sum()
}
