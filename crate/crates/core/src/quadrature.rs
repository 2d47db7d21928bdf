use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Composite Simpson weights for `intervals` (even) equal steps of width `h`.
pub(crate) fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    debug_assert!(intervals >= 2 && intervals.is_multiple_of(2));
    let mut w = vec![0.0; intervals + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        *wj = if j == 0 || j == intervals {
            h / 3.0
        } else if j % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    w
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn legendre_rule(degree: usize) -> Vec<(f64, f64)> {
    let degree = NonZeroUsize::new(degree.max(1)).expect("nonzero");
    GaussLegendre::new(degree)
        .into_node_weight_pairs()
        .into_vec()
}

/// Maps a `[-1, 1]` rule onto `[a, b]`.
pub(crate) fn mapped(rule: &[(f64, f64)], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(move |&(n, w)| (mid + half * n, half * w))
}

/// Composite Gauss-Legendre on `[a, b]` with `panels` equal panels, each
/// additionally split at any breakpoint falling inside it.
pub(crate) fn composite_legendre(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
    degree: usize,
) -> f64 {
    let rule = legendre_rule(degree);
    let mut edges: Vec<f64> = (0..=panels)
        .map(|i| a + (b - a) * i as f64 / panels as f64)
        .collect();
    edges.extend(breaks.iter().copied().filter(|&k| k > a && k < b));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges
        .windows(2)
        .map(|e| {
            mapped(&rule, e[0], e[1])
                .map(|(x, w)| w * f(x))
                .sum::<f64>()
        })
        .sum()
}
