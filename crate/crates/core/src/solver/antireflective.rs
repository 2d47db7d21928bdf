use crate::error::{Error, Result};

/// Index bounds `(i_alpha, i_beta)` of the trusted region for a vector of
/// length `2J`. `i_alpha = ceil(fraction * 2J)` positions in from each end.
pub fn antireflective_bounds(len: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0 / 3.0) {
        return Err(Error::invalid(
            "antireflective",
            format!("fraction must lie in (0, 1/3), got {fraction}"),
        ));
    }
    let n = (fraction * len as f64).ceil() as usize;
    // mirrored sources 2 i_alpha - i must stay inside [i_alpha, i_beta]
    if len == 0 || 3 * n + 1 > len {
        return Err(Error::invalid(
            "antireflective",
            format!("fraction {fraction} leaves no room to mirror on a grid of {len} points"),
        ));
    }
    Ok((n, len - 1 - n))
}

/// Replaces the entries outside `[i_alpha, i_beta]` by the antireflective
/// extrapolation `v[i] = 2 v[i_alpha] - v[2 i_alpha - i]` (and the mirror
/// image at the upper end). Entries inside are untouched.
pub fn antireflective_adjust(v: &mut [f64], fraction: f64) -> Result<()> {
    let (lo, hi) = antireflective_bounds(v.len(), fraction)?;
    for i in 0..lo {
        v[i] = 2.0 * v[lo] - v[2 * lo - i];
    }
    for i in hi + 1..v.len() {
        v[i] = 2.0 * v[hi] - v[2 * hi - i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds() {
        assert_eq!(antireflective_bounds(1024, 0.1).unwrap(), (103, 920));
        assert!(antireflective_bounds(1024, 0.0).is_err());
        assert!(antireflective_bounds(1024, 0.34).is_err());
        assert!(antireflective_bounds(4, 0.3).is_err());
    }

    #[test]
    fn constant_and_affine_vectors_are_fixed() {
        let mut c = vec![2.5; 64];
        antireflective_adjust(&mut c, 0.1).unwrap();
        assert!(c.iter().all(|&v| v == 2.5));
        let lin: Vec<f64> = (0..64).map(|i| -3.0 + 0.125 * i as f64 * 1.7).collect();
        let mut adj = lin.clone();
        antireflective_adjust(&mut adj, 0.2).unwrap();
        for (a, b) in adj.iter().zip(&lin) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn interior_untouched_and_idempotent(
            v in prop::collection::vec(-1e3f64..1e3, 16..200),
            fraction in 0.01f64..0.3,
        ) {
            let Ok((lo, hi)) = antireflective_bounds(v.len(), fraction) else { return Ok(()); };
            let mut once = v.clone();
            antireflective_adjust(&mut once, fraction).unwrap();
            prop_assert_eq!(&once[lo..=hi], &v[lo..=hi]);
            let mut twice = once.clone();
            antireflective_adjust(&mut twice, fraction).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
