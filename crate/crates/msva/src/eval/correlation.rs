//! Tie-corrected rank correlations between predicted and annotated scores.
//!
//! Constant inputs make both coefficients undefined; that outcome is
//! represented as `Ok(None)` so callers can exclude it from averages rather
//! than treating it as zero.

use super::EvalError;

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Dimension(format!(
            "correlation inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(EvalError::Dimension(
            "correlation needs at least 2 observations".into(),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| v.is_nan()) {
        return Err(EvalError::Config("correlation input contains NaN".into()));
    }
    Ok(())
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions (strictly descending pairs).
fn count_inversions(xs: &mut [f64]) -> u64 {
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if xs[i] <= xs[j] {
                        buf[k] = xs[i];
                        i += 1;
                    } else {
                        buf[k] = xs[j];
                        j += 1;
                        swaps += (mid - i) as u64;
                    }
                    k += 1;
                }
                while i < mid {
                    buf[k] = xs[i];
                    i += 1;
                    k += 1;
                }
                while j < hi {
                    buf[k] = xs[j];
                    j += 1;
                    k += 1;
                }
                xs[lo..hi].copy_from_slice(&buf[lo..hi]);
            }
            lo += 2 * width;
        }
        width *= 2;
    }
    swaps
}

/// Kendall's tau-b: `(C - D) / sqrt((n0 - n1)(n0 - n2))` with `n0 = n(n-1)/2`
/// and `n1`/`n2` the tied pair counts of each side.
///
/// `Ok(None)` when either side is fully tied.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<Option<f64>, EvalError> {
    check_pair(a, b)?;
    let n = a.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| {
        p.0.partial_cmp(&q.0)
            .expect("finite")
            .then(p.1.partial_cmp(&q.1).expect("finite"))
    });

    // Tie counts on x, y, and jointly.
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    let n3 = joint + run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut ys);
    let n2 = tied_pairs(&ys);

    if n0 == n1 || n0 == n2 {
        return Ok(None);
    }
    let concordant_minus_discordant =
        n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok(Some((concordant_minus_discordant / denom).clamp(-1.0, 1.0)))
}

/// Mid-ranks (average rank over each tie run), 1-based.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).expect("finite"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average of ranks i+1..=j+1.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
///
/// `Ok(None)` when either side is constant.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<Option<f64>, EvalError> {
    check_pair(a, b)?;
    Ok(pearson(&midranks(a), &midranks(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pair-enumeration reference for tau-b.
    fn tau_oracle(a: &[f64], b: &[f64]) -> Option<f64> {
        let n = a.len();
        let (mut con, mut dis, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..n {
            for j in i + 1..n {
                let dx = (a[i] - a[j]).partial_cmp(&0.0).unwrap();
                let dy = (b[i] - b[j]).partial_cmp(&0.0).unwrap();
                use std::cmp::Ordering::*;
                match (dx, dy) {
                    (Equal, Equal) => {
                        tx += 1;
                        ty += 1;
                    }
                    (Equal, _) => tx += 1,
                    (_, Equal) => ty += 1,
                    (x, y) if x == y => con += 1,
                    _ => dis += 1,
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as u64;
        if n0 == tx || n0 == ty {
            return None;
        }
        let denom = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
        Some((con as f64 - dis as f64) / denom)
    }

    /// Rank-Pearson reference for rho, with counting-based mid-ranks.
    fn rho_oracle(a: &[f64], b: &[f64]) -> Option<f64> {
        let rank = |x: &[f64]| -> Vec<f64> {
            x.iter()
                .map(|v| {
                    let less = x.iter().filter(|o| *o < v).count() as f64;
                    let equal = x.iter().filter(|o| *o == v).count() as f64;
                    1.0 + less + (equal - 1.0) / 2.0
                })
                .collect()
        };
        pearson(&rank(a), &rank(b))
    }

    #[test]
    fn identical_distinct_vectors_give_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), Some(1.0));
        assert_eq!(spearman_rho(&a, &a).unwrap(), Some(1.0));
    }

    #[test]
    fn exact_reversal_gives_minus_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&a, &b).unwrap(), Some(-1.0));
        assert_eq!(spearman_rho(&a, &b).unwrap(), Some(-1.0));
    }

    #[test]
    fn single_swap_tau_is_four_sixths() {
        // Pairs of [1,2,3,4] vs [1,3,2,4]: 5 concordant, 1 discordant.
        let tau = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])
            .unwrap()
            .unwrap();
        assert!((tau - 2.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn three_point_rho_is_half() {
        // d^2 = [0, 1, 1]; rho = 1 - 6*2/(3*8) = 0.5.
        let rho = spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0])
            .unwrap()
            .unwrap();
        assert!((rho - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn constant_inputs_are_undefined() {
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), None);
    }

    #[test]
    fn malformed_inputs_error() {
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
        assert!(kendall_tau(&[f64::NAN, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn midranks_average_over_ties() {
        assert_eq!(
            midranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    proptest! {
        #[test]
        fn tau_matches_pair_enumeration(seed in 0u64..400, n in 2usize..40, tie_heavy in proptest::bool::ANY) {
            let mut rng = crate::rng::SeededRng::from_u64(seed);
            let draw = |rng: &mut crate::rng::SeededRng| -> f64 {
                if tie_heavy { rng.below(5) as f64 } else { rng.uniform() }
            };
            let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let got = kendall_tau(&a, &b).unwrap();
            let want = tau_oracle(&a, &b);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => prop_assert!((g - w).abs() <= 1e-12, "{g} vs {w}"),
                other => prop_assert!(false, "definedness mismatch {:?}", other),
            }
        }

        #[test]
        fn rho_matches_rank_pearson(seed in 0u64..400, n in 2usize..40, tie_heavy in proptest::bool::ANY) {
            let mut rng = crate::rng::SeededRng::from_u64(seed.wrapping_add(9999));
            let draw = |rng: &mut crate::rng::SeededRng| -> f64 {
                if tie_heavy { rng.below(4) as f64 } else { rng.uniform() }
            };
            let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let got = spearman_rho(&a, &b).unwrap();
            let want = rho_oracle(&a, &b);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => prop_assert!((g - w).abs() <= 1e-12, "{g} vs {w}"),
                other => prop_assert!(false, "definedness mismatch {:?}", other),
            }
        }

        // Rank statistics are invariant under strictly increasing transforms.
        #[test]
        fn invariant_under_monotone_transforms(seed in 0u64..200, n in 2usize..30) {
            let mut rng = crate::rng::SeededRng::from_u64(seed.wrapping_add(777));
            let a: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.below(6) as f64).collect();
            let a2: Vec<f64> = a.iter().map(|v| (3.0 * v + 1.0).exp()).collect();
            prop_assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&a2, &b).unwrap());
            prop_assert_eq!(spearman_rho(&a, &b).unwrap(), spearman_rho(&a2, &b).unwrap());
        }
    }
}
