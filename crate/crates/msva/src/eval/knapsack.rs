//! Exact 0/1 knapsack over video segments.

/// Selects the segment subset maximizing total value under the length
/// budget, by exact dynamic programming over suffixes.
///
/// Ties are broken toward the lexicographically smallest index set: the
/// backtrack prefers taking the earliest segment whenever doing so preserves
/// the optimum. Lengths are positive segment sizes in frames.
pub fn knapsack_select(values: &[f64], lengths: &[usize], budget: usize) -> Vec<usize> {
    assert_eq!(values.len(), lengths.len());
    let n = values.len();
    // best[i][w]: maximum value attainable from segments i.. with capacity w.
    let mut best = vec![vec![0.0f64; budget + 1]; n + 1];
    for i in (0..n).rev() {
        for w in 0..=budget {
            let skip = best[i + 1][w];
            let take = if lengths[i] <= w {
                values[i] + best[i + 1][w - lengths[i]]
            } else {
                f64::NEG_INFINITY
            };
            best[i][w] = if take >= skip { take } else { skip };
        }
    }
    let mut selected = Vec::new();
    let mut w = budget;
    for i in 0..n {
        let skip = best[i + 1][w];
        let take = if lengths[i] <= w {
            values[i] + best[i + 1][w - lengths[i]]
        } else {
            f64::NEG_INFINITY
        };
        if take >= skip {
            selected.push(i);
            w -= lengths[i];
        }
    }
    selected
}

/// Total value of a selection, summed back-to-front (the association the DP
/// itself produces, so optima compare exactly).
pub fn selection_value(values: &[f64], selected: &[usize]) -> f64 {
    let mut acc = 0.0;
    for i in selected.iter().rev() {
        acc += values[*i];
    }
    acc
}
