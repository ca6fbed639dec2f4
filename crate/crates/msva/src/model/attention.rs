//! Aperture-windowed self-attention primitives.

use crate::tensor::{Mask, NodeId, Tape, Tensor, TensorError};

use super::Aperture;

/// Builds the boolean attention window for a sequence of length `t`.
///
/// Frame `t` may attend to frame `i` iff `|t - i| <= p`; an unbounded
/// aperture admits everything. The diagonal is always true, so every row has
/// at least one admissible entry.
pub fn aperture_mask(t: usize, aperture: Aperture) -> Mask {
    match aperture {
        Aperture::Unbounded => Mask::all_true(t, t),
        Aperture::Bounded(p) => {
            let mut mask = Mask::all_true(t, t);
            for row in 0..t {
                for col in 0..t {
                    let dist = row.abs_diff(col);
                    mask.set(row, col, dist <= p);
                }
            }
            mask
        }
    }
}

/// Graph for the raw pairwise attention scores
/// `E[t, i] = scale * (U x_i)^T (V x_t)` given leaf nodes for `U`, `V`
/// (both `d*d`) and the feature matrix `X` (`T*d`).
pub(crate) fn scores_graph(
    tape: &mut Tape,
    u: NodeId,
    v: NodeId,
    x: NodeId,
    scale: f64,
) -> Result<NodeId, TensorError> {
    let ut = tape.transpose(u)?;
    let keys = tape.matmul(x, ut)?; // row i = U x_i
    let vt = tape.transpose(v)?;
    let queries = tape.matmul(x, vt)?; // row t = V x_t
    let keys_t = tape.transpose(keys)?;
    let e = tape.matmul(queries, keys_t)?;
    tape.scale(e, scale)
}

/// Window-restricted softmax of a score matrix: row `t` of the result is the
/// attention distribution of frame `t` over its admissible window.
pub fn attention_weights(e: &Tensor, mask: &Mask) -> Result<Tensor, TensorError> {
    let mut tape = Tape::new();
    let node = tape.leaf(e);
    let a = tape.masked_softmax(node, mask)?;
    Ok(tape.value(a))
}
