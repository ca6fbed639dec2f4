//! Central finite-difference validation of tape gradients.

use super::{NodeId, Tape, Tensor, TensorError};

/// Compares tape gradients against central finite differences.
///
/// `build` receives a fresh tape plus one leaf per entry of `params` (same
/// order) and must return a scalar loss node. It is called once with
/// `backward` for the analytic gradients and then twice per parameter
/// coordinate at `theta - eps` / `theta + eps`.
///
/// Returns the maximum relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)` over all
/// coordinates. `build` must be deterministic (run dropout in inference
/// mode); non-determinism and eps outside `[1e-7, 1e-3]` are contract errors.
pub fn grad_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, TensorError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::Contract(format!(
            "grad_check eps must be in [1e-7, 1e-3], got {eps}"
        )));
    }

    let eval = |ps: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| tape.leaf(p)).collect();
        let loss = build(&mut tape, &ids)?;
        if tape.data(loss).len() != 1 {
            return Err(TensorError::Contract(format!(
                "grad_check loss must be scalar, got shape {:?}",
                tape.shape(loss)
            )));
        }
        Ok(tape.data(loss)[0])
    };

    let probe_a = eval(params)?;
    let probe_b = eval(params)?;
    if probe_a.to_bits() != probe_b.to_bits() {
        return Err(TensorError::Contract(
            "grad_check requires a deterministic function (disable dropout)".into(),
        ));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = build(&mut tape, &ids)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids.iter().map(|id| tape.grad(*id).to_vec()).collect();

    let mut max_rel = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for p in 0..params.len() {
        for (i, &a) in analytic[p].iter().enumerate() {
            let original = work[p].data()[i];
            work[p].data_mut()[i] = original + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = original - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
