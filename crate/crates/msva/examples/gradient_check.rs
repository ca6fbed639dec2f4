//! Validates the analytic gradients of the full network against central
//! finite differences, for each fusion strategy.
//!
//! Run with: `cargo run --example gradient_check`

use std::collections::BTreeMap;

use msva::model::{Aperture, FusionSpec, FusionStrategy, ModelConfig, MsvaModel};
use msva::rng::SeededRng;
use msva::stream::Stream;
use msva::tensor::{grad_check, Tensor, TensorError};

fn main() {
    let t = 8;
    let d = 6;
    for fusion in [
        FusionStrategy::Early,
        FusionStrategy::Intermediate,
        FusionStrategy::Late,
    ] {
        let cfg = ModelConfig::uniform_dims(
            vec![Stream::Object, Stream::Rgb],
            d,
            FusionSpec {
                strategy: fusion,
                dropout_rate: 0.0,
            },
            Aperture::Bounded(3),
        );
        let model = MsvaModel::init(&cfg, 1).expect("init");
        let mut rng = SeededRng::from_u64(2);
        let streams: BTreeMap<Stream, Tensor> = [Stream::Object, Stream::Rgb]
            .iter()
            .map(|s| (*s, Tensor::uniform(vec![t, d], -1.0, 1.0, &mut rng)))
            .collect();
        let target = Tensor::uniform(vec![t], 0.0, 1.0, &mut rng);

        let params: Vec<Tensor> = model
            .named_params()
            .into_iter()
            .map(|(_, p)| p.clone())
            .collect();
        let n_coords: usize = params.iter().map(|p| p.numel()).sum();

        let err = grad_check(
            |tape, ids| {
                let mut dummy = SeededRng::from_u64(0);
                let out = model
                    .forward_with_params(tape, ids, &streams, false, &mut dummy)
                    .map_err(|e| TensorError::Contract(e.to_string()))?;
                let target_node = tape.leaf(&target);
                tape.mse_loss(out, target_node)
            },
            &params,
            1e-5,
        )
        .expect("grad check");
        println!(
            "{fusion:<13} {} parameters, {n_coords} coordinates: max relative error {err:.3e}",
            params.len()
        );
    }
}
