//! Shows how the aperture restricts self-attention: masks, the resulting
//! weight matrices, and the identity behavior of a zero half-window.
//!
//! Run with: `cargo run --example attention_window`

use msva::model::{aperture_mask, attention_weights, Aperture, AttentionConfig, AttentionHead};
use msva::rng::SeededRng;
use msva::tensor::Tensor;

fn print_matrix(label: &str, m: &Tensor) {
    println!("{label}");
    for row in 0..m.shape()[0] {
        let cells: Vec<String> = m.row(row).iter().map(|v| format!("{v:5.2}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

fn main() {
    let t = 6;
    let d = 4;
    let mut rng = SeededRng::from_u64(9);
    let head = AttentionHead {
        u: Tensor::uniform(vec![d, d], -0.5, 0.5, &mut rng),
        v: Tensor::uniform(vec![d, d], -0.5, 0.5, &mut rng),
        config: AttentionConfig {
            d,
            aperture: Aperture::Unbounded,
            scale: 1.0 / (d as f64).sqrt(),
        },
    };
    let x = Tensor::uniform(vec![t, d], -1.0, 1.0, &mut rng);
    let scores = head.scores(&x).expect("scores");

    for aperture in [
        Aperture::Unbounded,
        Aperture::Bounded(2),
        Aperture::Bounded(1),
        Aperture::Bounded(0),
    ] {
        let mask = aperture_mask(t, aperture);
        let weights = attention_weights(&scores, &mask).expect("weights");
        println!("\naperture = {aperture}");
        print_matrix("attention weights (rows sum to 1):", &weights);
        let admissible: usize = (0..t).map(|r| mask.row_count(r)).sum();
        println!("  admissible pairs: {admissible} of {}", t * t);
    }

    // A zero half-window attends to itself only: the context is the input.
    let mask = aperture_mask(t, Aperture::Bounded(0));
    let weights = attention_weights(&scores, &mask).expect("weights");
    let mut tape = msva::tensor::Tape::new();
    let a = tape.leaf(&weights);
    let xn = tape.leaf(&x);
    let context = tape.matmul(a, xn).expect("matmul");
    println!(
        "\np = 0 keeps the context bitwise equal to the input: {}",
        tape.value(context).bits_eq(&x)
    );
}
