//! Walks one video through the evaluation protocol step by step: score
//! upsampling, segment means, knapsack selection, F1 against annotators, and
//! the rank correlations.
//!
//! Run with: `cargo run --example evaluation_protocol`

use msva::data::{synth_dataset, SynthSpec};
use msva::eval::{
    build_summary, evaluate_video, kendall_tau, knapsack_select, segment_scores, spearman_rho,
    upsample_scores, EvalOptions, F1Mode,
};

fn main() {
    let bundle = synth_dataset(&SynthSpec {
        n_videos: 1,
        t_min: 20,
        t_max: 20,
        dims: 4,
        n_users: 4,
        seed: 77,
    })
    .expect("synthesis")
    .remove(0);

    println!(
        "video {:?}: {} picked frames of {} original frames, {} segments, {} annotators",
        bundle.video_id,
        bundle.t(),
        bundle.n_frames,
        bundle.change_points.len(),
        bundle.n_users()
    );

    // Pretend the model predicted the ground truth.
    let predicted = bundle.gtscore.data().to_vec();

    let full = upsample_scores(&bundle.picks, &predicted, bundle.n_frames);
    println!(
        "upsampled scores: {} values, first pick score {:.3} covers frames 0..{}",
        full.len(),
        predicted[0],
        bundle.picks.get(1).copied().unwrap_or(bundle.n_frames)
    );

    let (values, lengths) = segment_scores(&full, &bundle.change_points);
    println!("\nsegment  frames  mean score");
    for (i, (v, l)) in values.iter().zip(lengths.iter()).enumerate() {
        println!("{i:>7}  {l:>6}  {v:.3}");
    }

    let budget = (0.15 * bundle.n_frames as f64).floor() as usize;
    let selected = knapsack_select(&values, &lengths, budget);
    println!("\nknapsack budget {budget} frames -> segments {selected:?}");

    let summary = build_summary(&bundle, &predicted, 0.15).expect("summary");
    println!(
        "machine summary: {} of {} frames selected",
        summary.selected_frames(),
        bundle.n_frames
    );

    for mode in [F1Mode::Max, F1Mode::Avg] {
        let eval = evaluate_video(
            &bundle,
            &predicted,
            &EvalOptions {
                budget_fraction: 0.15,
                f1_mode: mode,
            },
        )
        .expect("evaluation");
        println!("f1 ({mode} over annotators) = {:.3}", eval.f1);
    }

    // Correlations against one annotator at pick granularity.
    let user0: Vec<f64> = bundle.picks.iter().map(|p| bundle.user_summaries[0][*p] as f64).collect();
    let tau = kendall_tau(&predicted, &user0).expect("tau");
    let rho = spearman_rho(&predicted, &user0).expect("rho");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "undefined".into());
    println!(
        "annotator 0: tau = {}, rho = {}",
        fmt(tau),
        fmt(rho)
    );
}
