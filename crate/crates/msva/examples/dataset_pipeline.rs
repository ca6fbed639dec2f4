//! The dataset side of the pipeline: synthesizing bundles, the on-disk
//! format, validation, and non-overlapping split generation.
//!
//! Run with: `cargo run --example dataset_pipeline`

use msva::data::{
    load_bundle, make_splits, synth_dataset, validate_bundle, write_bundle, SynthSpec,
};

fn main() {
    let spec = SynthSpec {
        n_videos: 7,
        t_min: 12,
        t_max: 20,
        dims: 6,
        n_users: 3,
        seed: 4,
    };
    let bundles = synth_dataset(&spec).expect("synthesis");
    println!("generated {} bundles:", bundles.len());
    for b in &bundles {
        println!(
            "  {}: T={} picks over {} frames, {} segments, {} annotators",
            b.video_id,
            b.t(),
            b.n_frames,
            b.change_points.len(),
            b.n_users()
        );
    }

    // Round trip one bundle through the directory format.
    let dir = tempfile::tempdir().expect("tempdir");
    let bundle_dir = dir.path().join(&bundles[0].video_id);
    write_bundle(&bundles[0], &bundle_dir).expect("write");
    let mut files: Vec<String> = std::fs::read_dir(&bundle_dir)
        .expect("read dir")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("\nbundle directory layout: {files:?}");
    let loaded = load_bundle(&bundle_dir).expect("load");
    println!("round trip equal: {}", loaded == bundles[0]);

    // Validation catches broken invariants.
    let mut broken = bundles[0].clone();
    broken.change_points[0].1 += 1; // overlap with the next segment
    match validate_bundle(&broken) {
        Ok(()) => println!("unexpectedly valid"),
        Err(violations) => println!("tampered bundle rejected: {violations:?}"),
    }

    // Non-overlapping folds: every id in exactly one test set.
    let ids: Vec<String> = bundles.iter().map(|b| b.video_id.clone()).collect();
    let split = make_splits(&ids, 5, 4).expect("splits");
    println!("\n{} folds over {} videos:", split.k(), ids.len());
    for (i, fold) in split.folds.iter().enumerate() {
        println!(
            "  fold {i}: test {:?}, {} train videos",
            fold.test_ids,
            fold.train_ids.len()
        );
    }
}
