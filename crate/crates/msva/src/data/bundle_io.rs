//! On-disk bundle format.
//!
//! A bundle is a directory holding a small JSON manifest plus raw arrays:
//!
//! ```text
//! <dir>/bundle.json        video_id, n_frames, t, dims, n_users, picks, change_points
//! <dir>/stream_object.f32  row-major little-endian float32, t * dims[object]
//! <dir>/stream_rgb.f32
//! <dir>/stream_flow.f32
//! <dir>/gtscore.f32        t little-endian float32
//! <dir>/user_summaries.u8  n_users * n_frames bytes, values 0/1
//! ```
//!
//! Features are stored as float32 (as distributed publicly) and widened to
//! float64 on load; all computation downstream is float64.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stream::Stream;
use crate::tensor::Tensor;

use super::{DataError, FeatureBundle};

#[derive(Debug, Serialize, Deserialize)]
struct BundleMeta {
    video_id: String,
    n_frames: usize,
    t: usize,
    dims: BTreeMap<Stream, usize>,
    n_users: usize,
    picks: Vec<usize>,
    change_points: Vec<(usize, usize)>,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stream_file(s: Stream) -> String {
    format!("stream_{}.f32", s.name())
}

fn f32_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn read_f32_array(path: &Path, expected: usize) -> Result<Vec<f64>, DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(DataError::Format {
            path: path.display().to_string(),
            message: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes a bundle directory. The bundle is validated first, and the write is
/// bit-deterministic: identical bundles produce identical bytes.
pub fn write_bundle(bundle: &FeatureBundle, dir: &Path) -> Result<(), DataError> {
    super::validate_bundle(bundle).map_err(|violations| DataError::Validation {
        video_id: bundle.video_id.clone(),
        violations,
    })?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let dims: BTreeMap<Stream, usize> = bundle
        .streams
        .iter()
        .map(|(s, x)| (*s, x.shape()[1]))
        .collect();
    let meta = BundleMeta {
        video_id: bundle.video_id.clone(),
        n_frames: bundle.n_frames,
        t: bundle.t(),
        dims,
        n_users: bundle.n_users(),
        picks: bundle.picks.clone(),
        change_points: bundle.change_points.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("bundle meta serializes");
    let meta_path = dir.join("bundle.json");
    fs::write(&meta_path, json + "\n").map_err(|e| io_err(&meta_path, e))?;

    for (s, x) in &bundle.streams {
        let path = dir.join(stream_file(*s));
        fs::write(&path, f32_bytes(x.data())).map_err(|e| io_err(&path, e))?;
    }
    let gts_path = dir.join("gtscore.f32");
    fs::write(&gts_path, f32_bytes(bundle.gtscore.data())).map_err(|e| io_err(&gts_path, e))?;

    let mut users = Vec::with_capacity(bundle.n_users() * bundle.n_frames);
    for row in &bundle.user_summaries {
        users.extend_from_slice(row);
    }
    let users_path = dir.join("user_summaries.u8");
    fs::write(&users_path, users).map_err(|e| io_err(&users_path, e))?;
    Ok(())
}

/// Loads and validates a bundle directory written by [`write_bundle`].
pub fn load_bundle(dir: &Path) -> Result<FeatureBundle, DataError> {
    let meta_path = dir.join("bundle.json");
    let raw = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: BundleMeta = serde_json::from_str(&raw).map_err(|e| DataError::Format {
        path: meta_path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut streams = BTreeMap::new();
    for s in Stream::ALL {
        let d = *meta.dims.get(&s).ok_or_else(|| DataError::Format {
            path: meta_path.display().to_string(),
            message: format!("missing dims entry for stream {s}"),
        })?;
        let path = dir.join(stream_file(s));
        let data = read_f32_array(&path, meta.t * d)?;
        let tensor = Tensor::new(vec![meta.t, d], data).map_err(|e| DataError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        streams.insert(s, tensor);
    }
    let gts_path = dir.join("gtscore.f32");
    let gtscore = Tensor::vector(read_f32_array(&gts_path, meta.t)?);

    let users_path = dir.join("user_summaries.u8");
    let user_bytes = fs::read(&users_path).map_err(|e| io_err(&users_path, e))?;
    if user_bytes.len() != meta.n_users * meta.n_frames {
        return Err(DataError::Format {
            path: users_path.display().to_string(),
            message: format!(
                "expected {} bytes, found {}",
                meta.n_users * meta.n_frames,
                user_bytes.len()
            ),
        });
    }
    let user_summaries: Vec<Vec<u8>> = user_bytes
        .chunks_exact(meta.n_frames)
        .map(|c| c.to_vec())
        .collect();

    let bundle = FeatureBundle {
        video_id: meta.video_id,
        n_frames: meta.n_frames,
        picks: meta.picks,
        streams,
        gtscore,
        change_points: meta.change_points,
        user_summaries,
    };
    super::validate_bundle(&bundle).map_err(|violations| DataError::Validation {
        video_id: bundle.video_id.clone(),
        violations,
    })?;
    Ok(bundle)
}
