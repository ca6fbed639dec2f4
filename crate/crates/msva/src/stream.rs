//! Feature stream identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One pre-extracted visual feature source.
///
/// `Object` carries image-classification features, `Rgb` and `Flow` carry the
/// two motion feature sets of an action-recognition network. The derived
/// `Ord` gives the canonical order (object, rgb, flow) used everywhere a
/// deterministic stream ordering matters (fusion sums, parameter layouts,
/// file layouts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Object,
    Rgb,
    Flow,
}

impl Stream {
    /// All streams in canonical order.
    pub const ALL: [Stream; 3] = [Stream::Object, Stream::Rgb, Stream::Flow];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Object => "object",
            Stream::Rgb => "rgb",
            Stream::Flow => "flow",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "object" => Ok(Stream::Object),
            "rgb" => Ok(Stream::Rgb),
            "flow" => Ok(Stream::Flow),
            other => Err(format!(
                "unknown stream {other:?} (expected object, rgb or flow)"
            )),
        }
    }
}

/// Parses a comma-separated stream list, e.g. `"object,rgb,flow"`.
///
/// The result is deduplicated and returned in canonical order.
pub fn parse_stream_list(s: &str) -> Result<Vec<Stream>, String> {
    let mut streams: Vec<Stream> = Vec::new();
    for part in s.split(',') {
        let stream: Stream = part.parse()?;
        if !streams.contains(&stream) {
            streams.push(stream);
        }
    }
    if streams.is_empty() {
        return Err("at least one stream must be selected".into());
    }
    streams.sort();
    Ok(streams)
}
