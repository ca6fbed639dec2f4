//! The MSVA network.
//!
//! One [`StreamBranch`] per feature source runs aperture-windowed
//! self-attention followed by two linear layers and a normalization, yielding
//! a latent `Z` per stream. The latents are fused (early at the inputs,
//! intermediate after the branches, or late at the final linear layer) and a
//! small head maps the fused representation to per-frame importance scores in
//! (0, 1).

mod attention;

pub use attention::{aperture_mask, attention_weights};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::stream::Stream;
use crate::tensor::{Mask, NodeId, Tape, Tensor, TensorError};

/// Layer-norm epsilon used by every normalization in the network.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bundle error: {0}")]
    Bundle(String),
}

/// Temporal attention window: a frame attends to neighbors within `p` steps,
/// or to the whole sequence when unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aperture {
    Bounded(usize),
    Unbounded,
}

impl fmt::Display for Aperture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aperture::Bounded(p) => write!(f, "{p}"),
            Aperture::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for Aperture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "unbounded" {
            return Ok(Aperture::Unbounded);
        }
        s.trim()
            .parse::<usize>()
            .map(Aperture::Bounded)
            .map_err(|_| format!("aperture must be a non-negative integer or \"unbounded\", got {s:?}"))
    }
}

impl Serialize for Aperture {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Aperture::Bounded(p) => serializer.serialize_u64(*p as u64),
            Aperture::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Aperture {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ApertureVisitor;

        impl Visitor<'_> for ApertureVisitor {
            type Value = Aperture;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer half-window or the string \"unbounded\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Aperture, E> {
                Ok(Aperture::Bounded(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Aperture, E> {
                if v < 0 {
                    return Err(E::custom("aperture must be non-negative"));
                }
                Ok(Aperture::Bounded(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Aperture, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ApertureVisitor)
    }
}

/// When multi-stream information is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionStrategy {
    Early,
    Intermediate,
    Late,
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionStrategy::Early => "early",
            FusionStrategy::Intermediate => "intermediate",
            FusionStrategy::Late => "late",
        };
        f.write_str(s)
    }
}

impl FromStr for FusionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "early" => Ok(FusionStrategy::Early),
            "intermediate" => Ok(FusionStrategy::Intermediate),
            "late" => Ok(FusionStrategy::Late),
            other => Err(format!(
                "unknown fusion strategy {other:?} (expected early, intermediate or late)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub strategy: FusionStrategy,
    /// Dropout rate of the scoring head, applied only while training.
    pub dropout_rate: f64,
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec {
            strategy: FusionStrategy::Intermediate,
            dropout_rate: 0.5,
        }
    }
}

/// Attention hyper-parameters of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub d: usize,
    pub aperture: Aperture,
    /// Score scale in (0, 1].
    pub scale: f64,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d == 0 {
            return Err(ModelError::Config("feature dimension must be >= 1".into()));
        }
        if let Aperture::Bounded(p) = self.aperture {
            if p == 0 {
                return Err(ModelError::Config(
                    "configured aperture must be >= 1 when bounded".into(),
                ));
            }
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(ModelError::Config(format!(
                "attention scale must be in (0, 1], got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Learnable attention weight matrices `U` and `V` (both `d*d`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub u: Tensor,
    pub v: Tensor,
    pub config: AttentionConfig,
}

impl AttentionHead {
    /// Raw pairwise scores `E[t, i] = scale * (U x_i)^T (V x_t)`.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let (_, d) = x.dims2("attention_scores")?;
        if d != self.config.d {
            return Err(TensorError::ShapeMismatch {
                op: "attention_scores",
                lhs: x.shape().to_vec(),
                rhs: self.u.shape().to_vec(),
            }
            .into());
        }
        let mut tape = Tape::new();
        let u = tape.leaf(&self.u);
        let v = tape.leaf(&self.v);
        let xn = tape.leaf(x);
        let e = attention::scores_graph(&mut tape, u, v, xn, self.config.scale)?;
        Ok(tape.value(e))
    }
}

/// Linear layer parameters, stored as `weight[d_in*d_out]` plus `bias[d_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl AffineParams {
    fn init(d_in: usize, d_out: usize, rng: &mut SeededRng) -> Self {
        let bound = glorot_bound(d_in, d_out);
        AffineParams {
            weight: Tensor::uniform(vec![d_in, d_out], -bound, bound, rng).with_requires_grad(),
            bias: Tensor::zeros(vec![d_out]).with_requires_grad(),
        }
    }

    /// Identity map (square weight, zero bias); handy in tests.
    pub fn identity(d: usize) -> Self {
        AffineParams {
            weight: Tensor::eye(d),
            bias: Tensor::zeros(vec![d]),
        }
    }
}

/// Uniform init bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn unit(d: usize) -> Self {
        LayerNormParams {
            gain: Tensor::full(vec![d], 1.0).with_requires_grad(),
            bias: Tensor::zeros(vec![d]).with_requires_grad(),
            eps: LAYER_NORM_EPS,
        }
    }
}

/// One per-stream path: attention, two linear layers, normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBranch {
    pub head: AttentionHead,
    pub l1: AffineParams,
    pub l2: AffineParams,
    pub norm: LayerNormParams,
}

impl StreamBranch {
    fn init(config: AttentionConfig, rng: &mut SeededRng) -> Self {
        let d = config.d;
        let bound = glorot_bound(d, d);
        StreamBranch {
            head: AttentionHead {
                u: Tensor::uniform(vec![d, d], -bound, bound, rng).with_requires_grad(),
                v: Tensor::uniform(vec![d, d], -bound, bound, rng).with_requires_grad(),
                config,
            },
            l1: AffineParams::init(d, d, rng),
            l2: AffineParams::init(d, d, rng),
            norm: LayerNormParams::unit(d),
        }
    }

    /// Latent representation `Z = Norm(L2(L1(A . X)))` where `A` are the
    /// window-restricted attention weights of `X` under `mask`.
    pub fn forward(&self, x: &Tensor, mask: &Mask) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let nodes = BranchNodes {
            u: tape.leaf(&self.head.u),
            v: tape.leaf(&self.head.v),
            l1_w: tape.leaf(&self.l1.weight),
            l1_b: tape.leaf(&self.l1.bias),
            l2_w: tape.leaf(&self.l2.weight),
            l2_b: tape.leaf(&self.l2.bias),
            norm_gain: tape.leaf(&self.norm.gain),
            norm_bias: tape.leaf(&self.norm.bias),
        };
        let xn = tape.leaf(x);
        let z = branch_graph(&mut tape, &nodes, xn, mask, self.head.config.scale)?;
        Ok(tape.value(z))
    }
}

/// Scoring-head stack: `Norm(Drop(ReLU(L3(.))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionHead {
    pub l3: AffineParams,
    pub norm: LayerNormParams,
}

impl FusionHead {
    fn init(d: usize, rng: &mut SeededRng) -> Self {
        FusionHead {
            l3: AffineParams::init(d, d, rng),
            norm: LayerNormParams::unit(d),
        }
    }
}

/// Identifies a branch: one per stream, or a single fused branch under early
/// fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BranchId {
    Fused,
    Stream(Stream),
}

impl BranchId {
    pub fn key(self) -> String {
        match self {
            BranchId::Fused => "fused".into(),
            BranchId::Stream(s) => s.name().into(),
        }
    }
}

/// Everything needed to build a model: streams, their widths, fusion,
/// aperture and the attention scale (`None` selects `1/sqrt(width)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub streams: Vec<Stream>,
    pub dims: BTreeMap<Stream, usize>,
    pub fusion: FusionSpec,
    pub aperture: Aperture,
    pub scale: Option<f64>,
}

impl ModelConfig {
    /// Config with one width shared by every stream.
    pub fn uniform_dims(
        streams: Vec<Stream>,
        d: usize,
        fusion: FusionSpec,
        aperture: Aperture,
    ) -> Self {
        let dims = streams.iter().map(|s| (*s, d)).collect();
        ModelConfig {
            streams,
            dims,
            fusion,
            aperture,
            scale: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.streams.is_empty() {
            return Err(ModelError::Config("at least one stream is required".into()));
        }
        let mut sorted = self.streams.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.streams.len() || sorted != self.streams {
            return Err(ModelError::Config(
                "streams must be unique and in canonical order (object, rgb, flow)".into(),
            ));
        }
        for s in &self.streams {
            match self.dims.get(s) {
                Some(d) if *d >= 1 => {}
                _ => {
                    return Err(ModelError::Config(format!(
                        "missing or zero feature dimension for stream {s}"
                    )))
                }
            }
        }
        if !(0.0..1.0).contains(&self.fusion.dropout_rate) {
            return Err(ModelError::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.fusion.dropout_rate
            )));
        }
        if !matches!(self.fusion.strategy, FusionStrategy::Early) && self.streams.len() > 1 {
            let d0 = self.dims[&self.streams[0]];
            if self.streams.iter().any(|s| self.dims[s] != d0) {
                return Err(ModelError::Config(
                    "intermediate/late fusion requires equal stream dimensions".into(),
                ));
            }
        }
        for id in self.branch_ids() {
            AttentionConfig {
                d: self.branch_dim(id),
                aperture: self.aperture,
                scale: self.scale_for(self.branch_dim(id)),
            }
            .validate()?;
        }
        Ok(())
    }

    /// Branches in deterministic order: the canonical streams, or the single
    /// fused branch under early fusion.
    pub fn branch_ids(&self) -> Vec<BranchId> {
        match self.fusion.strategy {
            FusionStrategy::Early => vec![BranchId::Fused],
            _ => self.streams.iter().map(|s| BranchId::Stream(*s)).collect(),
        }
    }

    pub fn branch_dim(&self, id: BranchId) -> usize {
        match id {
            BranchId::Fused => self.streams.iter().map(|s| self.dims[s]).sum(),
            BranchId::Stream(s) => self.dims[&s],
        }
    }

    /// Width of the fused representation entering the scoring head.
    pub fn head_dim(&self) -> usize {
        match self.fusion.strategy {
            FusionStrategy::Early => self.branch_dim(BranchId::Fused),
            _ => self.dims[&self.streams[0]],
        }
    }

    pub fn scale_for(&self, d: usize) -> f64 {
        self.scale.unwrap_or(1.0 / (d as f64).sqrt())
    }
}

struct BranchNodes {
    u: NodeId,
    v: NodeId,
    l1_w: NodeId,
    l1_b: NodeId,
    l2_w: NodeId,
    l2_b: NodeId,
    norm_gain: NodeId,
    norm_bias: NodeId,
}

struct HeadNodes {
    l3_w: NodeId,
    l3_b: NodeId,
    norm_gain: NodeId,
    norm_bias: NodeId,
}

struct ModelNodes {
    branches: Vec<BranchNodes>,
    heads: Vec<HeadNodes>,
    l4_w: NodeId,
    l4_b: NodeId,
}

fn branch_graph(
    tape: &mut Tape,
    nodes: &BranchNodes,
    x: NodeId,
    mask: &Mask,
    scale: f64,
) -> Result<NodeId, TensorError> {
    let e = attention::scores_graph(tape, nodes.u, nodes.v, x, scale)?;
    let a = tape.masked_softmax(e, mask)?;
    let context = tape.matmul(a, x)?;
    let h1 = tape.affine(context, nodes.l1_w, nodes.l1_b)?;
    let h2 = tape.affine(h1, nodes.l2_w, nodes.l2_b)?;
    tape.layer_norm(h2, nodes.norm_gain, nodes.norm_bias, LAYER_NORM_EPS)
}

fn head_stack_graph(
    tape: &mut Tape,
    nodes: &HeadNodes,
    input: NodeId,
    dropout_rate: f64,
    training: bool,
    rng: &mut SeededRng,
) -> Result<NodeId, TensorError> {
    let h = tape.affine(input, nodes.l3_w, nodes.l3_b)?;
    let h = tape.relu(h);
    let h = tape.dropout(h, dropout_rate, training, rng)?;
    tape.layer_norm(h, nodes.norm_gain, nodes.norm_bias, LAYER_NORM_EPS)
}

/// Result of registering a forward pass on a tape: the output node plus the
/// parameter leaves in [`MsvaModel::named_params`] order.
pub struct ForwardPass {
    pub output: NodeId,
    pub param_ids: Vec<NodeId>,
}

/// The full network: per-stream branches, fusion head(s) and the final
/// projection `L4`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsvaModel {
    config: ModelConfig,
    branches: Vec<(BranchId, StreamBranch)>,
    heads: Vec<FusionHead>,
    l4: AffineParams,
}

impl MsvaModel {
    /// Deterministic initialization: weights uniform within the fan-based
    /// bound, biases zero, norm gains one.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Self::init_with_rng(config, &mut SeededRng::from_u64(seed))
    }

    /// As [`MsvaModel::init`], drawing from a caller-owned stream.
    pub fn init_with_rng(config: &ModelConfig, rng: &mut SeededRng) -> Result<Self, ModelError> {
        config.validate()?;
        let branches: Vec<(BranchId, StreamBranch)> = config
            .branch_ids()
            .into_iter()
            .map(|id| {
                let d = config.branch_dim(id);
                let attn = AttentionConfig {
                    d,
                    aperture: config.aperture,
                    scale: config.scale_for(d),
                };
                (id, StreamBranch::init(attn, rng))
            })
            .collect();
        let head_dim = config.head_dim();
        let n_heads = match config.fusion.strategy {
            FusionStrategy::Late => branches.len(),
            _ => 1,
        };
        let heads = (0..n_heads).map(|_| FusionHead::init(head_dim, rng)).collect();
        let l4 = AffineParams::init(head_dim, 1, rng);
        Ok(MsvaModel {
            config: config.clone(),
            branches,
            heads,
            l4,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branch_ids(&self) -> Vec<BranchId> {
        self.branches.iter().map(|(id, _)| *id).collect()
    }

    pub fn branch(&self, id: BranchId) -> Option<&StreamBranch> {
        self.branches
            .iter()
            .find(|(b, _)| *b == id)
            .map(|(_, branch)| branch)
    }

    pub fn branch_mut(&mut self, id: BranchId) -> Option<&mut StreamBranch> {
        self.branches
            .iter_mut()
            .find(|(b, _)| *b == id)
            .map(|(_, branch)| branch)
    }

    /// Parameters with their canonical names, in deterministic order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (id, b) in &self.branches {
            let k = id.key();
            out.push((format!("branch.{k}.attn.u"), &b.head.u));
            out.push((format!("branch.{k}.attn.v"), &b.head.v));
            out.push((format!("branch.{k}.l1.weight"), &b.l1.weight));
            out.push((format!("branch.{k}.l1.bias"), &b.l1.bias));
            out.push((format!("branch.{k}.l2.weight"), &b.l2.weight));
            out.push((format!("branch.{k}.l2.bias"), &b.l2.bias));
            out.push((format!("branch.{k}.norm.gain"), &b.norm.gain));
            out.push((format!("branch.{k}.norm.bias"), &b.norm.bias));
        }
        let single = self.heads.len() == 1;
        for (i, h) in self.heads.iter().enumerate() {
            let prefix = if single {
                "head".to_string()
            } else {
                format!("head.{}", self.branches[i].0.key())
            };
            out.push((format!("{prefix}.l3.weight"), &h.l3.weight));
            out.push((format!("{prefix}.l3.bias"), &h.l3.bias));
            out.push((format!("{prefix}.norm.gain"), &h.norm.gain));
            out.push((format!("{prefix}.norm.bias"), &h.norm.bias));
        }
        out.push(("l4.weight".to_string(), &self.l4.weight));
        out.push(("l4.bias".to_string(), &self.l4.bias));
        out
    }

    /// Mutable view of the parameters, mirroring [`MsvaModel::named_params`].
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let single = self.heads.len() == 1;
        let head_keys: Vec<String> = self
            .branches
            .iter()
            .map(|(id, _)| id.key())
            .collect();
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (id, b) in self.branches.iter_mut() {
            let k = id.key();
            out.push((format!("branch.{k}.attn.u"), &mut b.head.u));
            out.push((format!("branch.{k}.attn.v"), &mut b.head.v));
            out.push((format!("branch.{k}.l1.weight"), &mut b.l1.weight));
            out.push((format!("branch.{k}.l1.bias"), &mut b.l1.bias));
            out.push((format!("branch.{k}.l2.weight"), &mut b.l2.weight));
            out.push((format!("branch.{k}.l2.bias"), &mut b.l2.bias));
            out.push((format!("branch.{k}.norm.gain"), &mut b.norm.gain));
            out.push((format!("branch.{k}.norm.bias"), &mut b.norm.bias));
        }
        for (i, h) in self.heads.iter_mut().enumerate() {
            let prefix = if single {
                "head".to_string()
            } else {
                format!("head.{}", head_keys[i])
            };
            out.push((format!("{prefix}.l3.weight"), &mut h.l3.weight));
            out.push((format!("{prefix}.l3.bias"), &mut h.l3.bias));
            out.push((format!("{prefix}.norm.gain"), &mut h.norm.gain));
            out.push((format!("{prefix}.norm.bias"), &mut h.norm.bias));
        }
        out.push(("l4.weight".to_string(), &mut self.l4.weight));
        out.push(("l4.bias".to_string(), &mut self.l4.bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.branches.len() * 8 + self.heads.len() * 4 + 2
    }

    fn bind_ids(&self, ids: &[NodeId]) -> Result<ModelNodes, ModelError> {
        if ids.len() != self.param_count() {
            return Err(ModelError::Config(format!(
                "expected {} parameter nodes, got {}",
                self.param_count(),
                ids.len()
            )));
        }
        let mut it = ids.iter().copied();
        let mut next = move || it.next().expect("count checked above");
        let mut branches = Vec::with_capacity(self.branches.len());
        for _ in 0..self.branches.len() {
            let u = next();
            let v = next();
            let l1_w = next();
            let l1_b = next();
            let l2_w = next();
            let l2_b = next();
            let norm_gain = next();
            let norm_bias = next();
            branches.push(BranchNodes {
                u,
                v,
                l1_w,
                l1_b,
                l2_w,
                l2_b,
                norm_gain,
                norm_bias,
            });
        }
        let mut heads = Vec::with_capacity(self.heads.len());
        for _ in 0..self.heads.len() {
            let l3_w = next();
            let l3_b = next();
            let norm_gain = next();
            let norm_bias = next();
            heads.push(HeadNodes {
                l3_w,
                l3_b,
                norm_gain,
                norm_bias,
            });
        }
        let l4_w = next();
        let l4_b = next();
        Ok(ModelNodes {
            branches,
            heads,
            l4_w,
            l4_b,
        })
    }

    /// Per-branch input matrices in branch order. Early fusion concatenates
    /// the configured streams column-wise (canonical order); otherwise each
    /// configured stream feeds its own branch. Extra streams in the map are
    /// ignored.
    fn branch_inputs(&self, streams: &BTreeMap<Stream, Tensor>) -> Result<Vec<Tensor>, ModelError> {
        let mut used: Vec<&Tensor> = Vec::with_capacity(self.config.streams.len());
        for s in &self.config.streams {
            let x = streams
                .get(s)
                .ok_or_else(|| ModelError::Config(format!("missing stream {s}")))?;
            used.push(x);
        }
        let t0 = used[0].dims2("forward")?.0;
        for (s, x) in self.config.streams.iter().zip(used.iter()) {
            let (t, d) = x.dims2("forward")?;
            if t != t0 {
                return Err(ModelError::Bundle(format!(
                    "stream {s} has {t} rows but {} has {t0}",
                    self.config.streams[0]
                )));
            }
            if d != self.config.dims[s] {
                return Err(TensorError::ShapeMismatch {
                    op: "forward",
                    lhs: vec![t, d],
                    rhs: vec![t0, self.config.dims[s]],
                }
                .into());
            }
        }
        match self.config.fusion.strategy {
            FusionStrategy::Early => Ok(vec![Tensor::concat_cols(&used)?]),
            _ => Ok(used.into_iter().cloned().collect()),
        }
    }

    /// Head portion shared by every fusion strategy, from branch latents
    /// (branch order) to the score vector node.
    fn head_graph(
        &self,
        tape: &mut Tape,
        nodes: &ModelNodes,
        zs: &[NodeId],
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<NodeId, ModelError> {
        let rate = self.config.fusion.dropout_rate;
        let pre = match self.config.fusion.strategy {
            FusionStrategy::Early | FusionStrategy::Intermediate => {
                let mut acc = zs[0];
                for z in &zs[1..] {
                    acc = tape.add(acc, *z)?;
                }
                head_stack_graph(tape, &nodes.heads[0], acc, rate, training, rng)?
            }
            FusionStrategy::Late => {
                let mut acc: Option<NodeId> = None;
                for (z, head) in zs.iter().zip(nodes.heads.iter()) {
                    let h = head_stack_graph(tape, head, *z, rate, training, rng)?;
                    acc = Some(match acc {
                        None => h,
                        Some(a) => tape.add(a, h)?,
                    });
                }
                acc.expect("at least one branch")
            }
        };
        let logits = tape.affine(pre, nodes.l4_w, nodes.l4_b)?;
        let t = tape.shape(logits)[0];
        let flat = tape.reshape(logits, vec![t])?;
        Ok(tape.sigmoid(flat))
    }

    /// Registers the parameters as leaves and builds the full forward graph.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        streams: &BTreeMap<Stream, Tensor>,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<ForwardPass, ModelError> {
        let param_ids: Vec<NodeId> = self
            .named_params()
            .into_iter()
            .map(|(_, t)| tape.leaf(t))
            .collect();
        let output = self.forward_with_params(tape, &param_ids, streams, training, rng)?;
        Ok(ForwardPass { output, param_ids })
    }

    /// Builds the forward graph over caller-provided parameter leaves (in
    /// [`MsvaModel::named_params`] order).
    pub fn forward_with_params(
        &self,
        tape: &mut Tape,
        param_ids: &[NodeId],
        streams: &BTreeMap<Stream, Tensor>,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<NodeId, ModelError> {
        let nodes = self.bind_ids(param_ids)?;
        let inputs = self.branch_inputs(streams)?;
        let t = inputs[0].shape()[0];
        let mask = aperture_mask(t, self.config.aperture);
        let mut zs = Vec::with_capacity(inputs.len());
        for ((input, branch_nodes), (id, _)) in inputs
            .iter()
            .zip(nodes.branches.iter())
            .zip(self.branches.iter())
        {
            let x = tape.leaf(input);
            let scale = self.config.scale_for(self.config.branch_dim(*id));
            zs.push(branch_graph(tape, branch_nodes, x, &mask, scale)?);
        }
        self.head_graph(tape, &nodes, &zs, training, rng)
    }

    /// Runs the network and returns the score vector as a plain tensor.
    pub fn forward(
        &self,
        streams: &BTreeMap<Stream, Tensor>,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let pass = self.forward_on_tape(&mut tape, streams, training, rng)?;
        Ok(tape.value(pass.output))
    }

    /// Scores the branch latents `Z` through the fusion head alone.
    ///
    /// The key set must equal the model's branch set (the configured streams,
    /// or the single fused branch under early fusion).
    pub fn fuse_and_score(
        &self,
        z_set: &BTreeMap<BranchId, Tensor>,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Tensor, ModelError> {
        let expected = self.branch_ids();
        for id in &expected {
            if !z_set.contains_key(id) {
                return Err(ModelError::Config(format!(
                    "missing stream latent for branch {}",
                    id.key()
                )));
            }
        }
        if z_set.len() != expected.len() {
            return Err(ModelError::Config(format!(
                "expected latents for exactly {} branches, got {}",
                expected.len(),
                z_set.len()
            )));
        }
        let mut tape = Tape::new();
        let param_ids: Vec<NodeId> = self
            .named_params()
            .into_iter()
            .map(|(_, t)| tape.leaf(t))
            .collect();
        let nodes = self.bind_ids(&param_ids)?;
        let zs: Vec<NodeId> = expected.iter().map(|id| tape.leaf(&z_set[id])).collect();
        let out = self.head_graph(&mut tape, &nodes, &zs, training, rng)?;
        Ok(tape.value(out))
    }

    /// Deterministic inference scores for one video's streams.
    pub fn predict(&self, streams: &BTreeMap<Stream, Tensor>) -> Result<Vec<f64>, ModelError> {
        let mut rng = SeededRng::from_u64(0); // never drawn from in inference
        Ok(self.forward(streams, false, &mut rng)?.data().to_vec())
    }
}
