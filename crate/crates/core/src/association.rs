//! Embedding of masked RoI features and attention-based association.
//!
//! A detection is embedded as `g(M′ ⊙ (F + L(P)))` where `F` is its
//! appearance patch, `P` its position encoding, `L` a bias-free channel
//! mixing map, `M′` the channel-broadcast attention mask and `g` two
//! linear+ReLU layers. A trajectory goes through the same pipeline with its
//! accumulated encoding and last appearance snapshot. Association scores are
//! `softmax(Q·Kᵀ/√D)` taken per key group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{classic_encoding, RoiPatch, RoiSpec, TrajectoryEncoding};
use crate::error::{Error, Result};
use crate::numeric::{grouped_softmax, linear, Graph, Parameter, Tensor, Var};

/// Which position signal enters the embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Appearance only.
    None,
    /// 1-D sinusoidal code of the token's frame index added after `g`.
    Classic,
    /// Dense RoI encoding added to the features before `g`.
    #[default]
    Dst,
}

impl std::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncodingMode::None => "none",
            EncodingMode::Classic => "classic",
            EncodingMode::Dst => "dst",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub roi: RoiSpec,
    pub embed_dim: usize,
    pub encoding: EncodingMode,
    pub use_mask: bool,
    /// Append a learned no-match key to every frame group of the clip matrix.
    pub frame_sink: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 64,
            roi: RoiSpec::default(),
            embed_dim: 128,
            encoding: EncodingMode::Dst,
            use_mask: true,
            frame_sink: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 || self.channels % 2 != 0 {
            return Err(Error::config("model.channels", "must be even and at least 2"));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::config("model.embed_dim", "must be even and positive"));
        }
        self.roi.validate()
    }

    fn feature_len(&self) -> usize {
        self.channels * self.roi.cells()
    }
}

/// Per-cell weights in `[0, 1]` over the RoI grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMask(Tensor);

impl AttentionMask {
    pub fn new(grid: Tensor) -> Result<Self> {
        if grid.shape().len() != 2 {
            return Err(Error::shape(format!(
                "mask must be H_R×W_R, got {:?}",
                grid.shape()
            )));
        }
        if grid.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("mask values must lie in [0, 1]".into()));
        }
        if grid.data().iter().all(|&v| v == 0.0) {
            return Err(Error::Invalid("mask is all zero".into()));
        }
        Ok(AttentionMask(grid))
    }

    pub fn ones(roi: RoiSpec) -> Self {
        AttentionMask(Tensor::filled(&[roi.height, roi.width], 1.0))
    }

    pub fn grid(&self) -> &Tensor {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    /// The mask copied across `channels`, flattened to `channels × cells`.
    fn broadcast(&self, channels: usize) -> Tensor {
        let cells = self.0.len();
        let mut data = Vec::with_capacity(channels * cells);
        for _ in 0..channels {
            data.extend_from_slice(self.0.data());
        }
        Tensor::from_parts(vec![channels, cells], data)
    }
}

/// `output(c, y, x) = mask(y, x) · features(c, y, x)`.
pub fn apply_mask(features: &RoiPatch, mask: &AttentionMask) -> Result<RoiPatch> {
    if features.height() != mask.height() || features.width() != mask.width() {
        return Err(Error::shape(format!(
            "mask {}x{} for features {}x{}",
            mask.height(),
            mask.width(),
            features.height(),
            features.width()
        )));
    }
    let broadcast = mask.broadcast(features.channels());
    let flat = features.tensor().reshape(broadcast.shape())?;
    RoiPatch::new(flat.mul(&broadcast)?.reshape(features.tensor().shape())?)
}

/// One token to embed.
#[derive(Clone, Copy, Debug)]
pub struct EmbedInput<'a> {
    pub appearance: &'a RoiPatch,
    /// Position encoding: a single-box RoI code or an accumulated trajectory.
    pub encoding: &'a RoiPatch,
    pub mask: &'a AttentionMask,
    /// Frame index within the clip, used only by [`EncodingMode::Classic`].
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
enum ParamId {
    LMap,
    G1Weight,
    G1Bias,
    G2Weight,
    G2Bias,
    Query,
    Key,
    NullToken,
    SinkToken,
}

/// Parameter names in checkpoint order.
pub const PARAM_NAMES: [&str; 9] = [
    "l_map",
    "g1.weight",
    "g1.bias",
    "g2.weight",
    "g2.bias",
    "query",
    "key",
    "null_token",
    "sink_token",
];

/// The learned association model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStack {
    config: ModelConfig,
    params: Vec<Parameter>,
}

/// Parameter leaves of an [`EmbeddingStack`] inside one [`Graph`].
#[derive(Clone, Debug)]
pub struct BoundStack {
    vars: Vec<Var>,
}

impl BoundStack {
    fn var(&self, id: ParamId) -> Var {
        self.vars[id as usize]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl EmbeddingStack {
    /// Fresh model: uniform fan-in initialisation, zero biases, `L` near identity.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (c, d, f) = (config.channels, config.embed_dim, config.feature_len());

        let mut uniform = |shape: &[usize], bound: f64| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::from_parts(shape.to_vec(), data)
        };
        let mut l_map = uniform(&[c, c], 0.01);
        l_map.axpy(1.0, &Tensor::identity(c))?;
        let g1 = uniform(&[f, d], 1.0 / (f as f64).sqrt());
        let g2 = uniform(&[d, d], 1.0 / (d as f64).sqrt());
        let q = uniform(&[d, d], 1.0 / (d as f64).sqrt());
        let k = uniform(&[d, d], 1.0 / (d as f64).sqrt());
        let null = uniform(&[1, d], 1.0 / (d as f64).sqrt());
        let sink = uniform(&[1, d], 1.0 / (d as f64).sqrt());

        let params = vec![
            l_map,
            g1,
            Tensor::zeros(&[d]),
            g2,
            Tensor::zeros(&[d]),
            q,
            k,
            null,
            sink,
        ]
        .into_iter()
        .map(Parameter::new)
        .collect();
        Ok(EmbeddingStack { config, params })
    }

    /// Rebuilds a model from named parameters, checking every shape.
    pub fn from_parameters(config: ModelConfig, params: Vec<Parameter>) -> Result<Self> {
        let fresh = EmbeddingStack::new(config.clone())?;
        if params.len() != fresh.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (i, (p, f)) in params.iter().zip(&fresh.params).enumerate() {
            if p.shape() != f.shape() {
                return Err(Error::shape(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    PARAM_NAMES[i],
                    p.shape(),
                    f.shape()
                )));
            }
        }
        Ok(EmbeddingStack { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// The channel mixing map `L` as a `C×C` matrix acting on channel vectors.
    pub fn l_map(&self) -> &Tensor {
        &self.params[ParamId::LMap as usize].value
    }

    pub fn null_embedding(&self) -> Vec<f64> {
        self.params[ParamId::NullToken as usize].value.data().to_vec()
    }

    pub fn sink_embedding(&self) -> Vec<f64> {
        self.params[ParamId::SinkToken as usize].value.data().to_vec()
    }

    /// Registers every parameter as a borrowed leaf of `g`.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> BoundStack {
        BoundStack {
            vars: self.params.iter().map(|p| g.borrowed(&p.value)).collect(),
        }
    }

    fn check_input(&self, input: &EmbedInput<'_>) -> Result<()> {
        let (c, roi) = (self.config.channels, self.config.roi);
        let expect = [c, roi.height, roi.width];
        if input.appearance.tensor().shape() != expect {
            return Err(Error::shape(format!(
                "appearance {:?}, model expects {expect:?}",
                input.appearance.tensor().shape()
            )));
        }
        if input.encoding.tensor().shape() != expect {
            return Err(Error::shape(format!(
                "encoding {:?}, model expects {expect:?}",
                input.encoding.tensor().shape()
            )));
        }
        if input.mask.grid().shape() != [roi.height, roi.width] {
            return Err(Error::shape(format!(
                "mask {:?}, model expects {}x{}",
                input.mask.grid().shape(),
                roi.height,
                roi.width
            )));
        }
        Ok(())
    }

    /// `L` applied to every RoI cell of `encoding`, recorded on `g`.
    pub fn graph_l_map(&self, g: &mut Graph<'_>, bound: &BoundStack, encoding: Var) -> Result<Var> {
        g.matmul(bound.var(ParamId::LMap), encoding)
    }

    /// Flattened masked features `M′ ⊙ (F + L(P))` for one input, `1 × C·cells`.
    fn graph_masked_features(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundStack,
        input: &EmbedInput<'_>,
    ) -> Result<Var> {
        self.check_input(input)?;
        let (c, cells) = (self.config.channels, self.config.roi.cells());
        let appearance = g.input(input.appearance.tensor().reshape(&[c, cells])?);
        let features = if self.config.encoding == EncodingMode::Dst {
            let enc = g.input(input.encoding.tensor().reshape(&[c, cells])?);
            let mapped = self.graph_l_map(g, bound, enc)?;
            g.add(appearance, mapped)?
        } else {
            appearance
        };
        let masked = if self.config.use_mask {
            g.mul_const(features, input.mask.broadcast(c))?
        } else {
            features
        };
        g.reshape(masked, &[1, c * cells])
    }

    /// Output of `g` before any token position code is added.
    fn graph_embed_base(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundStack,
        inputs: &[EmbedInput<'_>],
    ) -> Result<Var> {
        let rows = inputs
            .iter()
            .map(|inp| self.graph_masked_features(g, bound, inp))
            .collect::<Result<Vec<_>>>()?;
        let x = g.concat_rows(&rows)?;
        let h1 = linear(
            g,
            x,
            bound.var(ParamId::G1Weight),
            Some(bound.var(ParamId::G1Bias)),
        )?;
        let h1 = g.relu(h1);
        let h2 = linear(
            g,
            h1,
            bound.var(ParamId::G2Weight),
            Some(bound.var(ParamId::G2Bias)),
        )?;
        Ok(g.relu(h2))
    }

    /// Embeds a batch of tokens into an `N×D` node.
    pub fn graph_embed(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundStack,
        inputs: &[EmbedInput<'_>],
    ) -> Result<Var> {
        let e = self.graph_embed_base(g, bound, inputs)?;
        if self.config.encoding == EncodingMode::Classic {
            let d = self.config.embed_dim;
            let mut pe = Vec::with_capacity(inputs.len() * d);
            for inp in inputs {
                pe.extend(classic_encoding(inp.position, d)?);
            }
            let pe = g.input(Tensor::from_parts(vec![inputs.len(), d], pe));
            g.add(e, pe)
        } else {
            Ok(e)
        }
    }

    /// Row block `[embeddings; null]` for trajectory keys.
    pub fn graph_with_null(&self, g: &mut Graph<'_>, bound: &BoundStack, rows: Option<Var>) -> Result<Var> {
        let null = bound.var(ParamId::NullToken);
        match rows {
            Some(r) => g.concat_rows(&[null, r]),
            None => Ok(null),
        }
    }

    /// `Q·Kᵀ/√D` between query and key embeddings.
    pub fn graph_logits(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundStack,
        queries: Var,
        keys: Var,
    ) -> Result<Var> {
        let q = g.matmul(queries, bound.var(ParamId::Query))?;
        let k = g.matmul(keys, bound.var(ParamId::Key))?;
        let logits = g.matmul_nt(q, k)?;
        Ok(g.scale(logits, 1.0 / (self.config.embed_dim as f64).sqrt()))
    }

    /// Clip-level key block: detections followed by one sink per frame when
    /// enabled. Returns the keys node, the group of each key column and the
    /// allowance mask for queries drawn from `frames`.
    pub fn graph_clip_scores(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundStack,
        embeddings: Var,
        frames: &[usize],
    ) -> Result<(Var, ClipLayout)> {
        let layout = ClipLayout::new(frames, self.config.frame_sink);
        let keys = if self.config.frame_sink && !layout.frame_order.is_empty() {
            let sink = bound.var(ParamId::SinkToken);
            let mut parts = vec![embeddings];
            parts.extend(std::iter::repeat_n(sink, layout.frame_order.len()));
            g.concat_rows(&parts)?
        } else {
            embeddings
        };
        let logits = self.graph_logits(g, bound, embeddings, keys)?;
        let scores = g.grouped_softmax(logits, layout.groups.clone(), Some(layout.allowed.clone()))?;
        Ok((scores, layout))
    }

    /// Embeds tokens outside of training.
    pub fn embed_many(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let e = self.graph_embed(&mut g, &bound, inputs)?;
        let t = g.value(e);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    /// Embeddings without the token position code; see [`EmbeddingStack::place`].
    pub fn embed_base(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let e = self.graph_embed_base(&mut g, &bound, inputs)?;
        let t = g.value(e);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    /// Adds the token position code for `position` to a base embedding. Only
    /// [`EncodingMode::Classic`] has one; other modes return `base` unchanged.
    pub fn place(&self, base: &[f64], position: usize) -> Result<Vec<f64>> {
        if self.config.encoding != EncodingMode::Classic {
            return Ok(base.to_vec());
        }
        let pe = classic_encoding(position, self.config.embed_dim)?;
        Ok(base.iter().zip(&pe).map(|(a, b)| a + b).collect())
    }

    /// Flattened `M′ ⊙ (F + L(P))`, the input of the first layer of `g`.
    pub fn masked_features(&self, input: &EmbedInput<'_>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let v = self.graph_masked_features(&mut g, &bound, input)?;
        Ok(g.value(v).data().to_vec())
    }

    /// First-layer pre-activation `x·W₁ + b₁`.
    pub fn first_layer_preactivation(&self, input: &EmbedInput<'_>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let x = self.graph_masked_features(&mut g, &bound, input)?;
        let h = linear(
            &mut g,
            x,
            bound.var(ParamId::G1Weight),
            Some(bound.var(ParamId::G1Bias)),
        )?;
        Ok(g.value(h).data().to_vec())
    }

    /// `L(P)` for a single patch, returned in the patch layout.
    pub fn apply_l_map(&self, patch: &RoiPatch) -> Result<RoiPatch> {
        let c = self.config.channels;
        if patch.channels() != c {
            return Err(Error::shape(format!(
                "patch has {} channels, L expects {c}",
                patch.channels()
            )));
        }
        let flat = patch.tensor().reshape(&[c, patch.height() * patch.width()])?;
        RoiPatch::new(self.l_map().matmul(&flat)?.reshape(patch.tensor().shape())?)
    }

    fn project(&self, rows: &[Vec<f64>], id: ParamId) -> Result<Tensor> {
        let d = self.config.embed_dim;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape(format!("embeddings must have width {d}")));
        }
        let x = Tensor::from_parts(vec![rows.len(), d], rows.concat());
        x.matmul(&self.params[id as usize].value)
    }

    /// `Q·Kᵀ/√D` for plain embedding vectors.
    pub fn logits(&self, queries: &[Vec<f64>], keys: &[Vec<f64>]) -> Result<Tensor> {
        let q = self.project(queries, ParamId::Query)?;
        let k = self.project(keys, ParamId::Key)?;
        Ok(q.matmul_nt(&k)?.scaled(1.0 / (self.config.embed_dim as f64).sqrt()))
    }
}

/// Column layout of a clip association matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipLayout {
    /// Distinct frames in ascending order; group `k` is `frame_order[k]`.
    pub frame_order: Vec<usize>,
    pub groups: Vec<usize>,
    /// Row-major `N × columns` participation mask.
    pub allowed: Vec<bool>,
    pub keys: Vec<KeyRef>,
    pub rows: usize,
}

impl ClipLayout {
    pub fn new(frames: &[usize], frame_sink: bool) -> Self {
        let mut frame_order = frames.to_vec();
        frame_order.sort_unstable();
        frame_order.dedup();
        let group_of = |f: usize| frame_order.binary_search(&f).expect("frame present");
        let mut groups: Vec<usize> = frames.iter().map(|&f| group_of(f)).collect();
        let mut keys: Vec<KeyRef> = (0..frames.len()).map(KeyRef::Detection).collect();
        if frame_sink {
            for (k, &f) in frame_order.iter().enumerate() {
                groups.push(k);
                keys.push(KeyRef::Sink(f));
            }
        }
        let cols = groups.len();
        let mut allowed = vec![false; frames.len() * cols];
        for (r, &f) in frames.iter().enumerate() {
            let own = group_of(f);
            for c in 0..cols {
                allowed[r * cols + c] = groups[c] != own;
            }
        }
        ClipLayout {
            frame_order,
            groups,
            allowed,
            keys,
            rows: frames.len(),
        }
    }

    pub fn columns(&self) -> usize {
        self.groups.len()
    }
}

/// What a key column of an [`AssociationMatrix`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyRef {
    Detection(usize),
    /// No-match key of a frame group.
    Sink(usize),
    Trajectory(usize),
    Null,
}

/// Score matrix whose rows are distributions within each key group.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationMatrix {
    scores: Tensor,
    query_ids: Vec<usize>,
    keys: Vec<KeyRef>,
    key_groups: Vec<usize>,
    allowed: Option<Vec<bool>>,
}

impl AssociationMatrix {
    fn build(
        scores: Tensor,
        query_ids: Vec<usize>,
        keys: Vec<KeyRef>,
        key_groups: Vec<usize>,
        allowed: Option<Vec<bool>>,
    ) -> Self {
        let m = AssociationMatrix {
            scores,
            query_ids,
            keys,
            key_groups,
            allowed,
        };
        debug_assert!(m.max_group_deviation() < 1e-6, "association rows must be stochastic");
        m
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn query_ids(&self) -> &[usize] {
        &self.query_ids
    }

    pub fn keys(&self) -> &[KeyRef] {
        &self.keys
    }

    pub fn key_groups(&self) -> &[usize] {
        &self.key_groups
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores.at2(row, col)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Whether entry `(row, col)` takes part in its group's normalisation.
    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.allowed
            .as_ref()
            .is_none_or(|a| a[row * self.keys.len() + col])
    }

    /// Largest `|Σ group − 1|` over every (row, non-empty group).
    pub fn max_group_deviation(&self) -> f64 {
        let n_groups = self.key_groups.iter().max().map_or(0, |g| g + 1);
        let mut worst = 0.0f64;
        for r in 0..self.query_ids.len() {
            let mut sums = vec![0.0; n_groups];
            let mut present = vec![false; n_groups];
            for (c, &grp) in self.key_groups.iter().enumerate() {
                if self.is_allowed(r, c) {
                    sums[grp] += self.scores.at2(r, c);
                    present[grp] = true;
                }
            }
            for (s, p) in sums.iter().zip(&present) {
                if *p {
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }
}

/// Clip association from precomputed logits (`N × columns` of `layout`).
pub fn detection_attention_from_logits(logits: &Tensor, layout: &ClipLayout) -> Result<AssociationMatrix> {
    if logits.shape() != [layout.rows, layout.columns()] {
        return Err(Error::shape(format!(
            "logits {:?} for a {}x{} layout",
            logits.shape(),
            layout.rows,
            layout.columns()
        )));
    }
    let scores = crate::numeric::softmax::masked_grouped_softmax(logits, &layout.groups, Some(&layout.allowed));
    Ok(AssociationMatrix::build(
        scores,
        (0..layout.rows).collect(),
        layout.keys.clone(),
        layout.groups.clone(),
        Some(layout.allowed.clone()),
    ))
}

/// Detection–detection association over a clip. Keys are grouped by frame;
/// a query never sees keys of its own frame. A single-frame input gives a
/// matrix without columns.
pub fn detection_attention(
    embeddings: &[Vec<f64>],
    frames: &[usize],
    stack: &EmbeddingStack,
) -> Result<AssociationMatrix> {
    if embeddings.len() != frames.len() {
        return Err(Error::shape(format!(
            "{} embeddings with {} frame labels",
            embeddings.len(),
            frames.len()
        )));
    }
    let distinct = {
        let mut f = frames.to_vec();
        f.sort_unstable();
        f.dedup();
        f.len()
    };
    if distinct < 2 {
        return Ok(AssociationMatrix::build(
            Tensor::zeros(&[embeddings.len(), 0]),
            (0..embeddings.len()).collect(),
            Vec::new(),
            Vec::new(),
            None,
        ));
    }
    let layout = ClipLayout::new(frames, stack.config().frame_sink);
    let mut keys = embeddings.to_vec();
    if stack.config().frame_sink {
        keys.extend(std::iter::repeat_n(stack.sink_embedding(), layout.frame_order.len()));
    }
    let logits = stack.logits(embeddings, &keys)?;
    detection_attention_from_logits(&logits, &layout)
}

/// Both normalisations of detection–trajectory logits (`detections × keys`).
///
/// The first matrix has one row per detection, normalised over trajectory
/// keys. The second has one row per trajectory key, normalised over
/// detections.
pub fn det_traj_from_logits(logits: &Tensor) -> Result<(AssociationMatrix, AssociationMatrix)> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("logits must be a matrix"));
    }
    let (n_det, n_traj) = (logits.rows(), logits.cols());
    let per_det = grouped_softmax(logits, &vec![0; n_traj])?;
    let transposed = logits.transpose()?;
    let per_traj = grouped_softmax(&transposed, &vec![0; n_det])?;
    Ok((
        AssociationMatrix::build(
            per_det,
            (0..n_det).collect(),
            (0..n_traj).map(KeyRef::Trajectory).collect(),
            vec![0; n_traj],
            None,
        ),
        AssociationMatrix::build(
            per_traj,
            (0..n_traj).collect(),
            (0..n_det).map(KeyRef::Detection).collect(),
            vec![0; n_det],
            None,
        ),
    ))
}

/// Detection–trajectory association. `traj_embs` must already contain the
/// null trajectory (see [`EmbeddingStack::null_embedding`]).
pub fn det_traj_attention(
    det_embs: &[Vec<f64>],
    traj_embs: &[Vec<f64>],
    stack: &EmbeddingStack,
) -> Result<(AssociationMatrix, AssociationMatrix)> {
    if traj_embs.is_empty() {
        return Err(Error::Invalid("trajectory keys must include the null trajectory".into()));
    }
    let logits = stack.logits(det_embs, traj_embs)?;
    det_traj_from_logits(&logits)
}

/// Embeds one detection.
pub fn embed_detection(
    appearance: &RoiPatch,
    encoding: &RoiPatch,
    mask: &AttentionMask,
    stack: &EmbeddingStack,
) -> Result<Vec<f64>> {
    let input = EmbedInput {
        appearance,
        encoding,
        mask,
        position: 0,
    };
    Ok(stack.embed_many(&[input])?.remove(0))
}

/// Embeds a trajectory through the detection pipeline.
pub fn embed_trajectory(
    traj: &TrajectoryEncoding,
    last_snapshot: &RoiPatch,
    last_mask: &AttentionMask,
    stack: &EmbeddingStack,
) -> Result<Vec<f64>> {
    embed_detection(last_snapshot, traj.patch(), last_mask, stack)
}
