use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ConvGeom, CustomOp, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rpmgen::RpmInstance;

/// Panel encoder family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Two dense layers per panel.
    Mlp,
    /// A dense network shared across a 3×3 grid of slightly overlapping
    /// patches. The panel embedding sums dense maps of the concatenated
    /// patches, their column-wise maximum and their mean.
    Patch,
    /// Four stride-2 3×3 convolutions with layer normalization.
    Conv,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(EncoderKind::Mlp),
            "patch" => Ok(EncoderKind::Patch),
            "conv" => Ok(EncoderKind::Conv),
            _ => Err(Error::InvalidArgument(format!("unknown encoder `{s}` (mlp, patch or conv)"))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Mlp => "mlp",
            EncoderKind::Patch => "patch",
            EncoderKind::Conv => "conv",
        })
    }
}

/// Layer sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub encoder: EncoderKind,
    pub panel_size: u16,
    /// Hidden width of the MLP panel encoder.
    pub panel_hidden: usize,
    pub patch_hidden: usize,
    pub patch_dim: usize,
    /// Channels of every conv layer.
    pub conv_channels: usize,
    pub conv_layers: usize,
    /// Panel embedding width.
    pub panel_dim: usize,
    /// Hidden width of the per-channel relation network.
    pub relation_hidden: usize,
    /// Features the relation network emits per embedding channel.
    pub relation_features: usize,
    pub fuse_hidden: usize,
    /// Width of `h`.
    pub feature_dim: usize,
    pub proj_hidden: usize,
    /// Width of `z`.
    pub proj_dim: usize,
    pub rule_hidden: usize,
    /// Meta-target length.
    pub rule_dim: usize,
}

impl NetConfig {
    pub fn new(encoder: EncoderKind, panel_size: u16, rule_dim: usize) -> Self {
        Self {
            encoder,
            panel_size,
            panel_hidden: 128,
            patch_hidden: 64,
            patch_dim: 32,
            conv_channels: 32,
            conv_layers: 4,
            panel_dim: 32,
            relation_hidden: 16,
            relation_features: 8,
            fuse_hidden: 128,
            feature_dim: 64,
            proj_hidden: 128,
            proj_dim: 32,
            rule_hidden: 128,
            rule_dim,
        }
    }

    fn conv_geoms(&self, panels: usize) -> Vec<ConvGeom> {
        let mut side = usize::from(self.panel_size);
        let mut channels = 1;
        let mut out = Vec::new();
        for _ in 0..self.conv_layers {
            let g = ConvGeom {
                batch: panels,
                height: side,
                width: side,
                channels,
                kernel: 3,
                stride: 2,
                pad: 1,
            };
            side = g.out_height();
            channels = self.conv_channels;
            out.push(g);
        }
        out
    }

    /// 3×3 patches of side `S − 2⌊S/3⌋` at stride `⌊S/3⌋`.
    fn patch_geom(&self, panels: usize) -> ConvGeom {
        let side = usize::from(self.panel_size);
        let stride = side / 3;
        ConvGeom {
            batch: panels,
            height: side,
            width: side,
            channels: 1,
            kernel: side - 2 * stride,
            stride,
            pad: 0,
        }
    }

    /// Width of one row or column representation.
    pub fn line_dim(&self) -> usize {
        self.panel_dim * self.relation_features
    }

    fn conv_out(&self) -> usize {
        let last = *self.conv_geoms(1).last().expect("at least one conv layer");
        last.out_height() * last.out_width() * self.conv_channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            w: store.add(format!("{name}.w"), Tensor::new(vec![fan_in, fan_out], w).expect("sized")),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[fan_out])),
        }
    }

    fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var, frozen: bool) -> Result<Var> {
        let (w, b) = if frozen {
            (g.frozen_param(store, self.w), g.frozen_param(store, self.b))
        } else {
            (g.param(store, self.w), g.param(store, self.b))
        };
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

/// Encoder `f`, projection `g`, rule head `ρ` and scoring head `s`, sharing
/// one parameter store.
#[derive(Clone, Debug)]
pub struct NetworkSet {
    pub config: NetConfig,
    pub store: ParamStore,
    panel: Vec<Linear>,
    relation: [Linear; 2],
    fuse: [Linear; 2],
    /// Weights on the squared line differences, summed into the first fuse layer.
    fuse_diff: ParamId,
    proj: [Linear; 2],
    rule: [Linear; 2],
    score: Linear,
}

/// Column-wise maximum over consecutive groups of rows.
struct GroupMax(usize);

impl GroupMax {
    fn argmax(&self, x: &Tensor) -> Vec<usize> {
        let d = x.cols();
        let rows = x.rows() / self.0;
        let data = x.data();
        let mut out = Vec::with_capacity(rows * d);
        for r in 0..rows {
            for c in 0..d {
                let best = (0..self.0)
                    .map(|k| (r * self.0 + k) * d + c)
                    .fold(None, |b: Option<usize>, i| match b {
                        Some(j) if data[j] >= data[i] => Some(j),
                        _ => Some(i),
                    })
                    .expect("nonempty group");
                out.push(best);
            }
        }
        out
    }
}

impl CustomOp for GroupMax {
    fn name(&self) -> &'static str {
        "group_max"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        if x.rows() % self.0 != 0 {
            return Err(Error::Shape(format!("group_max: {} rows, groups of {}", x.rows(), self.0)));
        }
        let data = x.data();
        let out = self.argmax(x).into_iter().map(|i| data[i]).collect();
        Tensor::new(vec![x.rows() / self.0, x.cols()], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let mut dx = vec![0.0; x.len()];
        for (g, i) in grad.data().iter().zip(self.argmax(x)) {
            dx[i] += g;
        }
        vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("sized"))]
    }
}

/// Column-wise mean over consecutive groups of rows.
struct GroupMean(usize);

impl CustomOp for GroupMean {
    fn name(&self) -> &'static str {
        "group_mean"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        if x.rows() % self.0 != 0 {
            return Err(Error::Shape(format!("group_mean: {} rows, groups of {}", x.rows(), self.0)));
        }
        let d = x.cols();
        let mut out = vec![0.0; x.rows() / self.0 * d];
        for (r, row) in x.data().chunks(d).enumerate() {
            for (o, v) in out[r / self.0 * d..][..d].iter_mut().zip(row) {
                *o += v / self.0 as f64;
            }
        }
        Tensor::new(vec![x.rows() / self.0, d], out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let d = x.cols();
        let g = grad.data();
        let dx = (0..x.len()).map(|i| g[i / d / self.0 * d + i % d] / self.0 as f64).collect();
        vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("sized"))]
    }
}

/// Triples of grid positions, rows then columns.
const LINES: [[usize; 3]; 6] = [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8]];

impl NetworkSet {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let pixels = usize::from(c.panel_size).pow(2);
        let panel = match c.encoder {
            EncoderKind::Mlp => vec![
                Linear::new(&mut store, &mut rng, "f.panel0", pixels, c.panel_hidden),
                Linear::new(&mut store, &mut rng, "f.panel1", c.panel_hidden, c.panel_dim),
            ],
            EncoderKind::Patch => {
                let k = c.patch_geom(1).kernel;
                vec![
                    Linear::new(&mut store, &mut rng, "f.patch0", k * k, c.patch_hidden),
                    Linear::new(&mut store, &mut rng, "f.patch1", c.patch_hidden, c.patch_dim),
                    Linear::new(&mut store, &mut rng, "f.panel_out", 9 * c.patch_dim, c.panel_dim),
                    Linear::new(&mut store, &mut rng, "f.panel_pool", c.patch_dim, c.panel_dim),
                    Linear::new(&mut store, &mut rng, "f.panel_mean", c.patch_dim, c.panel_dim),
                ]
            }
            EncoderKind::Conv => {
                let mut layers = Vec::new();
                for (i, geom) in c.conv_geoms(1).iter().enumerate() {
                    let fan_in = 9 * geom.channels;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let w: Vec<f64> = (0..fan_in * c.conv_channels).map(|_| rng.random_range(-bound..bound)).collect();
                    let w = store.add(format!("f.conv{i}.w"), Tensor::new(vec![fan_in, c.conv_channels], w).expect("sized"));
                    let b = store.add(format!("f.conv{i}.shift"), Tensor::zeros(&[c.conv_channels]));
                    // a bias before layer norm would cancel, so the learned shift sits after it
                    layers.push(Linear { w, b });
                }
                layers.push(Linear::new(&mut store, &mut rng, "f.panel_out", c.conv_out(), c.panel_dim));
                layers
            }
        };
        let relation = [
            Linear::new(&mut store, &mut rng, "f.rel0", 3, c.relation_hidden),
            Linear::new(&mut store, &mut rng, "f.rel1", c.relation_hidden, c.relation_features),
        ];
        let fuse = [
            Linear::new(&mut store, &mut rng, "f.fuse0", 4 * c.line_dim(), c.fuse_hidden),
            Linear::new(&mut store, &mut rng, "f.fuse1", c.fuse_hidden, c.feature_dim),
        ];
        let fuse_diff = {
            let fan_in = 4 * c.line_dim();
            let bound = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * c.fuse_hidden).map(|_| rng.random_range(-bound..bound)).collect();
            store.add("f.fuse_diff.w", Tensor::new(vec![fan_in, c.fuse_hidden], w).expect("sized"))
        };
        let proj = [
            Linear::new(&mut store, &mut rng, "g.0", c.feature_dim, c.proj_hidden),
            Linear::new(&mut store, &mut rng, "g.1", c.proj_hidden, c.proj_dim),
        ];
        let rule = [
            Linear::new(&mut store, &mut rng, "rho.0", 8 * c.feature_dim, c.rule_hidden),
            Linear::new(&mut store, &mut rng, "rho.1", c.rule_hidden, c.rule_dim),
        ];
        let score = Linear::new(&mut store, &mut rng, "s", c.feature_dim, 1);
        Self {
            config,
            store,
            panel,
            relation,
            fuse,
            fuse_diff,
            proj,
            rule,
            score,
        }
    }

    /// Parameters of the encoder `f`.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.panel.iter().flat_map(Linear::ids).collect();
        v.extend(self.relation.iter().flat_map(Linear::ids));
        v.extend(self.fuse.iter().flat_map(Linear::ids));
        v.push(self.fuse_diff);
        v
    }

    pub fn score_params(&self) -> [ParamId; 2] {
        self.score.ids()
    }

    /// FNV hash of the encoder weights.
    pub fn encoder_fingerprint(&self) -> u64 {
        let mut sub = ParamStore::new();
        for id in self.encoder_params() {
            sub.add(self.store.name(id), self.store.get(id).clone());
        }
        sub.fingerprint()
    }

    fn panel_embed(&self, g: &mut Graph, x: Var, panels: usize, frozen: bool) -> Result<Var> {
        let s = &self.store;
        match self.config.encoder {
            EncoderKind::Mlp => {
                let a = self.panel[0].apply(g, s, x, frozen)?;
                let a = g.relu(a);
                let b = self.panel[1].apply(g, s, a, frozen)?;
                Ok(g.relu(b))
            }
            EncoderKind::Patch => {
                let side = usize::from(self.config.panel_size);
                let x = g.reshape(x, &[panels, side, side, 1])?;
                let cols = g.im2col(x, self.config.patch_geom(panels))?;
                let a = self.panel[0].apply(g, s, cols, frozen)?;
                let a = g.relu(a);
                let b = self.panel[1].apply(g, s, a, frozen)?;
                let b = g.relu(b);
                let pooled = g.custom(&[b], Box::new(GroupMax(9)))?;
                let b = g.reshape(b, &[panels, 9 * self.config.patch_dim])?;
                let out = self.panel[2].apply(g, s, b, frozen)?;
                let pooled = self.panel[3].apply(g, s, pooled, frozen)?;
                let out = g.add(out, pooled)?;
                let mean = g.reshape(b, &[panels * 9, self.config.patch_dim])?;
                let mean = g.custom(&[mean], Box::new(GroupMean(9)))?;
                let mean = self.panel[4].apply(g, s, mean, frozen)?;
                let out = g.add(out, mean)?;
                Ok(g.relu(out))
            }
            EncoderKind::Conv => {
                let geoms = self.config.conv_geoms(panels);
                let side = usize::from(self.config.panel_size);
                let mut cur = g.reshape(x, &[panels, side, side, 1])?;
                for (layer, geom) in self.panel.iter().zip(&geoms) {
                    let cols = g.im2col(cur, *geom)?;
                    let w = if frozen { g.frozen_param(s, layer.w) } else { g.param(s, layer.w) };
                    let y = g.matmul(cols, w)?;
                    let y = g.layer_norm_rows(y)?;
                    let shift = if frozen { g.frozen_param(s, layer.b) } else { g.param(s, layer.b) };
                    let y = g.add_bias(y, shift)?;
                    let y = g.relu(y);
                    cur = g.reshape(y, &[panels, geom.out_height(), geom.out_width(), self.config.conv_channels])?;
                }
                let flat = g.reshape(cur, &[panels, self.config.conv_out()])?;
                let out = self.panel.last().expect("output layer").apply(g, s, flat, frozen)?;
                Ok(g.relu(out))
            }
        }
    }

    /// Encodes `n` instances given as `[n·16, S²]` pixel rows (context
    /// panels, then choices). Returns `h` as `[n·8, D]`, instance-major,
    /// candidates in choice order, unit rows.
    pub fn encode(&self, g: &mut Graph, pixels: Var, n: usize, frozen: bool) -> Result<Var> {
        let area = usize::from(self.config.panel_size).pow(2);
        if g.value(pixels).shape() != [n * 16, area] {
            return Err(Error::Shape(format!(
                "encoder expects [{}, {area}], got {:?}",
                n * 16,
                g.value(pixels).shape()
            )));
        }
        let e = self.panel_embed(g, pixels, n * 16, frozen)?;
        let width = self.config.panel_dim;
        // one row per (panel, channel) scalar
        let e = g.reshape(e, &[n * 16 * width, 1])?;
        // Lines are the 4 choice-independent ones, then the bottom row and
        // the right column for each of the 8 choices. Each line is split
        // into one 3-vector per embedding channel, and a single small
        // network relates the three values of every channel.
        let mut idx = Vec::with_capacity(n * 20 * width * 3);
        for i in 0..n {
            let panel = |pos: usize, choice: usize| i * 16 + if pos < 8 { pos } else { 8 + choice };
            let mut line_panels = Vec::with_capacity(20);
            for line in [LINES[0], LINES[1], LINES[3], LINES[4]] {
                line_panels.push(line.map(|p| panel(p, 0)));
            }
            for line in [LINES[2], LINES[5]] {
                for choice in 0..8 {
                    line_panels.push(line.map(|p| panel(p, choice)));
                }
            }
            for members in line_panels {
                for k in 0..width {
                    idx.extend(members.iter().map(|p| p * width + k));
                }
            }
        }
        let triples = g.gather_rows(e, idx)?;
        let triples = g.reshape(triples, &[n * 20 * width, 3])?;
        let s = &self.store;
        let r = self.relation[0].apply(g, s, triples, frozen)?;
        let r = g.relu(r);
        let r = self.relation[1].apply(g, s, r, frozen)?;
        let r = g.relu(r);
        let r = g.reshape(r, &[n * 20, self.config.line_dim()])?;
        let mut idx = Vec::with_capacity(n * 8 * 4);
        for i in 0..n {
            for _ in 0..8 {
                let base = i * 20;
                idx.extend([base, base + 1, base + 2, base + 3]);
            }
        }
        let lines = g.gather_rows(r, idx)?;
        let lines = g.reshape(lines, &[n * 8, 4 * self.config.line_dim()])?;
        // agreement of the completed row/column with the two context ones
        let (mut a, mut b) = (Vec::with_capacity(n * 32), Vec::with_capacity(n * 32));
        for i in 0..n {
            for choice in 0..8 {
                let base = i * 20;
                for (x, y) in [(4 + choice, 0), (4 + choice, 1), (12 + choice, 2), (12 + choice, 3)] {
                    a.push(base + x);
                    b.push(base + y);
                }
            }
        }
        let ra = g.gather_rows(r, a)?;
        let rb = g.gather_rows(r, b)?;
        let rb = g.scale(rb, -1.0);
        let d = g.add(ra, rb)?;
        let d = g.mul(d, d)?;
        let d = g.reshape(d, &[n * 8, 4 * self.config.line_dim()])?;
        let wd = if frozen { g.frozen_param(s, self.fuse_diff) } else { g.param(s, self.fuse_diff) };
        let ud = g.matmul(d, wd)?;
        let u = self.fuse[0].apply(g, s, lines, frozen)?;
        let u = g.add(u, ud)?;
        let u = g.relu(u);
        let h = self.fuse[1].apply(g, s, u, frozen)?;
        g.normalize_rows(h)
    }

    /// `z = normalize(g(h))` for rows of `h`.
    pub fn project(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let a = self.proj[0].apply(g, &self.store, h, false)?;
        let a = g.relu(a);
        let z = self.proj[1].apply(g, &self.store, a, false)?;
        g.normalize_rows(z)
    }

    /// Meta-target logits from the 8 candidate features of each instance;
    /// `h` is `[n·8, D]` in choice order.
    pub fn rule_logits(&self, g: &mut Graph, h: Var, n: usize) -> Result<Var> {
        let cat = g.reshape(h, &[n, 8 * self.config.feature_dim])?;
        let a = self.rule[0].apply(g, &self.store, cat, false)?;
        let a = g.relu(a);
        self.rule[1].apply(g, &self.store, a, false)
    }

    /// One score per row of `h`, reshaped to `[n, 8]`.
    pub fn scores(&self, g: &mut Graph, h: Var, n: usize, frozen: bool) -> Result<Var> {
        let s = self.score.apply(g, &self.store, h, frozen)?;
        g.reshape(s, &[n, 8])
    }
}

/// Pixel rows (`[n·16, S²]`, scaled to [0, 1]) for a list of instances.
pub fn panel_tensor(instances: &[&RpmInstance], panel_size: u16) -> Result<Tensor> {
    let area = usize::from(panel_size).pow(2);
    let mut data = Vec::with_capacity(instances.len() * 16 * area);
    for inst in instances {
        if inst.rasters.len() != 16 {
            return Err(Error::Shape(format!("instance has {} rasters, expected 16", inst.rasters.len())));
        }
        for r in &inst.rasters {
            if r.size() != panel_size {
                return Err(Error::Shape(format!("raster is {0}x{0}, network expects {panel_size}", r.size())));
            }
            data.extend(r.pixels().iter().map(|p| f64::from(*p) / 255.0));
        }
    }
    Tensor::new(vec![instances.len() * 16, area], data)
}

/// The 8 unit feature vectors of one instance's completions, in choice order.
pub fn encode_instance(net: &NetworkSet, instance: &RpmInstance) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let x = g.input(panel_tensor(&[instance], net.config.panel_size)?);
    let h = net.encode(&mut g, x, 1, true)?;
    let h = g.value(h);
    Ok((0..8).map(|i| h.row(i).to_vec()).collect())
}

/// Meta-target logits from 8 features given in choice order.
pub fn rule_head_predict(net: &NetworkSet, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    if features.len() != 8 {
        return Err(Error::Shape(format!("{} features, expected 8", features.len())));
    }
    let mut g = Graph::new();
    let h = g.input(Tensor::from_rows(features)?);
    if g.value(h).cols() != net.config.feature_dim {
        return Err(Error::Shape(format!("features of width {}, expected {}", g.value(h).cols(), net.config.feature_dim)));
    }
    let l = net.rule_logits(&mut g, h, 1)?;
    Ok(g.value(l).data().to_vec())
}
