//! Model assembly: all parameter stacks built from a configuration, plus the
//! per-component forward passes that do not depend on planner state. Generic
//! over the scalar type so gradient checks can run at f64 while training runs
//! at f32.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::env::{Observation, PAD};
use crate::error::{PretError, Result};
use crate::tensor::{
    sinusoidal_positions, AttentionMask, DecoderLayer, EncoderLayer, Graph, Init, LayerNorm,
    Linear, ParamId, ParamStore, Scalar, TensorId,
};

pub struct Model<T: Scalar> {
    pub cfg: Config,
    pub store: ParamStore<T>,
    /// Orientation encoding weight, `[4, d]`: rows of
    /// `[sin h, cos h, sin e, cos e]` map to direction embeddings.
    pub orient_w: ParamId,
    /// Panorama view encoding weight, `[raw_dim + 4, d]`.
    pub pano_w: ParamId,
    /// Edge-feature decoder: direction queries cross-attend panorama views.
    pub ope: Vec<DecoderLayer>,
    pub text_embed: ParamId,
    pub text_layers: Vec<EncoderLayer>,
    pub text_ln: LayerNorm,
    /// Trajectory decoder over path tokens, cross-attending the instruction.
    pub mam: Vec<DecoderLayer>,
    /// Learned first path token.
    pub start_token: ParamId,
    /// Learned stop-action edge token, zero at initialization.
    pub stop_token: ParamId,
    /// Candidate comparison: optional cross-candidate encoder plus scoring MLP.
    pub ccm_enc: Vec<EncoderLayer>,
    pub ccm_l1: Linear,
    pub ccm_l2: Linear,
    /// Masked-token reconstruction head for pretraining.
    pub mlm: Vec<DecoderLayer>,
    pub mlm_proj: Linear,
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: &Config, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let m = &cfg.model;
        let d = m.d_model;
        let vocab = cfg.vocab_size();
        let mut store = ParamStore::new();
        let rng = &mut ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_64656c);
        let std = Init::TruncNormal(0.02);
        let orient_w = store.add(rng, "orient.w", 4, d, std);
        let pano_w = store.add(rng, "pano.w", m.raw_dim + 4, d, std);
        let ope = (0..m.ope_layers)
            .map(|i| DecoderLayer::init(&mut store, rng, &format!("ope.{i}"), d, m.n_heads))
            .collect();
        let text_embed = store.add(rng, "text.embed", vocab, d, std);
        let text_layers = (0..m.text_layers)
            .map(|i| EncoderLayer::init(&mut store, rng, &format!("text.{i}"), d, m.n_heads))
            .collect();
        let text_ln = LayerNorm::init(&mut store, rng, "text.ln_f", d);
        let mam = (0..m.mam_layers)
            .map(|i| DecoderLayer::init(&mut store, rng, &format!("mam.{i}"), d, m.n_heads))
            .collect();
        let start_token = store.add(rng, "mam.start", 1, d, std);
        let stop_token = store.add(rng, "mam.stop", 1, d, Init::Zeros);
        let ccm_enc = if m.ccm_independent {
            Vec::new()
        } else {
            (0..m.ccm_layers)
                .map(|i| EncoderLayer::init(&mut store, rng, &format!("ccm.{i}"), d, m.n_heads))
                .collect()
        };
        let ccm_l1 = Linear::init(&mut store, rng, "ccm.mlp1", d, d);
        let ccm_l2 = Linear::init(&mut store, rng, "ccm.mlp2", d, 1);
        let mlm = (0..2)
            .map(|i| DecoderLayer::init(&mut store, rng, &format!("mlm.{i}"), d, m.n_heads))
            .collect();
        let mlm_proj = Linear::init(&mut store, rng, "mlm.proj", d, vocab);
        Ok(Self {
            cfg: cfg.clone(),
            store,
            orient_w,
            pano_w,
            ope,
            text_embed,
            text_layers,
            text_ln,
            mam,
            start_token,
            stop_token,
            ccm_enc,
            ccm_l1,
            ccm_l2,
            mlm,
            mlm_proj,
        })
    }

    pub fn d_model(&self) -> usize {
        self.cfg.model.d_model
    }

    /// `[n, d]` direction embeddings from (heading, elevation) pairs.
    pub fn orientation_rows(
        &self,
        g: &mut Graph<T>,
        orientations: &[(f64, f64)],
    ) -> Result<TensorId> {
        if orientations.is_empty() {
            return Err(PretError::Shape("no orientations to encode".into()));
        }
        let mut data = Vec::with_capacity(orientations.len() * 4);
        for &(h, e) in orientations {
            data.extend([
                T::from_f(h.sin()),
                T::from_f(h.cos()),
                T::from_f(e.sin()),
                T::from_f(e.cos()),
            ]);
        }
        let x = g.constant(data, orientations.len(), 4);
        let w = g.param(&self.store, self.orient_w);
        g.matmul(x, w)
    }

    /// `[k, d]` panorama view embeddings: raw features concatenated with view
    /// orientation encodings, projected by one weight.
    pub fn pano_rows(&self, g: &mut Graph<T>, obs: &Observation) -> Result<TensorId> {
        let raw_dim = self.cfg.model.raw_dim;
        let k = obs.view_features.len();
        if k == 0 || obs.view_orientations.len() != k {
            return Err(PretError::Shape(format!(
                "observation holds {k} views but {} orientations",
                obs.view_orientations.len()
            )));
        }
        let mut data = Vec::with_capacity(k * (raw_dim + 4));
        for (feat, &(h, e)) in obs.view_features.iter().zip(&obs.view_orientations) {
            if feat.len() != raw_dim {
                return Err(PretError::Shape(format!(
                    "view feature of length {} with raw_dim {raw_dim}",
                    feat.len()
                )));
            }
            data.extend(feat.iter().map(|&v| T::from_f(v)));
            data.extend([
                T::from_f(h.sin()),
                T::from_f(h.cos()),
                T::from_f(e.sin()),
                T::from_f(e.cos()),
            ]);
        }
        let x = g.constant(data, k, raw_dim + 4);
        let w = g.param(&self.store, self.pano_w);
        g.matmul(x, w)
    }

    /// One `[n_neighbors, d]` edge feature per neighbor of the observed node,
    /// in observation order: direction queries self-attend as a set (no
    /// positions, full mask) and cross-attend the panorama in every layer.
    pub fn ope_edge_features(&self, g: &mut Graph<T>, obs: &Observation) -> Result<TensorId> {
        if obs.neighbors.is_empty() {
            return Err(PretError::Shape(format!(
                "node {} has no neighbors to embed",
                obs.node
            )));
        }
        let orients: Vec<(f64, f64)> = obs
            .neighbors
            .iter()
            .map(|n| (n.heading, n.elevation))
            .collect();
        let mut x = self.orientation_rows(g, &orients)?;
        let pano = self.pano_rows(g, obs)?;
        let n = orients.len();
        let mask = AttentionMask::all_true(n, n);
        for layer in &self.ope {
            x = layer.forward(g, &self.store, x, pano, &mask)?;
        }
        Ok(x)
    }

    /// `[l, d]` contextual token encodings. Padding tokens are visible only to
    /// themselves and never attended by content tokens.
    pub fn encode_text(&self, g: &mut Graph<T>, tokens: &[u32]) -> Result<TensorId> {
        let l = tokens.len();
        if l == 0 {
            return Err(PretError::Shape("empty instruction".into()));
        }
        let vocab = self.cfg.vocab_size();
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&t| t >= vocab) {
            return Err(PretError::Vocab(format!(
                "token id {bad} outside vocabulary of {vocab}"
            )));
        }
        let table = g.param(&self.store, self.text_embed);
        let emb = g.gather_rows(table, &ids)?;
        let pos = g.constant(sinusoidal_positions::<T>(l, self.d_model())?, l, self.d_model());
        let mut x = g.add(emb, pos);
        let mut mask = AttentionMask::all_true(l, l);
        for (c, &t) in tokens.iter().enumerate() {
            if t == PAD {
                for r in 0..l {
                    if r != c {
                        mask.set(r, c, false);
                    }
                }
            }
        }
        mask.validate()?;
        for layer in &self.text_layers {
            x = layer.forward(g, &self.store, x, &mask)?;
        }
        Ok(self.text_ln.forward(g, &self.store, x))
    }

    /// Candidate comparison: `[n, d]` path embeddings to `[1, n]` logits.
    pub fn ccm_logits(&self, g: &mut Graph<T>, candidates: TensorId) -> Result<TensorId> {
        let n = g.rows(candidates);
        if n == 0 {
            return Err(PretError::Shape("no candidates to score".into()));
        }
        let mut x = candidates;
        let mask = AttentionMask::all_true(n, n);
        for layer in &self.ccm_enc {
            x = layer.forward(g, &self.store, x, &mask)?;
        }
        let h = self.ccm_l1.forward(g, &self.store, x)?;
        let a = g.gelu(h);
        let scores = self.ccm_l2.forward(g, &self.store, a)?;
        Ok(g.transpose(scores))
    }

    /// Reconstruction logits `[l, vocab]`: contextual text states query the
    /// trajectory's edge features (bidirectional, no causal mask).
    pub fn mlm_logits(
        &self,
        g: &mut Graph<T>,
        text_hidden: TensorId,
        path_feats: TensorId,
    ) -> Result<TensorId> {
        let l = g.rows(text_hidden);
        let mask = AttentionMask::all_true(l, l);
        let mut x = text_hidden;
        for layer in &self.mlm {
            x = layer.forward(g, &self.store, x, path_feats, &mask)?;
        }
        self.mlm_proj.forward(g, &self.store, x)
    }
}
