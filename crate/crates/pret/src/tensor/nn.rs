//! Parameter storage and transformer building blocks (pre-norm, GELU).

use rand::Rng;

use crate::error::{PretError, Result};

use super::graph::{attention, Graph, TensorId};
use super::mask::AttentionMask;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub grad: Vec<T>,
    pub grad_set: bool,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn dims2(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Truncated normal (resample beyond two standard deviations).
    TruncNormal(f64),
    Zeros,
    Ones,
}

/// Named parameter tensors with gradient and optimizer-moment buffers.
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add<R: Rng>(
        &mut self,
        rng: &mut R,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
    ) -> ParamId {
        let n = rows * cols;
        let data: Vec<T> = match init {
            Init::TruncNormal(std) => (0..n).map(|_| T::from_f(trunc_normal(rng, std))).collect(),
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
        };
        self.params.push(Param {
            name: name.to_string(),
            rows,
            cols,
            data,
            grad: vec![T::zero(); n],
            grad_set: false,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, pid: ParamId) -> &Param<T> {
        &self.params[pid.0]
    }

    pub fn get_mut(&mut self, pid: ParamId) -> &mut Param<T> {
        &mut self.params[pid.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub fn add_grad(&mut self, pid: ParamId, g: &[T]) {
        let p = &mut self.params[pid.0];
        debug_assert_eq!(g.len(), p.grad.len());
        for (gi, &d) in p.grad.iter_mut().zip(g) {
            *gi = *gi + d;
        }
        p.grad_set = true;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
            p.grad_set = false;
        }
    }
}

fn trunc_normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    loop {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Standard interleaved sine/cosine position table, `[l, d]`.
pub fn sinusoidal_positions<T: Scalar>(l: usize, d: usize) -> Result<Vec<T>> {
    if d % 2 != 0 {
        return Err(PretError::Config(format!(
            "sinusoidal positions need an even dimension, got {}",
            d
        )));
    }
    let mut out = Vec::with_capacity(l * d);
    for pos in 0..l {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = pos as f64 * freq;
            out.push(T::from_f(angle.sin()));
            out.push(T::from_f(angle.cos()));
        }
    }
    Ok(out)
}

/// Position row `pos` of the sinusoidal table, as a `[1, d]` constant.
pub fn position_row<T: Scalar>(g: &mut Graph<T>, pos: usize, d: usize) -> Result<TensorId> {
    let table = sinusoidal_positions::<T>(pos + 1, d)?;
    Ok(g.constant(table[pos * d..].to_vec(), 1, d))
}

pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        let w = store.add(rng, &format!("{name}.w"), d_in, d_out, Init::TruncNormal(0.02));
        let b = store.add(rng, &format!("{name}.b"), 1, d_out, Init::Zeros);
        Self { w, b: Some(b) }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
    ) -> Result<TensorId> {
        let w = g.param(store, self.w);
        let y = g.matmul(x, w)?;
        Ok(match self.b {
            Some(b) => {
                let bt = g.param(store, b);
                g.add_row(y, bt)
            }
            None => y,
        })
    }
}

pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d: usize,
    ) -> Self {
        let gamma = store.add(rng, &format!("{name}.gamma"), 1, d, Init::Ones);
        let beta = store.add(rng, &format!("{name}.beta"), 1, d, Init::Zeros);
        Self { gamma, beta }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
    ) -> TensorId {
        let n = g.normalize(x);
        let gm = g.param(store, self.gamma);
        let bt = g.param(store, self.beta);
        let scaled = g.mul_row(n, gm);
        g.add_row(scaled, bt)
    }
}

pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d: usize,
        heads: usize,
    ) -> Self {
        Self {
            wq: Linear::init(store, rng, &format!("{name}.q"), d, d),
            wk: Linear::init(store, rng, &format!("{name}.k"), d, d),
            wv: Linear::init(store, rng, &format!("{name}.v"), d, d),
            wo: Linear::init(store, rng, &format!("{name}.o"), d, d),
            heads,
        }
    }

    /// Project keys/values for the key-value input. The projected pair is
    /// what the planner's KV-cache stores per layer.
    pub fn project_kv<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x_kv: TensorId,
    ) -> Result<(TensorId, TensorId)> {
        Ok((self.wk.forward(g, store, x_kv)?, self.wv.forward(g, store, x_kv)?))
    }

    /// Attention with pre-projected keys/values.
    pub fn forward_projected<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x_q: TensorId,
        k: TensorId,
        v: TensorId,
        mask: &AttentionMask,
    ) -> Result<TensorId> {
        let q = self.wq.forward(g, store, x_q)?;
        let o = attention(g, q, k, v, mask, self.heads)?;
        self.wo.forward(g, store, o)
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x_q: TensorId,
        x_kv: TensorId,
        mask: &AttentionMask,
    ) -> Result<TensorId> {
        let (k, v) = self.project_kv(g, store, x_kv)?;
        self.forward_projected(g, store, x_q, k, v, mask)
    }
}

pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d: usize,
        hidden: usize,
    ) -> Self {
        Self {
            l1: Linear::init(store, rng, &format!("{name}.ff1"), d, hidden),
            l2: Linear::init(store, rng, &format!("{name}.ff2"), hidden, d),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
    ) -> Result<TensorId> {
        let h = self.l1.forward(g, store, x)?;
        let a = g.gelu(h);
        self.l2.forward(g, store, a)
    }
}

/// Pre-norm transformer encoder layer.
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d: usize,
        heads: usize,
    ) -> Self {
        Self {
            ln1: LayerNorm::init(store, rng, &format!("{name}.ln1"), d),
            attn: MultiHeadAttention::init(store, rng, &format!("{name}.attn"), d, heads),
            ln2: LayerNorm::init(store, rng, &format!("{name}.ln2"), d),
            ff: FeedForward::init(store, rng, &format!("{name}.ff"), d, 4 * d),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
        mask: &AttentionMask,
    ) -> Result<TensorId> {
        let n1 = self.ln1.forward(g, store, x);
        let a = self.attn.forward(g, store, n1, n1, mask)?;
        let h = g.add(x, a);
        let n2 = self.ln2.forward(g, store, h);
        let f = self.ff.forward(g, store, n2)?;
        Ok(g.add(h, f))
    }
}

/// Output of a cached decoder-layer forward: the layer output for the new
/// tokens plus their projected self-attention keys/values (candidates for
/// cache commit).
pub struct DecoderLayerOut {
    pub out: TensorId,
    pub self_k: TensorId,
    pub self_v: TensorId,
}

/// Pre-norm transformer decoder layer: masked self-attention, cross-attention
/// over a memory sequence in every layer, feed-forward.
pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln3: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        d: usize,
        heads: usize,
    ) -> Self {
        Self {
            ln1: LayerNorm::init(store, rng, &format!("{name}.ln1"), d),
            self_attn: MultiHeadAttention::init(store, rng, &format!("{name}.self"), d, heads),
            ln2: LayerNorm::init(store, rng, &format!("{name}.ln2"), d),
            cross_attn: MultiHeadAttention::init(store, rng, &format!("{name}.cross"), d, heads),
            ln3: LayerNorm::init(store, rng, &format!("{name}.ln3"), d),
            ff: FeedForward::init(store, rng, &format!("{name}.ff"), d, 4 * d),
        }
    }

    /// Project the cross-attention memory once (per layer); reusable across
    /// calls within an episode.
    pub fn project_memory<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        memory: TensorId,
    ) -> Result<(TensorId, TensorId)> {
        self.cross_attn.project_kv(g, store, memory)
    }

    /// Forward over new tokens `x` with an optional cached self-attention
    /// prefix. `self_mask` must have `rows(x)` rows and
    /// `prefix_len + rows(x)` columns. `memory_kv` are this layer's
    /// pre-projected cross-attention keys/values.
    pub fn forward_cached<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
        cached_kv: Option<(TensorId, TensorId)>,
        memory_kv: (TensorId, TensorId),
        self_mask: &AttentionMask,
    ) -> Result<DecoderLayerOut> {
        let s = g.rows(x);
        let prefix_len = match cached_kv {
            Some((ck, _)) => {
                let d = g.cols(x);
                if g.cols(ck) != d {
                    return Err(PretError::Cache(format!(
                        "cached key dim {} does not match token dim {}",
                        g.cols(ck),
                        d
                    )));
                }
                g.rows(ck)
            }
            None => 0,
        };
        if self_mask.rows != s || self_mask.cols != prefix_len + s {
            return Err(PretError::Cache(format!(
                "self mask {}x{} does not match {} new tokens over prefix {}",
                self_mask.rows, self_mask.cols, s, prefix_len
            )));
        }
        let n1 = self.ln1.forward(g, store, x);
        let (k_new, v_new) = self.self_attn.project_kv(g, store, n1)?;
        let (k_full, v_full) = match cached_kv {
            Some((ck, cv)) => (g.concat_rows(&[ck, k_new]), g.concat_rows(&[cv, v_new])),
            None => (k_new, v_new),
        };
        let a = self
            .self_attn
            .forward_projected(g, store, n1, k_full, v_full, self_mask)?;
        let h = g.add(x, a);
        let n2 = self.ln2.forward(g, store, h);
        let mem_len = g.rows(memory_kv.0);
        let cross_mask = AttentionMask::all_true(s, mem_len);
        let c = self
            .cross_attn
            .forward_projected(g, store, n2, memory_kv.0, memory_kv.1, &cross_mask)?;
        let h2 = g.add(h, c);
        let n3 = self.ln3.forward(g, store, h2);
        let f = self.ff.forward(g, store, n3)?;
        let out = g.add(h2, f);
        Ok(DecoderLayerOut {
            out,
            self_k: k_new,
            self_v: v_new,
        })
    }

    /// Cacheless forward over a full sequence.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: TensorId,
        memory: TensorId,
        self_mask: &AttentionMask,
    ) -> Result<TensorId> {
        let memory_kv = self.project_memory(g, store, memory)?;
        Ok(self
            .forward_cached(g, store, x, None, memory_kv, self_mask)?
            .out)
    }
}
