//! Inference-time planning: incremental trajectory embedding with a per-layer
//! KV-cache over the committed fidelity prefix, batched suffix scoring under a
//! merged causal mask, candidate comparison, and the per-step decision loop.

use serde::{Deserialize, Serialize};

use crate::env::{observe, EnvGraph, Episode, NodeId, Observation};
use crate::error::{PretError, Result};
use crate::explore::{Candidate, ExploreGraph};
use crate::model::Model;
use crate::tensor::{sinusoidal_positions, AttentionMask, Graph, Scalar};

/// Per-episode cached instruction state: the encoded text and its
/// cross-attention keys/values projected once per trajectory-decoder layer.
pub struct TextMemory<T> {
    pub len: usize,
    pub d: usize,
    pub hidden: Vec<T>,
    pub layer_kv: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> TextMemory<T> {
    pub fn new(model: &Model<T>, tokens: &[u32]) -> Result<Self> {
        let mut g: Graph<T> = Graph::new();
        let hidden = model.encode_text(&mut g, tokens)?;
        let mut layer_kv = Vec::with_capacity(model.mam.len());
        for layer in &model.mam {
            let (k, v) = layer.project_memory(&mut g, &model.store, hidden)?;
            layer_kv.push((g.value(k).to_vec(), g.value(v).to_vec()));
        }
        Ok(Self {
            len: tokens.len(),
            d: model.d_model(),
            hidden: g.value(hidden).to_vec(),
            layer_kv,
        })
    }
}

/// Committed-prefix attention state: per trajectory-decoder layer, the
/// self-attention keys/values of every committed path token.
pub struct KvCache<T> {
    d: usize,
    committed: usize,
    layers: Vec<(Vec<T>, Vec<T>)>,
    pub text: TextMemory<T>,
    /// Cumulative matmul FLOPs of every forward run against this cache.
    pub flops: std::cell::Cell<u64>,
}

/// Raw per-layer key/value rows produced for uncommitted tokens.
struct SuffixKv<T> {
    per_layer: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> KvCache<T> {
    /// A fresh cache holds exactly the committed START token.
    pub fn new(model: &Model<T>, text: TextMemory<T>) -> Result<Self> {
        let mut cache = Self {
            d: model.d_model(),
            committed: 0,
            layers: vec![(Vec::new(), Vec::new()); model.mam.len()],
            text,
            flops: std::cell::Cell::new(0),
        };
        let start = model.store.get(model.start_token).data.clone();
        cache.commit(model, &start)?;
        Ok(cache)
    }

    pub fn committed_len(&self) -> usize {
        self.committed
    }

    /// Forward uncommitted suffixes against the cached prefix. Returns the
    /// terminal embedding of each suffix; the cache is not modified.
    pub fn embed_batch(&self, model: &Model<T>, suffixes: &[Vec<Vec<T>>]) -> Result<Vec<Vec<T>>> {
        Ok(self.forward_suffixes(model, suffixes)?.0)
    }

    /// Append one traversed edge token to the committed prefix.
    pub fn commit(&mut self, model: &Model<T>, token: &[T]) -> Result<()> {
        let (_, kv) = self.forward_suffixes(model, &[vec![token.to_vec()]])?;
        for (layer, (k, v)) in self.layers.iter_mut().zip(kv.per_layer) {
            layer.0.extend(k);
            layer.1.extend(v);
        }
        self.committed += 1;
        Ok(())
    }

    /// Drop committed tokens beyond `new_len` (backtracking pops the stack).
    pub fn truncate(&mut self, new_len: usize) -> Result<()> {
        if new_len < 1 || new_len > self.committed {
            return Err(PretError::Contract(format!(
                "cannot truncate cache of {} committed tokens to {new_len}",
                self.committed
            )));
        }
        for (k, v) in &mut self.layers {
            k.truncate(new_len * self.d);
            v.truncate(new_len * self.d);
        }
        self.committed = new_len;
        Ok(())
    }

    fn forward_suffixes(
        &self,
        model: &Model<T>,
        suffixes: &[Vec<Vec<T>>],
    ) -> Result<(Vec<Vec<T>>, SuffixKv<T>)> {
        if suffixes.is_empty() || suffixes.iter().any(|s| s.is_empty()) {
            return Err(PretError::Contract(
                "suffix batch must hold non-empty suffixes".into(),
            ));
        }
        if self.text.layer_kv.len() != model.mam.len() || self.text.d != self.d {
            return Err(PretError::Contract(
                "cached text memory does not match this model".into(),
            ));
        }
        let d = self.d;
        let lens: Vec<usize> = suffixes.iter().map(|s| s.len()).collect();
        let total: usize = lens.iter().sum();
        let max_pos = self.committed + lens.iter().max().unwrap();
        let table = sinusoidal_positions::<T>(max_pos, d)?;
        let mut data = Vec::with_capacity(total * d);
        for suffix in suffixes {
            for (off, tok) in suffix.iter().enumerate() {
                if tok.len() != d {
                    return Err(PretError::Shape(format!(
                        "suffix token of length {} with model dimension {d}",
                        tok.len()
                    )));
                }
                let pos = self.committed + off;
                data.extend(
                    tok.iter()
                        .zip(&table[pos * d..(pos + 1) * d])
                        .map(|(&a, &b)| a + b),
                );
            }
        }
        let mask = if self.committed == 0 {
            // only the initial START commit runs without a prefix
            if suffixes.len() != 1 {
                return Err(PretError::Contract(
                    "empty cache admits only the START commit".into(),
                ));
            }
            AttentionMask::causal(total)
        } else {
            AttentionMask::merged_suffix_rows(self.committed, &lens)?
        };
        let mut g: Graph<T> = Graph::new();
        let mut x = g.constant(data, total, d);
        let mut per_layer = Vec::with_capacity(model.mam.len());
        for (li, layer) in model.mam.iter().enumerate() {
            let cached = if self.committed == 0 {
                None
            } else {
                let (k, v) = &self.layers[li];
                Some((
                    g.constant(k.clone(), self.committed, d),
                    g.constant(v.clone(), self.committed, d),
                ))
            };
            let (tk, tv) = &self.text.layer_kv[li];
            let mem_kv = (
                g.constant(tk.clone(), self.text.len, d),
                g.constant(tv.clone(), self.text.len, d),
            );
            let out = layer.forward_cached(&mut g, &model.store, x, cached, mem_kv, &mask)?;
            per_layer.push((g.value(out.self_k).to_vec(), g.value(out.self_v).to_vec()));
            x = out.out;
        }
        self.flops.set(self.flops.get() + g.flops);
        let mut terminals = Vec::with_capacity(suffixes.len());
        let vals = g.value(x);
        let mut row = 0;
        for &l in &lens {
            row += l;
            terminals.push(vals[(row - 1) * d..row * d].to_vec());
        }
        Ok((terminals, SuffixKv { per_layer }))
    }
}

/// Uncached reference: embed `[START] ++ feats` (optionally `++ STOP`) from
/// scratch with a plain causal mask and return the terminal output.
pub fn mam_full_path<T: Scalar>(
    model: &Model<T>,
    text: &TextMemory<T>,
    feats: &[Vec<T>],
    with_stop: bool,
) -> Result<Vec<T>> {
    Ok(mam_full_path_counted(model, text, feats, with_stop)?.0)
}

/// As [`mam_full_path`], also returning the forward's matmul FLOPs.
pub fn mam_full_path_counted<T: Scalar>(
    model: &Model<T>,
    text: &TextMemory<T>,
    feats: &[Vec<T>],
    with_stop: bool,
) -> Result<(Vec<T>, u64)> {
    let d = model.d_model();
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(feats.len() + 2);
    rows.push(model.store.get(model.start_token).data.clone());
    rows.extend(feats.iter().cloned());
    if with_stop {
        rows.push(model.store.get(model.stop_token).data.clone());
    }
    let l = rows.len();
    let table = sinusoidal_positions::<T>(l, d)?;
    let mut data = Vec::with_capacity(l * d);
    for (pos, tok) in rows.iter().enumerate() {
        if tok.len() != d {
            return Err(PretError::Shape(format!(
                "path token of length {} with model dimension {d}",
                tok.len()
            )));
        }
        data.extend(
            tok.iter()
                .zip(&table[pos * d..(pos + 1) * d])
                .map(|(&a, &b)| a + b),
        );
    }
    let mut g: Graph<T> = Graph::new();
    let mut x = g.constant(data, l, d);
    let mask = AttentionMask::causal(l);
    for (li, layer) in model.mam.iter().enumerate() {
        let (tk, tv) = &text.layer_kv[li];
        let mem_kv = (
            g.constant(tk.clone(), text.len, d),
            g.constant(tv.clone(), text.len, d),
        );
        x = layer
            .forward_cached(&mut g, &model.store, x, None, mem_kv, &mask)?
            .out;
    }
    Ok((g.value(x)[(l - 1) * d..].to_vec(), g.flops))
}

/// Candidate comparison over concrete path embeddings: scores and softmax
/// probabilities, candidate order preserved.
pub fn ccm_select<T: Scalar>(model: &Model<T>, embeds: &[Vec<T>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if embeds.is_empty() {
        return Err(PretError::Contract("no candidates to compare".into()));
    }
    let d = model.d_model();
    let n = embeds.len();
    let mut data = Vec::with_capacity(n * d);
    for e in embeds {
        if e.len() != d {
            return Err(PretError::Shape(format!(
                "candidate embedding of length {} with model dimension {d}",
                e.len()
            )));
        }
        data.extend(e.iter().copied());
    }
    let mut g: Graph<T> = Graph::new();
    let x = g.constant(data, n, d);
    let logits = model.ccm_logits(&mut g, x)?;
    let probs = g.softmax_rows(logits);
    let scores: Vec<f64> = g.value(logits).iter().map(|v| v.to_f()).collect();
    let ps: Vec<f64> = g.value(probs).iter().map(|v| v.to_f()).collect();
    Ok((scores, ps))
}

/// Greedy choice with deterministic tie-breaking on the lowest index.
pub fn argmax_choice(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Serializable action for trace records: a node id or the stop action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceAction {
    Node { id: usize },
    Stop,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub node: usize,
    /// Candidate actions in scored order; last is always the stop action.
    pub candidates: Vec<TraceAction>,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub action: TraceAction,
    /// Node sequence of the executed macro-action route (empty on stop).
    pub route: Vec<usize>,
    /// Fidelity stack after the move.
    pub stack: Vec<usize>,
    pub forced_stop: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub steps: Vec<StepRecord>,
    /// Every node the agent occupied, hop by hop, starting at the start node.
    pub walk: Vec<NodeId>,
    pub forced_stop: bool,
}

impl EpisodeRun {
    pub fn final_node(&self) -> NodeId {
        *self.walk.last().unwrap()
    }
}

/// One in-flight episode: exploration graph, KV-cache, and pose.
pub struct Planner<'a, T: Scalar> {
    pub model: &'a Model<T>,
    pub env: &'a EnvGraph,
    pub graph: ExploreGraph<Vec<T>, Vec<T>>,
    pub cache: KvCache<T>,
    pub heading: f64,
    pub walk: Vec<NodeId>,
    stopped: bool,
}

impl<'a, T: Scalar> Planner<'a, T> {
    pub fn new(model: &'a Model<T>, env: &'a EnvGraph, episode: &Episode) -> Result<Self> {
        env.check_node(episode.start)?;
        let text = TextMemory::new(model, &episode.instruction)?;
        let cache = KvCache::new(model, text)?;
        Ok(Self {
            model,
            env,
            graph: ExploreGraph::new(episode.start),
            cache,
            heading: 0.0,
            walk: vec![episode.start],
            stopped: false,
        })
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    fn observe_here(&self) -> Result<Observation> {
        observe(
            self.env,
            self.graph.current(),
            self.heading,
            &self.model.cfg.view_params(),
        )
    }

    /// Observe, embed new frontiers plus the stop path, score candidates, and
    /// execute the chosen macro-action. `choose` maps (scores, probs) to a
    /// candidate index.
    pub fn step(
        &mut self,
        step_idx: usize,
        choose: impl FnOnce(&[f64], &[f64]) -> usize,
    ) -> Result<StepRecord> {
        if self.stopped {
            return Err(PretError::Contract("episode already stopped".into()));
        }
        let obs = self.observe_here()?;
        let mut g: Graph<T> = Graph::new();
        let feats = self.model.ope_edge_features(&mut g, &obs)?;
        let d = self.model.d_model();
        let vals = g.value(feats).to_vec();
        let rows: Vec<Vec<T>> = (0..obs.neighbors.len())
            .map(|i| vals[i * d..(i + 1) * d].to_vec())
            .collect();
        let fresh = self.graph.update(&obs, rows)?;

        // batch: one single-edge suffix per new frontier, stop suffix last
        let mut suffixes: Vec<Vec<Vec<T>>> = Vec::with_capacity(fresh.len() + 1);
        for &f in &fresh {
            let feat = self.graph.edge(self.graph.current(), f)?.feature.clone();
            suffixes.push(vec![feat]);
        }
        suffixes.push(vec![self.model.store.get(self.model.stop_token).data.clone()]);
        let mut embeds = self.cache.embed_batch(self.model, &suffixes)?;
        let stop_embed = embeds.pop().unwrap();
        for (&f, e) in fresh.iter().zip(embeds) {
            self.graph.set_embedding(f, e)?;
        }
        self.graph.set_stop_embedding(stop_embed);

        let candidates = self.graph.candidates()?;
        let cand_actions: Vec<TraceAction> = candidates
            .iter()
            .map(|(c, _)| match c {
                Candidate::Node(n) => TraceAction::Node { id: n.0 },
                Candidate::Stop => TraceAction::Stop,
            })
            .collect();
        let embeds: Vec<Vec<T>> = candidates.iter().map(|(_, e)| (*e).clone()).collect();
        let (scores, probs) = ccm_select(self.model, &embeds)?;
        let idx = choose(&scores, &probs);
        if idx >= candidates.len() {
            return Err(PretError::Contract(format!(
                "chosen index {idx} outside {} candidates",
                candidates.len()
            )));
        }
        let action = cand_actions[idx];
        let node_before = self.graph.current();

        let route = match action {
            TraceAction::Stop => {
                self.stopped = true;
                Vec::new()
            }
            TraceAction::Node { id } => {
                let route = self.graph.route(node_before, NodeId(id))?;
                self.execute_route(&route)?;
                route.iter().map(|n| n.0).collect()
            }
        };
        Ok(StepRecord {
            step: step_idx,
            node: node_before.0,
            candidates: cand_actions,
            scores,
            probs,
            action,
            route,
            stack: self.graph.stack().iter().map(|n| n.0).collect(),
            forced_stop: false,
        })
    }

    /// Walk a route hop by hop, mirroring every stack change in the cache.
    fn execute_route(&mut self, route: &[NodeId]) -> Result<()> {
        for w in route.windows(2) {
            let (from, to) = (w[0], w[1]);
            let before = self.graph.stack().len();
            self.graph.move_to(to)?;
            let after = self.graph.stack().len();
            if after == before + 1 {
                let feat = self.graph.edge(from, to)?.feature.clone();
                self.cache.commit(self.model, &feat)?;
            } else {
                self.cache.truncate(after)?;
            }
            debug_assert_eq!(self.cache.committed_len(), after);
            self.heading = self.env.bearing(from, to);
            self.walk.push(to);
        }
        Ok(())
    }

    /// Force the stop action (step budget exhausted).
    pub fn force_stop(&mut self, step_idx: usize) -> StepRecord {
        self.stopped = true;
        StepRecord {
            step: step_idx,
            node: self.graph.current().0,
            candidates: Vec::new(),
            scores: Vec::new(),
            probs: Vec::new(),
            action: TraceAction::Stop,
            route: Vec::new(),
            stack: self.graph.stack().iter().map(|n| n.0).collect(),
            forced_stop: true,
        }
    }
}

/// Action selection for full-episode runs.
pub enum Policy {
    Greedy,
    /// Uniformly random over candidates (baseline); seeded per episode.
    Uniform(u64),
}

/// Run an episode to termination under a step budget.
pub fn run_episode<T: Scalar>(
    model: &Model<T>,
    env: &EnvGraph,
    episode: &Episode,
    policy: &Policy,
    max_steps: usize,
) -> Result<EpisodeRun> {
    use rand::{Rng, SeedableRng};
    let mut rng = match policy {
        Policy::Uniform(seed) => Some(rand_chacha::ChaCha8Rng::seed_from_u64(*seed)),
        Policy::Greedy => None,
    };
    let mut planner = Planner::new(model, env, episode)?;
    let mut steps = Vec::new();
    let mut forced = false;
    for i in 0.. {
        if planner.stopped() {
            break;
        }
        if i >= max_steps {
            steps.push(planner.force_stop(i));
            forced = true;
            break;
        }
        let rec = planner.step(i, |scores, _| match &mut rng {
            Some(r) => r.gen_range(0..scores.len()),
            None => argmax_choice(scores),
        })?;
        steps.push(rec);
    }
    Ok(EpisodeRun {
        steps,
        walk: planner.walk,
        forced_stop: forced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::env::{generate_environment, sample_episode, GenParams, Vocab};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> Config {
        let mut c = Config::desk();
        c.model.d_model = 16;
        c.model.n_heads = 2;
        c.model.raw_dim = 8;
        c.model.k_headings = 6;
        c.model.text_layers = 1;
        c.model.ope_layers = 1;
        c.model.mam_layers = 2;
        c
    }

    fn setup() -> (Model<f32>, crate::env::EnvGraph, Episode) {
        let cfg = small_cfg();
        let model: Model<f32> = Model::new(&cfg, 5).unwrap();
        let env = generate_environment(3, &GenParams::default()).unwrap();
        let vocab = Vocab::navigation(cfg.env.landmark_count);
        let ep = sample_episode(&env, &vocab, 1, &cfg.episode_params()).unwrap();
        (model, env, ep)
    }

    fn rand_feat(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
        (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn embed_batch_matches_naive_full_path() {
        let (model, _env, ep) = setup();
        let d = model.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let text = TextMemory::new(&model, &ep.instruction).unwrap();
        let prefix: Vec<Vec<f32>> = (0..3).map(|_| rand_feat(&mut rng, d)).collect();
        let mut cache = KvCache::new(&model, TextMemory::new(&model, &ep.instruction).unwrap()).unwrap();
        for t in &prefix {
            cache.commit(&model, t).unwrap();
        }
        assert_eq!(cache.committed_len(), 4);

        let e1 = rand_feat(&mut rng, d);
        let e2 = rand_feat(&mut rng, d);
        let long: Vec<Vec<f32>> = (0..2).map(|_| rand_feat(&mut rng, d)).collect();
        let stop = model.store.get(model.stop_token).data.clone();
        let suffixes = vec![vec![e1.clone()], vec![e2.clone()], long.clone(), vec![stop]];
        let got = cache.embed_batch(&model, &suffixes).unwrap();
        assert_eq!(cache.committed_len(), 4); // unchanged

        let mut p1 = prefix.clone();
        p1.push(e1);
        let want1 = mam_full_path(&model, &text, &p1, false).unwrap();
        let mut p2 = prefix.clone();
        p2.push(e2);
        let want2 = mam_full_path(&model, &text, &p2, false).unwrap();
        let mut p3 = prefix.clone();
        p3.extend(long);
        let want3 = mam_full_path(&model, &text, &p3, false).unwrap();
        let want4 = mam_full_path(&model, &text, &prefix, true).unwrap();
        for (got, want) in got.iter().zip([want1, want2, want3, want4]) {
            let max: f32 = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max);
            assert!(max <= 1e-5, "max |delta| {max}");
        }
    }

    #[test]
    fn duplicate_suffixes_and_batch_of_one() {
        let (model, _env, ep) = setup();
        let d = model.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cache = KvCache::new(&model, TextMemory::new(&model, &ep.instruction).unwrap()).unwrap();
        let e = rand_feat(&mut rng, d);
        let batch = cache
            .embed_batch(&model, &[vec![e.clone()], vec![e.clone()]])
            .unwrap();
        assert_eq!(batch[0], batch[1]);
        let single = cache.embed_batch(&model, &[vec![e]]).unwrap();
        assert_eq!(batch[0], single[0]);
    }

    #[test]
    fn truncate_contract() {
        let (model, _env, ep) = setup();
        let d = model.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feats: Vec<Vec<f32>> = (0..4).map(|_| rand_feat(&mut rng, d)).collect();
        let probe = rand_feat(&mut rng, d);

        let mut cache = KvCache::new(&model, TextMemory::new(&model, &ep.instruction).unwrap()).unwrap();
        for t in &feats {
            cache.commit(&model, t).unwrap();
        }
        // no-op truncate
        let before = cache.embed_batch(&model, &[vec![probe.clone()]]).unwrap();
        cache.truncate(5).unwrap();
        let after = cache.embed_batch(&model, &[vec![probe.clone()]]).unwrap();
        assert_eq!(before, after);

        // truncate to 3 equals rebuild from the first two edges
        cache.truncate(3).unwrap();
        let got = cache.embed_batch(&model, &[vec![probe.clone()]]).unwrap();
        let mut rebuilt = KvCache::new(&model, TextMemory::new(&model, &ep.instruction).unwrap()).unwrap();
        for t in &feats[..2] {
            rebuilt.commit(&model, t).unwrap();
        }
        let want = rebuilt.embed_batch(&model, &[vec![probe.clone()]]).unwrap();
        let max: f32 = got[0]
            .iter()
            .zip(&want[0])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(max <= 1e-5, "max |delta| {max}");

        // truncate to 1 leaves only START
        cache.truncate(1).unwrap();
        let got = cache.embed_batch(&model, &[vec![probe.clone()]]).unwrap();
        let fresh = KvCache::new(&model, TextMemory::new(&model, &ep.instruction).unwrap()).unwrap();
        let want = fresh.embed_batch(&model, &[vec![probe]]).unwrap();
        assert_eq!(got, want);

        assert!(cache.truncate(0).is_err());
        assert!(cache.truncate(2).is_err());
    }

    #[test]
    fn ccm_select_properties() {
        let (model, _env, _ep) = setup();
        let d = model.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let one = vec![rand_feat(&mut rng, d)];
        let (_, p) = ccm_select(&model, &one).unwrap();
        assert_eq!(p, vec![1.0]);

        let embeds: Vec<Vec<f32>> = (0..4).map(|_| rand_feat(&mut rng, d)).collect();
        let (s, p) = ccm_select(&model, &embeds).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert_eq!(argmax_choice(&s), argmax_choice(&p));

        let mut rot = embeds.clone();
        rot.rotate_left(1);
        let (s2, _) = ccm_select(&model, &rot).unwrap();
        for i in 0..4 {
            assert!((s2[i] - s[(i + 1) % 4]).abs() < 1e-5);
        }

        // duplicated embeddings score equally
        let dup = vec![embeds[0].clone(), embeds[1].clone(), embeds[0].clone()];
        let (s3, _) = ccm_select(&model, &dup).unwrap();
        assert!((s3[0] - s3[2]).abs() < 1e-6);

        assert!(ccm_select(&model, &[]).is_err());
    }

    #[test]
    fn stop_at_first_step_gives_zero_length_walk() {
        let (model, env, ep) = setup();
        let mut planner = Planner::new(&model, &env, &ep).unwrap();
        let rec = planner
            .step(0, |s, _| s.len() - 1) // stop is always last
            .unwrap();
        assert_eq!(rec.action, TraceAction::Stop);
        assert!(planner.stopped());
        assert_eq!(planner.walk, vec![ep.start]);
    }

    #[test]
    fn greedy_run_is_deterministic_and_consistent() {
        let (model, env, ep) = setup();
        let a = run_episode(&model, &env, &ep, &Policy::Greedy, 8).unwrap();
        let b = run_episode(&model, &env, &ep, &Policy::Greedy, 8).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.walk, b.walk);
        // walk is start + every executed hop, contiguous in the environment
        assert_eq!(a.walk[0], ep.start);
        for w in a.walk.windows(2) {
            assert!(env.has_edge(w[0], w[1]));
        }
        // stack in each record matches duplicate-deletion of the walk so far
        let last = a.steps.last().unwrap();
        if !last.forced_stop {
            assert_eq!(last.action, TraceAction::Stop);
        }
    }

    #[test]
    fn cache_tracks_stack_through_backtracking() {
        let (model, env, ep) = setup();
        let mut planner = Planner::new(&model, &env, &ep).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..6 {
            if planner.stopped() {
                break;
            }
            // random non-stop actions force route execution and backtracking
            planner
                .step(i, |s, _| {
                    if s.len() == 1 {
                        0
                    } else {
                        rng.gen_range(0..s.len() - 1)
                    }
                })
                .unwrap();
            assert_eq!(planner.cache.committed_len(), planner.graph.stack().len());
        }
    }
}
