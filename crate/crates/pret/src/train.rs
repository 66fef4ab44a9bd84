//! Imitation training: teacher and student rollouts inside one
//! differentiation graph per episode, pseudo labels for off-path states,
//! masked-token pretraining, and evaluation over episode sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::env::{generate_environment, observe, sample_episode, EnvGraph, Episode, NodeId, Vocab, MASK};
use crate::error::{PretError, Result};
use crate::explore::{Candidate, ExploreGraph};
use crate::metrics::{compute_metrics, Metrics, MetricsReport};
use crate::model::Model;
use crate::planner::{run_episode, Policy};
use crate::tensor::{
    sinusoidal_positions, AdamW, AttentionMask, Graph, ParamId, Scalar, TensorId,
};

/// Index of the stop action in a candidate list (always last).
fn stop_index(cands: &[Candidate]) -> Result<usize> {
    match cands.last() {
        Some(Candidate::Stop) => Ok(cands.len() - 1),
        _ => Err(PretError::Contract("candidate list lacks the stop action".into())),
    }
}

/// Ground-truth supervision: the next path node, or stop on the target. Only
/// defined while the agent stays on the ground-truth path.
pub fn teacher_index(cands: &[Candidate], current: NodeId, episode: &Episode) -> Result<usize> {
    if current == episode.target {
        return stop_index(cands);
    }
    let i = episode
        .gt_path
        .iter()
        .position(|&n| n == current)
        .ok_or_else(|| {
            PretError::Contract(format!("teacher undefined: {current} is off the path"))
        })?;
    let next = episode.gt_path[i + 1];
    cands
        .iter()
        .position(|c| *c == Candidate::Node(next))
        .ok_or_else(|| {
            PretError::Contract(format!("next path node {next} is not a candidate"))
        })
}

fn straight_dist(env: &EnvGraph, a: NodeId, b: NodeId) -> f64 {
    let (ca, cb) = (env.coord(a), env.coord(b));
    ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2) + (ca[2] - cb[2]).powi(2)).sqrt()
}

/// Heuristic supervision for off-path states: prefer the unvisited
/// ground-truth node nearest to the agent; failing that, the candidate
/// nearest to the shortest path toward the target; stop once the target is
/// visited and the agent stands within the success radius.
pub fn pseudo_index<F, E>(
    env: &EnvGraph,
    graph: &ExploreGraph<F, E>,
    cands: &[Candidate],
    episode: &Episode,
) -> Result<usize>
where
    F: Clone,
{
    let current = graph.current();
    if graph.is_visited(episode.target)
        && straight_dist(env, current, episode.target) < episode.success_radius
    {
        return stop_index(cands);
    }
    // unvisited ground-truth candidates, nearest by graph metric distance;
    // ties break to earliest path order, then lowest id
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for (ci, c) in cands.iter().enumerate() {
        let Candidate::Node(n) = c else { continue };
        let Some(gi) = episode.gt_path.iter().position(|&p| p == *n) else {
            continue;
        };
        let d = env.metric_dist(current, *n).unwrap_or(f64::INFINITY);
        let key = (d, gi, n.0, ci);
        if best.map_or(true, |b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
            best = Some(key);
        }
    }
    if let Some((_, _, _, ci)) = best {
        return Ok(ci);
    }
    // no unvisited ground-truth node: candidate nearest to the shortest path
    // from the current node to the target
    let sp = env
        .shortest_path_hops(current, episode.target)
        .ok_or_else(|| PretError::Routing {
            from: current.0,
            to: episode.target.0,
        })?;
    let mut best: Option<(f64, usize, usize)> = None;
    for (ci, c) in cands.iter().enumerate() {
        let Candidate::Node(n) = c else { continue };
        let d = sp
            .iter()
            .map(|&p| env.metric_dist(*n, p).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let key = (d, n.0, ci);
        if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
            best = Some(key);
        }
    }
    match best {
        Some((_, _, ci)) => Ok(ci),
        None => stop_index(cands),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Actions forced to ground truth, supervised by ground truth.
    Teacher,
    /// Actions sampled from the policy, supervised by pseudo labels.
    Student,
}

pub struct RolloutResult {
    /// Scalar mean cross-entropy over realized steps, inside the caller's graph.
    pub loss: TensorId,
    pub steps: usize,
    pub walk: Vec<NodeId>,
    /// Candidate-set size at each step.
    pub cand_counts: Vec<usize>,
}

/// Run one episode inside `g`, recomputing the trajectory decoder in full
/// each step (no KV-cache) so gradients reach every stored embedding.
pub fn rollout_loss<T: Scalar>(
    model: &Model<T>,
    env: &EnvGraph,
    episode: &Episode,
    mode: RolloutMode,
    max_steps: usize,
    g: &mut Graph<T>,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutResult> {
    let d = model.d_model();
    let store = &model.store;
    let text = model.encode_text(g, &episode.instruction)?;
    let mem_kv: Vec<(TensorId, TensorId)> = model
        .mam
        .iter()
        .map(|l| l.project_memory(g, store, text))
        .collect::<Result<_>>()?;
    let start_row = g.param(store, model.start_token);
    let stop_row = g.param(store, model.stop_token);

    let mut xg: ExploreGraph<TensorId, TensorId> = ExploreGraph::new(episode.start);
    let mut heading = 0.0;
    let mut walk = vec![episode.start];
    let mut losses = Vec::new();
    let mut cand_counts = Vec::new();

    for _step in 0..max_steps {
        let obs = observe(env, xg.current(), heading, &model.cfg.view_params())?;
        let feats = model.ope_edge_features(g, &obs)?;
        let rows: Vec<TensorId> = (0..obs.neighbors.len())
            .map(|i| g.slice_rows(feats, i, i + 1))
            .collect();
        let fresh = xg.update(&obs, rows)?;

        // full path forward: committed stack prefix plus one-token suffixes
        let prefix_feats: Vec<TensorId> = xg
            .stack_edges()?
            .iter()
            .map(|&(u, v)| Ok(xg.edge(u, v)?.feature))
            .collect::<Result<_>>()?;
        let plen = 1 + prefix_feats.len();
        let mut tokens = vec![start_row];
        tokens.extend(prefix_feats);
        for &f in &fresh {
            tokens.push(xg.edge(xg.current(), f)?.feature);
        }
        tokens.push(stop_row);
        let n_suf = fresh.len() + 1;
        let total = plen + n_suf;
        let x0 = g.concat_rows(&tokens);

        let table = sinusoidal_positions::<T>(plen + 1, d)?;
        let mut pos = Vec::with_capacity(total * d);
        for p in 0..plen {
            pos.extend_from_slice(&table[p * d..(p + 1) * d]);
        }
        for _ in 0..n_suf {
            pos.extend_from_slice(&table[plen * d..(plen + 1) * d]);
        }
        let posc = g.constant(pos, total, d);
        let mut x = g.add(x0, posc);

        let mask = AttentionMask::merged(plen, &vec![1; n_suf])?;
        for (li, layer) in model.mam.iter().enumerate() {
            x = layer
                .forward_cached(g, store, x, None, mem_kv[li], &mask)?
                .out;
        }
        for (j, &f) in fresh.iter().enumerate() {
            let e = g.slice_rows(x, plen + j, plen + j + 1);
            xg.set_embedding(f, e)?;
        }
        let stop_embed = g.slice_rows(x, total - 1, total);
        xg.set_stop_embedding(stop_embed);

        let cands = xg.candidates()?;
        let cand_actions: Vec<Candidate> = cands.iter().map(|(c, _)| *c).collect();
        let embed_ids: Vec<TensorId> = cands.iter().map(|(_, e)| **e).collect();
        let embed_mat = g.concat_rows(&embed_ids);
        let logits = model.ccm_logits(g, embed_mat)?;
        cand_counts.push(cand_actions.len());

        let label = match mode {
            RolloutMode::Teacher => teacher_index(&cand_actions, xg.current(), episode)?,
            RolloutMode::Student => pseudo_index(env, &xg, &cand_actions, episode)?,
        };
        losses.push(g.cross_entropy(logits, label)?);

        let action = match mode {
            RolloutMode::Teacher => label,
            RolloutMode::Student => {
                let lv: Vec<f64> = g.value(logits).iter().map(|v| v.to_f()).collect();
                let mx = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = lv.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = exps.iter().sum();
                let mut u = rng.gen_range(0.0..1.0) * z;
                let mut pick = exps.len() - 1;
                for (i, e) in exps.iter().enumerate() {
                    if u < *e {
                        pick = i;
                        break;
                    }
                    u -= e;
                }
                pick
            }
        };
        match cand_actions[action] {
            Candidate::Stop => break,
            Candidate::Node(node) => {
                let route = xg.route(xg.current(), node)?;
                for w in route.windows(2) {
                    xg.move_to(w[1])?;
                    heading = env.bearing(w[0], w[1]);
                    walk.push(w[1]);
                }
            }
        }
    }
    if losses.is_empty() {
        return Err(PretError::Contract("rollout produced no steps".into()));
    }
    let steps = losses.len();
    let stacked = g.concat_cols(&losses);
    let loss = g.mean_all(stacked);
    Ok(RolloutResult {
        loss,
        steps,
        walk,
        cand_counts,
    })
}

/// Mixed objective over one episode: `lambda * teacher + (1 - lambda) * student`.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    l_tf: TensorId,
    l_sf: TensorId,
    lambda: f64,
) -> Result<TensorId> {
    if !(0.0..1.0).contains(&lambda) || lambda == 0.0 {
        return Err(PretError::Config(format!(
            "lambda must lie strictly between 0 and 1, got {lambda}"
        )));
    }
    let a = g.scale(l_tf, lambda);
    let b = g.scale(l_sf, 1.0 - lambda);
    Ok(g.add(a, b))
}

fn scale_grads<T: Scalar>(model: &mut Model<T>, factor: f64) {
    let f = T::from_f(factor);
    for p in model.store.iter_mut() {
        if p.grad_set {
            for gi in &mut p.grad {
                *gi = *gi * f;
            }
        } else {
            // parameters untouched this batch still need a defined gradient
            p.grad_set = true;
        }
    }
}

/// Rescales gradients so the global norm is at most `clip`.
fn clip_grads<T: Scalar>(model: &mut Model<T>, clip: f64) {
    if !clip.is_finite() {
        return;
    }
    let mut sq = 0.0;
    for (_, p) in model.store.iter() {
        for gi in &p.grad {
            let g = gi.to_f();
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > clip {
        scale_grads(model, clip / norm);
    }
}

/// One optimization step of the mixed imitation objective over a batch of
/// episodes. Returns the mean episode loss.
pub fn finetune_step<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut AdamW,
    batch: &[(&EnvGraph, &Episode)],
    lambda: f64,
    max_steps: usize,
    clip: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(PretError::Contract("empty training batch".into()));
    }
    model.store.zero_grads();
    let mut sum = 0.0;
    for (env, ep) in batch {
        let mut g: Graph<T> = Graph::new();
        let tf = rollout_loss(model, env, ep, RolloutMode::Teacher, max_steps, &mut g, rng)?;
        let sf = rollout_loss(model, env, ep, RolloutMode::Student, max_steps, &mut g, rng)?;
        let loss = total_loss(&mut g, tf.loss, sf.loss, lambda)?;
        sum += g.value(loss)[0].to_f();
        g.backward(loss);
        g.accumulate_grads(&mut model.store);
    }
    scale_grads(model, 1.0 / batch.len() as f64);
    clip_grads(model, clip);
    opt.step(&mut model.store)?;
    Ok(sum / batch.len() as f64)
}

/// Edge features along the ground-truth path under teacher poses, `[l, d]`.
pub fn gt_path_features<T: Scalar>(
    model: &Model<T>,
    env: &EnvGraph,
    episode: &Episode,
    g: &mut Graph<T>,
) -> Result<TensorId> {
    let mut heading = 0.0;
    let mut rows = Vec::with_capacity(episode.gt_path.len() - 1);
    for w in episode.gt_path.windows(2) {
        let obs = observe(env, w[0], heading, &model.cfg.view_params())?;
        let feats = model.ope_edge_features(g, &obs)?;
        let i = obs
            .neighbors
            .iter()
            .position(|n| n.id == w[1])
            .ok_or_else(|| {
                PretError::Contract(format!("path step {} -> {} is not adjacent", w[0], w[1]))
            })?;
        rows.push(g.slice_rows(feats, i, i + 1));
        heading = env.bearing(w[0], w[1]);
    }
    Ok(g.concat_rows(&rows))
}

/// One masked-token pretraining step over a batch. Masks `ceil(ratio * L)`
/// positions per instruction and reconstructs them from the text context plus
/// the ground-truth trajectory's edge features.
pub fn mlm_pretrain_step<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut AdamW,
    batch: &[(&EnvGraph, &Episode)],
    mask_ratio: f64,
    clip: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(PretError::Contract("empty pretraining batch".into()));
    }
    model.store.zero_grads();
    let mut sum = 0.0;
    let mut used = 0;
    for (env, ep) in batch {
        let l = ep.instruction.len();
        if l == 0 {
            continue;
        }
        let n_mask = ((mask_ratio * l as f64).ceil() as usize).min(l);
        if n_mask == 0 {
            continue;
        }
        let picked = rand::seq::index::sample(rng, l, n_mask).into_vec();
        let mut masked = ep.instruction.clone();
        for &p in &picked {
            masked[p] = MASK;
        }
        let targets: Vec<usize> = picked.iter().map(|&p| ep.instruction[p] as usize).collect();

        let mut g: Graph<T> = Graph::new();
        let hidden = model.encode_text(&mut g, &masked)?;
        let path = gt_path_features(model, env, ep, &mut g)?;
        let logits = model.mlm_logits(&mut g, hidden, path)?;
        let picked_logits = g.gather_rows(logits, &picked)?;
        let loss = g.cross_entropy_mean(picked_logits, &targets)?;
        sum += g.value(loss)[0].to_f();
        used += 1;
        g.backward(loss);
        g.accumulate_grads(&mut model.store);
    }
    if used == 0 {
        return Ok(0.0);
    }
    scale_grads(model, 1.0 / used as f64);
    clip_grads(model, clip);
    opt.step(&mut model.store)?;
    Ok(sum / used as f64)
}

/// Environments plus episodes for one training or evaluation split.
pub struct Corpus {
    pub envs: Vec<EnvGraph>,
    /// (environment index, episode) in presentation order.
    pub episodes: Vec<(usize, Episode)>,
}

impl Corpus {
    pub fn pairs(&self) -> Vec<(&EnvGraph, &Episode)> {
        self.episodes
            .iter()
            .map(|(i, e)| (&self.envs[*i], e))
            .collect()
    }
}

/// Deterministic split: `n_envs` environments seeded from `seed` onward and
/// `n_episodes` episodes assigned round-robin across them.
pub fn build_corpus(cfg: &Config, seed: u64, n_envs: usize, n_episodes: usize) -> Result<Corpus> {
    if n_envs == 0 || n_episodes == 0 {
        return Err(PretError::Config("corpus needs environments and episodes".into()));
    }
    let vocab = Vocab::navigation(cfg.env.landmark_count);
    let gen = cfg.gen_params();
    let ep_params = cfg.episode_params();
    let envs: Vec<EnvGraph> = (0..n_envs)
        .map(|i| generate_environment(seed + i as u64, &gen))
        .collect::<Result<_>>()?;
    let episodes = (0..n_episodes)
        .map(|k| {
            let i = k % n_envs;
            let ep = sample_episode(&envs[i], &vocab, seed + 10_000 + k as u64, &ep_params)?;
            Ok((i, ep))
        })
        .collect::<Result<_>>()?;
    Ok(Corpus { envs, episodes })
}

/// Masked-token pretraining over a corpus for a fixed number of optimizer
/// steps. `on_step` receives (step, mean loss); returns the loss series.
pub fn pretrain_model<T: Scalar>(
    model: &mut Model<T>,
    corpus: &Corpus,
    cfg: &Config,
    seed: u64,
    steps: usize,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    let pairs = corpus.pairs();
    let mut opt = AdamW::new(cfg.train.lr, cfg.train.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6c_6d00);
    let b = cfg.train.batch.max(1);
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch: Vec<_> = (0..b).map(|j| pairs[(step * b + j) % pairs.len()]).collect();
        let l = mlm_pretrain_step(
            model,
            &mut opt,
            &batch,
            cfg.train.mask_ratio,
            cfg.train.clip,
            &mut rng,
        )?;
        on_step(step, l);
        losses.push(l);
    }
    Ok(losses)
}

/// One pass of mixed imitation training over a corpus in batches. `on_step`
/// receives (step, mean batch loss); returns the loss series.
pub fn train_model<T: Scalar>(
    model: &mut Model<T>,
    corpus: &Corpus,
    cfg: &Config,
    seed: u64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    let pairs = corpus.pairs();
    let mut opt = AdamW::new(cfg.train.lr, cfg.train.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_6e00);
    let b = cfg.train.batch.max(1);
    let mut losses = Vec::new();
    for (step, chunk) in pairs.chunks(b).enumerate() {
        let l = finetune_step(
            model,
            &mut opt,
            chunk,
            cfg.train.lambda,
            cfg.train.max_steps,
            cfg.train.clip,
            &mut rng,
        )?;
        on_step(step, l);
        losses.push(l);
    }
    Ok(losses)
}

/// Trains for `cfg.train.epochs` passes over the corpus, evaluating greedily
/// on `val` after each pass and keeping the weights of the best epoch by SPL.
/// `on_epoch` receives (epoch, mean loss, validation report); returns the
/// validation report of the selected epoch.
pub fn train_with_selection<T: Scalar>(
    model: &mut Model<T>,
    corpus: &Corpus,
    val: &Corpus,
    cfg: &Config,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &MetricsReport),
) -> Result<MetricsReport> {
    let val_pairs = val.pairs();
    let mut best: Option<(MetricsReport, Vec<(ParamId, Vec<T>)>)> = None;
    for epoch in 0..cfg.train.epochs.max(1) {
        let losses = train_model(model, corpus, cfg, seed + epoch as u64, |_, _| {})?;
        let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        let (report, _) = evaluate(model, &val_pairs, &Policy::Greedy, cfg.train.max_steps)?;
        on_epoch(epoch, mean, &report);
        if best.as_ref().map_or(true, |(b, _)| report.spl > b.spl) {
            let snap = model
                .store
                .iter()
                .map(|(pid, p)| (pid, p.data.clone()))
                .collect();
            best = Some((report, snap));
        }
    }
    let (report, snap) = best.expect("at least one epoch");
    for (pid, data) in snap {
        model.store.get_mut(pid).data = data;
    }
    Ok(report)
}

/// Greedy (or baseline-policy) evaluation over an episode set.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    pairs: &[(&EnvGraph, &Episode)],
    policy: &Policy,
    max_steps: usize,
) -> Result<(MetricsReport, Vec<Metrics>)> {
    if pairs.is_empty() {
        return Err(PretError::Contract("empty evaluation set".into()));
    }
    let mut per = Vec::with_capacity(pairs.len());
    for (env, ep) in pairs {
        let run = run_episode(model, env, ep, policy, max_steps)?;
        per.push(compute_metrics(env, &run.walk, ep)?);
    }
    Ok((MetricsReport::aggregate(&per)?, per))
}
