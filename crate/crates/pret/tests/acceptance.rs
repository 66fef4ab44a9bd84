//! End-to-end property suite. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pret::bench::{self, FlopsScenario};
use pret::config::Config;
use pret::env::{generate_environment, observe, sample_episode, EnvGraph, NodeId, Vocab};
use pret::explore::ExploreGraph;
use pret::metrics::{compute_metrics, dtw};
use pret::model::Model;
use pret::planner::{mam_full_path, run_episode, KvCache, Planner, Policy, TextMemory};
use pret::tensor::Graph;
use pret::trace::write_trace;
use pret::train::{
    build_corpus, evaluate, gt_path_features, pretrain_model, rollout_loss, train_model,
    train_with_selection,
    RolloutMode,
};

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

fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0.0, f64::max)
}

// --- criterion 1: cached vs naive embedding equivalence at mid-episode states

fn equivalence_suite() -> Result<String, String> {
    let cfg = Config::desk();
    let model: Model<f32> = Model::new(&cfg, 7).map_err(|e| e.to_string())?;
    let vocab = Vocab::navigation(cfg.env.landmark_count);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let d = model.d_model();
    for i in 0..50u64 {
        let env = generate_environment(300 + i / 5, &cfg.gen_params()).map_err(|e| e.to_string())?;
        let ep = sample_episode(&env, &vocab, i, &cfg.episode_params()).map_err(|e| e.to_string())?;
        let mut planner = Planner::new(&model, &env, &ep).map_err(|e| e.to_string())?;
        let k = rng.gen_range(0..4);
        for s in 0..k {
            if planner.stopped() {
                break;
            }
            // random non-stop action so the episode keeps running
            let r: usize = rng.gen();
            planner
                .step(s, |scores, _| {
                    if scores.len() > 1 {
                        r % (scores.len() - 1)
                    } else {
                        0
                    }
                })
                .map_err(|e| e.to_string())?;
        }
        if planner.stopped() {
            continue;
        }
        let stack_feats: Vec<Vec<f32>> = planner
            .graph
            .stack_edges()
            .map_err(|e| e.to_string())?
            .iter()
            .map(|&(u, v)| planner.graph.edge(u, v).unwrap().feature.clone())
            .collect();
        // random suffix batch, lengths 1-2, plus the stop suffix
        let n_suf = rng.gen_range(1..=3);
        let mut suffixes: Vec<Vec<Vec<f32>>> = (0..n_suf)
            .map(|_| {
                (0..rng.gen_range(1..=2usize))
                    .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0f32)).collect())
                    .collect()
            })
            .collect();
        suffixes.push(vec![model.store.get(model.stop_token).data.clone()]);
        let cached = planner
            .cache
            .embed_batch(&model, &suffixes)
            .map_err(|e| e.to_string())?;
        for (j, suffix) in suffixes.iter().enumerate() {
            let naive = if j + 1 == suffixes.len() {
                mam_full_path(&model, &planner.cache.text, &stack_feats, true)
            } else {
                let mut feats = stack_feats.clone();
                feats.extend(suffix.iter().cloned());
                mam_full_path(&model, &planner.cache.text, &feats, false)
            }
            .map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(&cached[j], &naive));
        }
    }
    if worst <= 1e-5 {
        Ok(format!("max |delta| {worst:.2e} over 50 episodes"))
    } else {
        Err(format!("max |delta| {worst:.2e} exceeds 1e-5"))
    }
}

// --- criterion 2: commit/truncate scripts match full rebuilds

fn cache_lifecycle() -> Result<String, String> {
    let cfg = small_cfg();
    let model: Model<f32> = Model::new(&cfg, 8).map_err(|e| e.to_string())?;
    let d = model.d_model();
    let vocab = Vocab::navigation(cfg.env.landmark_count);
    let instr: Vec<u32> = (0..10).map(|i| (i % vocab.len() as u32).max(4)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _script in 0..200 {
        let text = TextMemory::new(&model, &instr).map_err(|e| e.to_string())?;
        let mut cache = KvCache::new(&model, text).map_err(|e| e.to_string())?;
        let mut tokens: Vec<Vec<f32>> = Vec::new();
        for _op in 0..rng.gen_range(3..12) {
            if tokens.is_empty() || rng.gen_bool(0.65) {
                let tok: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                cache.commit(&model, &tok).map_err(|e| e.to_string())?;
                tokens.push(tok);
            } else {
                let keep = rng.gen_range(0..tokens.len());
                tokens.truncate(keep);
                cache.truncate(1 + keep).map_err(|e| e.to_string())?;
            }
        }
        let text2 = TextMemory::new(&model, &instr).map_err(|e| e.to_string())?;
        let mut rebuilt = KvCache::new(&model, text2).map_err(|e| e.to_string())?;
        for tok in &tokens {
            rebuilt.commit(&model, tok).map_err(|e| e.to_string())?;
        }
        assert_eq!(cache.committed_len(), rebuilt.committed_len());
        let probe: Vec<Vec<Vec<f32>>> =
            vec![vec![(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()]];
        let a = cache.embed_batch(&model, &probe).map_err(|e| e.to_string())?;
        let b = rebuilt.embed_batch(&model, &probe).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&a[0], &b[0]));
    }
    if worst <= 1e-5 {
        Ok(format!("max |delta| {worst:.2e} over 200 scripts"))
    } else {
        Err(format!("max |delta| {worst:.2e} exceeds 1e-5"))
    }
}

// --- criterion 3: central finite differences per learned block

fn gradient_checks() -> Result<String, String> {
    let cfg = small_cfg();
    let mut model: Model<f64> = Model::new(&cfg, 9).map_err(|e| e.to_string())?;
    let env = generate_environment(3, &cfg.gen_params()).map_err(|e| e.to_string())?;
    let vocab = Vocab::navigation(cfg.env.landmark_count);
    let ep = sample_episode(&env, &vocab, 1, &cfg.episode_params()).map_err(|e| e.to_string())?;
    let picked: Vec<usize> = vec![0, 2];
    let targets: Vec<usize> = picked.iter().map(|&p| ep.instruction[p] as usize).collect();

    // scalar loss touching every block: teacher rollout (orientation, panorama,
    // OPE, text, MAM, CCM) plus a masked-token reconstruction (MLM head)
    let build = |model: &Model<f64>| {
        let mut g: Graph<f64> = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = rollout_loss(model, &env, &ep, RolloutMode::Teacher, 12, &mut g, &mut rng).unwrap();
        let hidden = model.encode_text(&mut g, &ep.instruction).unwrap();
        let path = gt_path_features(model, &env, &ep, &mut g).unwrap();
        let logits = model.mlm_logits(&mut g, hidden, path).unwrap();
        let pl = g.gather_rows(logits, &picked).unwrap();
        let ml = g.cross_entropy_mean(pl, &targets).unwrap();
        let loss = g.add(r.loss, ml);
        (g, loss)
    };

    model.store.zero_grads();
    let (mut g, loss) = build(&model);
    g.backward(loss);
    g.accumulate_grads(&mut model.store);
    let grads: Vec<(String, Vec<f64>)> = model
        .store
        .iter()
        .map(|(_, p)| (p.name.clone(), p.grad.clone()))
        .collect();

    let blocks = [
        ("orientation projection", "orient."),
        ("panorama projection", "pano."),
        ("OPE", "ope."),
        ("text encoder", "text."),
        ("MAM", "mam."),
        ("CCM", "ccm."),
        ("MLM head", "mlm."),
    ];
    let h = 1e-5;
    let tol = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut summary = String::new();
    for (label, prefix) in blocks {
        let pids: Vec<_> = model
            .store
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(pid, _)| pid)
            .collect();
        if pids.is_empty() {
            return Err(format!("no parameters found for block {label}"));
        }
        let (mut checked, mut passed) = (0usize, 0usize);
        let mut worst = (0.0f64, String::new());
        for pid in pids {
            let n = model.store.get(pid).data.len();
            let name = model.store.get(pid).name.clone();
            for _ in 0..6.min(n) {
                let i = rng.gen_range(0..n);
                let analytic = grads
                    .iter()
                    .find(|(nm, _)| *nm == name)
                    .map(|(_, gr)| gr[i])
                    .unwrap();
                let orig = model.store.get(pid).data[i];
                model.store.get_mut(pid).data[i] = orig + h;
                let (g1, l1) = build(&model);
                let fp = g1.value(l1)[0];
                model.store.get_mut(pid).data[i] = orig - h;
                let (g2, l2) = build(&model);
                let fm = g2.value(l2)[0];
                model.store.get_mut(pid).data[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let re = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
                checked += 1;
                if re <= tol {
                    passed += 1;
                } else if re > worst.0 {
                    worst = (re, format!("{name}[{i}]"));
                }
            }
        }
        let frac = passed as f64 / checked as f64;
        if frac < 0.95 {
            return Err(format!(
                "{label}: {passed}/{checked} coords within {tol} (worst {:.2e} at {})",
                worst.0, worst.1
            ));
        }
        summary.push_str(&format!("{label} {passed}/{checked}; "));
    }
    Ok(summary)
}

// --- criterion 4: exploration-graph oracles

fn dedup_oracle(walk: &[NodeId]) -> Vec<NodeId> {
    let mut w = walk.to_vec();
    'outer: loop {
        for i in 0..w.len() {
            for j in (i + 1)..w.len() {
                if w[i] == w[j] {
                    w.drain(i..j);
                    continue 'outer;
                }
            }
        }
        return w;
    }
}

fn dijkstra_oracle(env: &EnvGraph, from: NodeId, to: NodeId) -> (f64, Vec<NodeId>) {
    let n = env.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut path: Vec<Option<Vec<NodeId>>> = vec![None; n];
    dist[from.0] = 0.0;
    path[from.0] = Some(vec![from]);
    for _ in 0..n {
        let mut changed = false;
        for u in 0..n {
            let Some(pu) = path[u].clone() else { continue };
            for &v in env.neighbors(NodeId(u)) {
                let nd = dist[u] + env.distance(NodeId(u), NodeId(v));
                let mut np = pu.clone();
                np.push(NodeId(v));
                let better = nd < dist[v] - 1e-12
                    || ((nd - dist[v]).abs() <= 1e-12
                        && path[v].as_ref().map_or(true, |pv| np < *pv));
                if better {
                    dist[v] = dist[v].min(nd);
                    path[v] = Some(np);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dist[to.0], path[to.0].clone().expect("connected"))
}

fn graph_oracles() -> Result<String, String> {
    let vp = pret::env::ViewParams {
        k_headings: 4,
        k_elevations: 1,
        raw_dim: 4,
    };
    // fidelity stack vs duplicate-segment deletion, 1000 random walks
    let env = generate_environment(13, &Config::desk().gen_params()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for w in 0..1000 {
        let start = NodeId(rng.gen_range(0..env.n_nodes()));
        let mut g: ExploreGraph<u32, u32> = ExploreGraph::new(start);
        let mut walk = vec![start];
        for _ in 0..rng.gen_range(1..20) {
            let obs = observe(&env, g.current(), 0.0, &vp).map_err(|e| e.to_string())?;
            g.update(&obs, vec![0; obs.neighbors.len()])
                .map_err(|e| e.to_string())?;
            let nbs = env.neighbors(g.current());
            let next = NodeId(nbs[rng.gen_range(0..nbs.len())]);
            g.move_to(next).map_err(|e| e.to_string())?;
            walk.push(next);
        }
        if g.stack() != dedup_oracle(&walk).as_slice() {
            return Err(format!("stack mismatch on walk {w}: {walk:?}"));
        }
    }

    // route vs independent relaxation-sweep shortest path, 100 random graphs
    for trial in 0..100u64 {
        let params = pret::env::GenParams {
            n_nodes: rng.gen_range(9..30),
            ..Config::desk().gen_params()
        };
        let env = generate_environment(5000 + trial, &params).map_err(|e| e.to_string())?;
        // random-walk until every node is visited so all edges are stored
        let mut g: ExploreGraph<u32, u32> = ExploreGraph::new(NodeId(0));
        let mut seen = std::collections::HashSet::from([NodeId(0)]);
        let mut steps = 0;
        while seen.len() < env.n_nodes() {
            let obs = observe(&env, g.current(), 0.0, &vp).map_err(|e| e.to_string())?;
            g.update(&obs, vec![0; obs.neighbors.len()])
                .map_err(|e| e.to_string())?;
            let nbs = env.neighbors(g.current());
            let next = NodeId(nbs[rng.gen_range(0..nbs.len())]);
            g.move_to(next).map_err(|e| e.to_string())?;
            seen.insert(next);
            steps += 1;
            if steps > 200_000 {
                return Err(format!("cover walk did not terminate on trial {trial}"));
            }
        }
        let obs = observe(&env, g.current(), 0.0, &vp).map_err(|e| e.to_string())?;
        g.update(&obs, vec![0; obs.neighbors.len()])
            .map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let a = NodeId(rng.gen_range(0..env.n_nodes()));
            let b = NodeId(rng.gen_range(0..env.n_nodes()));
            let got = g.route(a, b).map_err(|e| e.to_string())?;
            let (want_dist, want_path) = dijkstra_oracle(&env, a, b);
            let got_dist: f64 = got.windows(2).map(|w| env.distance(w[0], w[1])).sum();
            if (got_dist - want_dist).abs() > 1e-9 || got != want_path {
                return Err(format!("route mismatch {a}->{b} on trial {trial}"));
            }
        }
    }
    Ok("1000 stack walks, 100 route graphs exact".into())
}

// --- criterion 5: metrics oracles

fn dtw_exhaustive(a: &[[f64; 3]], b: &[[f64; 3]], i: usize, j: usize) -> f64 {
    let e = |p: [f64; 3], q: [f64; 3]| {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let cost = e(a[i], b[j]);
    if i == 0 && j == 0 {
        return cost;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(dtw_exhaustive(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(dtw_exhaustive(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(dtw_exhaustive(a, b, i - 1, j - 1));
    }
    cost + best
}

fn metrics_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..200 {
        let gen = |rng: &mut ChaCha8Rng, l: usize| -> Vec<[f64; 3]> {
            (0..l)
                .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0])
                .collect()
        };
        let (la, lb) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let a = gen(&mut rng, la);
        let b = gen(&mut rng, lb);
        let got = dtw(&a, &b).map_err(|e| e.to_string())?;
        let want = dtw_exhaustive(&a, &b, a.len() - 1, b.len() - 1);
        if (got - want).abs() > 1e-9 {
            return Err(format!("dtw {got} vs exhaustive {want}"));
        }
    }

    // range invariants on uniformly evaluated episodes
    let cfg = small_cfg();
    let model: Model<f32> = Model::new(&cfg, 10).map_err(|e| e.to_string())?;
    let env = generate_environment(17, &cfg.gen_params()).map_err(|e| e.to_string())?;
    let vocab = Vocab::navigation(cfg.env.landmark_count);
    for s in 0..30u64 {
        let ep = sample_episode(&env, &vocab, s, &cfg.episode_params()).map_err(|e| e.to_string())?;
        let run = run_episode(&model, &env, &ep, &Policy::Uniform(s), 10)
            .map_err(|e| e.to_string())?;
        let m = compute_metrics(&env, &run.walk, &ep).map_err(|e| e.to_string())?;
        let ok = m.spl <= m.sr + 1e-12
            && m.sdtw <= m.ndtw + 1e-12
            && (0.0..=1.0 + 1e-12).contains(&m.ndtw)
            && (0.0..=1.0).contains(&m.spl)
            && (m.sr == 0.0 || m.sr == 1.0)
            && m.tl >= 0.0
            && m.ne >= 0.0;
        if !ok {
            return Err(format!("range invariant violated: {m:?}"));
        }
    }
    Ok("200 DTW cases exact; ranges hold on 30 episodes".into())
}

// --- criterion 6: analytic cost model

fn cost_model() -> Result<String, String> {
    let cfg = Config::paper_faithful();
    let sc = FlopsScenario::default();
    let inc = bench::analytic_incremental(&cfg, &sc).map_err(|e| e.to_string())?;
    let nai = bench::analytic_naive(&cfg, &sc).map_err(|e| e.to_string())?;
    let cum_inc = inc.last().unwrap().cumulative;
    let cum_nai = nai.last().unwrap().cumulative;
    if cum_inc >= cum_nai {
        return Err(format!(
            "cumulative incremental {cum_inc} not below naive {cum_nai} at step 20"
        ));
    }
    let xs: Vec<f64> = inc[1..].iter().map(|s| s.step as f64).collect();
    let ys: Vec<f64> = inc[1..].iter().map(|s| s.total as f64).collect();
    let r2 = bench::affine_fit_r2(&xs, &ys).map_err(|e| e.to_string())?;
    if r2 < 0.999 {
        return Err(format!("per-step FLOPs not affine in step: R^2 = {r2}"));
    }
    // diagnostic (non-gating): compare against published 0.6 / 0.9 / 1.2 GFLOP
    let gf = |f: u64| f as f64 / 1e9;
    let diag: Vec<(usize, f64, f64)> = [(1, 0.6), (10, 0.9), (20, 1.2)]
        .iter()
        .map(|&(s, want)| (s, gf(inc[s - 1].total), want))
        .collect();
    let within = diag
        .iter()
        .all(|&(_, got, want)| got / want < 2.0 && want / got < 2.0);
    println!("{}", bench::report(&cfg, &sc).map_err(|e| e.to_string())?);
    Ok(format!(
        "cumulative inc {:.1} < naive {:.1} GFLOP; R^2 {:.6}; diagnostic steps 1/10/20: {:.2}/{:.2}/{:.2} GFLOP vs 0.6/0.9/1.2 ({})",
        gf(cum_inc),
        gf(cum_nai),
        r2,
        diag[0].1,
        diag[1].1,
        diag[2].1,
        if within { "within factor 2" } else { "outside factor 2, see breakdown above" }
    ))
}

// --- criterion 7: learning smoke test

fn learning_smoke() -> Result<String, String> {
    let cfg = Config::desk();
    let mut model: Model<f32> = Model::new(&cfg, 0).map_err(|e| e.to_string())?;
    let per_epoch = cfg.train.episodes / cfg.train.epochs.max(1);
    let corpus = build_corpus(&cfg, 11, 32, per_epoch).map_err(|e| e.to_string())?;
    pretrain_model(&mut model, &corpus, &cfg, 11, cfg.train.mlm_steps, |_, _| {})
        .map_err(|e| e.to_string())?;
    let val = build_corpus(&cfg, 550_011, 2, 50).map_err(|e| e.to_string())?;
    train_with_selection(&mut model, &corpus, &val, &cfg, 11, |_, _, _| {})
        .map_err(|e| e.to_string())?;

    let held = build_corpus(&cfg, 990_011, 2, 200).map_err(|e| e.to_string())?;
    let pairs = held.pairs();
    let (trained, _) =
        evaluate(&model, &pairs, &Policy::Greedy, cfg.train.max_steps).map_err(|e| e.to_string())?;
    let (baseline, _) = evaluate(&model, &pairs, &Policy::Uniform(77), cfg.train.max_steps)
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "trained SR {:.3} nDTW {:.3} vs uniform baseline SR {:.3} nDTW {:.3}",
        trained.sr, trained.ndtw, baseline.sr, baseline.ndtw
    );
    if trained.sr <= 3.0 * baseline.sr {
        return Err(format!("SR not above 3x baseline: {detail}"));
    }
    if trained.ndtw < baseline.ndtw + 0.2 {
        return Err(format!("nDTW not 0.2 above baseline: {detail}"));
    }
    Ok(detail)
}

// --- criterion 8: MLM sanity

fn mlm_sanity() -> Result<String, String> {
    let cfg = Config::desk();
    let mut model: Model<f32> = Model::new(&cfg, 12).map_err(|e| e.to_string())?;
    let corpus = build_corpus(&cfg, 21, 4, 4 * cfg.train.batch).map_err(|e| e.to_string())?;
    let vocab_ln = (cfg.vocab_size() as f64).ln();
    let losses =
        pretrain_model(&mut model, &corpus, &cfg, 21, 1000, |_, _| {}).map_err(|e| e.to_string())?;
    let start = losses[0];
    if (start - vocab_ln).abs() / vocab_ln > 0.10 {
        return Err(format!("initial loss {start:.3} not within 10% of ln|V| = {vocab_ln:.3}"));
    }
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.7 * start {
        return Err(format!(
            "loss only fell from {start:.3} to {min:.3} in 1000 steps (< 30% drop)"
        ));
    }
    Ok(format!(
        "start {start:.3} (ln|V| = {vocab_ln:.3}), min {min:.3} within 1000 steps"
    ))
}

// --- criterion 9: determinism

fn determinism() -> Result<String, String> {
    let cfg = Config::desk();
    let run = || -> Result<_, String> {
        let mut model: Model<f32> = Model::new(&cfg, 5).map_err(|e| e.to_string())?;
        let corpus = build_corpus(&cfg, 31, 2, 16).map_err(|e| e.to_string())?;
        train_model(&mut model, &corpus, &cfg, 31, |_, _| {}).map_err(|e| e.to_string())?;
        let held = build_corpus(&cfg, 990_031, 1, 10).map_err(|e| e.to_string())?;
        let (report, _) = evaluate(&model, &held.pairs(), &Policy::Greedy, cfg.train.max_steps)
            .map_err(|e| e.to_string())?;
        let (env, ep) = (&held.envs[held.episodes[0].0], &held.episodes[0].1);
        let episode = run_episode(&model, env, ep, &Policy::Greedy, cfg.train.max_steps)
            .map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &cfg.hash(), env, ep, &episode).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        Ok((report, bytes))
    };
    let (r1, t1) = run()?;
    let (r2, t2) = run()?;
    if r1 != r2 {
        return Err("metrics reports differ across identical runs".into());
    }
    if t1 != t2 {
        return Err("trace files differ across identical runs".into());
    }
    Ok("identical metrics report and byte-identical traces".into())
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Result<String, String>)> = vec![
        ("equivalence suite", equivalence_suite),
        ("cache lifecycle", cache_lifecycle),
        ("gradient checks", gradient_checks),
        ("graph oracles", graph_oracles),
        ("metrics oracles", metrics_oracles),
        ("cost model", cost_model),
        ("learning smoke test", learning_smoke),
        ("MLM sanity", mlm_sanity),
        ("determinism", determinism),
    ];
    let mut failures = Vec::new();
    for (name, f) in criteria {
        let t0 = std::time::Instant::now();
        match f() {
            Ok(detail) => println!(
                "[PASS] {name}: {detail} ({:.1}s)",
                t0.elapsed().as_secs_f64()
            ),
            Err(detail) => {
                println!(
                    "[FAIL] {name}: {detail} ({:.1}s)",
                    t0.elapsed().as_secs_f64()
                );
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
