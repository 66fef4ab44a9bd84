use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PretError, Result};

use super::{speak, EnvGraph, Episode, NodeId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMode {
    /// Ground truth is a hop-shortest path.
    Shortest,
    /// Ground truth concatenates shortest paths through a random intermediate
    /// node, yielding non-shortest routes.
    Waypoint,
}

#[derive(Debug, Clone)]
pub struct EpisodeParams {
    /// Bounds on ground-truth path length in edges.
    pub min_len: usize,
    pub max_len: usize,
    pub fidelity: FidelityMode,
    pub success_radius: f64,
}

impl EpisodeParams {
    pub fn desk(spacing: f64) -> Self {
        Self {
            min_len: 2,
            max_len: 5,
            fidelity: FidelityMode::Shortest,
            success_radius: 1.5 * spacing,
        }
    }
}

const MAX_TRIES: usize = 500;

pub fn sample_episode(
    env: &EnvGraph,
    vocab: &Vocab,
    seed: u64,
    params: &EpisodeParams,
) -> Result<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6570_6973);
    let n = env.n_nodes();
    if n < params.min_len + 1 {
        return Err(PretError::Sampling(format!(
            "environment with {} nodes cannot hold a path of {} edges",
            n, params.min_len
        )));
    }
    for _ in 0..MAX_TRIES {
        let start = NodeId(rng.gen_range(0..n));
        let target = NodeId(rng.gen_range(0..n));
        if start == target {
            continue;
        }
        let gt_path = match params.fidelity {
            FidelityMode::Shortest => match env.shortest_path_hops(start, target) {
                Some(p) => p,
                None => continue,
            },
            FidelityMode::Waypoint => {
                let mid = NodeId(rng.gen_range(0..n));
                if mid == start || mid == target {
                    continue;
                }
                let (Some(a), Some(b)) = (
                    env.shortest_path_hops(start, mid),
                    env.shortest_path_hops(mid, target),
                ) else {
                    continue;
                };
                let mut p = a;
                p.extend_from_slice(&b[1..]);
                // keep ground truth a simple path so teacher actions stay defined
                let mut seen = std::collections::HashSet::new();
                if !p.iter().all(|x| seen.insert(*x)) {
                    continue;
                }
                p
            }
        };
        let edges = gt_path.len() - 1;
        if edges < params.min_len || edges > params.max_len {
            continue;
        }
        let instruction = speak(env, &gt_path, vocab)?;
        return Ok(Episode {
            env_seed: env.seed,
            start,
            target,
            gt_path,
            instruction,
            success_radius: params.success_radius,
        });
    }
    Err(PretError::Sampling(format!(
        "no path with {}..={} edges found in {} tries",
        params.min_len, params.max_len, MAX_TRIES
    )))
}
