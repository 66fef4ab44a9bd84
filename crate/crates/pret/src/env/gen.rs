use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PretError, Result};

use super::EnvGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Grid,
    RandomGeometric,
}

#[derive(Debug, Clone)]
pub struct GenParams {
    pub n_nodes: usize,
    pub layout: Layout,
    pub spacing: f64,
    pub landmark_count: usize,
    /// Grid layouts only: number of stacked levels joined by a stair column,
    /// so nonzero elevation angles occur.
    pub levels: usize,
    /// Random-geometric layouts only: connection radius in meters.
    pub rgg_radius: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_nodes: 25,
            layout: Layout::Grid,
            spacing: 2.0,
            landmark_count: 24,
            levels: 1,
            rgg_radius: 3.0,
        }
    }
}

const MAX_RETRIES: u64 = 32;

/// Deterministic environment generation. Grid layouts are always connected
/// (average interior degree 4); random-geometric draws are retried with a
/// derived seed until connected, erroring after a bound.
pub fn generate_environment(seed: u64, params: &GenParams) -> Result<EnvGraph> {
    if params.n_nodes < 2 {
        return Err(PretError::Generation(format!(
            "need at least 2 nodes, got {}",
            params.n_nodes
        )));
    }
    if params.landmark_count == 0 || params.landmark_count > u16::MAX as usize {
        return Err(PretError::Generation("invalid landmark count".into()));
    }
    match params.layout {
        Layout::Grid => Ok(grid(seed, params)),
        Layout::RandomGeometric => {
            for attempt in 0..MAX_RETRIES {
                let derived = seed.wrapping_add(attempt.wrapping_mul(0x9e3779b97f4a7c15));
                let env = random_geometric(derived, seed, params);
                if env.is_connected() {
                    return Ok(env);
                }
            }
            Err(PretError::Generation(format!(
                "no connected random-geometric draw within {} retries (radius {})",
                MAX_RETRIES, params.rgg_radius
            )))
        }
    }
}

fn assign_landmarks(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<u16> {
    (0..n).map(|_| rng.gen_range(0..count) as u16).collect()
}

fn finish(seed: u64, spacing: f64, coords: Vec<[f64; 3]>, mut adj: Vec<Vec<usize>>, landmarks: Vec<u16>) -> EnvGraph {
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    EnvGraph {
        seed,
        spacing,
        coords,
        landmarks,
        adj,
    }
}

fn grid(seed: u64, params: &GenParams) -> EnvGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c76_656e);
    let per_level = params.n_nodes;
    let levels = params.levels.max(1);
    let side = (per_level as f64).sqrt().ceil() as usize;
    let s = params.spacing;
    let mut coords = Vec::new();
    let mut index = Vec::new(); // (level, row, col) -> node
    for lvl in 0..levels {
        let mut level_nodes = Vec::new();
        for i in 0..per_level {
            let (row, col) = (i / side, i % side);
            coords.push([col as f64 * s, row as f64 * s, lvl as f64 * s]);
            level_nodes.push((row, col, coords.len() - 1));
        }
        index.push(level_nodes);
    }
    let n = coords.len();
    let mut adj = vec![Vec::new(); n];
    for level_nodes in &index {
        for &(row, col, id) in level_nodes {
            for &(r2, c2, id2) in level_nodes {
                if (r2 == row && c2 == col + 1) || (r2 == row + 1 && c2 == col) {
                    adj[id].push(id2);
                    adj[id2].push(id);
                }
            }
        }
    }
    // stair column at the grid origin
    for lvl in 1..levels {
        let a = index[lvl - 1][0].2;
        let b = index[lvl][0].2;
        adj[a].push(b);
        adj[b].push(a);
    }
    let landmarks = assign_landmarks(&mut rng, n, params.landmark_count);
    finish(seed, s, coords, adj, landmarks)
}

fn random_geometric(draw_seed: u64, orig_seed: u64, params: &GenParams) -> EnvGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed ^ 0x7267_6721);
    let n = params.n_nodes;
    let extent = params.spacing * (n as f64).sqrt();
    let mut coords: Vec<[f64; 3]> = Vec::with_capacity(n);
    while coords.len() < n {
        let c = [rng.gen_range(0.0..extent), rng.gen_range(0.0..extent), 0.0];
        if coords
            .iter()
            .all(|o| (o[0] - c[0]).abs() > 1e-9 || (o[1] - c[1]).abs() > 1e-9)
        {
            coords.push(c);
        }
    }
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            let d = ((coords[u][0] - coords[v][0]).powi(2) + (coords[u][1] - coords[v][1]).powi(2))
                .sqrt();
            if d <= params.rgg_radius {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    let landmarks = assign_landmarks(&mut rng, n, params.landmark_count);
    finish(orig_seed, params.spacing, coords, adj, landmarks)
}
