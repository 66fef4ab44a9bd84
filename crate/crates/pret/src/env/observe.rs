use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{wrap_angle, EnvGraph, NodeId};

/// Panorama discretization and raw feature dimension.
#[derive(Debug, Clone, Copy)]
pub struct ViewParams {
    pub k_headings: usize,
    pub k_elevations: usize,
    pub raw_dim: usize,
}

impl ViewParams {
    pub fn k(&self) -> usize {
        self.k_headings * self.k_elevations
    }

    /// World-frame (heading, elevation) of view `i`.
    pub fn view_direction(&self, i: usize) -> (f64, f64) {
        let ih = i % self.k_headings;
        let ie = i / self.k_headings;
        let heading = wrap_angle(ih as f64 * 2.0 * PI / self.k_headings as f64);
        let elevation = if self.k_elevations == 1 {
            0.0
        } else {
            // symmetric band around the horizon, e.g. 3 -> [-pi/6, 0, pi/6]
            let span = PI / 3.0;
            -span / 2.0 + span * ie as f64 / (self.k_elevations - 1) as f64
        };
        (heading, elevation)
    }
}

impl Default for ViewParams {
    fn default() -> Self {
        Self {
            k_headings: 12,
            k_elevations: 1,
            raw_dim: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeighborObs {
    pub id: NodeId,
    /// Relative heading in `[-pi, pi)` w.r.t. the agent's heading.
    pub heading: f64,
    /// Relative elevation in `[-pi/2, pi/2]`.
    pub elevation: f64,
    pub distance: f64,
}

/// What the agent senses at a node: K view features plus the ground-truth
/// adjacency with relative orientations.
#[derive(Debug, Clone)]
pub struct Observation {
    pub node: NodeId,
    pub view_features: Vec<Vec<f64>>,
    /// Per-view (heading, elevation) relative to the agent's heading.
    pub view_orientations: Vec<(f64, f64)>,
    pub neighbors: Vec<NeighborObs>,
}

fn hashed_embedding(namespace: &str, key: u64, dim: usize) -> Vec<f64> {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in namespace.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    h = (h ^ key).wrapping_mul(0x100000001b3);
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    (0..dim)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        })
        .collect()
}

/// Deterministic synthetic stand-in for a pre-extracted image feature: the
/// inverse-distance-weighted sum of landmark embeddings of all nodes visible
/// within the view's angular cone, plus a direction embedding,
/// unit-normalized. Landmark/direction embeddings are global (shared across
/// environments) so the same label looks the same everywhere.
pub fn synth_view_feature(
    env: &EnvGraph,
    node: NodeId,
    view_index: usize,
    params: &ViewParams,
) -> Vec<f64> {
    assert!(view_index < params.k(), "view index out of range");
    let (view_heading, _) = params.view_direction(view_index);
    let cone_half = PI / params.k_headings as f64;
    let mut feat = hashed_embedding("view-dir", view_index as u64, params.raw_dim);
    for other in 0..env.n_nodes() {
        if other == node.0 {
            continue;
        }
        let bearing = env.bearing(node, NodeId(other));
        if wrap_angle(bearing - view_heading).abs() <= cone_half {
            let d = env.distance(node, NodeId(other)).max(1e-6);
            let lm = hashed_embedding("landmark", env.landmark(NodeId(other)) as u64, params.raw_dim);
            for (f, l) in feat.iter_mut().zip(&lm) {
                *f += l / d;
            }
        }
    }
    let norm = feat.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    feat.iter_mut().for_each(|x| *x /= norm);
    feat
}

pub fn observe(env: &EnvGraph, node: NodeId, agent_heading: f64, params: &ViewParams) -> Result<Observation> {
    env.check_node(node)?;
    let k = params.k();
    let mut view_features = Vec::with_capacity(k);
    let mut view_orientations = Vec::with_capacity(k);
    for i in 0..k {
        view_features.push(synth_view_feature(env, node, i, params));
        let (h, e) = params.view_direction(i);
        view_orientations.push((wrap_angle(h - agent_heading), e));
    }
    let neighbors = env
        .neighbors(node)
        .iter()
        .map(|&v| {
            let v = NodeId(v);
            NeighborObs {
                id: v,
                heading: wrap_angle(env.bearing(node, v) - agent_heading),
                elevation: env.elevation(node, v),
                distance: env.distance(node, v),
            }
        })
        .collect();
    Ok(Observation {
        node,
        view_features,
        view_orientations,
        neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GenParams};

    fn env5() -> EnvGraph {
        generate_environment(11, &GenParams::default()).unwrap()
    }

    #[test]
    fn aligned_neighbor_has_zero_relative_orientation() {
        let env = env5();
        // node 0 -> node 1 lies along +x; heading 0 faces +x
        let obs = observe(&env, NodeId(0), 0.0, &ViewParams::default()).unwrap();
        let nb = obs.neighbors.iter().find(|n| n.id == NodeId(1)).unwrap();
        assert!(nb.heading.abs() < 1e-9);
        assert!(nb.elevation.abs() < 1e-9);
    }

    #[test]
    fn neighbor_behind_wraps_to_minus_pi() {
        let env = env5();
        // looking at node 1 from node 0 with heading pi: neighbor is behind
        let obs = observe(&env, NodeId(0), std::f64::consts::PI, &ViewParams::default()).unwrap();
        let nb = obs.neighbors.iter().find(|n| n.id == NodeId(1)).unwrap();
        assert!((nb.heading + std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn rotating_heading_shifts_relative_headings() {
        let env = env5();
        let base = observe(&env, NodeId(6), 0.2, &ViewParams::default()).unwrap();
        let delta = 0.7;
        let rotated = observe(&env, NodeId(6), 0.2 + delta, &ViewParams::default()).unwrap();
        for (a, b) in base.neighbors.iter().zip(&rotated.neighbors) {
            assert!(wrap_angle(b.heading - (a.heading - delta)).abs() < 1e-9);
        }
    }

    #[test]
    fn neighbors_match_ground_truth_adjacency() {
        let env = env5();
        for n in 0..env.n_nodes() {
            let obs = observe(&env, NodeId(n), 0.3, &ViewParams::default()).unwrap();
            let ids: Vec<usize> = obs.neighbors.iter().map(|nb| nb.id.0).collect();
            assert_eq!(ids, env.neighbors(NodeId(n)));
        }
    }

    #[test]
    fn bearing_recoverable_from_relative_heading() {
        let env = env5();
        let heading = 1.1;
        let obs = observe(&env, NodeId(7), heading, &ViewParams::default()).unwrap();
        for nb in &obs.neighbors {
            let world = env.bearing(NodeId(7), nb.id);
            assert!(wrap_angle((heading + nb.heading) - world).abs() < 1e-9);
        }
    }

    #[test]
    fn view_feature_deterministic_and_distinct() {
        let env = env5();
        let p = ViewParams::default();
        let a = synth_view_feature(&env, NodeId(3), 2, &p);
        let b = synth_view_feature(&env, NodeId(3), 2, &p);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-9);

        // two nodes whose facing views see different landmarks differ
        let c = synth_view_feature(&env, NodeId(20), 2, &p);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_cone_is_pure_direction_embedding() {
        // two nodes far apart on x axis: a view facing -x from node 0 sees nothing
        let env = EnvGraph {
            seed: 0,
            spacing: 2.0,
            coords: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            landmarks: vec![0, 1],
            adj: vec![vec![1], vec![0]],
        };
        let p = ViewParams::default();
        // view 6 of 12 faces heading pi (backwards)
        let f = synth_view_feature(&env, NodeId(0), 6, &p);
        let mut dir = hashed_embedding("view-dir", 6, p.raw_dim);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        for (a, b) in f.iter().zip(&dir) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
