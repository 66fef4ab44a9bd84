//! Procedural synthetic environments, observations, template instructions and
//! episode generation.

mod episode;
mod gen;
mod io;
mod observe;
mod speak;
mod vocab;

pub use episode::{sample_episode, EpisodeParams, FidelityMode};
pub use gen::{generate_environment, GenParams, Layout};
pub use io::{read_env_file, write_env_file};
pub use observe::{observe, synth_view_feature, NeighborObs, Observation, ViewParams};
pub use speak::speak;
pub use vocab::{Vocab, CLS, MASK, MOTION_WORDS, PAD, SEP};

use crate::error::{PretError, Result};

/// Identifier of a navigable node in the ground-truth environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground-truth undirected navigable environment with 3D node coordinates.
#[derive(Debug, Clone)]
pub struct EnvGraph {
    pub seed: u64,
    pub spacing: f64,
    pub coords: Vec<[f64; 3]>,
    pub landmarks: Vec<u16>,
    /// Sorted adjacency lists; edge (u,v) present iff (v,u) present.
    pub adj: Vec<Vec<usize>>,
}

impl EnvGraph {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn check_node(&self, n: NodeId) -> Result<()> {
        if n.0 >= self.n_nodes() {
            return Err(PretError::UnknownNode(n.0));
        }
        Ok(())
    }

    pub fn neighbors(&self, n: NodeId) -> &[usize] {
        &self.adj[n.0]
    }

    pub fn coord(&self, n: NodeId) -> [f64; 3] {
        self.coords[n.0]
    }

    pub fn landmark(&self, n: NodeId) -> u16 {
        self.landmarks[n.0]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u.0].binary_search(&v.0).is_ok()
    }

    pub fn distance(&self, u: NodeId, v: NodeId) -> f64 {
        let a = self.coords[u.0];
        let b = self.coords[v.0];
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// World heading of v as seen from u, in radians over the XY plane.
    pub fn bearing(&self, u: NodeId, v: NodeId) -> f64 {
        let a = self.coords[u.0];
        let b = self.coords[v.0];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Elevation angle of v as seen from u.
    pub fn elevation(&self, u: NodeId, v: NodeId) -> f64 {
        let a = self.coords[u.0];
        let b = self.coords[v.0];
        let horiz = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        (b[2] - a[2]).atan2(horiz)
    }

    /// Hop-shortest path via BFS; ties broken by smallest node id (neighbors
    /// are expanded in sorted order). Returns the node sequence.
    pub fn shortest_path_hops(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let n = self.n_nodes();
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[from.0] = true;
        queue.push_back(from.0);
        while let Some(u) = queue.pop_front() {
            if u == to.0 {
                break;
            }
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if !seen[to.0] {
            return None;
        }
        let mut path = vec![to.0];
        let mut cur = to.0;
        while cur != from.0 {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path.into_iter().map(NodeId).collect())
    }

    /// Metric shortest-path distance over edge lengths (Dijkstra).
    pub fn metric_dist(&self, from: NodeId, to: NodeId) -> Option<f64> {
        let n = self.n_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[from.0] = 0.0;
        for _ in 0..n {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u == to.0 {
                return Some(dist[u]);
            }
            for &v in &self.adj[u] {
                let d = dist[u] + self.distance(NodeId(u), NodeId(v));
                if d < dist[v] {
                    dist[v] = d;
                }
            }
        }
        dist[to.0].is_finite().then_some(dist[to.0])
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes() == 0 {
            return false;
        }
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n_nodes()
    }
}

/// Instruction, endpoints and ground-truth path for one navigation task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Episode {
    pub env_seed: u64,
    pub start: NodeId,
    pub target: NodeId,
    pub gt_path: Vec<NodeId>,
    pub instruction: Vec<u32>,
    pub success_radius: f64,
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = (a + std::f64::consts::PI).rem_euclid(two_pi);
    if x < 0.0 {
        x += two_pi;
    }
    x - std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for k in -10..10 {
            let a = wrap_angle(0.3 + k as f64 * 2.0 * std::f64::consts::PI);
            assert!((a - 0.3).abs() < 1e-9);
        }
        let b = wrap_angle(std::f64::consts::PI);
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&b));
    }
}
