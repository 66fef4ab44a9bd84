//! The agent's incrementally built directed map: per-node fidelity
//! trajectories, stored path embeddings, stop-node modeling and
//! shortest-path routing over explored edges.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::env::{NodeId, Observation};
use crate::error::{PretError, Result};

/// Directed edge record: feature as observed when facing this direction,
/// plus metric length.
#[derive(Debug, Clone)]
pub struct DirEdge<F> {
    pub feature: F,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct ExpNode<E> {
    pub visited: bool,
    pub embedding: Option<E>,
    /// Node sequence from the start recorded when the node was first
    /// observed; never recomputed on re-observation.
    pub fidelity: Option<Vec<NodeId>>,
}

/// A candidate temporary target: a frontier node or the stop action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Node(NodeId),
    Stop,
}

/// The agent's directed exploration graph. `F` is the edge-feature type and
/// `E` the path-embedding type (concrete vectors at inference, graph handles
/// during training).
pub struct ExploreGraph<F, E> {
    start: NodeId,
    current: NodeId,
    nodes: IndexMap<NodeId, ExpNode<E>>,
    edges: HashMap<(NodeId, NodeId), DirEdge<F>>,
    stack: Vec<NodeId>,
    stop_embedding: Option<E>,
}

impl<F: Clone, E> ExploreGraph<F, E> {
    pub fn new(start: NodeId) -> Self {
        let mut nodes = IndexMap::new();
        nodes.insert(
            start,
            ExpNode {
                visited: true,
                embedding: None,
                fidelity: Some(vec![start]),
            },
        );
        Self {
            start,
            current: start,
            nodes,
            edges: HashMap::new(),
            stack: vec![start],
            stop_embedding: None,
        }
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn current(&self) -> NodeId {
        self.current
    }

    pub fn stack(&self) -> &[NodeId] {
        &self.stack
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains_key(&n)
    }

    pub fn is_visited(&self, n: NodeId) -> bool {
        self.nodes.get(&n).map_or(false, |x| x.visited)
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Result<&DirEdge<F>> {
        self.edges.get(&(from, to)).ok_or_else(|| {
            PretError::Integrity(format!("missing directed edge {from} -> {to}"))
        })
    }

    pub fn fidelity_of(&self, n: NodeId) -> Result<&[NodeId]> {
        self.nodes
            .get(&n)
            .and_then(|x| x.fidelity.as_deref())
            .ok_or_else(|| PretError::Integrity(format!("no fidelity path recorded for {n}")))
    }

    /// Incorporate an observation made at the current node. Unseen neighbors
    /// are added unvisited; directed edges (current -> neighbor) are inserted
    /// or overwritten with fresh features. Returns the neighbors that had no
    /// stored path embedding (the ones to embed this step).
    pub fn update(&mut self, obs: &Observation, edge_features: Vec<F>) -> Result<Vec<NodeId>> {
        if obs.node != self.current {
            return Err(PretError::Contract(format!(
                "observation at {} but agent is at {}",
                obs.node, self.current
            )));
        }
        if edge_features.len() != obs.neighbors.len() {
            return Err(PretError::Contract(format!(
                "{} edge features for {} neighbors",
                edge_features.len(),
                obs.neighbors.len()
            )));
        }
        let mut fresh = Vec::new();
        for (nb, feat) in obs.neighbors.iter().zip(edge_features) {
            self.edges.insert(
                (self.current, nb.id),
                DirEdge {
                    feature: feat,
                    length: nb.distance,
                },
            );
            let entry = self.nodes.entry(nb.id).or_insert(ExpNode {
                visited: false,
                embedding: None,
                fidelity: None,
            });
            if !entry.visited && entry.embedding.is_none() && entry.fidelity.is_none() {
                let mut fid = self.stack.clone();
                fid.push(nb.id);
                entry.fidelity = Some(fid);
                fresh.push(nb.id);
            }
        }
        Ok(fresh)
    }

    pub fn set_embedding(&mut self, n: NodeId, e: E) -> Result<()> {
        let node = self
            .nodes
            .get_mut(&n)
            .ok_or(PretError::UnknownNode(n.0))?;
        node.embedding = Some(e);
        Ok(())
    }

    /// The stop path embedding is stored for the current node and overwritten
    /// every step (it depends on the current fidelity prefix).
    pub fn set_stop_embedding(&mut self, e: E) {
        self.stop_embedding = Some(e);
    }

    /// Move one hop. `moved_to` must be connected to the current node by a
    /// stored edge in either direction. Advances the fidelity stack by the
    /// push/pop rule and marks the destination visited.
    pub fn move_to(&mut self, moved_to: NodeId) -> Result<()> {
        if !self.edges.contains_key(&(self.current, moved_to))
            && !self.edges.contains_key(&(moved_to, self.current))
        {
            return Err(PretError::Contract(format!(
                "move {} -> {} without a stored edge",
                self.current, moved_to
            )));
        }
        advance_stack(&mut self.stack, moved_to);
        self.current = moved_to;
        self.stop_embedding = None;
        let node = self.nodes.get_mut(&moved_to).expect("edge endpoint must exist");
        node.visited = true;
        Ok(())
    }

    /// The directed edge sequence along `frontier`'s stored fidelity
    /// trajectory, ending with the edge into the frontier.
    pub fn fidelity_edges(&self, frontier: NodeId) -> Result<Vec<(NodeId, NodeId)>> {
        let fid = self.fidelity_of(frontier)?;
        let mut out = Vec::with_capacity(fid.len().saturating_sub(1));
        for w in fid.windows(2) {
            if !self.edges.contains_key(&(w[0], w[1])) {
                return Err(PretError::Integrity(format!(
                    "recorded fidelity path uses missing edge {} -> {}",
                    w[0], w[1]
                )));
            }
            out.push((w[0], w[1]));
        }
        Ok(out)
    }

    /// Edges along the current fidelity stack (the committed prefix).
    pub fn stack_edges(&self) -> Result<Vec<(NodeId, NodeId)>> {
        let mut out = Vec::new();
        for w in self.stack.windows(2) {
            if !self.edges.contains_key(&(w[0], w[1])) {
                return Err(PretError::Integrity(format!(
                    "stack uses missing edge {} -> {}",
                    w[0], w[1]
                )));
            }
            out.push((w[0], w[1]));
        }
        Ok(out)
    }

    /// Minimum-total-length path from `from` to `to` over stored edges,
    /// treating each directed edge as traversable in both directions. Ties
    /// break to the lexicographically smallest node-id sequence. Intermediate
    /// nodes must be visited: only visited nodes carry outbound features for
    /// every incident edge, so each hop of the returned path can be committed.
    pub fn route(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>> {
        if !self.contains(from) {
            return Err(PretError::UnknownNode(from.0));
        }
        if !self.contains(to) {
            return Err(PretError::UnknownNode(to.0));
        }
        // symmetrized adjacency with minimum length per undirected pair
        let mut adj: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
        for (&(u, v), e) in &self.edges {
            for (a, b) in [(u, v), (v, u)] {
                let entry = adj.entry(a).or_default();
                match entry.iter_mut().find(|(n, _)| *n == b) {
                    Some((_, l)) => *l = l.min(e.length),
                    None => entry.push((b, e.length)),
                }
            }
        }
        for list in adj.values_mut() {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }

        #[derive(PartialEq)]
        struct Item {
            dist: f64,
            path: Vec<NodeId>,
        }
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                other
                    .dist
                    .total_cmp(&self.dist)
                    .then_with(|| other.path.cmp(&self.path))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut best: HashMap<NodeId, f64> = HashMap::new();
        let mut settled: std::collections::HashSet<NodeId> = Default::default();
        let mut heap = std::collections::BinaryHeap::new();
        best.insert(from, 0.0);
        heap.push(Item {
            dist: 0.0,
            path: vec![from],
        });
        while let Some(Item { dist, path }) = heap.pop() {
            let u = *path.last().unwrap();
            if !settled.insert(u) {
                continue;
            }
            if u == to {
                return Ok(path);
            }
            if u != from && !self.is_visited(u) {
                continue;
            }
            if let Some(neighbors) = adj.get(&u) {
                for &(v, len) in neighbors {
                    if settled.contains(&v) {
                        continue;
                    }
                    let nd = dist + len;
                    let keep = match best.get(&v) {
                        Some(&b) => nd <= b + 1e-12,
                        None => true,
                    };
                    if keep {
                        best.entry(v)
                            .and_modify(|b| *b = b.min(nd))
                            .or_insert(nd);
                        let mut np = path.clone();
                        np.push(v);
                        heap.push(Item { dist: nd, path: np });
                    }
                }
            }
        }
        Err(PretError::Routing {
            from: from.0,
            to: to.0,
        })
    }

    /// All unvisited nodes plus the stop action, with their stored path
    /// embeddings, in deterministic insertion order (stop last).
    pub fn candidates(&self) -> Result<Vec<(Candidate, &E)>> {
        let mut out = Vec::new();
        for (&id, node) in &self.nodes {
            if node.visited {
                continue;
            }
            let e = node.embedding.as_ref().ok_or_else(|| {
                PretError::Integrity(format!("unvisited node {id} has no embedding"))
            })?;
            out.push((Candidate::Node(id), e));
        }
        let stop = self
            .stop_embedding
            .as_ref()
            .ok_or_else(|| PretError::Integrity("no stop embedding stored this step".into()))?;
        out.push((Candidate::Stop, stop));
        Ok(out)
    }

    pub fn unvisited_count(&self) -> usize {
        self.nodes.values().filter(|n| !n.visited).count()
    }
}

/// The fidelity-stack rule: push unseen nodes, pop back to `moved_to` when it
/// is already on the stack.
pub fn advance_stack(stack: &mut Vec<NodeId>, moved_to: NodeId) {
    if let Some(pos) = stack.iter().position(|&n| n == moved_to) {
        stack.truncate(pos + 1);
    } else {
        stack.push(moved_to);
    }
}
