//! Line-delimited environment/episode files. Schema: a header record, one
//! `node` record per node, one `edge` record per undirected pair (u < v),
//! then `episode` records.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PretError, Result};

use super::{EnvGraph, Episode};

pub const ENV_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header {
        schema: String,
        version: u32,
        seed: u64,
        spacing: f64,
        n_nodes: usize,
    },
    Node {
        id: usize,
        coord: [f64; 3],
        landmark: u16,
    },
    Edge {
        u: usize,
        v: usize,
    },
    Episode(Episode),
}

pub fn write_env_file(env: &EnvGraph, episodes: &[Episode], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let mut emit = |r: &Record| -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| PretError::Parse(e.to_string()))?;
        writeln!(f, "{line}")?;
        Ok(())
    };
    emit(&Record::Header {
        schema: "pret-env".into(),
        version: ENV_SCHEMA_VERSION,
        seed: env.seed,
        spacing: env.spacing,
        n_nodes: env.n_nodes(),
    })?;
    for id in 0..env.n_nodes() {
        emit(&Record::Node {
            id,
            coord: env.coords[id],
            landmark: env.landmarks[id],
        })?;
    }
    for u in 0..env.n_nodes() {
        for &v in &env.adj[u] {
            if u < v {
                emit(&Record::Edge { u, v })?;
            }
        }
    }
    for ep in episodes {
        emit(&Record::Episode(ep.clone()))?;
    }
    Ok(())
}

pub fn read_env_file(path: &Path) -> Result<(EnvGraph, Vec<Episode>)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut header: Option<(u64, f64, usize)> = None;
    let mut coords = Vec::new();
    let mut landmarks = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut episodes = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| PretError::Parse(e.to_string()))?;
        match rec {
            Record::Header {
                schema,
                version,
                seed,
                spacing,
                n_nodes,
            } => {
                if schema != "pret-env" || version != ENV_SCHEMA_VERSION {
                    return Err(PretError::Parse(format!(
                        "unsupported env schema {schema} v{version}"
                    )));
                }
                header = Some((seed, spacing, n_nodes));
            }
            Record::Node { id, coord, landmark } => {
                if id != coords.len() {
                    return Err(PretError::Parse(format!("node records out of order at {id}")));
                }
                coords.push(coord);
                landmarks.push(landmark);
            }
            Record::Edge { u, v } => edges.push((u, v)),
            Record::Episode(ep) => episodes.push(ep),
        }
    }
    let (seed, spacing, n_nodes) = header.ok_or_else(|| PretError::Parse("missing header".into()))?;
    if coords.len() != n_nodes {
        return Err(PretError::Parse(format!(
            "header promises {} nodes, file holds {}",
            n_nodes,
            coords.len()
        )));
    }
    let mut adj = vec![Vec::new(); n_nodes];
    for (u, v) in edges {
        if u >= n_nodes || v >= n_nodes {
            return Err(PretError::Parse(format!("edge ({u},{v}) out of range")));
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    Ok((
        EnvGraph {
            seed,
            spacing,
            coords,
            landmarks,
            adj,
        },
        episodes,
    ))
}
