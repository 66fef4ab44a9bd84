//! Trajectory metrics: length, error, success, path-length-weighted success,
//! and dynamic-time-warping similarity.

use serde::{Deserialize, Serialize};

use crate::env::{EnvGraph, Episode, NodeId};
use crate::error::{PretError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    /// Trajectory length in meters.
    pub tl: f64,
    /// Navigation error: distance from the final node to the target.
    pub ne: f64,
    /// Success: navigation error within the success radius.
    pub sr: f64,
    /// Success weighted by inverse path length.
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub episodes: usize,
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
}

impl MetricsReport {
    pub fn aggregate(per_episode: &[Metrics]) -> Result<Self> {
        if per_episode.is_empty() {
            return Err(PretError::Metrics("no episodes to aggregate".into()));
        }
        let n = per_episode.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| per_episode.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            episodes: per_episode.len(),
            tl: mean(|m| m.tl),
            ne: mean(|m| m.ne),
            sr: mean(|m| m.sr),
            spl: mean(|m| m.spl),
            ndtw: mean(|m| m.ndtw),
            sdtw: mean(|m| m.sdtw),
        })
    }

    pub fn table(&self) -> String {
        format!(
            "episodes {:>6}\nTL   {:>8.3}\nNE   {:>8.3}\nSR   {:>8.3}\nSPL  {:>8.3}\nnDTW {:>8.3}\nsDTW {:>8.3}",
            self.episodes, self.tl, self.ne, self.sr, self.spl, self.ndtw, self.sdtw
        )
    }
}

fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Dynamic-time-warping distance between coordinate sequences with unit
/// steps (diagonal, down, right) and Euclidean point cost.
pub fn dtw(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PretError::Metrics("dtw over an empty sequence".into()));
    }
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    let mut cur = vec![f64::INFINITY; m + 1];
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = euclid(a[i - 1], b[j - 1]);
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Per-episode metrics from the agent's hop-by-hop walk.
pub fn compute_metrics(env: &EnvGraph, walk: &[NodeId], episode: &Episode) -> Result<Metrics> {
    if walk.is_empty() {
        return Err(PretError::Metrics("empty agent walk".into()));
    }
    for n in walk {
        env.check_node(*n)?;
    }
    if walk[0] != episode.start {
        return Err(PretError::Metrics(format!(
            "walk starts at {} but the episode starts at {}",
            walk[0], episode.start
        )));
    }
    let radius = episode.success_radius;
    if radius <= 0.0 {
        return Err(PretError::Metrics("success radius must be positive".into()));
    }
    let tl: f64 = walk.windows(2).map(|w| env.distance(w[0], w[1])).sum();
    let last = *walk.last().unwrap();
    let ne = euclid(env.coord(last), env.coord(episode.target));
    let sr = if ne < radius { 1.0 } else { 0.0 };
    let d_short = env
        .metric_dist(episode.start, episode.target)
        .ok_or_else(|| PretError::Metrics("target unreachable from start".into()))?;
    let spl = if d_short > 0.0 {
        sr * d_short / tl.max(d_short)
    } else {
        sr
    };
    let a: Vec<[f64; 3]> = walk.iter().map(|&n| env.coord(n)).collect();
    let b: Vec<[f64; 3]> = episode.gt_path.iter().map(|&n| env.coord(n)).collect();
    let ndtw = (-dtw(&a, &b)? / (b.len() as f64 * radius)).exp();
    let sdtw = sr * ndtw;
    Ok(Metrics {
        tl,
        ne,
        sr,
        spl,
        ndtw,
        sdtw,
    })
}
