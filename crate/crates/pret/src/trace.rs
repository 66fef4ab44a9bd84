//! Versioned line-delimited episode traces: one header record, one record
//! per planner step, replayable against a checkpoint for exact score
//! verification.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvGraph, Episode};
use crate::error::{PretError, Result};
use crate::model::Model;
use crate::planner::{EpisodeRun, Planner, StepRecord};
use crate::tensor::Scalar;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub env_seed: u64,
    pub episode: Episode,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Step(StepRecord),
}

pub fn write_trace(
    path: &Path,
    config_hash: &str,
    env: &EnvGraph,
    episode: &Episode,
    run: &EpisodeRun,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let mut emit = |r: &Record| -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| PretError::Parse(e.to_string()))?;
        writeln!(f, "{line}")?;
        Ok(())
    };
    emit(&Record::Header(TraceHeader {
        schema: "pret-trace".into(),
        version: TRACE_SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        env_seed: env.seed,
        episode: episode.clone(),
    }))?;
    for s in &run.steps {
        emit(&Record::Step(s.clone()))?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut header = None;
    let mut steps = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| PretError::Parse(e.to_string()))? {
            Record::Header(h) => {
                if h.schema != "pret-trace" || h.version != TRACE_SCHEMA_VERSION {
                    return Err(PretError::Parse(format!(
                        "unsupported trace schema {} v{}",
                        h.schema, h.version
                    )));
                }
                header = Some(h);
            }
            Record::Step(s) => steps.push(s),
        }
    }
    let header = header.ok_or_else(|| PretError::Parse("trace lacks a header".into()))?;
    Ok((header, steps))
}

/// Re-run the recorded episode forcing each recorded action and return the
/// largest absolute deviation between recorded and recomputed scores.
pub fn replay<T: Scalar>(
    model: &Model<T>,
    env: &EnvGraph,
    header: &TraceHeader,
    steps: &[StepRecord],
) -> Result<f64> {
    if model.cfg.hash() != header.config_hash {
        return Err(PretError::Integrity(
            "trace was produced under a different configuration".into(),
        ));
    }
    let mut planner = Planner::new(model, env, &header.episode)?;
    let mut worst: f64 = 0.0;
    for rec in steps {
        if rec.forced_stop {
            planner.force_stop(rec.step);
            continue;
        }
        let forced = rec
            .candidates
            .iter()
            .position(|a| *a == rec.action)
            .ok_or_else(|| PretError::Integrity("recorded action not in candidate set".into()))?;
        let got = planner.step(rec.step, |_, _| forced)?;
        if got.candidates != rec.candidates {
            return Err(PretError::Integrity(format!(
                "candidate set diverged at step {}",
                rec.step
            )));
        }
        for (a, b) in got.scores.iter().zip(&rec.scores) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in got.probs.iter().zip(&rec.probs) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::env::{generate_environment, sample_episode, GenParams, Vocab};
    use crate::planner::{run_episode, Policy};

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

    #[test]
    fn roundtrip_replay_and_determinism() {
        let cfg = small_cfg();
        let model: Model<f32> = Model::new(&cfg, 5).unwrap();
        let env = generate_environment(3, &GenParams::default()).unwrap();
        let vocab = Vocab::navigation(cfg.env.landmark_count);
        let ep = sample_episode(&env, &vocab, 1, &cfg.episode_params()).unwrap();
        let run = run_episode(&model, &env, &ep, &Policy::Greedy, 10).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_trace(&p1, &cfg.hash(), &env, &ep, &run).unwrap();
        write_trace(&p2, &cfg.hash(), &env, &ep, &run).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let content = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(content.lines().count(), run.steps.len() + 1);
        assert!(content.lines().next().unwrap().contains("\"version\":1"));

        let (header, steps) = read_trace(&p1).unwrap();
        assert_eq!(steps.len(), run.steps.len());
        assert_eq!(header.episode, ep);
        let worst = replay(&model, &env, &header, &steps).unwrap();
        assert!(worst <= 1e-6, "replay deviation {worst}");

        // different weights must be rejected or diverge
        let other: Model<f32> = Model::new(&cfg, 6).unwrap();
        assert!(replay(&other, &env, &header, &steps).is_ok()); // same config hash
        let mut cfg2 = cfg.clone();
        cfg2.train.lr = 9.9e-4;
        let other2: Model<f32> = Model::new(&cfg2, 5).unwrap();
        assert!(replay(&other2, &env, &header, &steps).is_err());
    }
}
