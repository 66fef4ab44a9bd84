//! Flat `key = value` configuration with `[section]` headers, two built-in
//! profiles, and a canonical hash tying checkpoints and reports to the exact
//! configuration that produced them.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::env::{GenParams, Layout, ViewParams};
use crate::error::{PretError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub text_layers: usize,
    pub ope_layers: usize,
    pub mam_layers: usize,
    pub ccm_layers: usize,
    /// Score candidates independently (no cross-candidate encoder layer).
    pub ccm_independent: bool,
    pub raw_dim: usize,
    pub k_headings: usize,
    pub k_elevations: usize,
    /// Sinusoidal position table length for path tokens and text.
    pub max_seq: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub n_nodes: usize,
    pub layout: Layout,
    pub spacing: f64,
    pub levels: usize,
    pub landmark_count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub success_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Teacher-forcing weight in the mixed loss.
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub mask_ratio: f64,
    pub episodes: usize,
    pub mlm_steps: usize,
    pub batch: usize,
    /// Step budget per episode at rollout time.
    pub max_steps: usize,
    /// Maximum global gradient norm per optimizer step.
    pub clip: f64,
    /// Passes over the training corpus; the best epoch by validation SPL is
    /// kept.
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub profile: String,
    pub model: ModelConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl Config {
    /// Small profile sized for CPU experiments.
    pub fn desk() -> Self {
        Self {
            profile: "desk".into(),
            model: ModelConfig {
                d_model: 64,
                n_heads: 4,
                text_layers: 2,
                ope_layers: 2,
                mam_layers: 2,
                ccm_layers: 1,
                ccm_independent: false,
                raw_dim: 64,
                k_headings: 12,
                k_elevations: 1,
                max_seq: 128,
            },
            env: EnvConfig {
                n_nodes: 25,
                layout: Layout::Grid,
                spacing: 2.0,
                levels: 1,
                landmark_count: 24,
                min_len: 2,
                max_len: 5,
                success_radius: 1.5,
            },
            train: TrainConfig {
                lambda: 0.2,
                lr: 3e-3,
                weight_decay: 0.01,
                mask_ratio: 0.15,
                episodes: 6000,
                mlm_steps: 500,
                batch: 8,
                max_steps: 12,
                clip: 10.0,
                epochs: 12,
            },
        }
    }

    /// Full-size layer counts and widths; used for cost accounting, not for
    /// CPU training runs.
    pub fn paper_faithful() -> Self {
        let mut c = Self::desk();
        c.profile = "paper-faithful".into();
        c.model = ModelConfig {
            d_model: 768,
            n_heads: 12,
            text_layers: 6,
            ope_layers: 2,
            mam_layers: 4,
            ccm_layers: 1,
            ccm_independent: false,
            raw_dim: 512,
            k_headings: 12,
            k_elevations: 3,
            max_seq: 256,
        };
        c
    }

    pub fn by_profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper-faithful" => Ok(Self::paper_faithful()),
            other => Err(PretError::Config(format!(
                "unknown profile '{other}' (expected 'desk' or 'paper-faithful')"
            ))),
        }
    }

    pub fn vocab_size(&self) -> usize {
        crate::env::Vocab::navigation(self.env.landmark_count).len()
    }

    pub fn view_params(&self) -> ViewParams {
        ViewParams {
            k_headings: self.model.k_headings,
            k_elevations: self.model.k_elevations,
            raw_dim: self.model.raw_dim,
        }
    }

    pub fn gen_params(&self) -> GenParams {
        GenParams {
            n_nodes: self.env.n_nodes,
            layout: self.env.layout,
            spacing: self.env.spacing,
            landmark_count: self.env.landmark_count,
            levels: self.env.levels,
            rgg_radius: 1.6 * self.env.spacing,
        }
    }

    pub fn episode_params(&self) -> crate::env::EpisodeParams {
        crate::env::EpisodeParams {
            min_len: self.env.min_len,
            max_len: self.env.max_len,
            fidelity: crate::env::FidelityMode::Shortest,
            success_radius: self.env.success_radius,
        }
    }

    /// Canonical text form: fixed section and key order, so equal configs
    /// always serialize identically.
    pub fn to_canonical_string(&self) -> String {
        let m = &self.model;
        let e = &self.env;
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "profile = {}", self.profile);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "d_model = {}", m.d_model);
        let _ = writeln!(s, "n_heads = {}", m.n_heads);
        let _ = writeln!(s, "text_layers = {}", m.text_layers);
        let _ = writeln!(s, "ope_layers = {}", m.ope_layers);
        let _ = writeln!(s, "mam_layers = {}", m.mam_layers);
        let _ = writeln!(s, "ccm_layers = {}", m.ccm_layers);
        let _ = writeln!(s, "ccm_independent = {}", m.ccm_independent);
        let _ = writeln!(s, "raw_dim = {}", m.raw_dim);
        let _ = writeln!(s, "k_headings = {}", m.k_headings);
        let _ = writeln!(s, "k_elevations = {}", m.k_elevations);
        let _ = writeln!(s, "max_seq = {}", m.max_seq);
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "n_nodes = {}", e.n_nodes);
        let _ = writeln!(
            s,
            "layout = {}",
            match e.layout {
                Layout::Grid => "grid",
                Layout::RandomGeometric => "rgg",
            }
        );
        let _ = writeln!(s, "spacing = {}", e.spacing);
        let _ = writeln!(s, "levels = {}", e.levels);
        let _ = writeln!(s, "landmark_count = {}", e.landmark_count);
        let _ = writeln!(s, "min_len = {}", e.min_len);
        let _ = writeln!(s, "max_len = {}", e.max_len);
        let _ = writeln!(s, "success_radius = {}", e.success_radius);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "lambda = {}", t.lambda);
        let _ = writeln!(s, "lr = {}", t.lr);
        let _ = writeln!(s, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(s, "mask_ratio = {}", t.mask_ratio);
        let _ = writeln!(s, "episodes = {}", t.episodes);
        let _ = writeln!(s, "mlm_steps = {}", t.mlm_steps);
        let _ = writeln!(s, "batch = {}", t.batch);
        let _ = writeln!(s, "max_steps = {}", t.max_steps);
        let _ = writeln!(s, "clip = {}", t.clip);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        s
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_canonical_string().as_bytes());
        let out = h.finalize();
        let mut s = String::with_capacity(64);
        for b in out {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    /// Parse the `key = value` format; unknown sections or keys are errors.
    /// Keys not present keep the base profile's value (the `profile` key, if
    /// given, must appear before any overridden key).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::desk();
        let mut section = String::new();
        let mut seen_other = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "model" | "env" | "train") {
                    return Err(PretError::Config(format!(
                        "line {}: unknown section [{}]",
                        lineno + 1,
                        section
                    )));
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(PretError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            let err = |what: &str| {
                PretError::Config(format!("line {}: bad {what} '{v}' for key '{k}'", lineno + 1))
            };
            let parse_usize = |v: &str| v.parse::<usize>().map_err(|_| err("integer"));
            let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| err("number"));
            let parse_bool = |v: &str| v.parse::<bool>().map_err(|_| err("bool"));
            match (section.as_str(), k) {
                ("", "profile") => {
                    if seen_other {
                        return Err(PretError::Config(
                            "'profile' must come before other keys".into(),
                        ));
                    }
                    cfg = Config::by_profile(v)?;
                    continue;
                }
                ("model", "d_model") => cfg.model.d_model = parse_usize(v)?,
                ("model", "n_heads") => cfg.model.n_heads = parse_usize(v)?,
                ("model", "text_layers") => cfg.model.text_layers = parse_usize(v)?,
                ("model", "ope_layers") => cfg.model.ope_layers = parse_usize(v)?,
                ("model", "mam_layers") => cfg.model.mam_layers = parse_usize(v)?,
                ("model", "ccm_layers") => cfg.model.ccm_layers = parse_usize(v)?,
                ("model", "ccm_independent") => cfg.model.ccm_independent = parse_bool(v)?,
                ("model", "raw_dim") => cfg.model.raw_dim = parse_usize(v)?,
                ("model", "k_headings") => cfg.model.k_headings = parse_usize(v)?,
                ("model", "k_elevations") => cfg.model.k_elevations = parse_usize(v)?,
                ("model", "max_seq") => cfg.model.max_seq = parse_usize(v)?,
                ("env", "n_nodes") => cfg.env.n_nodes = parse_usize(v)?,
                ("env", "layout") => {
                    cfg.env.layout = match v {
                        "grid" => Layout::Grid,
                        "rgg" => Layout::RandomGeometric,
                        _ => return Err(err("layout")),
                    }
                }
                ("env", "spacing") => cfg.env.spacing = parse_f64(v)?,
                ("env", "levels") => cfg.env.levels = parse_usize(v)?,
                ("env", "landmark_count") => {
                    cfg.env.landmark_count =
                        parse_usize(v)?
                }
                ("env", "min_len") => cfg.env.min_len = parse_usize(v)?,
                ("env", "max_len") => cfg.env.max_len = parse_usize(v)?,
                ("env", "success_radius") => cfg.env.success_radius = parse_f64(v)?,
                ("train", "lambda") => cfg.train.lambda = parse_f64(v)?,
                ("train", "lr") => cfg.train.lr = parse_f64(v)?,
                ("train", "weight_decay") => cfg.train.weight_decay = parse_f64(v)?,
                ("train", "mask_ratio") => cfg.train.mask_ratio = parse_f64(v)?,
                ("train", "episodes") => cfg.train.episodes = parse_usize(v)?,
                ("train", "mlm_steps") => cfg.train.mlm_steps = parse_usize(v)?,
                ("train", "batch") => cfg.train.batch = parse_usize(v)?,
                ("train", "max_steps") => cfg.train.max_steps = parse_usize(v)?,
                ("train", "clip") => cfg.train.clip = parse_f64(v)?,
                ("train", "epochs") => cfg.train.epochs = parse_usize(v)?,
                _ => {
                    return Err(PretError::Config(format!(
                        "line {}: unknown key '{k}' in section [{section}]",
                        lineno + 1
                    )))
                }
            }
            seen_other = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.d_model == 0 || m.n_heads == 0 || m.d_model % m.n_heads != 0 {
            return Err(PretError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                m.d_model, m.n_heads
            )));
        }
        if m.d_model % 2 != 0 {
            return Err(PretError::Config("d_model must be even".into()));
        }
        if self.train.lambda <= 0.0 || self.train.lambda >= 1.0 {
            return Err(PretError::Config(format!(
                "lambda must lie strictly between 0 and 1, got {}",
                self.train.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.train.mask_ratio) || self.train.mask_ratio == 0.0 {
            return Err(PretError::Config(format!(
                "mask_ratio must lie in (0, 1), got {}",
                self.train.mask_ratio
            )));
        }
        if self.train.clip <= 0.0 {
            return Err(PretError::Config(format!(
                "clip must be positive, got {}",
                self.train.clip
            )));
        }
        if self.train.epochs == 0 {
            return Err(PretError::Config("epochs must be at least 1".into()));
        }
        if self.env.min_len == 0 || self.env.min_len > self.env.max_len {
            return Err(PretError::Config(format!(
                "path length bounds {}..={} are invalid",
                self.env.min_len, self.env.max_len
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_hash_stably() {
        for c in [Config::desk(), Config::paper_faithful()] {
            c.validate().unwrap();
            assert_eq!(c.hash(), c.hash());
            assert_eq!(c.hash().len(), 64);
        }
        assert_ne!(Config::desk().hash(), Config::paper_faithful().hash());
    }

    #[test]
    fn parse_roundtrips_canonical_form() {
        let c = Config::desk();
        let parsed = Config::parse(&c.to_canonical_string()).unwrap();
        assert_eq!(c, parsed);
        assert_eq!(c.hash(), parsed.hash());
    }

    #[test]
    fn parse_overrides_and_comments() {
        let c = Config::parse(
            "profile = desk\n[model]\nd_model = 32 # narrow\nn_heads = 2\n[train]\nlambda = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.model.d_model, 32);
        assert_eq!(c.model.n_heads, 2);
        assert_eq!(c.train.lambda, 0.5);
        assert_eq!(c.model.k_headings, Config::desk().model.k_headings);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(Config::parse("[model]\nbogus = 1\n").is_err());
        assert!(Config::parse("[nope]\n").is_err());
        assert!(Config::parse("[model]\nd_model = x\n").is_err());
        assert!(Config::parse("[train]\nlambda = 1.5\n").is_err());
        assert!(Config::parse("[model]\nd_model = 30\nn_heads = 4\n").is_err());
        // profile after overrides would silently discard them
        assert!(Config::parse("[train]\nlr = 0.1\nprofile = desk\n").is_err());
    }
}
