use std::f64::consts::PI;

use crate::error::{PretError, Result};

use super::{wrap_angle, EnvGraph, NodeId, Vocab};

/// Deterministic template speaker: one motion clause per edge (from the turn
/// angle relative to the previous edge) naming the step's destination
/// landmark, terminated by a stop clause naming the target's landmark.
pub fn speak(env: &EnvGraph, path: &[NodeId], vocab: &Vocab) -> Result<Vec<u32>> {
    if path.len() < 2 {
        return Err(PretError::Speaker(format!(
            "path must have at least 2 nodes, got {}",
            path.len()
        )));
    }
    for w in path.windows(2) {
        if !env.has_edge(w[0], w[1]) {
            return Err(PretError::Speaker(format!(
                "path step {} -> {} is not a navigable edge",
                w[0], w[1]
            )));
        }
    }
    let mut words: Vec<String> = Vec::new();
    let mut prev_bearing: Option<f64> = None;
    for w in path.windows(2) {
        let bearing = env.bearing(w[0], w[1]);
        let motion: &[&str] = match prev_bearing {
            None => &["go", "forward"],
            Some(pb) => {
                let turn = wrap_angle(bearing - pb);
                if turn.abs() <= PI / 4.0 {
                    &["go", "forward"]
                } else if turn.abs() >= 3.0 * PI / 4.0 {
                    &["turn", "around"]
                } else if turn > 0.0 {
                    &["turn", "left"]
                } else {
                    &["turn", "right"]
                }
            }
        };
        prev_bearing = Some(bearing);
        words.extend(motion.iter().map(|s| s.to_string()));
        words.push("to".into());
        words.push(format!("lm{}", env.landmark(w[1])));
        words.push(".".into());
    }
    let target = *path.last().unwrap();
    words.extend(["stop".into(), "at".into(), format!("lm{}", env.landmark(target)), ".".into()]);
    words.iter().map(|w| vocab.id(w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GenParams};

    fn setup() -> (EnvGraph, Vocab) {
        let env = generate_environment(5, &GenParams::default()).unwrap();
        let vocab = Vocab::navigation(24);
        (env, vocab)
    }

    #[test]
    fn straight_path_template() {
        let (env, vocab) = setup();
        // 0 -> 1 -> 2 along the bottom row: straight
        let toks = speak(&env, &[NodeId(0), NodeId(1), NodeId(2)], &vocab).unwrap();
        let l1 = format!("lm{}", env.landmark(NodeId(1)));
        let l2 = format!("lm{}", env.landmark(NodeId(2)));
        let expect = format!("go forward to {l1} . go forward to {l2} . stop at {l2} .");
        assert_eq!(vocab.decode(&toks).unwrap(), expect);
    }

    #[test]
    fn turn_words_flip_on_reversed_path() {
        let (env, vocab) = setup();
        // L-shaped path: 0 -> 1 -> 6 (right then up = left turn);
        // the reverse path turns the other way
        let fwd = speak(&env, &[NodeId(0), NodeId(1), NodeId(6)], &vocab).unwrap();
        let rev = speak(&env, &[NodeId(6), NodeId(1), NodeId(0)], &vocab).unwrap();
        let fwd_s = vocab.decode(&fwd).unwrap();
        let rev_s = vocab.decode(&rev).unwrap();
        assert!(fwd_s.contains("turn left"), "{fwd_s}");
        assert!(rev_s.contains("turn right"), "{rev_s}");
    }

    #[test]
    fn deterministic_and_short_path_errors() {
        let (env, vocab) = setup();
        let a = speak(&env, &[NodeId(3), NodeId(4)], &vocab).unwrap();
        let b = speak(&env, &[NodeId(3), NodeId(4)], &vocab).unwrap();
        assert_eq!(a, b);
        assert!(speak(&env, &[NodeId(3)], &vocab).is_err());
    }
}
