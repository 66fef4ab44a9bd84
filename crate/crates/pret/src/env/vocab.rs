use std::collections::HashMap;

use crate::error::{PretError, Result};

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

/// Bijective token <-> id mapping with fixed reserved ids.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    map: HashMap<String, u32>,
}

pub const MOTION_WORDS: &[&str] = &[
    "go", "forward", "turn", "left", "right", "around", "to", "stop", "at", ".",
];

impl Vocab {
    /// The navigation-instruction vocabulary: reserved tokens, motion words,
    /// and one word per landmark label.
    pub fn navigation(landmark_count: usize) -> Self {
        let mut tokens: Vec<String> = vec!["[PAD]".into(), "[MASK]".into(), "[CLS]".into(), "[SEP]".into()];
        tokens.extend(MOTION_WORDS.iter().map(|s| s.to_string()));
        tokens.extend((0..landmark_count).map(|i| format!("lm{i}")));
        let map = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, map }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.map
            .get(token)
            .copied()
            .ok_or_else(|| PretError::Vocab(token.to_string()))
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| PretError::Vocab(format!("id {id}")))
    }

    pub fn landmark_token(&self, label: u16) -> Result<u32> {
        self.id(&format!("lm{label}"))
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let words: Result<Vec<&str>> = ids.iter().map(|&i| self.token(i)).collect();
        Ok(words?.join(" "))
    }
}
