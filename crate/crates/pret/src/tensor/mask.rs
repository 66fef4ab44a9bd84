use crate::error::{PretError, Result};

/// Boolean attention mask: `allowed[r * cols + c]` is true when query row `r`
/// may attend key column `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub rows: usize,
    pub cols: usize,
    pub allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(PretError::Mask(format!(
                "mask buffer length {} does not match {}x{}",
                allowed.len(),
                rows,
                cols
            )));
        }
        let m = Self {
            rows,
            cols,
            allowed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn all_true(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Plain lower-triangular causal mask over `n` tokens.
    pub fn causal(n: usize) -> Self {
        let mut allowed = vec![false; n * n];
        for r in 0..n {
            for c in 0..=r {
                allowed[r * n + c] = true;
            }
        }
        Self {
            rows: n,
            cols: n,
            allowed,
        }
    }

    /// Square merged causal mask over `prefix_len + sum(suffix_lens)` tokens:
    /// the prefix block is lower-triangular, every suffix token attends the
    /// full prefix plus earlier tokens of its own suffix, and never another
    /// suffix.
    pub fn merged(prefix_len: usize, suffix_lens: &[usize]) -> Result<Self> {
        if prefix_len == 0 {
            return Err(PretError::Contract("merged mask needs prefix_len >= 1".into()));
        }
        if suffix_lens.iter().any(|&l| l == 0) {
            return Err(PretError::Contract("zero-length suffix in merged mask".into()));
        }
        let total: usize = prefix_len + suffix_lens.iter().sum::<usize>();
        let mut allowed = vec![false; total * total];
        for r in 0..prefix_len {
            for c in 0..=r {
                allowed[r * total + c] = true;
            }
        }
        let mut base = prefix_len;
        for &len in suffix_lens {
            for i in 0..len {
                let r = base + i;
                for c in 0..prefix_len {
                    allowed[r * total + c] = true;
                }
                for c in base..=r {
                    allowed[r * total + c] = true;
                }
            }
            base += len;
        }
        Ok(Self {
            rows: total,
            cols: total,
            allowed,
        })
    }

    /// The suffix rows of [`AttentionMask::merged`]: queries are the suffix
    /// tokens only, keys are `prefix_len` cached tokens followed by all
    /// suffix tokens. Used by the KV-cached forward pass.
    pub fn merged_suffix_rows(prefix_len: usize, suffix_lens: &[usize]) -> Result<Self> {
        let full = Self::merged(prefix_len, suffix_lens)?;
        Ok(full.slice_rows(prefix_len, full.rows))
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.rows);
        Self {
            rows: end - start,
            cols: self.cols,
            allowed: self.allowed[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn set(&mut self, r: usize, c: usize, allowed: bool) {
        self.allowed[r * self.cols + c] = allowed;
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.allowed[r * self.cols..(r + 1) * self.cols]
    }

    /// Every query row must keep at least one allowed key.
    pub fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            if !self.row(r).iter().any(|&a| a) {
                return Err(PretError::Mask(format!("query row {} has no allowed key", r)));
            }
        }
        Ok(())
    }
}
