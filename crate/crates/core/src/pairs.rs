use serde::{Deserialize, Serialize};

/// Per-query similar (`S_i`) and dissimilar (`D_i`) index lists.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairSets {
    pub similars: Vec<Vec<usize>>,
    pub dissimilars: Vec<Vec<usize>>,
    /// Set when fewer similars than requested were available for some query.
    #[serde(default)]
    pub truncated: bool,
}

impl PairSets {
    pub fn len(&self) -> usize {
        self.similars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.similars.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        self.similars.iter().chain(&self.dissimilars).map(Vec::len).sum()
    }

    /// Checks index validity, `i ∉ S_i`, and label agreement.
    pub fn validate(&self, labels: &[usize]) -> crate::Result<()> {
        if self.similars.len() != labels.len() || self.dissimilars.len() != labels.len() {
            return crate::error::invalid("pair sets do not cover every sample");
        }
        for (i, (s, d)) in self.similars.iter().zip(&self.dissimilars).enumerate() {
            for &j in s {
                if j >= labels.len() || j == i || labels[j] != labels[i] {
                    return crate::error::invalid(format!("bad similar index {j} for query {i}"));
                }
            }
            for &l in d {
                if l >= labels.len() || labels[l] == labels[i] {
                    return crate::error::invalid(format!("bad dissimilar index {l} for query {i}"));
                }
            }
        }
        Ok(())
    }
}
