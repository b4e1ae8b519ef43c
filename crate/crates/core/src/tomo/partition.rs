use crate::error::{Error, Result};

/// Staggered split of projection angles: subset `k` holds `{k, k+N, k+2N, …}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetPartition {
    subsets: Vec<Vec<usize>>,
    n_angles: usize,
}

impl SubsetPartition {
    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn subset(&self, k: usize) -> &[usize] {
        &self.subsets[k]
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }
}

pub fn build_staggered_partition(n_angles: usize, n_subsets: usize) -> Result<SubsetPartition> {
    if n_subsets < 1 || n_subsets > n_angles {
        return Err(Error::param(format!(
            "number of subsets must be in [1, {n_angles}], got {n_subsets}"
        )));
    }
    let subsets = (0..n_subsets)
        .map(|k| (k..n_angles).step_by(n_subsets).collect())
        .collect();
    Ok(SubsetPartition { subsets, n_angles })
}
