//! Index vector and the binary hash tree used by mode-03 ticket retrieval.

use crate::crypto::encoding::FieldWriter;
use crate::crypto::{Digest, IndexValue, Suite};

use super::{KeyChain, KeychainError};

/// Per-interval index values of one chain, plus the epoch tag that salts the tree leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexVector {
    pub values: Vec<IndexValue>,
    pub tag: Digest,
}

impl IndexVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear search used by mode-01 verifiers.
    pub fn position(&self, v: IndexValue) -> Option<usize> {
        self.values.iter().position(|x| *x == v)
    }
}

pub fn build_index_vector(chain: &KeyChain) -> IndexVector {
    index_vector_for(&Suite::default(), chain.intervals(), &chain.zeta[0])
}

pub(crate) fn index_vector_for(suite: &Suite, intervals: u32, zeta0: &Digest) -> IndexVector {
    // The tag is domain separated from H(ζ₀) = ζ₁ so it never equals a chain element.
    let tag = suite.hash_fields(FieldWriter::new().bytes(b"index-tree").key(zeta0));
    IndexVector { values: (0..intervals).map(|k| suite.index_value(k)).collect(), tag }
}

/// Complete binary tree over the index vector. `levels[0]` holds the root,
/// `levels[depth]` the leaves; a parent is `H(left || right)` and leaf `k` is
/// `H(tag || V_k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashTree {
    levels: Vec<Vec<Digest>>,
    values: Vec<IndexValue>,
}

impl HashTree {
    pub fn root(&self) -> Digest {
        self.levels[0][0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.values.len()
    }

    pub fn internal_count(&self) -> usize {
        self.levels[..self.depth()].iter().map(Vec::len).sum()
    }

    pub fn level(&self, depth: usize) -> &[Digest] {
        &self.levels[depth]
    }

    /// Length of the hash vector carried by mode-03 tickets: `log₂|V| − 2`.
    pub fn hash_vector_len(&self) -> usize {
        self.depth() - 2
    }
}

pub fn build_hash_tree(v: &IndexVector) -> Result<HashTree, KeychainError> {
    build_hash_tree_with(&Suite::default(), v)
}

pub(crate) fn build_hash_tree_with(suite: &Suite, v: &IndexVector) -> Result<HashTree, KeychainError> {
    let n = v.len();
    if n < 4 || !n.is_power_of_two() {
        return Err(KeychainError::InvalidArgument("hash tree needs a power-of-two vector of at least 4 values"));
    }
    let leaves: Vec<Digest> = v.values.iter().map(|x| suite.hash(&[v.tag.as_bytes().as_slice(), x.as_bytes()].concat())).collect();
    let mut levels = vec![leaves];
    while levels[0].len() > 1 {
        let parents =
            levels[0].chunks_exact(2).map(|pair| suite.hash(&[pair[0].as_bytes().as_slice(), pair[1].as_bytes()].concat())).collect();
        levels.insert(0, parents);
    }
    Ok(HashTree { levels, values: v.values.clone() })
}

/// Sibling digests along the root-to-leaf path of leaf `k`, for depths
/// `1..=depth-2`. The two deepest levels are left out; the verifier resolves
/// the last four candidates by matching the appended index value.
pub fn select_hash_vector(tree: &HashTree, k: usize) -> Result<Vec<Digest>, KeychainError> {
    if k >= tree.leaf_count() {
        return Err(KeychainError::InvalidArgument("interval index out of range"));
    }
    let d = tree.depth();
    Ok((1..=d - 2).map(|level| tree.levels[level][(k >> (d - level)) ^ 1]).collect())
}

/// Descends from the root following the node whose sibling matches each
/// hash-vector entry, then selects the leaf carrying `appended_index`.
pub fn search_tree(tree: &HashTree, hash_vector: &[Digest], appended_index: IndexValue) -> Result<usize, KeychainError> {
    let d = tree.depth();
    if hash_vector.len() != d - 2 {
        return Err(KeychainError::NotFound);
    }
    let mut node = 0usize;
    for (i, sibling) in hash_vector.iter().enumerate() {
        let level = &tree.levels[i + 1];
        let (left, right) = (2 * node, 2 * node + 1);
        node = if level[right] == *sibling {
            left
        } else if level[left] == *sibling {
            right
        } else {
            return Err(KeychainError::NotFound);
        };
    }
    let first = node << 2;
    (first..first + 4).find(|&leaf| tree.values[leaf] == appended_index).ok_or(KeychainError::NotFound)
}
