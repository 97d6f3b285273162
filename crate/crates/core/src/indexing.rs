//! Index arithmetic and level partitions.
//!
//! Every public index is 1-based. A 2-D position `(l1, l2)` in an
//! `n1 x n2` grid maps to the flat index `l = l1 + n1 * (l2 - 1)`, i.e. the
//! first coordinate runs fastest (column-major stacking of an image).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexPair {
    pub l: usize,
    pub l1: usize,
    pub l2: usize,
}

pub fn index_to_pair(l: usize, n1: usize, n2: usize) -> Result<IndexPair> {
    let bound = n1 * n2;
    if l == 0 || l > bound {
        return Err(Error::Range { index: l, bound });
    }
    Ok(IndexPair {
        l,
        l1: (l - 1) % n1 + 1,
        l2: (l - 1) / n1 + 1,
    })
}

pub fn pair_to_index(l1: usize, l2: usize, n1: usize, n2: usize) -> Result<usize> {
    if l1 == 0 || l1 > n1 {
        return Err(Error::Range { index: l1, bound: n1 });
    }
    if l2 == 0 || l2 > n2 {
        return Err(Error::Range { index: l2, bound: n2 });
    }
    Ok(l1 + n1 * (l2 - 1))
}

/// Flat indices of `s1 x s2`, with the second set in the outer loop so the
/// result follows column-major order.
pub fn flatten_cartesian(s1: &[usize], s2: &[usize], n1: usize, n2: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(s1.len() * s2.len());
    for &k in s2 {
        for &j in s1 {
            out.push(pair_to_index(j, k, n1, n2)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Dyadic1d,
    Iso2d,
    Aniso2d,
}

/// Ordered, disjoint cover of `[N_total]`.
///
/// `levels[0]` is the coarsest level (`T_0`) for the dyadic and isotropic
/// kinds. For the anisotropic kind the level at position `p` corresponds to
/// the pair of 1-D levels `(p % (r + 1), p / (r + 1))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelPartition {
    pub kind: PartitionKind,
    pub r: u32,
    pub levels: Vec<Vec<usize>>,
}

/// 1-D dyadic level `T_l`: `{1}` for `l = 0`, else `2^(l-1)+1 ..= 2^l`.
pub fn dyadic_level(l: u32) -> Vec<usize> {
    if l == 0 {
        vec![1]
    } else {
        ((1usize << (l - 1)) + 1..=(1usize << l)).collect()
    }
}

/// `T_{<l} = [2^(l-1)]` for `l >= 1`, empty for `l = 0`.
pub fn dyadic_below(l: u32) -> Vec<usize> {
    if l == 0 {
        Vec::new()
    } else {
        (1..=(1usize << (l - 1))).collect()
    }
}

/// Which 1-D dyadic level contains the 1-based index `i`.
pub fn dyadic_level_of(i: usize) -> u32 {
    debug_assert!(i >= 1);
    if i == 1 {
        0
    } else {
        usize::BITS - (i - 1).leading_zeros()
    }
}

pub fn build_levels(kind: PartitionKind, r: u32) -> LevelPartition {
    let n = 1usize << r;
    let levels = match kind {
        PartitionKind::Dyadic1d => (0..=r).map(dyadic_level).collect(),
        PartitionKind::Iso2d => {
            let mut levels = vec![vec![1]];
            for l in 1..=r {
                let tl = dyadic_level(l);
                let below = dyadic_below(l);
                let mut level = Vec::with_capacity(3 * tl.len() * tl.len());
                // subband order (01), (11), (10)
                level.extend(flatten_cartesian(&tl, &below, n, n).expect("in range"));
                level.extend(flatten_cartesian(&tl, &tl, n, n).expect("in range"));
                level.extend(flatten_cartesian(&below, &tl, n, n).expect("in range"));
                levels.push(level);
            }
            levels
        }
        PartitionKind::Aniso2d => {
            let mut levels = Vec::with_capacity(((r + 1) * (r + 1)) as usize);
            for l2 in 0..=r {
                for l1 in 0..=r {
                    levels.push(
                        flatten_cartesian(&dyadic_level(l1), &dyadic_level(l2), n, n)
                            .expect("in range"),
                    );
                }
            }
            levels
        }
    };
    LevelPartition { kind, r, levels }
}

impl LevelPartition {
    pub fn total(&self) -> usize {
        match self.kind {
            PartitionKind::Dyadic1d => 1 << self.r,
            PartitionKind::Iso2d | PartitionKind::Aniso2d => 1 << (2 * self.r),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Map from 1-based index to the position of its level.
    pub fn level_lookup(&self) -> Vec<usize> {
        let mut lookup = vec![usize::MAX; self.total() + 1];
        for (t, level) in self.levels.iter().enumerate() {
            for &i in level {
                lookup[i] = t;
            }
        }
        lookup
    }

    /// The pair of 1-D levels behind an anisotropic level position.
    pub fn aniso_pair(&self, position: usize) -> (u32, u32) {
        let side = self.r as usize + 1;
        ((position % side) as u32, (position / side) as u32)
    }
}
