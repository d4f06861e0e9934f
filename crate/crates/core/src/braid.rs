//! Permutation analysis of eigenvalue braids.
//!
//! A closed loop in the `z` plane returns the spectrum to itself up to a
//! permutation `pi` of the labels, defined by `E_n(0) = E_{pi(n)}(1)`. Every
//! simple exceptional point enclosed by the loop contributes one
//! transposition, so the number of enclosed EPs is `N - n_cycles(pi)`.
//!
//! Composition follows the usual convention: `a.compose(&b)` maps `n` to
//! `a(b(n))`. Tracking loop `A` and then loop `B` from a shared base point
//! gives `pi_A.compose(&pi_B)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(mapping: Vec<usize>) -> Result<Self> {
        Self::new(mapping)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.mapping
    }
}

impl Permutation {
    /// Validates that `mapping` is a bijection of `0..mapping.len()`.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n {
                return Err(Error::NotAPermutation(format!("index {m} out of range 0..{n}")));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::NotAPermutation(format!("index {m} repeated")));
            }
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    /// Builds a permutation from disjoint cycles; unlisted indices are fixed.
    pub fn from_cycles(n: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut mapping: Vec<usize> = (0..n).collect();
        let mut touched = vec![false; n];
        for cycle in cycles {
            for (k, &a) in cycle.iter().enumerate() {
                if a >= n || std::mem::replace(&mut touched[a], true) {
                    return Err(Error::NotAPermutation(format!("bad cycle {cycle:?}")));
                }
                mapping[a] = cycle[(k + 1) % cycle.len()];
            }
        }
        Ok(Self { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn apply(&self, n: usize) -> usize {
        self.mapping[n]
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Self { mapping: inv }
    }

    /// `n -> self(other(n))`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self {
            mapping: other.mapping.iter().map(|&m| self.mapping[m]).collect(),
        })
    }

    /// Canonical cycle decomposition, fixed points included as 1-cycles.
    ///
    /// Each cycle starts at its smallest element and lists `c, pi(c),
    /// pi(pi(c)), ...`; cycles are sorted by their first element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut c = start;
            while !seen[c] {
                seen[c] = true;
                cycle.push(c);
                c = self.mapping[c];
            }
            out.push(cycle);
        }
        out
    }

    /// Cycles of length at least two.
    pub fn nontrivial_cycles(&self) -> Vec<Vec<usize>> {
        self.cycles().into_iter().filter(|c| c.len() > 1).collect()
    }

    /// Minimal number of transpositions whose product is `self`.
    pub fn transposition_count(&self) -> usize {
        self.len() - self.cycles().len()
    }

    /// Sorted lengths of the non-trivial cycles.
    pub fn cycle_type(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.nontrivial_cycles().iter().map(Vec::len).collect();
        t.sort_unstable();
        t
    }
}

impl fmt::Display for Permutation {
    /// Cycle notation, `()` for the identity.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.nontrivial_cycles();
        if cycles.is_empty() {
            return write!(f, "()");
        }
        for c in cycles {
            let parts: Vec<String> = c.iter().map(usize::to_string).collect();
            write!(f, "({})", parts.join(" "))?;
        }
        Ok(())
    }
}

/// Validates `mapping` and returns its canonical cycles.
pub fn cycle_decomposition(mapping: &[usize]) -> Result<Vec<Vec<usize>>> {
    Ok(Permutation::new(mapping.to_vec())?.cycles())
}

/// Number of exceptional points encircled: `N - n_cycles(pi)`.
pub fn ep_count(pi: &Permutation) -> usize {
    pi.transposition_count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleOrder {
    pub cycle: Vec<usize>,
    /// Mean number of non-member levels between cyclically consecutive members.
    pub order: f64,
    pub transpositions: usize,
}

/// Swap orders of a permutation relative to a real-axis level ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapOrderReport {
    pub cycles: Vec<CycleOrder>,
    /// Transposition-weighted mean of the per-cycle orders; `None` for the
    /// identity.
    pub overall_average: Option<f64>,
    pub ep_count: usize,
    /// `rank[i]` is the position of label `i` in ascending order.
    pub reference_ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_energies: Option<Vec<f64>>,
}

impl SwapOrderReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ranks of `values` in ascending order (`ranks[i]` = position of `values[i]`).
pub fn ascending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

/// Per-cycle swap orders.
///
/// For every pair of cyclically consecutive members `(c, pi(c))` the order is
/// the number of levels ranked strictly between them that are not themselves
/// members of the cycle; a cycle's order is the arithmetic mean over its
/// pairs. The overall average weights each cycle by its transposition count
/// (`length - 1`).
pub fn swap_orders(pi: &Permutation, ranks: &[usize]) -> Result<SwapOrderReport> {
    let n = pi.len();
    if ranks.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: ranks.len(),
        });
    }
    // ranks must themselves be a permutation
    Permutation::new(ranks.to_vec())?;

    let mut cycles = Vec::new();
    let mut weighted = 0.0;
    let mut weight = 0usize;
    for cycle in pi.nontrivial_cycles() {
        let mut member = vec![false; n];
        for &c in &cycle {
            member[ranks[c]] = true;
        }
        let k = cycle.len();
        let mut total = 0usize;
        for j in 0..k {
            let (a, b) = (ranks[cycle[j]], ranks[cycle[(j + 1) % k]]);
            let (lo, hi) = (a.min(b), a.max(b));
            total += (lo + 1..hi).filter(|&r| !member[r]).count();
        }
        let order = total as f64 / k as f64;
        weighted += order * (k - 1) as f64;
        weight += k - 1;
        cycles.push(CycleOrder {
            cycle,
            order,
            transpositions: k - 1,
        });
    }
    Ok(SwapOrderReport {
        cycles,
        overall_average: (weight > 0).then(|| weighted / weight as f64),
        ep_count: weight,
        reference_ranks: ranks.to_vec(),
        reference_energies: None,
    })
}
