use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of auxiliary operators (≈ 320 MB of state).
pub const DEFAULT_ADO_BUDGET: u128 = 5_000_000;

/// Tag identifying the index ordering produced by [`build_space`]; stored in
/// checkpoints so that foreign orderings are rejected.
pub const ORDERING_TAG: u32 = 1;

/// Depth truncation of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationSpec {
    /// Maximum total excitation `L = max Σ_k (m_k + n_k)`.
    pub depth: usize,
    /// Maximum value of any single index `N_b`.
    pub per_mode_cap: usize,
}

impl TruncationSpec {
    pub fn new(depth: usize, per_mode_cap: usize) -> Result<Self> {
        let t = Self { depth, per_mode_cap };
        t.validate()?;
        Ok(t)
    }

    /// Depth `L` with no per-mode cap beyond `L` itself.
    pub fn depth(depth: usize) -> Self {
        Self {
            depth,
            per_mode_cap: depth.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth > 0 && !(1..=self.depth).contains(&self.per_mode_cap) {
            return Err(Error::invalid(format!(
                "per-mode cap N_b = {} must lie in [1, L = {}]",
                self.per_mode_cap, self.depth
            )));
        }
        if self.depth > u8::MAX as usize {
            return Err(Error::invalid("hierarchy depth above 255 is not supported"));
        }
        Ok(())
    }
}

/// Number of indices a truncation produces for `modes` quasimode pairs,
/// computed exactly without enumeration.
pub fn estimate_size(modes: usize, trunc: &TruncationSpec) -> u128 {
    let l = trunc.depth;
    let cap = trunc.per_mode_cap.min(l);
    // ways[t] = number of occupation vectors over the processed symbols with total t
    let mut ways = vec![0u128; l + 1];
    ways[0] = 1;
    for _ in 0..2 * modes {
        let mut next = vec![0u128; l + 1];
        for (t, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for v in 0..=cap.min(l - t) {
                next[t + v] = next[t + v].saturating_add(w);
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
}

/// A neighbor relation: the partner index differs by one in `symbol`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    /// Symbol `s`: `s < K` addresses `m_s`, `s ≥ K` addresses `n_{s−K}`.
    pub symbol: u32,
    /// Position of the partner index.
    pub target: u32,
}

/// Enumerated multi-indices `(m, n)` of the truncated hierarchy.
///
/// Indices are ordered by total excitation and, within one total, in
/// descending lexicographic order of the occupation vector
/// `(m_1, …, m_K, n_1, …, n_K)`. Position 0 is the physical density matrix.
#[derive(Debug, Clone)]
pub struct HierarchySpace {
    modes: usize,
    trunc: TruncationSpec,
    occupations: Vec<u8>,
    raise_offsets: Vec<u32>,
    raise: Vec<Link>,
    lower_offsets: Vec<u32>,
    lower: Vec<Link>,
}

impl HierarchySpace {
    /// Number of quasimode pairs `K`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn truncation(&self) -> TruncationSpec {
        self.trunc
    }

    /// Number of symbols `2K`.
    pub fn symbols(&self) -> usize {
        2 * self.modes
    }

    /// Number of auxiliary operators (including the physical one).
    pub fn len(&self) -> usize {
        self.occupations.len() / self.symbols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Occupation vector `(m_1, …, m_K, n_1, …, n_K)` of index `i`.
    pub fn occupation(&self, i: usize) -> &[u8] {
        let s = self.symbols();
        &self.occupations[i * s..(i + 1) * s]
    }

    /// Total excitation `Σ_k (m_k + n_k)` of index `i`.
    pub fn level(&self, i: usize) -> usize {
        self.occupation(i).iter().map(|&v| v as usize).sum()
    }

    /// Partners reached by incrementing one symbol of index `i`.
    pub fn raising(&self, i: usize) -> &[Link] {
        &self.raise[self.raise_offsets[i] as usize..self.raise_offsets[i + 1] as usize]
    }

    /// Partners reached by decrementing one symbol of index `i`.
    pub fn lowering(&self, i: usize) -> &[Link] {
        &self.lower[self.lower_offsets[i] as usize..self.lower_offsets[i + 1] as usize]
    }

    /// Position of an occupation vector, if it is inside the truncation.
    pub fn position(&self, occupation: &[u8]) -> Option<usize> {
        if occupation.len() != self.symbols() {
            return None;
        }
        (0..self.len()).find(|&i| self.occupation(i) == occupation)
    }

    /// Verifies that every raising link is mirrored by a lowering link and
    /// vice versa; returns the first offending `(index, symbol)`.
    pub fn check_links(&self) -> std::result::Result<(), (usize, u32)> {
        for i in 0..self.len() {
            for l in self.raising(i) {
                let back = self.lowering(l.target as usize);
                if !back.iter().any(|b| b.symbol == l.symbol && b.target as usize == i) {
                    return Err((i, l.symbol));
                }
            }
            for l in self.lowering(i) {
                let back = self.raising(l.target as usize);
                if !back.iter().any(|b| b.symbol == l.symbol && b.target as usize == i) {
                    return Err((i, l.symbol));
                }
            }
        }
        Ok(())
    }
}

/// Enumerates the truncated hierarchy for `modes` quasimodes, refusing
/// spaces larger than [`DEFAULT_ADO_BUDGET`].
pub fn build_space(modes: usize, trunc: &TruncationSpec) -> Result<HierarchySpace> {
    build_space_with_budget(modes, trunc, DEFAULT_ADO_BUDGET)
}

pub fn build_space_with_budget(modes: usize, trunc: &TruncationSpec, budget: u128) -> Result<HierarchySpace> {
    if modes == 0 {
        return Err(Error::invalid("hierarchy needs at least one mode"));
    }
    trunc.validate()?;
    let estimated = estimate_size(modes, trunc);
    if estimated > budget {
        return Err(Error::BudgetExceeded { estimated, budget });
    }
    if estimated > u32::MAX as u128 {
        return Err(Error::BudgetExceeded {
            estimated,
            budget: u32::MAX as u128,
        });
    }

    let symbols = 2 * modes;
    let cap = trunc.per_mode_cap.min(trunc.depth) as u8;
    let mut occupations: Vec<u8> = Vec::with_capacity(estimated as usize * symbols);
    let mut current = vec![0u8; symbols];
    for total in 0..=trunc.depth {
        enumerate_level(&mut current, 0, total, cap, &mut occupations);
    }
    let n = occupations.len() / symbols;
    debug_assert_eq!(n as u128, estimated);

    // lookup by sparse signature (symbol, count) pairs
    let key = |occ: &[u8]| -> Vec<(u16, u8)> {
        occ.iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(s, &v)| (s as u16, v))
            .collect()
    };
    let lookup: HashMap<Vec<(u16, u8)>, u32> = (0..n)
        .map(|i| (key(&occupations[i * symbols..(i + 1) * symbols]), i as u32))
        .collect();

    let mut raise_offsets = Vec::with_capacity(n + 1);
    let mut lower_offsets = Vec::with_capacity(n + 1);
    let mut raise = Vec::new();
    let mut lower = Vec::new();
    raise_offsets.push(0u32);
    lower_offsets.push(0u32);
    let mut scratch = vec![0u8; symbols];
    for i in 0..n {
        scratch.copy_from_slice(&occupations[i * symbols..(i + 1) * symbols]);
        for s in 0..symbols {
            if scratch[s] < cap {
                scratch[s] += 1;
                if let Some(&j) = lookup.get(&key(&scratch)) {
                    raise.push(Link {
                        symbol: s as u32,
                        target: j,
                    });
                }
                scratch[s] -= 1;
            }
            if scratch[s] > 0 {
                scratch[s] -= 1;
                let j = lookup[&key(&scratch)];
                lower.push(Link {
                    symbol: s as u32,
                    target: j,
                });
                scratch[s] += 1;
            }
        }
        raise_offsets.push(raise.len() as u32);
        lower_offsets.push(lower.len() as u32);
    }

    Ok(HierarchySpace {
        modes,
        trunc: *trunc,
        occupations,
        raise_offsets,
        raise,
        lower_offsets,
        lower,
    })
}

/// Appends all occupation vectors with the given total, in descending
/// lexicographic order.
fn enumerate_level(current: &mut [u8], pos: usize, remaining: usize, cap: u8, out: &mut Vec<u8>) {
    if pos == current.len() {
        if remaining == 0 {
            out.extend_from_slice(current);
        }
        return;
    }
    let slots_after = (current.len() - pos - 1) * cap as usize;
    let hi = remaining.min(cap as usize);
    let lo = remaining.saturating_sub(slots_after);
    for v in (lo..=hi).rev() {
        current[pos] = v as u8;
        enumerate_level(current, pos + 1, remaining - v, cap, out);
    }
    current[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: u128, k: u128) -> u128 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn single_mode_depth_one() {
        let sp = build_space(1, &TruncationSpec::new(1, 1).unwrap()).unwrap();
        assert_eq!(sp.len(), 3);
        assert_eq!(sp.occupation(0), &[0, 0]);
        assert_eq!(sp.occupation(1), &[1, 0]);
        assert_eq!(sp.occupation(2), &[0, 1]);
    }

    #[test]
    fn counts_match_binomial() {
        let sp = build_space(2, &TruncationSpec::new(2, 2).unwrap()).unwrap();
        assert_eq!(sp.len(), 15);
        assert_eq!(estimate_size(31, &TruncationSpec::depth(2)), 2016);
        assert_eq!(estimate_size(31, &TruncationSpec::depth(3)), binomial(65, 3));
        for k in 1..=4 {
            for l in 0..=4 {
                let t = TruncationSpec::depth(l);
                let sp = build_space(k, &t).unwrap();
                assert_eq!(sp.len() as u128, binomial(2 * k as u128 + l as u128, l as u128));
            }
        }
    }

    #[test]
    fn per_mode_cap_restricts_enumeration() {
        let t = TruncationSpec::new(3, 1).unwrap();
        let sp = build_space(2, &t).unwrap();
        // subsets of size ≤ 3 of 4 symbols
        assert_eq!(sp.len(), 1 + 4 + 6 + 4);
        assert_eq!(sp.len() as u128, estimate_size(2, &t));
        assert!((0..sp.len()).all(|i| sp.occupation(i).iter().all(|&v| v <= 1)));
    }

    #[test]
    fn graded_then_descending_lexicographic() {
        let sp = build_space(2, &TruncationSpec::depth(3)).unwrap();
        for i in 1..sp.len() {
            let (a, b) = (sp.occupation(i - 1), sp.occupation(i));
            let (la, lb) = (sp.level(i - 1), sp.level(i));
            assert!(la < lb || (la == lb && a > b));
        }
    }

    #[test]
    fn links_are_mutually_consistent() {
        for k in 1..=3 {
            for l in 0..=4 {
                for cap in 1..=l.max(1) {
                    let t = TruncationSpec {
                        depth: l,
                        per_mode_cap: cap,
                    };
                    let sp = build_space(k, &t).unwrap();
                    assert_eq!(sp.check_links(), Ok(()));
                }
            }
        }
    }

    #[test]
    fn budget_guard() {
        match build_space_with_budget(31, &TruncationSpec::depth(3), 10_000) {
            Err(Error::BudgetExceeded { estimated, budget }) => {
                assert_eq!(estimated, binomial(65, 3));
                assert_eq!(budget, 10_000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_truncations() {
        assert!(TruncationSpec::new(2, 0).is_err());
        assert!(TruncationSpec::new(2, 3).is_err());
        assert!(TruncationSpec::new(0, 0).is_ok());
        assert!(build_space(0, &TruncationSpec::depth(1)).is_err());
    }
}
