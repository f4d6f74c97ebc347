//! Dense bit sets over cell indices.

use std::fmt;

const WORD: usize = 64;

/// A set of cells of a fixed-size universe, one bit per cell.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    words: Vec<u64>,
    universe: usize,
}

impl StateSet {
    pub fn empty(universe: usize) -> Self {
        Self { words: vec![0; universe.div_ceil(WORD)], universe }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self { words: vec![!0; universe.div_ceil(WORD)], universe };
        s.trim();
        s
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(universe);
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Clears the bits past the universe in the last word.
    fn trim(&mut self) {
        let rem = self.universe % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn universe(&self) -> usize {
        self.universe
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.universe);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    /// Inserts `i`; returns whether it was absent.
    #[inline]
    pub fn insert(&mut self, i: usize) -> bool {
        assert!(i < self.universe, "index {i} outside universe {}", self.universe);
        let w = &mut self.words[i / WORD];
        let bit = 1u64 << (i % WORD);
        let fresh = *w & bit == 0;
        *w |= bit;
        fresh
    }

    /// Removes `i`; returns whether it was present.
    #[inline]
    pub fn remove(&mut self, i: usize) -> bool {
        debug_assert!(i < self.universe);
        let w = &mut self.words[i / WORD];
        let bit = 1u64 << (i % WORD);
        let present = *w & bit != 0;
        *w &= !bit;
        present
    }

    /// Are all of `start..start+len` members?
    #[inline]
    pub fn contains_range(&self, start: usize, len: usize) -> bool {
        let end = start + len;
        debug_assert!(end <= self.universe);
        let mut i = start;
        while i < end {
            let w = i / WORD;
            let off = i % WORD;
            let take = (WORD - off).min(end - i);
            let mask = if take == WORD { !0 } else { ((1u64 << take) - 1) << off };
            if self.words[w] & mask != mask {
                return false;
            }
            i += take;
        }
        true
    }

    /// Does any member fall in `start..start+len`?
    #[inline]
    pub fn intersects_range(&self, start: usize, len: usize) -> bool {
        let end = start + len;
        let mut i = start;
        while i < end {
            let w = i / WORD;
            let off = i % WORD;
            let take = (WORD - off).min(end - i);
            let mask = if take == WORD { !0 } else { ((1u64 << take) - 1) << off };
            if self.words[w] & mask != 0 {
                return true;
            }
            i += take;
        }
        false
    }

    pub fn insert_range(&mut self, start: usize, len: usize) {
        for i in start..start + len {
            self.insert(i);
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.universe, other.universe, "set universes differ");
    }

    pub fn union_with(&mut self, other: &Self) {
        self.check(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
    }

    pub fn intersect_with(&mut self, other: &Self) {
        self.check(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= b);
    }

    pub fn difference_with(&mut self, other: &Self) {
        self.check(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= !b);
    }

    pub fn complement(&self) -> Self {
        let mut s = Self { words: self.words.iter().map(|w| !w).collect(), universe: self.universe };
        s.trim();
        s
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.difference_with(other);
        s
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.check(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> Iter<'_> {
        Iter { words: &self.words, index: 0, current: self.words.first().copied().unwrap_or(0) }
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_words(universe: usize, words: Vec<u64>) -> Option<Self> {
        if words.len() != universe.div_ceil(WORD) {
            return None;
        }
        let mut s = Self { words, universe };
        s.trim();
        Some(s)
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

pub struct Iter<'a> {
    words: &'a [u64],
    index: usize,
    current: u64,
}

impl Iterator for Iter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.index * WORD + bit);
            }
            self.index += 1;
            if self.index >= self.words.len() {
                return None;
            }
            self.current = self.words[self.index];
        }
    }
}

impl<'a> IntoIterator for &'a StateSet {
    type Item = usize;
    type IntoIter = Iter<'a>;
    fn into_iter(self) -> Iter<'a> {
        self.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn arb_pair() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
        (1usize..300).prop_flat_map(|n| {
            (Just(n), proptest::collection::vec(0..n, 0..n), proptest::collection::vec(0..n, 0..n))
        })
    }

    proptest! {
        #[test]
        fn matches_btreeset((n, a, b) in arb_pair()) {
            let sa = StateSet::from_indices(n, a.iter().copied());
            let sb = StateSet::from_indices(n, b.iter().copied());
            let ra: BTreeSet<usize> = a.into_iter().collect();
            let rb: BTreeSet<usize> = b.into_iter().collect();
            prop_assert_eq!(sa.iter().collect::<Vec<_>>(), ra.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(sa.union(&sb).iter().collect::<BTreeSet<_>>(), &ra | &rb);
            prop_assert_eq!(sa.intersection(&sb).iter().collect::<BTreeSet<_>>(), &ra & &rb);
            prop_assert_eq!(sa.difference(&sb).iter().collect::<BTreeSet<_>>(), &ra - &rb);
            prop_assert_eq!(sa.len(), ra.len());
            prop_assert_eq!(sa.is_subset(&sb), ra.is_subset(&rb));
            let comp: BTreeSet<usize> = (0..n).filter(|i| !ra.contains(i)).collect();
            prop_assert_eq!(sa.complement().iter().collect::<BTreeSet<_>>(), comp);
            // De Morgan
            prop_assert_eq!(sa.union(&sb).complement(), sa.complement().intersection(&sb.complement()));
        }

        #[test]
        fn range_queries((n, a, _b) in arb_pair(), start in 0usize..300, len in 0usize..150) {
            let s = StateSet::from_indices(n, a.iter().copied());
            let start = start % n;
            let len = len.min(n - start);
            prop_assert_eq!(s.contains_range(start, len), (start..start + len).all(|i| s.contains(i)));
            prop_assert_eq!(s.intersects_range(start, len), (start..start + len).any(|i| s.contains(i)));
        }
    }

    #[test]
    fn full_and_empty() {
        let f = StateSet::full(70);
        assert_eq!(f.len(), 70);
        assert_eq!(f.complement(), StateSet::empty(70));
        assert!(StateSet::empty(0).is_empty());
        assert_eq!(StateSet::full(64).len(), 64);
    }
}
