//! Fixed-length bitsets with word-level window access.

use std::fmt;

/// A fixed-length set of indices `0..len`, stored as packed 64-bit words.
///
/// Bits at positions `>= len` in the last word are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitSet {
    len: usize,
    words: Vec<u64>,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        BitSet { len, words: vec![0; word_count(len)] }
    }

    pub fn full(len: usize) -> Self {
        let mut s = BitSet { len, words: vec![u64::MAX; word_count(len)] };
        s.mask_tail();
        s
    }

    /// Builds a set from raw words; stray bits past `len` are cleared.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(word_count(len), 0);
        let mut s = BitSet { len, words };
        s.mask_tail();
        s
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.insert(i)
        } else {
            self.remove(i)
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len
    }

    pub fn union_with(&mut self, other: &BitSet) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &BitSet) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn difference_with(&mut self, other: &BitSet) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn complement(&self) -> BitSet {
        let words = self.words.iter().map(|w| !w).collect();
        BitSet::from_words(self.len, words)
    }

    pub fn is_subset(&self, other: &BitSet) -> bool {
        assert_eq!(self.len, other.len);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn symmetric_difference_count(&self, other: &BitSet) -> usize {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Returns the 64 bits starting at position `start`; bit `j` of the result is
    /// bit `start + j` of the set if that position lies in `[lo, hi)`, else zero.
    pub fn read_window(&self, start: i64, lo: i64, hi: i64) -> u64 {
        let lo = lo.max(start).max(0);
        let hi = hi.min(start + 64).min(self.len as i64);
        if lo >= hi {
            return 0;
        }
        let raw = self.read_raw(start);
        let first = (lo - start) as u32;
        let n = (hi - lo) as u32;
        let mask = if n == 64 { u64::MAX } else { ((1u64 << n) - 1) << first };
        raw & mask
    }

    fn read_raw(&self, start: i64) -> u64 {
        let word_at = |i: i64| -> u64 {
            if i < 0 || i as usize >= self.words.len() {
                0
            } else {
                self.words[i as usize]
            }
        };
        let wi = start.div_euclid(64);
        let off = start.rem_euclid(64) as u32;
        if off == 0 {
            word_at(wi)
        } else {
            (word_at(wi) >> off) | (word_at(wi + 1) << (64 - off))
        }
    }

    /// ORs the low `n` bits of `value` into positions `pos..pos + n`.
    pub fn or_window(&mut self, pos: usize, value: u64, n: u32) {
        if n == 0 {
            return;
        }
        assert!(pos + n as usize <= self.len);
        let value = if n == 64 { value } else { value & ((1u64 << n) - 1) };
        let wi = pos / 64;
        let off = (pos % 64) as u32;
        self.words[wi] |= value << off;
        if off != 0 && off + n > 64 {
            self.words[wi + 1] |= value >> (64 - off);
        }
    }
}

impl fmt::Debug for BitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitSet(len={}, ones=", self.len)?;
        f.debug_set().entries(self.iter_ones().take(32)).finish()?;
        if self.count() > 32 {
            write!(f, "...")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_masks_tail() {
        let s = BitSet::full(70);
        assert_eq!(s.count(), 70);
        assert_eq!(s.complement().count(), 0);
    }

    #[test]
    fn iter_ones_in_order() {
        let mut s = BitSet::new(200);
        for i in [0, 63, 64, 130, 199] {
            s.insert(i);
        }
        assert_eq!(s.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 130, 199]);
    }

    proptest! {
        #[test]
        fn read_window_matches_bitwise(
            bits in proptest::collection::vec(any::<bool>(), 1..300),
            start in -80i64..320,
            lo in -10i64..310,
            span in 0i64..200,
        ) {
            let mut s = BitSet::new(bits.len());
            for (i, &b) in bits.iter().enumerate() {
                s.set(i, b);
            }
            let hi = lo + span;
            let got = s.read_window(start, lo, hi);
            for j in 0..64i64 {
                let p = start + j;
                let expect = p >= lo && p < hi && p >= 0 && (p as usize) < bits.len() && bits[p as usize];
                prop_assert_eq!((got >> j) & 1 == 1, expect);
            }
        }

        #[test]
        fn or_window_matches_bitwise(len in 1usize..300, pos in 0usize..300, n in 0u32..=64, value: u64) {
            prop_assume!(pos + n as usize <= len);
            let mut s = BitSet::new(len);
            s.or_window(pos, value, n);
            for i in 0..len {
                let expect = i >= pos && i < pos + n as usize && (value >> (i - pos)) & 1 == 1;
                prop_assert_eq!(s.contains(i), expect);
            }
        }
    }
}
