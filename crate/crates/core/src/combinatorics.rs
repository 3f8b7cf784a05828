//! Binomial coefficients and lexicographic subset enumeration.
//!
//! User sets are represented as sorted `Vec<usize>` of zero-based user
//! indices. Every enumeration in the crate goes through [`subsets`], which
//! yields subsets in lexicographic order so that subfile and segment
//! identities are reproducible across runs.

use itertools::Itertools;

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// All `k`-subsets of `items`, lexicographic in the order of `items`.
pub fn subsets_of(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k > items.len() {
        return Vec::new();
    }
    items.iter().copied().combinations(k).collect()
}

/// All `k`-subsets of `0..n`, lexicographic.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let items: Vec<usize> = (0..n).collect();
    subsets_of(&items, k)
}

/// Every nonempty subset of `0..n` as a bitmask, in increasing mask order.
pub fn nonempty_masks(n: usize) -> impl Iterator<Item = u64> {
    assert!(n < 64, "mask enumeration limited to 63 elements");
    1..(1u64 << n)
}

/// `true` if sorted slice `small` is contained in sorted slice `big`.
pub fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

/// Formats a zero-based user set with one-based labels, e.g. `[0, 2]` -> `"13"`.
///
/// Labels above 9 are comma-separated to stay unambiguous.
pub fn label(set: &[usize]) -> String {
    if set.iter().all(|&u| u < 9) {
        set.iter().map(|u| (u + 1).to_string()).collect()
    } else {
        set.iter().map(|u| (u + 1).to_string()).join(",")
    }
}
