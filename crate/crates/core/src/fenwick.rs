//! Binary indexed tree over non-negative counts.

/// Prefix-count structure supporting point updates and prefix sums in
/// O(log n).
#[derive(Clone, Debug)]
pub struct FenwickTree {
    tree: Vec<i64>,
}

impl FenwickTree {
    pub fn new(len: usize) -> Self {
        Self { tree: vec![0; len + 1] }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, index: usize, delta: i64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the values at positions `0..end`.
    pub fn prefix_sum(&self, end: usize) -> i64 {
        let mut i = end.min(self.len());
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Sum of the values at positions `start..end`.
    pub fn range_sum(&self, start: usize, end: usize) -> i64 {
        if end <= start {
            return 0;
        }
        self.prefix_sum(end) - self.prefix_sum(start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_naive_sums(ops in prop::collection::vec((0usize..40, -5i64..5), 0..100), a in 0usize..41, b in 0usize..41) {
            let mut fw = FenwickTree::new(40);
            let mut naive = [0i64; 40];
            for (i, d) in ops {
                fw.add(i, d);
                naive[i] += d;
            }
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert_eq!(fw.range_sum(lo, hi), naive[lo..hi].iter().sum::<i64>());
        }
    }
}
