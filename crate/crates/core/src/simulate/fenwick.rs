//! Growable Fenwick tree over integer weights.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fenwick {
    /// 1-based; `tree[0]` is unused.
    tree: Vec<u64>,
}

#[inline]
fn lowbit(i: usize) -> usize {
    i & i.wrapping_neg()
}

impl Fenwick {
    pub fn new() -> Self {
        Self { tree: vec![0] }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends an element with weight `w`.
    pub fn push(&mut self, w: u64) {
        let i = self.tree.len();
        // node i covers (i − lowbit(i), i]
        let covered = self.prefix(i - 1) - self.prefix(i - lowbit(i));
        self.tree.push(w + covered);
    }

    pub fn add(&mut self, index: usize, delta: u64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += lowbit(i);
        }
    }

    /// Sum of the first `count` weights.
    pub fn prefix(&self, count: usize) -> u64 {
        let mut i = count;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= lowbit(i);
        }
        s
    }

    pub fn total(&self) -> u64 {
        self.prefix(self.len())
    }

    pub fn get(&self, index: usize) -> u64 {
        self.prefix(index + 1) - self.prefix(index)
    }

    /// The element `k` with `prefix(k) ≤ target < prefix(k + 1)`; requires
    /// `target < total()`.
    pub fn find(&self, target: u64) -> usize {
        debug_assert!(target < self.total());
        let n = self.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_naive_prefix_sums(weights in proptest::collection::vec(0u64..20, 1..200),
                                     bumps in proptest::collection::vec((0usize..200, 1u64..5), 0..50)) {
            let mut f = Fenwick::new();
            let mut w = Vec::new();
            for &x in &weights {
                f.push(x);
                w.push(x);
            }
            for (i, d) in bumps {
                let i = i % w.len();
                f.add(i, d);
                w[i] += d;
            }
            let mut acc = 0;
            for k in 0..w.len() {
                prop_assert_eq!(f.prefix(k), acc);
                prop_assert_eq!(f.get(k), w[k]);
                acc += w[k];
            }
            prop_assert_eq!(f.total(), acc);
            let mut start = 0;
            for (k, &wk) in w.iter().enumerate() {
                for t in start..start + wk {
                    prop_assert_eq!(f.find(t), k);
                }
                start += wk;
            }
        }
    }
}
