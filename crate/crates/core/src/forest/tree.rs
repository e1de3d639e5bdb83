use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::level::{Chunk, CHUNK_FEATURES};

/// A training row: the active feature indices of a chunk plus its class.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    active: Vec<u16>,
    bits: [u64; CHUNK_FEATURES / 64],
    class: usize,
}

impl Sample {
    pub(crate) fn new(chunk: &Chunk, class: usize) -> Self {
        let mut bits = [0u64; CHUNK_FEATURES / 64];
        let active: Vec<u16> = chunk.active_features().map(|f| f as u16).collect();
        for &f in &active {
            bits[f as usize / 64] |= 1 << (f % 64);
        }
        Self { active, bits, class }
    }

    #[inline]
    fn has(&self, feature: usize) -> bool {
        self.bits[feature / 64] & (1 << (feature % 64)) != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Class histogram of the (bootstrapped) samples reaching this leaf.
    Leaf { histogram: Vec<u32> },
    /// Chunks without `feature` go to `zero`, chunks with it go to `one`.
    Split { feature: u16, zero: u32, one: u32 },
}

/// A binary decision tree over the 1920 one-hot chunk features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Identity within a forest; replacement trees get fresh ids.
    pub id: u64,
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub n_classes: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub min_samples_split: usize,
}

/// Class with the most weight; ties go to `none_class`, then the lowest index.
pub(crate) fn argmax_class(histogram: &[u32], none_class: usize) -> usize {
    let best = histogram.iter().copied().max().unwrap_or(0);
    if histogram.get(none_class) == Some(&best) {
        return none_class;
    }
    histogram.iter().position(|&c| c == best).unwrap_or(none_class)
}

fn gini(hist: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - hist.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    /// Grow a tree on `bootstrap` (indices into `samples`, duplicates allowed).
    pub(crate) fn grow(id: u64, samples: &[Sample], bootstrap: Vec<usize>, params: GrowParams, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = DecisionTree { id, nodes: Vec::new() };
        let mut scratch = Scratch::new(params.n_classes);
        // (node slot, sample indices, depth)
        let mut stack = vec![(0usize, bootstrap, 0usize)];
        tree.nodes.push(TreeNode::Leaf { histogram: Vec::new() });
        while let Some((slot, rows, depth)) = stack.pop() {
            let mut hist = vec![0u32; params.n_classes];
            for &r in &rows {
                hist[samples[r].class] += 1;
            }
            let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || depth >= params.max_depth || rows.len() < params.min_samples_split {
                None
            } else {
                scratch.best_split(samples, &rows, &hist, params, rng)
            };
            match split {
                None => tree.nodes[slot] = TreeNode::Leaf { histogram: hist },
                Some(feature) => {
                    let (ones, zeros): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| samples[r].has(feature));
                    let zero = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf { histogram: Vec::new() });
                    let one = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf { histogram: Vec::new() });
                    tree.nodes[slot] = TreeNode::Split { feature: feature as u16, zero: zero as u32, one: one as u32 };
                    stack.push((one, ones, depth + 1));
                    stack.push((zero, zeros, depth + 1));
                }
            }
        }
        tree
    }

    /// Leaf histogram reached by `chunk`.
    pub fn leaf(&self, chunk: &Chunk) -> &[u32] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { histogram } => return histogram,
                TreeNode::Split { feature, zero, one } => {
                    at = if chunk.feature(*feature as usize) { *one as usize } else { *zero as usize };
                }
            }
        }
    }

    /// The class this tree votes for.
    pub fn vote(&self, chunk: &Chunk, none_class: usize) -> usize {
        argmax_class(self.leaf(chunk), none_class)
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { zero, one, .. } => 1 + walk(nodes, *zero as usize).max(walk(nodes, *one as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// True when no feature is split on twice along any root-to-leaf path.
    pub fn paths_have_unique_features(&self) -> bool {
        fn walk(nodes: &[TreeNode], at: usize, seen: &mut Vec<u16>) -> bool {
            match &nodes[at] {
                TreeNode::Leaf { .. } => true,
                TreeNode::Split { feature, zero, one } => {
                    if seen.contains(feature) {
                        return false;
                    }
                    seen.push(*feature);
                    let ok = walk(nodes, *zero as usize, seen) && walk(nodes, *one as usize, seen);
                    seen.pop();
                    ok
                }
            }
        }
        walk(&self.nodes, 0, &mut Vec::new())
    }
}

/// Per-feature, per-class counts reused across nodes.
struct Scratch {
    n_classes: usize,
    counts: Vec<u32>,
    totals: Vec<u32>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; CHUNK_FEATURES * n_classes],
            totals: vec![0; CHUNK_FEATURES],
            touched: Vec::new(),
        }
    }

    /// Pick `features_per_split` candidates uniformly among the features that
    /// vary within `rows` and return the one with the lowest weighted Gini
    /// impurity, if it improves on the parent.
    fn best_split(
        &mut self,
        samples: &[Sample],
        rows: &[usize],
        parent: &[u32],
        params: GrowParams,
        rng: &mut ChaCha8Rng,
    ) -> Option<usize> {
        let c = self.n_classes;
        for &r in rows {
            let s = &samples[r];
            for &f in &s.active {
                let f = f as usize;
                if self.totals[f] == 0 {
                    self.touched.push(f);
                }
                self.totals[f] += 1;
                self.counts[f * c + s.class] += 1;
            }
        }
        let n = rows.len() as u32;
        self.touched.sort_unstable();
        let varying: Vec<usize> = self.touched.iter().copied().filter(|&f| self.totals[f] < n).collect();

        let mut best: Option<(f64, usize)> = None;
        if !varying.is_empty() {
            let take = params.features_per_split.min(varying.len());
            let picks = if take == varying.len() {
                (0..take).collect::<Vec<_>>()
            } else {
                index::sample(rng, varying.len(), take).into_vec()
            };
            let parent_gini = gini(parent, n);
            let mut zeros = vec![0u32; c];
            for pick in picks {
                let f = varying[pick];
                let ones = &self.counts[f * c..(f + 1) * c];
                for k in 0..c {
                    zeros[k] = parent[k] - ones[k];
                }
                let n1 = self.totals[f];
                let n0 = n - n1;
                let score = (n0 as f64 * gini(&zeros, n0) + n1 as f64 * gini(ones, n1)) / n as f64;
                if score < parent_gini - 1e-12 && best.is_none_or(|(b, _)| score < b) {
                    best = Some((score, f));
                }
            }
        }

        for &f in &self.touched {
            self.totals[f] = 0;
            self.counts[f * c..(f + 1) * c].iter_mut().for_each(|v| *v = 0);
        }
        self.touched.clear();
        best.map(|(_, f)| f)
    }
}

/// `n` indices drawn uniformly with replacement.
pub(crate) fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn argmax_prefers_none_then_lowest() {
        assert_eq!(argmax_class(&[3, 5, 5, 1], 3), 1);
        assert_eq!(argmax_class(&[3, 5, 1, 5], 3), 3);
        assert_eq!(argmax_class(&[0, 0, 0], 2), 2);
    }

    #[test]
    fn gini_of_pure_and_even_nodes() {
        assert_eq!(gini(&[4, 0], 4), 0.0);
        assert!((gini(&[2, 2], 4) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tree_shatters_consistent_sample() {
        use crate::level::LevelGrid;
        let mut samples = Vec::new();
        for i in 0..16usize {
            let mut g = LevelGrid::empty(8, 8).unwrap();
            for b in 0..4 {
                if i & (1 << b) != 0 {
                    g.set(b, 0, Some(1));
                }
            }
            let chunk = Chunk::encode(&g, 0, 0).unwrap();
            // parity of the bits: needs the full depth-4 tree
            samples.push(Sample::new(&chunk, (i.count_ones() % 2) as usize));
        }
        let params = GrowParams { n_classes: 3, max_depth: 100, features_per_split: 44, min_samples_split: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = DecisionTree::grow(0, &samples, (0..16).collect(), params, &mut rng);
        assert!(tree.paths_have_unique_features());
        assert!(tree.depth() <= 4);
        // parity has zero Gini gain at the root for every feature, so growth
        // stops immediately: the "no improving split" rule.
        assert_eq!(tree.nodes.len(), 1);

        // class = bit0 AND bit1 has positive gain at every level; every
        // training row must land in a pure leaf.
        let and_samples: Vec<Sample> = (0..16usize)
            .map(|i| {
                let mut g = LevelGrid::empty(8, 8).unwrap();
                for b in 0..4 {
                    if i & (1 << b) != 0 {
                        g.set(b, 0, Some(1));
                    }
                }
                Sample::new(&Chunk::encode(&g, 0, 0).unwrap(), usize::from(i & 3 == 3))
            })
            .collect();
        let tree = DecisionTree::grow(1, &and_samples, (0..16).collect(), params, &mut rng);
        assert!(tree.paths_have_unique_features());
        for s in &and_samples {
            let chunk = Chunk::encode(&{
                let mut g = LevelGrid::empty(8, 8).unwrap();
                for &f in &s.active {
                    g.set(f as usize / 30, 0, Some(1));
                }
                g
            }, 0, 0).unwrap();
            assert_eq!(tree.vote(&chunk, 2), s.class);
        }
    }
}
