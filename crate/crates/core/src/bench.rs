//! Measurement helpers behind `kf-bench`: signing/verification throughput per tree depth and
//! expiry-information sizes for prefix expiry on uniform and calendar layouts.

use std::time::Instant;

use crate::ffs;
use crate::hibs;
use crate::tagtree::{Layout, TagSpace};

/// Two years of 15-minute chunks.
pub const TWO_YEARS_OF_CHUNKS: u64 = 730 * 96;
pub const ONE_YEAR_OF_CHUNKS: u64 = 365 * 96;

/// Published expiry sizes for uniform trees of depth 1..=7 (bytes, 64-byte keys):
/// `(depth, avg_1y, max_1y, avg_2y, max_2y)`.
pub const REFERENCE_EXPIRY_BYTES: [(u32, u64, u64, u64, u64); 7] = [
    (1, 1_121_248, 2_242_496, 1_679_814, 4_485_056),
    (2, 12_700, 25_344, 16_934, 33_792),
    (3, 3_283, 6_464, 3_920, 7_744),
    (4, 1_787, 3_520, 2_016, 3_968),
    (5, 1_275, 2_496, 1_408, 2_752),
    (6, 1_048, 2_048, 1_117, 2_176),
    (7, 859, 1_664, 934, 1_792),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputRow {
    pub depth: usize,
    pub branching: u32,
    pub iterations: usize,
    pub seconds: f64,
}

impl ThroughputRow {
    pub fn ops_per_sec(&self) -> f64 {
        self.iterations as f64 / self.seconds.max(1e-9)
    }

    pub fn micros_per_op(&self) -> f64 {
        self.seconds * 1e6 / self.iterations.max(1) as f64
    }
}

/// Uniform two-year layout of the given depth with 15-minute chunks from the Unix epoch.
pub fn uniform_two_year(depth: u32) -> TagSpace {
    TagSpace::uniform(0, 900, TWO_YEARS_OF_CHUNKS, depth).expect("valid layout")
}

fn sample_tags(space: &TagSpace, n: usize) -> Vec<crate::hibs::IdentityTuple> {
    // Spread samples evenly over the span; deterministic so runs are comparable.
    let leaves = TWO_YEARS_OF_CHUNKS.min(space.leaf_count());
    (0..n as u64)
        .map(|i| space.leaf_at((i * 7919) % leaves).expect("in range").to_identity())
        .collect()
}

/// Full signing path (key derivation from the master key plus the leaf signature).
pub fn bench_sign(depth: u32, iterations: usize) -> ThroughputRow {
    let space = uniform_two_year(depth);
    let kp = ffs::keygen(space.depth(), Some([depth as u8; 32]));
    let tags = sample_tags(&space, iterations);
    let start = Instant::now();
    for (i, tag) in tags.iter().enumerate() {
        let sig = ffs::sign(&kp.sk, tag, &(i as u64).to_be_bytes()).expect("in depth");
        std::hint::black_box(sig);
    }
    ThroughputRow {
        depth: depth as usize,
        branching: space.branching(),
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn bench_verify(depth: u32, iterations: usize) -> ThroughputRow {
    let space = uniform_two_year(depth);
    let kp = ffs::keygen(space.depth(), Some([depth as u8; 32]));
    let signed: Vec<_> = sample_tags(&space, iterations)
        .into_iter()
        .enumerate()
        .map(|(i, tag)| {
            let msg = (i as u64).to_be_bytes();
            let sig = ffs::sign(&kp.sk, &tag, &msg).expect("in depth");
            (tag, msg, sig)
        })
        .collect();
    let start = Instant::now();
    for (tag, msg, sig) in &signed {
        assert!(hibs::verify(&kp.vk, tag, msg, sig));
    }
    ThroughputRow {
        depth: depth as usize,
        branching: space.branching(),
        iterations,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Nodes released when the first `j` leaves (grid order) have expired: the mixed-radix digit
/// sum of `j`. The root is never released, so the whole tree counts as its top-level children.
pub fn prefix_cover_nodes(cards: &[u32], j: u64) -> u64 {
    let total: u64 = cards.iter().map(|&c| u64::from(c)).product();
    if j >= total {
        return cards.first().map_or(0, |&c| u64::from(c));
    }
    let mut rest = j;
    let mut sum = 0;
    for &c in cards.iter().rev() {
        sum += rest % u64::from(c);
        rest /= u64::from(c);
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpiryRow {
    pub depth: usize,
    pub branching: u32,
    pub tree_leaves: u64,
    pub span_leaves: u64,
    /// Largest release over every proper prefix of the full tree.
    pub worst_nodes_tree: u64,
    /// Largest release over prefixes that end inside the span.
    pub worst_nodes_span: u64,
    /// Mean release over all prefixes ending inside the span.
    pub mean_nodes_span: f64,
}

impl ExpiryRow {
    pub fn bytes(nodes: f64) -> f64 {
        nodes * ffs::MODEL_KEY_BYTES as f64
    }
}

/// Expiry sizes for a layout, considering prefixes `[0, j)` for each chunk boundary inside the
/// span (calendar layouts skip unused dates).
pub fn expiry_row(space: &TagSpace, span_leaves: u64) -> ExpiryRow {
    let cards: Vec<u32> = (0..space.time_depth()).map(|l| space.cardinality(l)).collect();
    let tree_leaves = space.leaf_count();
    let worst_nodes_tree: u64 = cards.iter().map(|&c| u64::from(c) - 1).sum();

    // Prefix lengths at which expiry is published: after each in-span chunk.
    let boundaries: Vec<u64> = match space.layout() {
        Layout::Uniform { .. } => (1..=span_leaves.min(tree_leaves)).collect(),
        Layout::Calendar { .. } => (0..tree_leaves)
            .filter(|&i| space.is_valid_leaf(&space.leaf_at(i).expect("in range")))
            .map(|i| i + 1)
            .take(span_leaves as usize)
            .collect(),
    };
    let counts: Vec<u64> = boundaries.iter().map(|&j| prefix_cover_nodes(&cards, j)).collect();
    ExpiryRow {
        depth: cards.len(),
        branching: space.branching(),
        tree_leaves,
        span_leaves: boundaries.len() as u64,
        worst_nodes_tree,
        worst_nodes_span: counts.iter().copied().max().unwrap_or(0),
        mean_nodes_span: counts.iter().sum::<u64>() as f64 / counts.len().max(1) as f64,
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}
