//! Cluster and graph recovery metrics: ARI, NMI, SHD, directed-edge
//! Jaccard, maximum-overlap cluster alignment, assignment agreement, and
//! cluster-profile RMSE.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A clustering of N rows; labels are canonicalized to 0..k by first
/// appearance, so two partitions are equal iff their canonical labels are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Canonicalizes arbitrary cluster ids. Panics on empty input.
    pub fn new(raw: &[usize]) -> Partition {
        assert!(!raw.is_empty(), "partition of zero rows");
        let mut remap: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &id in raw {
            let canon = match remap.iter().find(|(orig, _)| *orig == id) {
                Some(&(_, c)) => c,
                None => {
                    let c = remap.len();
                    remap.push((id, c));
                    c
                }
            };
            labels.push(canon);
        }
        let k = remap.len();
        Partition { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// k_a x k_b contingency counts against another partition.
    fn contingency(&self, other: &Partition) -> Vec<Vec<usize>> {
        let mut table = vec![vec![0usize; other.k]; self.k];
        for (&a, &b) in self.labels.iter().zip(&other.labels) {
            table[a][b] += 1;
        }
        table
    }
}

fn check_lengths(a: &Partition, b: &Partition) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!(
            "partitions of {} and {} rows",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index in [-1, 1]. When the adjustment
/// denominator is zero (both partitions trivial) the value is 1 for equal
/// partitions and 0 otherwise.
pub fn ari(a: &Partition, b: &Partition) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let table = a.contingency(b);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let mut col_sums = vec![0usize; b.k];
    for row in &table {
        for (j, &c) in row.iter().enumerate() {
            col_sums[j] += c;
        }
    }
    let index: f64 = table
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| choose2(c))
        .sum();
    let sum_a: f64 = row_sums.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = col_sums.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(if a.labels == b.labels { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two label
/// entropies. Two single-cluster partitions agree perfectly (1); a single
/// cluster against anything informative scores 0.
pub fn nmi(a: &Partition, b: &Partition) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let table = a.contingency(b);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let mut col_sums = vec![0usize; b.k];
    for row in &table {
        for (j, &c) in row.iter().enumerate() {
            col_sums[j] += c;
        }
    }
    let h_a = entropy(&row_sums, n);
    let h_b = entropy(&col_sums, n);
    if h_a == 0.0 && h_b == 0.0 {
        return Ok(1.0);
    }
    if h_a == 0.0 || h_b == 0.0 {
        return Ok(0.0);
    }
    let joint: Vec<usize> = table.iter().flat_map(|r| r.iter().copied()).collect();
    let h_ab = entropy(&joint, n);
    let mi = h_a + h_b - h_ab;
    Ok(2.0 * mi / (h_a + h_b))
}

/// Directed edge set over a fixed node count; the node set is 0..n_nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEdges {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl GraphEdges {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (s, t) in edges {
            if s >= n_nodes || t >= n_nodes || s == t {
                return Err(Error::NodeSetMismatch(format!(
                    "edge ({s}, {t}) invalid for {n_nodes} nodes"
                )));
            }
            set.insert((s, t));
        }
        Ok(GraphEdges {
            n_nodes,
            edges: set,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    /// Induced subgraph on `keep` (in the given order), nodes reindexed to
    /// 0..keep.len(). Used to compare graphs over a shared item subset.
    pub fn restrict(&self, keep: &[usize]) -> GraphEdges {
        let pos = |node: usize| keep.iter().position(|&m| m == node);
        let edges = self
            .edges
            .iter()
            .filter_map(|&(s, t)| Some((pos(s)?, pos(t)?)))
            .collect::<Vec<_>>();
        GraphEdges::new(keep.len(), edges).expect("reindexed edges are in range")
    }
}

fn check_nodes(a: &GraphEdges, b: &GraphEdges) -> Result<()> {
    if a.n_nodes != b.n_nodes {
        return Err(Error::NodeSetMismatch(format!(
            "graphs over {} and {} nodes",
            a.n_nodes, b.n_nodes
        )));
    }
    Ok(())
}

/// Structural Hamming distance: one per node pair whose edge status
/// (absent / forward / reverse) differs; a reversal costs 1.
pub fn shd(a: &GraphEdges, b: &GraphEdges) -> Result<usize> {
    check_nodes(a, b)?;
    let status = |g: &GraphEdges, u: usize, v: usize| -> u8 {
        if g.edges.contains(&(u, v)) {
            1
        } else if g.edges.contains(&(v, u)) {
            2
        } else {
            0
        }
    };
    let mut count = 0;
    for u in 0..a.n_nodes {
        for v in u + 1..a.n_nodes {
            if status(a, u, v) != status(b, u, v) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Intersection over union of directed edge sets; 1 when both are empty.
pub fn edge_jaccard(a: &GraphEdges, b: &GraphEdges) -> Result<f64> {
    check_nodes(a, b)?;
    let union = a.edges.union(&b.edges).count();
    if union == 0 {
        return Ok(1.0);
    }
    let inter = a.edges.intersection(&b.edges).count();
    Ok(inter as f64 / union as f64)
}

/// Injective map from candidate cluster ids to reference ids; `None` marks
/// an unmatched candidate cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    mapping: Vec<Option<usize>>,
    total_overlap: usize,
}

impl Alignment {
    pub fn mapping(&self) -> &[Option<usize>] {
        &self.mapping
    }

    pub fn total_overlap(&self) -> usize {
        self.total_overlap
    }

    /// Matched (candidate, reference) pairs in candidate order.
    pub fn matched_pairs(&self) -> Vec<(usize, usize)> {
        self.mapping
            .iter()
            .enumerate()
            .filter_map(|(c, r)| r.map(|r| (c, r)))
            .collect()
    }
}

const MAX_ALIGN_CLUSTERS: usize = 16;

/// Maximum-overlap cluster matching: the injective candidate→reference map
/// maximizing the summed contingency overlap, found exactly by subset DP.
pub fn align_clusters(cand: &Partition, reference: &Partition) -> Result<Alignment> {
    check_lengths(cand, reference)?;
    let table = cand.contingency(reference);
    align_from_table(&table, cand.k, reference.k)
}

/// Alignment on raw label vectors with explicit cluster counts. Unlike
/// `align_clusters`, label values keep their identities (no canonical
/// reindexing), so the result can index model-side structures directly.
pub fn align_labels(
    cand: &[usize],
    reference: &[usize],
    k_cand: usize,
    k_ref: usize,
) -> Result<Vec<Option<usize>>> {
    Ok(align_label_clusters(cand, reference, k_cand, k_ref)?.mapping)
}

/// `align_labels` with the full alignment result, for metrics that need
/// matched pairs or the overlap total.
pub fn align_label_clusters(
    cand: &[usize],
    reference: &[usize],
    k_cand: usize,
    k_ref: usize,
) -> Result<Alignment> {
    if cand.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "{} candidate labels vs {} reference labels",
            cand.len(),
            reference.len()
        )));
    }
    let mut table = vec![vec![0usize; k_ref]; k_cand];
    for (&c, &r) in cand.iter().zip(reference) {
        assert!(c < k_cand && r < k_ref, "label outside declared range");
        table[c][r] += 1;
    }
    align_from_table(&table, k_cand, k_ref)
}

fn align_from_table(table: &[Vec<usize>], kc: usize, kr: usize) -> Result<Alignment> {
    if kr > MAX_ALIGN_CLUSTERS {
        return Err(Error::Numeric(format!(
            "alignment supports at most {MAX_ALIGN_CLUSTERS} reference clusters, got {kr}"
        )));
    }
    let n_masks = 1usize << kr;
    const UNSET: u8 = u8::MAX;
    // dp over candidate clusters in index order; choice 0xFF = leave unmatched
    let mut dp = vec![u64::MAX; n_masks];
    dp[0] = 0;
    let mut choice = vec![UNSET; kc * n_masks];
    for c in 0..kc {
        let mut next = vec![u64::MAX; n_masks];
        for mask in 0..n_masks {
            let cur = dp[mask];
            if cur == u64::MAX {
                continue;
            }
            // leave candidate c unmatched
            if next[mask] == u64::MAX || cur > next[mask] {
                next[mask] = cur;
                choice[c * n_masks + mask] = UNSET;
            }
            for r in 0..kr {
                if mask & (1 << r) != 0 {
                    continue;
                }
                let m2 = mask | (1 << r);
                let val = cur + table[c][r] as u64;
                if next[m2] == u64::MAX || val > next[m2] {
                    next[m2] = val;
                    choice[c * n_masks + m2] = r as u8;
                }
            }
        }
        dp = next;
    }
    let (best_mask, &best) = dp
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != u64::MAX)
        .max_by(|(m1, v1), (m2, v2)| v1.cmp(v2).then(m2.cmp(m1)))
        .expect("dp has at least the empty mask");
    let mut mapping = vec![None; kc];
    let mut mask = best_mask;
    for c in (0..kc).rev() {
        let ch = choice[c * n_masks + mask];
        if ch != UNSET {
            mapping[c] = Some(ch as usize);
            mask &= !(1 << ch);
        }
    }
    Ok(Alignment {
        mapping,
        total_overlap: best as usize,
    })
}

/// Fraction of rows whose aligned candidate label equals the reference
/// label; rows of unmatched candidate clusters count as disagreement.
pub fn assignment_agreement(cand: &Partition, reference: &Partition) -> Result<f64> {
    let alignment = align_clusters(cand, reference)?;
    let agree = cand
        .labels
        .iter()
        .zip(&reference.labels)
        .filter(|(&c, &r)| alignment.mapping[c] == Some(r))
        .count();
    Ok(agree as f64 / cand.len() as f64)
}

/// Root mean squared difference between matched cluster mean profiles,
/// averaged over matched clusters and all items.
pub fn profile_rmse(
    cand_means: &Array2<f64>,
    ref_means: &Array2<f64>,
    alignment: &Alignment,
) -> Result<f64> {
    if cand_means.ncols() != ref_means.ncols() {
        return Err(Error::LengthMismatch(format!(
            "profiles over {} and {} items",
            cand_means.ncols(),
            ref_means.ncols()
        )));
    }
    if cand_means.nrows() != alignment.mapping.len() {
        return Err(Error::LengthMismatch(format!(
            "{} profile rows but alignment over {} clusters",
            cand_means.nrows(),
            alignment.mapping.len()
        )));
    }
    let pairs = alignment.matched_pairs();
    if pairs.is_empty() {
        return Err(Error::NoMatchedClusters);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (c, r) in pairs {
        if r >= ref_means.nrows() {
            return Err(Error::LengthMismatch(format!(
                "alignment targets reference cluster {r} of {}",
                ref_means.nrows()
            )));
        }
        for j in 0..cand_means.ncols() {
            let d = cand_means[[c, j]] - ref_means[[r, j]];
            sum += d * d;
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}
