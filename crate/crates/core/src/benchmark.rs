//! Tiered semi-synthetic benchmark: a latent linear-Gaussian SEM mixture
//! generator discretized through calibrated thresholds, plus the runner
//! producing the four-model recovery table.
//!
//! Difficulty is controlled by three dials: cluster mean separation,
//! cross-cluster edge differences, and mixing imbalance. Thresholds are
//! stated as cumulative cut probabilities per item and realized as latent
//! cut points by inverting each instance's true marginal mixture CDF, so
//! the ordinal marginals hit the targets regardless of the sampled graphs.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dag::{ArchetypeDag, GraphJson, NodeParams};
use crate::embedding::{fit_embedding, transform, OrdinalDataset};
use crate::error::{Error, Result};
use crate::math::normal_cdf;
use crate::metrics::{align_labels, ari, nmi, shd, GraphEdges, Partition};
use crate::mixture::{fit, fit_mixture_only, fit_single_graph, FitMode, ScorePredictor};
use crate::seeding::{derive_seed, seeded_rng};
use crate::selection::{
    holdout_mse, outer_split, select_k, KCurvePoint, ModelVariant, PipelineConfig, SelectionPlan,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub name: String,
    pub k_true: usize,
    /// Mixing weights, one per cluster, summing to 1.
    pub weights: Vec<f64>,
    /// Cluster mean-shift scale s in units of the latent noise SD; node
    /// intercepts are ±s/2 with cluster-specific sign patterns.
    pub separation: f64,
    /// Edge count of every cluster graph.
    pub edges_per_cluster: usize,
    /// Size of each cluster graph's symmetric difference from the shared
    /// base graph (half removed, half added), so it must be even.
    pub differing_edges: usize,
    /// Edge weight magnitude range; signs are random.
    pub weight_range: (f64, f64),
    pub noise_sd: f64,
    pub max_parents: usize,
    pub n_rows: usize,
    /// Per item, the strictly increasing cumulative probabilities at which
    /// the latent scale is cut; an item with C categories lists C-1 values.
    pub cut_probs: Vec<Vec<f64>>,
    pub replications: usize,
    pub seed: u64,
}

impl TierSpec {
    pub fn n_items(&self) -> usize {
        self.cut_probs.len()
    }

    /// Edges representable under the parent cap for any topological order.
    fn edge_capacity(&self) -> usize {
        (0..self.n_items()).map(|pos| pos.min(self.max_parents)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSpec("tier name is empty".into()));
        }
        if self.k_true < 2 {
            return Err(Error::InvalidSpec("K_true must be >= 2".into()));
        }
        if self.weights.len() != self.k_true {
            return Err(Error::InvalidSpec(format!(
                "{} mixing weights for {} clusters",
                self.weights.len(),
                self.k_true
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidSpec(
                "mixing weights must be positive and sum to 1".into(),
            ));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::InvalidSpec("separation must be >= 0".into()));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::InvalidSpec("noise SD must be positive".into()));
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidSpec(format!(
                "weight magnitude range ({lo}, {hi}) is invalid"
            )));
        }
        if self.max_parents == 0 {
            return Err(Error::InvalidSpec("max_parents must be >= 1".into()));
        }
        if self.n_items() < 2 {
            return Err(Error::InvalidSpec("need at least two items".into()));
        }
        for (j, cuts) in self.cut_probs.iter().enumerate() {
            if cuts.is_empty() {
                return Err(Error::InvalidSpec(format!("item {j} has no cut points")));
            }
            if cuts.iter().any(|&p| !(p > 0.0 && p < 1.0))
                || cuts.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::InvalidSpec(format!(
                    "item {j} cut probabilities must be strictly increasing inside (0,1)"
                )));
            }
        }
        if self.differing_edges % 2 != 0 {
            return Err(Error::InvalidSpec(
                "differing_edges must be even (half removed, half added)".into(),
            ));
        }
        if self.differing_edges > self.edges_per_cluster {
            return Err(Error::InvalidSpec(
                "differing_edges cannot exceed edges_per_cluster".into(),
            ));
        }
        let capacity = self.edge_capacity();
        if self.edges_per_cluster > capacity {
            return Err(Error::InvalidSpec(format!(
                "{} edges per cluster exceed the capacity {capacity} under the parent cap",
                self.edges_per_cluster
            )));
        }
        if capacity - self.edges_per_cluster < self.differing_edges / 2 {
            return Err(Error::InvalidSpec(
                "not enough spare candidate edges to swap in".into(),
            ));
        }
        if self.n_rows == 0 || self.replications == 0 {
            return Err(Error::InvalidSpec(
                "n_rows and replications must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub data: OrdinalDataset,
    pub labels: Vec<usize>,
    pub dags: Vec<ArchetypeDag>,
    /// Realized latent cut points per item.
    pub cuts: Vec<Vec<f64>>,
    pub spec: TierSpec,
    pub replicate: usize,
}

/// Latent panel before discretization; exposed for oracle checks and
/// debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPanel {
    pub latent: Array2<f64>,
    pub labels: Vec<usize>,
    pub dags: Vec<ArchetypeDag>,
}

/// Bundled target category frequencies: eight survey-like items with 4-6
/// categories each, skews included. `default_cut_probs` turns them into
/// cumulative cut probabilities; pass alternatives through the TierSpec to
/// recalibrate.
const TARGET_FREQUENCIES: [&[f64]; 8] = [
    &[0.10, 0.20, 0.30, 0.25, 0.15],
    &[0.05, 0.15, 0.25, 0.35, 0.20],
    &[0.20, 0.35, 0.30, 0.15],
    &[0.08, 0.12, 0.20, 0.25, 0.20, 0.15],
    &[0.30, 0.25, 0.20, 0.15, 0.10],
    &[0.15, 0.25, 0.35, 0.25],
    &[0.12, 0.18, 0.25, 0.28, 0.17],
    &[0.10, 0.15, 0.22, 0.25, 0.18, 0.10],
];

pub fn default_cut_probs() -> Vec<Vec<f64>> {
    TARGET_FREQUENCIES
        .iter()
        .map(|freqs| {
            let mut cum = 0.0;
            freqs[..freqs.len() - 1]
                .iter()
                .map(|f| {
                    cum += f;
                    cum
                })
                .collect()
        })
        .collect()
}

const DEFAULT_TIER_SEED_BASE: u64 = 7_654_321;

/// The four difficulty tiers with fixed seeds; `default_tiers_seeded` keys
/// the generator seeds to a caller-chosen base instead.
pub fn default_tiers() -> Vec<TierSpec> {
    default_tiers_seeded(DEFAULT_TIER_SEED_BASE)
}

pub fn default_tiers_seeded(base: u64) -> Vec<TierSpec> {
    let mk = |idx: u64, name: &str, separation: f64, differing: usize, weights: Vec<f64>| TierSpec {
        name: name.to_string(),
        k_true: 3,
        weights,
        separation,
        edges_per_cluster: 8,
        differing_edges: differing,
        weight_range: (0.4, 0.9),
        noise_sd: 1.0,
        max_parents: 2,
        n_rows: 4800,
        cut_probs: default_cut_probs(),
        replications: 3,
        seed: derive_seed(base, "tier", &[idx]),
    };
    vec![
        mk(0, "easy", 2.0, 6, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
        mk(1, "moderate", 1.0, 4, vec![0.4, 0.3, 0.3]),
        mk(2, "hard", 0.5, 2, vec![0.6, 0.3, 0.1]),
        mk(3, "stress", 0.1, 0, vec![0.7, 0.2, 0.1]),
    ]
}

/// Marginal mean and variance of every node under a DAG's linear-Gaussian
/// SEM, by forward propagation in topological order.
pub fn sem_moments(dag: &ArchetypeDag) -> (Vec<f64>, Vec<f64>) {
    let j = dag.n_nodes();
    let order = topo_order(dag);
    let mut means = vec![0.0; j];
    // t[v] = coefficients of each node's own noise term in node v
    let mut t = vec![vec![0.0; j]; j];
    for &v in &order {
        let node = &dag.nodes()[v];
        means[v] = node.intercept;
        t[v][v] = 1.0;
        for (p_idx, &p) in node.parents.iter().enumerate() {
            let beta = node.weights[p_idx];
            means[v] += beta * means[p];
            for e in 0..j {
                let add = beta * t[p][e];
                if add != 0.0 {
                    t[v][e] += add;
                }
            }
        }
    }
    let vars = (0..j)
        .map(|v| {
            (0..j)
                .map(|e| t[v][e] * t[v][e] * dag.nodes()[e].residual_var)
                .sum()
        })
        .collect();
    (means, vars)
}

fn topo_order(dag: &ArchetypeDag) -> Vec<usize> {
    let j = dag.n_nodes();
    let mut indegree = vec![0usize; j];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (v, node) in dag.nodes().iter().enumerate() {
        indegree[v] = node.parents.len();
        for &p in &node.parents {
            children[p].push(v);
        }
    }
    let mut ready: BTreeSet<usize> = (0..j).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(j);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    debug_assert_eq!(order.len(), j, "graph must be acyclic");
    order
}

/// Monotone bisection for t with Σ_k w_k Φ((t - m_k)/s_k) = p.
fn invert_mixture_cdf(p: f64, weights: &[f64], means: &[f64], sds: &[f64]) -> f64 {
    let cdf = |t: f64| -> f64 {
        weights
            .iter()
            .zip(means)
            .zip(sds)
            .map(|((&w, &m), &s)| w * normal_cdf((t - m) / s))
            .sum()
    };
    let mut lo = means
        .iter()
        .zip(sds)
        .map(|(&m, &s)| m - 12.0 * s)
        .fold(f64::INFINITY, f64::min);
    let mut hi = means
        .iter()
        .zip(sds)
        .map(|(&m, &s)| m + 12.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every order-respecting candidate edge (u -> v); the parent cap is
/// enforced where edges are picked.
fn candidate_edges(order: &[usize]) -> Vec<(usize, usize)> {
    let j = order.len();
    let mut out = Vec::new();
    for ti in 0..j {
        for si in 0..ti {
            out.push((order[si], order[ti]));
        }
    }
    out
}

fn sample_distinct<T: Copy>(pool: &[T], count: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    // partial Fisher-Yates: the first `count` slots end up uniform
    for i in 0..count.min(pool.len()) {
        let other = rng.random_range(i..pool.len());
        idx.swap(i, other);
    }
    idx[..count].iter().map(|&i| pool[i]).collect()
}

struct TrueGraphs {
    /// Per cluster, the sorted edge set.
    edge_sets: Vec<BTreeSet<(usize, usize)>>,
    /// Shared weights keyed by edge; clusters sharing an edge share the
    /// weight.
    weight_of: std::collections::BTreeMap<(usize, usize), f64>,
}

fn sample_cluster_graphs(spec: &TierSpec, rng: &mut ChaCha8Rng) -> Result<TrueGraphs> {
    let j = spec.n_items();
    let mut order: Vec<usize> = (0..j).collect();
    for i in (1..j).rev() {
        let k = rng.random_range(0..=i);
        order.swap(i, k);
    }
    let candidates = candidate_edges(&order);

    // base edge set: greedy from a shuffled candidate list under the cap
    let pick_edges = |pool: &[(usize, usize)],
                      count: usize,
                      parent_load: &mut Vec<usize>,
                      rng: &mut ChaCha8Rng|
     -> Option<Vec<(usize, usize)>> {
        let mut shuffled = pool.to_vec();
        for i in (1..shuffled.len()).rev() {
            let k = rng.random_range(0..=i);
            shuffled.swap(i, k);
        }
        let mut chosen = Vec::with_capacity(count);
        for (u, v) in shuffled {
            if chosen.len() == count {
                break;
            }
            if parent_load[v] < spec.max_parents {
                parent_load[v] += 1;
                chosen.push((u, v));
            }
        }
        (chosen.len() == count).then_some(chosen)
    };

    let mut base_load = vec![0usize; j];
    let base = pick_edges(&candidates, spec.edges_per_cluster, &mut base_load, rng)
        .ok_or_else(|| Error::InvalidSpec("could not realize the base edge count".into()))?;
    let base_set: BTreeSet<(usize, usize)> = base.iter().copied().collect();

    let d_half = spec.differing_edges / 2;
    let spare: Vec<(usize, usize)> = candidates
        .iter()
        .copied()
        .filter(|e| !base_set.contains(e))
        .collect();

    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = Vec::with_capacity(spec.k_true);
    for _ in 0..spec.k_true {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 100 {
                return Err(Error::InvalidSpec(
                    "could not realize pairwise-distinct cluster graphs".into(),
                ));
            }
            let removed: BTreeSet<(usize, usize)> = if d_half > 0 {
                sample_distinct(&base.iter().copied().collect::<Vec<_>>(), d_half, rng)
                    .into_iter()
                    .collect()
            } else {
                BTreeSet::new()
            };
            let mut load = vec![0usize; j];
            for &(_, v) in base_set.difference(&removed) {
                load[v] += 1;
            }
            let added = if d_half > 0 {
                match pick_edges(&spare, d_half, &mut load, rng) {
                    Some(a) => a,
                    None => continue,
                }
            } else {
                Vec::new()
            };
            let mut set: BTreeSet<(usize, usize)> =
                base_set.difference(&removed).copied().collect();
            set.extend(added);
            if spec.differing_edges > 0 && edge_sets.contains(&set) {
                continue;
            }
            edge_sets.push(set);
            break;
        }
    }

    // one weight per edge, shared wherever the edge appears
    let union: BTreeSet<(usize, usize)> = edge_sets.iter().flatten().copied().collect();
    let (lo, hi) = spec.weight_range;
    let mut weight_of = std::collections::BTreeMap::new();
    for &edge in &union {
        let magnitude = lo + (hi - lo) * rng.random::<f64>();
        let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
        weight_of.insert(edge, sign * magnitude);
    }
    Ok(TrueGraphs {
        edge_sets,
        weight_of,
    })
}

/// ±1 sign patterns, one per cluster. Requires pairwise Hamming distance of
/// at least half the items, then keeps the best of several candidate sets
/// under the maximin pairwise distance, so every cluster pair is shifted
/// apart on as many coordinates as the code geometry allows.
fn sample_sign_patterns(spec: &TierSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let j = spec.n_items();
    if !(spec.separation > 0.0) || spec.k_true < 2 {
        let pattern: Vec<f64> = (0..j)
            .map(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 })
            .collect();
        return Ok(vec![pattern; spec.k_true]);
    }
    let min_hamming = (j / 2).max(2);
    let hamming = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(x, y)| x != y).count();

    let sample_set = |rng: &mut ChaCha8Rng| -> Option<Vec<Vec<f64>>> {
        let mut patterns: Vec<Vec<f64>> = Vec::with_capacity(spec.k_true);
        for _ in 0..spec.k_true {
            let mut attempts = 0;
            loop {
                attempts += 1;
                if attempts > 1000 {
                    return None;
                }
                let pattern: Vec<f64> = (0..j)
                    .map(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 })
                    .collect();
                if patterns.iter().all(|other| hamming(other, &pattern) >= min_hamming) {
                    patterns.push(pattern);
                    break;
                }
            }
        }
        Some(patterns)
    };

    let mut best: Option<(usize, Vec<Vec<f64>>)> = None;
    for _ in 0..64 {
        let Some(candidate) = sample_set(rng) else {
            continue;
        };
        let mut worst = usize::MAX;
        for a in 0..spec.k_true {
            for b in (a + 1)..spec.k_true {
                worst = worst.min(hamming(&candidate[a], &candidate[b]));
            }
        }
        if best.as_ref().is_none_or(|(d, _)| worst > *d) {
            best = Some((worst, candidate));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::InvalidSpec("could not realize distinct mean-shift patterns".into())
    })
}

/// Cluster DAGs with intercepts solved so the marginal mean of node v is
/// exactly pattern_v · (s/2) · sd_v, where sd_v is the node's marginal SD
/// under its own graph. Clusters shifted apart on an item therefore sit a
/// full s marginal SDs apart there, with no cancellation through edges.
fn build_dags(spec: &TierSpec, graphs: &TrueGraphs, patterns: &[Vec<f64>]) -> Vec<ArchetypeDag> {
    let j = spec.n_items();
    graphs
        .edge_sets
        .iter()
        .zip(patterns)
        .map(|(edges, pattern)| {
            let mut nodes: Vec<NodeParams> = (0..j)
                .map(|_| NodeParams {
                    parents: vec![],
                    weights: vec![],
                    intercept: 0.0,
                    residual_var: spec.noise_sd * spec.noise_sd,
                })
                .collect();
            for &(u, v) in edges {
                nodes[v].parents.push(u);
            }
            for (v, node) in nodes.iter_mut().enumerate() {
                node.parents.sort_unstable();
                node.weights = node
                    .parents
                    .iter()
                    .map(|&u| graphs.weight_of[&(u, v)])
                    .collect();
            }
            let centered =
                ArchetypeDag::new(nodes.clone()).expect("sampled graphs are acyclic by construction");
            // variances are intercept-free, so the centered graph gives the
            // final marginal SDs
            let (_, vars) = sem_moments(&centered);
            let target: Vec<f64> = (0..j)
                .map(|v| pattern[v] * spec.separation / 2.0 * vars[v].sqrt())
                .collect();
            for (v, node) in nodes.iter_mut().enumerate() {
                let parent_part: f64 = node
                    .parents
                    .iter()
                    .zip(&node.weights)
                    .map(|(&p, &w)| w * target[p])
                    .sum();
                node.intercept = target[v] - parent_part;
            }
            ArchetypeDag::new(nodes).expect("sampled graphs are acyclic by construction")
        })
        .collect()
}

/// Latent mixture panel: cluster labels from the mixing weights, then each
/// row simulated through its cluster's SEM in topological order.
pub fn generate_latent(spec: &TierSpec, replicate: usize) -> Result<LatentPanel> {
    spec.validate()?;
    let mut rng = seeded_rng(derive_seed(spec.seed, "bench-generate", &[replicate as u64]));
    let graphs = sample_cluster_graphs(spec, &mut rng)?;
    let patterns = sample_sign_patterns(spec, &mut rng)?;
    let dags = build_dags(spec, &graphs, &patterns);
    let orders: Vec<Vec<usize>> = dags.iter().map(topo_order).collect();

    let n = spec.n_rows;
    let j = spec.n_items();
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut z = spec.k_true - 1;
        for (k, &w) in spec.weights.iter().enumerate() {
            cum += w;
            if u < cum {
                z = k;
                break;
            }
        }
        labels.push(z);
    }

    let mut latent = Array2::zeros((n, j));
    for i in 0..n {
        let dag = &dags[labels[i]];
        for &v in &orders[labels[i]] {
            let node = &dag.nodes()[v];
            let mut value = node.intercept;
            for (p_idx, &p) in node.parents.iter().enumerate() {
                value += node.weights[p_idx] * latent[[i, p]];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            latent[[i, v]] = value + spec.noise_sd * e;
        }
    }
    Ok(LatentPanel {
        latent,
        labels,
        dags,
    })
}

/// Full instance: latent panel discretized through cut points that invert
/// the true marginal mixture CDF at the tier's cumulative probabilities.
pub fn generate(spec: &TierSpec, replicate: usize) -> Result<BenchmarkInstance> {
    let panel = generate_latent(spec, replicate)?;
    let j = spec.n_items();
    let moments: Vec<(Vec<f64>, Vec<f64>)> = panel.dags.iter().map(sem_moments).collect();

    let mut cuts = Vec::with_capacity(j);
    for jj in 0..j {
        let means: Vec<f64> = moments.iter().map(|(m, _)| m[jj]).collect();
        let sds: Vec<f64> = moments.iter().map(|(_, v)| v[jj].sqrt()).collect();
        let item_cuts: Vec<f64> = spec.cut_probs[jj]
            .iter()
            .map(|&p| invert_mixture_cdf(p, &spec.weights, &means, &sds))
            .collect();
        cuts.push(item_cuts);
    }

    let n = spec.n_rows;
    let mut values = Array2::zeros((n, j));
    for i in 0..n {
        for jj in 0..j {
            let x = panel.latent[[i, jj]];
            let code = 1 + cuts[jj].iter().filter(|&&t| x > t).count() as u32;
            values[[i, jj]] = code;
        }
    }
    let names = (1..=j).map(|t| format!("item_{t}")).collect();
    let category_counts = spec.cut_probs.iter().map(|c| c.len() + 1).collect();
    let data = OrdinalDataset::new(values, names, category_counts)?;
    Ok(BenchmarkInstance {
        data,
        labels: panel.labels,
        dags: panel.dags,
        cuts,
        spec: spec.clone(),
        replicate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub pipeline: PipelineConfig,
    pub plan: SelectionPlan,
    /// Tiers (by name) on which the inner-CV K selection also runs; it is
    /// the expensive part, so the default limits it to the easy tier.
    pub selection_tiers: Vec<String>,
}

impl BenchmarkOptions {
    pub fn new(seed: u64) -> BenchmarkOptions {
        BenchmarkOptions {
            pipeline: PipelineConfig::new(seed),
            plan: SelectionPlan::default(),
            selection_tiers: vec!["easy".to_string()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub tier: usize,
    pub replicate: usize,
    pub variant: ModelVariant,
    pub mse: f64,
    pub ari: f64,
    pub nmi: f64,
    pub mean_shd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierVariantSummary {
    pub tier: String,
    pub variant: ModelVariant,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub ari_mean: f64,
    pub ari_sd: f64,
    pub nmi_mean: f64,
    pub nmi_sd: f64,
    pub shd_mean: f64,
    pub shd_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub tier: String,
    pub replicate: usize,
    pub k_true: usize,
    pub k_star: usize,
    pub curve: Vec<KCurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub tiers: Vec<TierSpec>,
    pub cells: Vec<BenchmarkCell>,
    pub summaries: Vec<TierVariantSummary>,
    pub selection: Vec<SelectionOutcome>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn graph_edges_of(dag: &ArchetypeDag) -> GraphEdges {
    GraphEdges::new(dag.n_nodes(), dag.edge_pairs()).expect("edges come from a valid dag")
}

/// Mean SHD between fitted and true graphs after aligning fitted clusters
/// to true clusters by test-row overlap. Fitted clusters without a match
/// are skipped; a variant with no cluster structure (or no matches at all)
/// is scored against every true graph with what it effectively asserts —
/// its single graph, or the empty graph.
fn mean_aligned_shd(
    fitted: &[ArchetypeDag],
    fitted_labels: &[usize],
    true_dags: &[ArchetypeDag],
    true_labels: &[usize],
) -> Result<f64> {
    let k_fit = fitted.len();
    let k_true = true_dags.len();
    let mapping = align_labels(fitted_labels, true_labels, k_fit, k_true)?;
    let mut total = 0usize;
    let mut pairs = 0usize;
    for (k, target) in mapping.iter().enumerate() {
        if let Some(t) = target {
            total += shd(&graph_edges_of(&fitted[k]), &graph_edges_of(&true_dags[*t]))?;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return single_graph_shd(&ArchetypeDag::empty(true_dags[0].n_nodes()), true_dags);
    }
    Ok(total as f64 / pairs as f64)
}

/// Mean SHD of one graph against every true cluster graph.
fn single_graph_shd(fitted: &ArchetypeDag, true_dags: &[ArchetypeDag]) -> Result<f64> {
    let fe = graph_edges_of(fitted);
    let mut total = 0usize;
    for td in true_dags {
        total += shd(&fe, &graph_edges_of(td))?;
    }
    Ok(total as f64 / true_dags.len() as f64)
}

/// The four-model × tier × replicate recovery table. Fixed-K variants use
/// the generator's true K; the BNP variant discovers its own.
pub fn run_benchmark(tiers: &[TierSpec], options: &BenchmarkOptions) -> Result<BenchmarkReport> {
    if tiers.is_empty() {
        return Err(Error::InvalidConfig("no tiers given".into()));
    }
    options.plan.validate()?;
    let config = &options.pipeline;
    let mut cells = Vec::new();
    let mut selection = Vec::new();

    for (tier_idx, spec) in tiers.iter().enumerate() {
        spec.validate()?;
        for rep in 0..spec.replications {
            let instance = generate(spec, rep)?;
            let embedding = fit_embedding(&instance.data)?;
            let x_full = transform(&instance.data, &embedding)?;
            let split_seed = derive_seed(
                config.seed,
                "bench-split",
                &[tier_idx as u64, rep as u64],
            );
            let (train_rows, test_rows) =
                outer_split(spec.n_rows, options.plan.outer_test_fraction, split_seed)?;
            let x_train = x_full.select_rows(&train_rows);
            let x_test = x_full.select_rows(&test_rows);
            let true_test: Vec<usize> = test_rows.iter().map(|&i| instance.labels[i]).collect();
            let true_part = Partition::new(&true_test);

            let stage_seed =
                |tag: &str| derive_seed(config.seed, tag, &[tier_idx as u64, rep as u64]);

            let bnp = fit(
                &x_train,
                &config.mixture_config(FitMode::Bnp { k_max: config.k_max }, stage_seed("bench-bnp")),
            )?;
            let fixed = fit(
                &x_train,
                &config.mixture_config(
                    FitMode::Fixed { k: spec.k_true },
                    stage_seed("bench-fixed"),
                ),
            )?;
            let single = fit_single_graph(
                &x_train,
                &config.mixture_config(FitMode::Fixed { k: 1 }, stage_seed("bench-single")),
            )?;
            let gmm = fit_mixture_only(
                &x_train,
                spec.k_true,
                &config.mixture_config(
                    FitMode::Fixed { k: spec.k_true },
                    stage_seed("bench-gmm"),
                ),
            )?;

            let empty_dag = ArchetypeDag::empty(spec.n_items());
            for variant in ModelVariant::ALL {
                let (mse, labels_hat, shd_value) = match variant {
                    ModelVariant::BnpDag => {
                        let labels_hat = bnp.predict_labels(&x_test)?;
                        let s = mean_aligned_shd(
                            bnp.dags(),
                            &labels_hat,
                            &instance.dags,
                            &true_test,
                        )?;
                        (holdout_mse(&bnp, &x_test)?, labels_hat, s)
                    }
                    ModelVariant::FixedKDag => {
                        let labels_hat = fixed.predict_labels(&x_test)?;
                        let s = mean_aligned_shd(
                            fixed.dags(),
                            &labels_hat,
                            &instance.dags,
                            &true_test,
                        )?;
                        (holdout_mse(&fixed, &x_test)?, labels_hat, s)
                    }
                    ModelVariant::SingleGraph => {
                        let labels_hat = single.predict_labels(&x_test)?;
                        let dag = match &single {
                            crate::mixture::BaselineModel::SingleGraph { dag, .. } => dag,
                            _ => unreachable!(),
                        };
                        let s = single_graph_shd(dag, &instance.dags)?;
                        (holdout_mse(&single, &x_test)?, labels_hat, s)
                    }
                    ModelVariant::MixtureOnly => {
                        let labels_hat = gmm.predict_labels(&x_test)?;
                        let s = single_graph_shd(&empty_dag, &instance.dags)?;
                        (holdout_mse(&gmm, &x_test)?, labels_hat, s)
                    }
                };
                let hat_part = Partition::new(&labels_hat);
                cells.push(BenchmarkCell {
                    tier: tier_idx,
                    replicate: rep,
                    variant,
                    mse,
                    ari: ari(&hat_part, &true_part)?,
                    nmi: nmi(&hat_part, &true_part)?,
                    mean_shd: shd_value,
                });
            }

            if options.selection_tiers.iter().any(|t| t == &spec.name) {
                let sel_config = PipelineConfig {
                    seed: stage_seed("bench-select"),
                    ..*config
                };
                let (k_star, curve) = select_k(&x_train, &options.plan, &sel_config)?;
                selection.push(SelectionOutcome {
                    tier: spec.name.clone(),
                    replicate: rep,
                    k_true: spec.k_true,
                    k_star,
                    curve,
                });
            }
        }
    }

    let mut summaries = Vec::new();
    for (tier_idx, spec) in tiers.iter().enumerate() {
        for variant in ModelVariant::ALL {
            let rows: Vec<&BenchmarkCell> = cells
                .iter()
                .filter(|c| c.tier == tier_idx && c.variant == variant)
                .collect();
            let pick = |f: fn(&BenchmarkCell) -> f64| -> Vec<f64> {
                rows.iter().map(|c| f(c)).collect()
            };
            let (mse_mean, mse_sd) = mean_sd(&pick(|c| c.mse));
            let (ari_mean, ari_sd) = mean_sd(&pick(|c| c.ari));
            let (nmi_mean, nmi_sd) = mean_sd(&pick(|c| c.nmi));
            let (shd_mean, shd_sd) = mean_sd(&pick(|c| c.mean_shd));
            summaries.push(TierVariantSummary {
                tier: spec.name.clone(),
                variant,
                mse_mean,
                mse_sd,
                ari_mean,
                ari_sd,
                nmi_mean,
                nmi_sd,
                shd_mean,
                shd_sd,
            });
        }
    }

    Ok(BenchmarkReport {
        tiers: tiers.to_vec(),
        cells,
        summaries,
        selection,
    })
}

/// Ordinal matrix as CSV: item names as header, 1-based codes as integers.
pub fn write_instance_csv(instance: &BenchmarkInstance, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(instance.data.item_names())?;
    for i in 0..instance.data.n_rows() {
        let row: Vec<String> = (0..instance.data.n_items())
            .map(|j| instance.data.values()[[i, j]].to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground-truth sidecar for a generated instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub spec: TierSpec,
    pub replicate: usize,
    pub labels: Vec<usize>,
    pub graphs: Vec<GraphJson>,
    pub cuts: Vec<Vec<f64>>,
}

pub fn instance_sidecar(instance: &BenchmarkInstance) -> InstanceSidecar {
    InstanceSidecar {
        spec: instance.spec.clone(),
        replicate: instance.replicate,
        labels: instance.labels.clone(),
        graphs: instance
            .dags
            .iter()
            .map(|d| GraphJson::from_dag(d, instance.data.item_names()))
            .collect(),
        cuts: instance.cuts.clone(),
    }
}

/// Long-format CSV for plotting: tier,replicate,model,metric,value.
pub fn write_report_csv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tier", "replicate", "model", "metric", "value"])?;
    for cell in &report.cells {
        let tier = &report.tiers[cell.tier].name;
        let rep = cell.replicate.to_string();
        let model = cell.variant.label();
        for (metric, value) in [
            ("mse", cell.mse),
            ("ari", cell.ari),
            ("nmi", cell.nmi),
            ("mean_shd", cell.mean_shd),
        ] {
            w.write_record([tier.as_str(), &rep, model, metric, &format!("{value}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::LOG_2PI;

    fn quick_spec(seed: u64) -> TierSpec {
        TierSpec {
            name: "quick".into(),
            k_true: 3,
            weights: vec![1.0 / 3.0; 3],
            separation: 2.0,
            edges_per_cluster: 8,
            differing_edges: 6,
            weight_range: (0.4, 0.9),
            noise_sd: 1.0,
            max_parents: 2,
            n_rows: 600,
            cut_probs: default_cut_probs(),
            replications: 1,
            seed,
        }
    }

    #[test]
    fn default_tiers_shape() {
        let tiers = default_tiers();
        assert_eq!(tiers.len(), 4);
        let names: Vec<&str> = tiers.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, vec!["easy", "moderate", "hard", "stress"]);
        for t in &tiers {
            t.validate().unwrap();
            assert_eq!(t.k_true, 3);
            assert_eq!(t.n_items(), 8);
            assert_eq!(t.n_rows, 4800);
            assert_eq!(t.replications, 3);
            for cuts in &t.cut_probs {
                let categories = cuts.len() + 1;
                assert!((4..=6).contains(&categories));
            }
        }
        assert!(tiers[0].separation > tiers[1].separation);
        assert!(tiers[1].separation > tiers[2].separation);
        assert!(tiers[2].separation > tiers[3].separation);
        let diffs: Vec<usize> = tiers.iter().map(|t| t.differing_edges).collect();
        assert_eq!(diffs, vec![6, 4, 2, 0]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = quick_spec(1);
        s.weights = vec![0.5, 0.4, 0.2];
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let mut s = quick_spec(1);
        s.differing_edges = 3;
        assert!(s.validate().is_err());
        let mut s = quick_spec(1);
        s.differing_edges = 10;
        assert!(s.validate().is_err());
        let mut s = quick_spec(1);
        s.edges_per_cluster = 14; // capacity for J=8, cap 2 is 13
        assert!(s.validate().is_err());
        let mut s = quick_spec(1);
        s.cut_probs[0] = vec![0.5, 0.4];
        assert!(s.validate().is_err());
        let mut s = quick_spec(1);
        s.cut_probs[2] = vec![0.2, 1.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = quick_spec(11);
        let a = generate(&spec, 0).unwrap();
        let b = generate(&spec, 0).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec, 1).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn cluster_graphs_respect_the_construction() {
        let spec = quick_spec(17);
        let instance = generate(&spec, 0).unwrap();
        assert_eq!(instance.dags.len(), 3);
        let sets: Vec<BTreeSet<(usize, usize)>> = instance
            .dags
            .iter()
            .map(|d| d.edge_pairs().into_iter().collect())
            .collect();
        for (k, dag) in instance.dags.iter().enumerate() {
            assert_eq!(dag.n_edges(), spec.edges_per_cluster, "cluster {k}");
            for node in dag.nodes() {
                assert!(node.parents.len() <= spec.max_parents);
            }
        }
        // pairwise distinct, sharing at least the base minus swaps
        for a in 0..3 {
            for b in (a + 1)..3 {
                assert_ne!(sets[a], sets[b]);
                let shared = sets[a].intersection(&sets[b]).count();
                assert!(
                    shared >= spec.edges_per_cluster - spec.differing_edges,
                    "clusters {a},{b} share only {shared}"
                );
            }
        }
        // shared edges carry identical weights
        let weight = |dag: &ArchetypeDag, e: (usize, usize)| -> f64 {
            dag.edges()
                .into_iter()
                .find(|&(u, v, _)| (u, v) == e)
                .map(|(_, _, w)| w)
                .unwrap()
        };
        for a in 0..3 {
            for b in (a + 1)..3 {
                for &e in sets[a].intersection(&sets[b]) {
                    assert_eq!(weight(&instance.dags[a], e), weight(&instance.dags[b], e));
                }
            }
        }
        // weights in the magnitude band; marginal means sit at exactly
        // ±(s/2)·(marginal SD) per node
        for dag in &instance.dags {
            for (_, _, w) in dag.edges() {
                assert!((0.4..=0.9).contains(&w.abs()));
            }
            let (means, vars) = sem_moments(dag);
            for (m, v) in means.iter().zip(&vars) {
                let half_shift = spec.separation / 2.0 * v.sqrt();
                assert!((m.abs() - half_shift).abs() < 1e-9, "{m} vs ±{half_shift}");
            }
        }
        // clusters differ in their shift directions on at least half the items
        let moments: Vec<Vec<f64>> = instance
            .dags
            .iter()
            .map(|d| sem_moments(d).0)
            .collect();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let differing = moments[a]
                    .iter()
                    .zip(&moments[b])
                    .filter(|(x, y)| x.signum() != y.signum())
                    .count();
                assert!(differing >= 4, "clusters {a},{b} differ on {differing} items");
            }
        }
    }

    #[test]
    fn zero_separation_zero_difference_clusters_are_identical() {
        let mut spec = quick_spec(23);
        spec.separation = 0.0;
        spec.differing_edges = 0;
        let instance = generate(&spec, 0).unwrap();
        assert_eq!(instance.dags[0], instance.dags[1]);
        assert_eq!(instance.dags[1], instance.dags[2]);
        assert!(instance.dags[0]
            .nodes()
            .iter()
            .all(|node| node.intercept == 0.0));
    }

    #[test]
    fn sem_moments_match_matrix_inversion_oracle() {
        let spec = quick_spec(29);
        let panel = generate_latent(&spec, 0).unwrap();
        for dag in &panel.dags {
            let j = dag.n_nodes();
            // oracle: solve (I - B')m = delta and Sigma = (I-B')^-1 D (I-B')^-T
            // where B'[v][p] = weight of p -> v
            let mut a = vec![vec![0.0; j]; j];
            for v in 0..j {
                a[v][v] = 1.0;
                let node = &dag.nodes()[v];
                for (idx, &p) in node.parents.iter().enumerate() {
                    a[v][p] = -node.weights[idx];
                }
            }
            let inv = invert(&a);
            let delta: Vec<f64> = dag.nodes().iter().map(|n| n.intercept).collect();
            let (means, vars) = sem_moments(dag);
            for v in 0..j {
                let oracle_mean: f64 = (0..j).map(|p| inv[v][p] * delta[p]).sum();
                assert!((means[v] - oracle_mean).abs() < 1e-9);
                let oracle_var: f64 = (0..j)
                    .map(|e| inv[v][e] * inv[v][e] * dag.nodes()[e].residual_var)
                    .sum();
                assert!((vars[v] - oracle_var).abs() < 1e-9);
            }
        }
    }

    fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|k| f64::from(u8::from(k == i))));
                r
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| m[p][col].abs().partial_cmp(&m[q][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot);
            let d = m[col][col];
            for v in m[col].iter_mut() {
                *v /= d;
            }
            for r in 0..n {
                if r != col && m[r][col] != 0.0 {
                    let f = m[r][col];
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        m.into_iter().map(|row| row[n..].to_vec()).collect()
    }

    #[test]
    fn latent_moments_match_simulation_at_scale() {
        let mut spec = quick_spec(31);
        spec.n_rows = 100_000;
        let panel = generate_latent(&spec, 0).unwrap();
        for k in 0..spec.k_true {
            let rows: Vec<usize> = panel
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &z)| z == k)
                .map(|(i, _)| i)
                .collect();
            let n_k = rows.len() as f64;
            assert!(n_k > 20_000.0);
            let (means, vars) = sem_moments(&panel.dags[k]);
            for j in 0..spec.n_items() {
                let emp_mean: f64 =
                    rows.iter().map(|&i| panel.latent[[i, j]]).sum::<f64>() / n_k;
                let emp_var: f64 = rows
                    .iter()
                    .map(|&i| (panel.latent[[i, j]] - emp_mean).powi(2))
                    .sum::<f64>()
                    / n_k;
                let se = (vars[j] / n_k).sqrt();
                assert!(
                    (emp_mean - means[j]).abs() < 6.0 * se,
                    "cluster {k} item {j}: {emp_mean} vs {}",
                    means[j]
                );
                assert!(
                    (emp_var / vars[j] - 1.0).abs() < 0.05,
                    "cluster {k} item {j}: var {emp_var} vs {}",
                    vars[j]
                );
            }
            // a few cross-covariances against the composed oracle
            let dag = &panel.dags[k];
            let jn = dag.n_nodes();
            let order = topo_order(dag);
            let mut t = vec![vec![0.0; jn]; jn];
            for &v in &order {
                let node = &dag.nodes()[v];
                t[v][v] = 1.0;
                for (idx, &p) in node.parents.iter().enumerate() {
                    for e in 0..jn {
                        t[v][e] += node.weights[idx] * t[p][e];
                    }
                }
            }
            for (a, b) in [(0usize, 1usize), (2, 5), (3, 7)] {
                let oracle: f64 = (0..jn)
                    .map(|e| t[a][e] * t[b][e] * dag.nodes()[e].residual_var)
                    .sum();
                let ma = rows.iter().map(|&i| panel.latent[[i, a]]).sum::<f64>() / n_k;
                let mb = rows.iter().map(|&i| panel.latent[[i, b]]).sum::<f64>() / n_k;
                let emp: f64 = rows
                    .iter()
                    .map(|&i| (panel.latent[[i, a]] - ma) * (panel.latent[[i, b]] - mb))
                    .sum::<f64>()
                    / n_k;
                assert!(
                    (emp - oracle).abs() < 0.1,
                    "cov({a},{b}) {emp} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn cell_frequencies_match_cdf_arithmetic() {
        let mut spec = quick_spec(37);
        spec.n_rows = 5000;
        let instance = generate(&spec, 0).unwrap();
        let moments: Vec<(Vec<f64>, Vec<f64>)> = instance.dags.iter().map(sem_moments).collect();
        for j in 0..spec.n_items() {
            let cuts = &instance.cuts[j];
            let n_cats = cuts.len() + 1;
            // implied cell probabilities from the mixture CDF
            let cdf_at = |t: f64| -> f64 {
                (0..spec.k_true)
                    .map(|k| {
                        let m = moments[k].0[j];
                        let s = moments[k].1[j].sqrt();
                        spec.weights[k] * normal_cdf((t - m) / s)
                    })
                    .sum()
            };
            // the realized cuts must invert the target probabilities
            for (c, &t) in cuts.iter().enumerate() {
                assert!(
                    (cdf_at(t) - spec.cut_probs[j][c]).abs() < 1e-9,
                    "item {j} cut {c}"
                );
            }
            for c in 0..n_cats {
                let p_lo = if c == 0 { 0.0 } else { cdf_at(cuts[c - 1]) };
                let p_hi = if c == n_cats - 1 { 1.0 } else { cdf_at(cuts[c]) };
                let implied = p_hi - p_lo;
                let observed = (0..spec.n_rows)
                    .filter(|&i| instance.data.values()[[i, j]] == (c + 1) as u32)
                    .count() as f64
                    / spec.n_rows as f64;
                assert!(
                    (observed - implied).abs() <= 0.02,
                    "item {j} cat {c}: {observed} vs {implied}"
                );
            }
        }
    }

    fn oracle_ari(easy: &TierSpec, replicate: usize) -> f64 {
        let panel = generate_latent(easy, replicate).unwrap();
        // classify each latent row by the true mixture: argmax_k log w_k +
        // log N(x; m_k, Sigma_k) with a dense Cholesky oracle
        let jn = easy.n_items();
        let params: Vec<(Vec<f64>, Vec<Vec<f64>>)> = panel
            .dags
            .iter()
            .map(|dag| {
                let order = topo_order(dag);
                let mut t = vec![vec![0.0; jn]; jn];
                for &v in &order {
                    let node = &dag.nodes()[v];
                    t[v][v] = 1.0;
                    for (idx, &p) in node.parents.iter().enumerate() {
                        for e in 0..jn {
                            t[v][e] += node.weights[idx] * t[p][e];
                        }
                    }
                }
                let (means, _) = sem_moments(dag);
                let mut sigma = vec![vec![0.0; jn]; jn];
                for a in 0..jn {
                    for b in 0..jn {
                        sigma[a][b] = (0..jn)
                            .map(|e| t[a][e] * t[b][e] * dag.nodes()[e].residual_var)
                            .sum();
                    }
                }
                (means, sigma)
            })
            .collect();
        let chol = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let n = m.len();
            let mut l = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                    if i == j {
                        l[i][j] = (m[i][i] - s).sqrt();
                    } else {
                        l[i][j] = (m[i][j] - s) / l[j][j];
                    }
                }
            }
            l
        };
        let logdets_and_chols: Vec<(f64, Vec<Vec<f64>>)> = params
            .iter()
            .map(|(_, sigma)| {
                let l = chol(sigma);
                let logdet = 2.0 * (0..jn).map(|i| l[i][i].ln()).sum::<f64>();
                (logdet, l)
            })
            .collect();
        let mut hits = 0usize;
        let mut predicted = Vec::with_capacity(easy.n_rows);
        for i in 0..easy.n_rows {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for k in 0..easy.k_true {
                let (means, _) = &params[k];
                let (logdet, l) = &logdets_and_chols[k];
                let diff: Vec<f64> = (0..jn).map(|j| panel.latent[[i, j]] - means[j]).collect();
                // solve L y = diff
                let mut y = vec![0.0; jn];
                for r in 0..jn {
                    let s: f64 = (0..r).map(|c| l[r][c] * y[c]).sum();
                    y[r] = (diff[r] - s) / l[r][r];
                }
                let quad: f64 = y.iter().map(|v| v * v).sum();
                let logpdf = -0.5 * (jn as f64 * LOG_2PI + logdet + quad);
                let score = easy.weights[k].ln() + logpdf;
                if score > best.0 {
                    best = (score, k);
                }
            }
            predicted.push(best.1);
            if best.1 == panel.labels[i] {
                hits += 1;
            }
        }
        let _accuracy = hits as f64 / easy.n_rows as f64;
        ari(&Partition::new(&predicted), &Partition::new(&panel.labels)).unwrap()
    }

    #[test]
    fn oracle_classifier_recovers_easy_labels() {
        let mut easy = default_tiers().remove(0);
        easy.n_rows = 2000;
        for rep in 0..6 {
            let score = oracle_ari(&easy, rep);
            eprintln!("rep {rep}: oracle ARI {score:.4}");
            assert!(score >= 0.95, "replicate {rep}: oracle ARI {score}");
        }
    }

    #[test]
    fn report_files_have_the_declared_shape() {
        let mut spec = quick_spec(41);
        spec.name = "easy".into();
        spec.n_rows = 700;
        spec.separation = 2.5;
        let mut options = BenchmarkOptions::new(99);
        options.pipeline.n_min = 30.0;
        options.pipeline.k_max = 5;
        options.plan.k_grid = vec![2, 3, 4];
        options.plan.inner_folds = 3;
        let report = run_benchmark(std::slice::from_ref(&spec), &options).unwrap();
        assert_eq!(report.cells.len(), 4); // 1 tier × 1 replicate × 4 variants
        assert_eq!(report.summaries.len(), 4);
        assert_eq!(report.selection.len(), 1);
        assert_eq!(report.selection[0].curve.len(), 3);
        for cell in &report.cells {
            assert!(cell.mse.is_finite() && cell.mean_shd >= 0.0);
            assert!((-1.0..=1.0).contains(&cell.ari));
            assert!((0.0..=1.0).contains(&cell.nmi));
        }

        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("report.csv");
        write_report_csv(&report, &csv_path).unwrap();
        let mut reader = csv::Reader::from_path(&csv_path).unwrap();
        let headers = reader.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            vec!["tier", "replicate", "model", "metric", "value"]
        );
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 16); // 4 cells × 4 metrics

        let instance = generate(&spec, 0).unwrap();
        let data_path = dir.path().join("instance.csv");
        write_instance_csv(&instance, &data_path).unwrap();
        let mut reader = csv::Reader::from_path(&data_path).unwrap();
        assert_eq!(reader.headers().unwrap().len(), 8);
        assert_eq!(reader.records().count(), 700);

        let side = instance_sidecar(&instance);
        let text = serde_json::to_string(&side).unwrap();
        let parsed: InstanceSidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.labels, instance.labels);
        assert_eq!(parsed.graphs.len(), 3);
        assert_eq!(parsed.graphs[0].to_dag().unwrap(), instance.dags[0]);
    }
}
