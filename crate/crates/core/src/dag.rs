//! Sparse linear-Gaussian DAGs: responsibility-weighted node fits, weighted
//! BIC scoring, and greedy acyclicity-constrained structure search.
//!
//! Every node j regresses on its parent set Pa(j) with intercept beta_0j and
//! residual variance sigma2_j. The node score is
//! n_eff * log(max(rss, rss_floor)/n_eff) + lambda * d * log(n_eff) with
//! d = |Pa(j)| + 1, and the graph score is the sum over nodes. The search
//! walks add/delete/reverse moves, best improvement first, under a parent
//! cap and an acyclicity check after every candidate.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_normal_pdf;

/// Lower bound on any reported residual variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// rss is floored at this multiple of n_eff inside the BIC, bounding the
/// log-likelihood of near-perfect fits.
pub const RSS_FLOOR_SCALE: f64 = 1e-10;

/// A candidate move must improve the graph BIC by at least this much to be
/// accepted; blocks float-noise loops at a local optimum.
const ACCEPT_TOL: f64 = 1e-9;

/// Structure-search knobs. `lambda` scales the BIC complexity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_parents: usize,
    pub lambda: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_parents: 2,
            lambda: 1.0,
        }
    }
}

/// One node's fitted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    /// Intercept first, then one coefficient per parent in parent order.
    pub coefficients: Vec<f64>,
    /// Responsibility-weighted residual sum of squares at the minimizer.
    pub rss: f64,
    /// Parameter count including the intercept: |Pa(j)| + 1.
    pub d: usize,
    /// Σ_i r_i, the effective mass behind the fit.
    pub n_eff: f64,
}

/// One cluster's DAG with parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeDag {
    nodes: Vec<NodeParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    /// Sorted parent indices.
    pub parents: Vec<usize>,
    /// Edge weights aligned with `parents`.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub residual_var: f64,
}

impl ArchetypeDag {
    /// Builds a DAG from per-node parameters, checking acyclicity, the
    /// parent/weight alignment, and positive residual variances.
    pub fn new(nodes: Vec<NodeParams>) -> Result<Self> {
        let parents: Vec<Vec<usize>> = nodes.iter().map(|n| n.parents.clone()).collect();
        if !is_acyclic(&parents) {
            return Err(Error::Numeric("graph contains a directed cycle".into()));
        }
        for (j, node) in nodes.iter().enumerate() {
            if node.weights.len() != node.parents.len() {
                return Err(Error::Numeric(format!(
                    "node {j}: {} parents but {} weights",
                    node.parents.len(),
                    node.weights.len()
                )));
            }
            if !(node.residual_var > 0.0) {
                return Err(Error::Numeric(format!(
                    "node {j}: residual variance {} not positive",
                    node.residual_var
                )));
            }
            if node.parents.iter().any(|&p| p == j || p >= nodes.len()) {
                return Err(Error::Numeric(format!("node {j}: invalid parent index")));
            }
        }
        Ok(ArchetypeDag { nodes })
    }

    /// The empty graph: no parents, intercepts 0, unit residual variances.
    pub fn empty(n_nodes: usize) -> Self {
        ArchetypeDag {
            nodes: (0..n_nodes)
                .map(|_| NodeParams {
                    parents: Vec::new(),
                    weights: Vec::new(),
                    intercept: 0.0,
                    residual_var: 1.0,
                })
                .collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, j: usize) -> &NodeParams {
        &self.nodes[j]
    }

    pub fn nodes(&self) -> &[NodeParams] {
        &self.nodes
    }

    /// Directed edges (source, target, weight), sorted by (source, target).
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (j, node) in self.nodes.iter().enumerate() {
            for (m, &p) in node.parents.iter().enumerate() {
                out.push((p, j, node.weights[m]));
            }
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    /// Directed edges without weights, sorted.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().map(|(s, t, _)| (s, t)).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    /// Per-node linear predictions beta_0j + Σ_m beta_mj x_m.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|node| {
                let mut v = node.intercept;
                for (m, &p) in node.parents.iter().enumerate() {
                    v += node.weights[m] * row[p];
                }
                v
            })
            .collect()
    }

    /// Joint Gaussian log-density of one row under the factorization.
    pub fn log_density_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut total = 0.0;
        for (j, node) in self.nodes.iter().enumerate() {
            let mut mean = node.intercept;
            for (m, &p) in node.parents.iter().enumerate() {
                mean += node.weights[m] * row[p];
            }
            total += log_normal_pdf(row[j], mean, node.residual_var);
        }
        total
    }
}

/// True iff the parent lists admit a topological order.
pub fn is_acyclic(parents: &[Vec<usize>]) -> bool {
    let j = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut queue: Vec<usize> = (0..j).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for (m, pa) in parents.iter().enumerate() {
            if pa.contains(&v) {
                indegree[m] -= 1;
                if indegree[m] == 0 {
                    queue.push(m);
                }
            }
        }
    }
    seen == j
}

/// Weighted least squares of column j on its parents (intercept included).
///
/// A rank-deficient weighted Gram matrix is retried with escalating ridge
/// jitter on the diagonal before giving up, so degenerate clusters inside
/// EM never abort the fit.
pub fn weighted_node_fit(
    x: &Array2<f64>,
    j: usize,
    parents: &[usize],
    r: &[f64],
) -> Result<NodeFit> {
    let n = x.nrows();
    if r.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} rows",
            r.len(),
            n
        )));
    }
    let n_eff: f64 = r.iter().sum();
    if !(n_eff > 0.0) {
        return Err(Error::Numeric(
            "weighted node fit needs positive total mass".into(),
        ));
    }
    let dim = parents.len() + 1;
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for i in 0..n {
        let w = r[i];
        if w == 0.0 {
            continue;
        }
        g[0] = 1.0;
        for (m, &p) in parents.iter().enumerate() {
            g[m + 1] = x[[i, p]];
        }
        let y = x[[i, j]];
        for a in 0..dim {
            let wga = w * g[a];
            for b in a..dim {
                gram[a * dim + b] += wga * g[b];
            }
            rhs[a] += wga * y;
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[a * dim + b] = gram[b * dim + a];
        }
    }
    let coefficients = solve_spd_with_jitter(gram, &rhs, dim)?;
    let mut rss = 0.0;
    for i in 0..n {
        let w = r[i];
        if w == 0.0 {
            continue;
        }
        let mut pred = coefficients[0];
        for (m, &p) in parents.iter().enumerate() {
            pred += coefficients[m + 1] * x[[i, p]];
        }
        let e = x[[i, j]] - pred;
        rss += w * e * e;
    }
    Ok(NodeFit {
        coefficients,
        rss,
        d: dim,
        n_eff,
    })
}

/// Cholesky solve of a small SPD system, retrying with ridge jitter
/// 1e-8..1e-2 (times the mean diagonal) when a pivot collapses.
fn solve_spd_with_jitter(gram: Vec<f64>, rhs: &[f64], dim: usize) -> Result<Vec<f64>> {
    let scale = (0..dim).map(|a| gram[a * dim + a]).sum::<f64>() / dim as f64;
    for jitter in [0.0, 1e-8, 1e-6, 1e-4, 1e-2] {
        let mut m = gram.clone();
        if jitter > 0.0 {
            for a in 0..dim {
                m[a * dim + a] += jitter * scale;
            }
        }
        if let Some(sol) = cholesky_solve(&mut m, rhs, dim, scale) {
            return Ok(sol);
        }
    }
    Err(Error::SingularDesign(format!(
        "rank-deficient {dim}x{dim} weighted Gram matrix survived jitter"
    )))
}

fn cholesky_solve(m: &mut [f64], rhs: &[f64], dim: usize, scale: f64) -> Option<Vec<f64>> {
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    // in-place lower Cholesky
    for a in 0..dim {
        for b in 0..=a {
            let mut s = m[a * dim + b];
            for k in 0..b {
                s -= m[a * dim + k] * m[b * dim + k];
            }
            if a == b {
                if s <= tiny {
                    return None;
                }
                m[a * dim + a] = s.sqrt();
            } else {
                m[a * dim + b] = s / m[b * dim + b];
            }
        }
    }
    // forward then backward substitution
    let mut z = rhs.to_vec();
    for a in 0..dim {
        for k in 0..a {
            z[a] -= m[a * dim + k] * z[k];
        }
        z[a] /= m[a * dim + a];
    }
    for a in (0..dim).rev() {
        for k in a + 1..dim {
            z[a] -= m[k * dim + a] * z[k];
        }
        z[a] /= m[a * dim + a];
    }
    Some(z)
}

/// Node-level BIC: n_eff * log(max(rss, floor)/n_eff) + lambda * d * log(n_eff).
pub fn node_bic(fit: &NodeFit, lambda: f64) -> f64 {
    let n = fit.n_eff;
    let rss = fit.rss.max(RSS_FLOOR_SCALE * n);
    n * (rss / n).ln() + lambda * fit.d as f64 * n.ln()
}

/// Graph-level BIC: the sum of node BICs with every node refit under r.
pub fn graph_bic(
    x: &Array2<f64>,
    parents: &[Vec<usize>],
    r: &[f64],
    config: &SearchConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, pa) in parents.iter().enumerate() {
        let fit = weighted_node_fit(x, j, pa, r)?;
        total += node_bic(&fit, config.lambda);
    }
    Ok(total)
}

/// One accepted search move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Add,
    Delete,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub op: MoveKind,
    pub source: usize,
    pub target: usize,
    pub bic_before: f64,
    pub bic_after: f64,
}

/// Accepted-move log of one greedy search; BIC strictly decreases step to
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub initial_bic: f64,
    pub final_bic: f64,
    pub steps: Vec<SearchStep>,
}

/// Greedy BIC minimization over add/delete/reverse moves.
///
/// Best improvement each round; ties broken add < delete < reverse, then by
/// (source, target). Stops when no candidate improves the score. Node
/// scores are memoized per (node, parent set) within the call, so a
/// warm-started search that accepts nothing costs one sweep of fits.
pub fn greedy_search(
    x: &Array2<f64>,
    r: &[f64],
    config: &SearchConfig,
    warm_start: Option<&ArchetypeDag>,
) -> Result<(ArchetypeDag, SearchTrace)> {
    let j_nodes = x.ncols();
    let mut parents: Vec<Vec<usize>> = match warm_start {
        Some(dag) => {
            debug_assert_eq!(dag.n_nodes(), j_nodes);
            dag.nodes().iter().map(|n| n.parents.clone()).collect()
        }
        None => vec![Vec::new(); j_nodes],
    };
    debug_assert!(is_acyclic(&parents));

    let mut cache: HashMap<(usize, Vec<usize>), (f64, NodeFit)> = HashMap::new();
    let score = |node: usize,
                     pa: &[usize],
                     cache: &mut HashMap<(usize, Vec<usize>), (f64, NodeFit)>|
     -> Result<f64> {
        let key = (node, pa.to_vec());
        if let Some((bic, _)) = cache.get(&key) {
            return Ok(*bic);
        }
        let fit = weighted_node_fit(x, node, pa, r)?;
        let bic = node_bic(&fit, config.lambda);
        cache.insert(key, (bic, fit));
        Ok(bic)
    };

    let mut node_bics = Vec::with_capacity(j_nodes);
    for (v, pa) in parents.iter().enumerate() {
        node_bics.push(score(v, pa, &mut cache)?);
    }
    let initial_bic: f64 = node_bics.iter().sum();
    let mut total_bic = initial_bic;
    let mut steps = Vec::new();

    // with_edge/without_edge keep parent lists sorted
    fn with_edge(pa: &[usize], u: usize) -> Vec<usize> {
        let mut out = pa.to_vec();
        let pos = out.partition_point(|&p| p < u);
        out.insert(pos, u);
        out
    }
    fn without_edge(pa: &[usize], u: usize) -> Vec<usize> {
        pa.iter().copied().filter(|&p| p != u).collect()
    }

    let max_steps = 4 * j_nodes * j_nodes + 16;
    for _ in 0..max_steps {
        // (delta, tie rank, source, target, new target parents, new source parents)
        let mut best: Option<(f64, u8, usize, usize, Vec<usize>, Option<Vec<usize>>)> = None;
        for v in 0..j_nodes {
            for u in 0..j_nodes {
                if u == v {
                    continue;
                }
                let has_edge = parents[v].contains(&u);
                if !has_edge {
                    if parents[v].len() >= config.max_parents {
                        continue;
                    }
                    let pa_new = with_edge(&parents[v], u);
                    let old = std::mem::replace(&mut parents[v], pa_new.clone());
                    let ok = is_acyclic(&parents);
                    parents[v] = old;
                    if !ok {
                        continue;
                    }
                    let delta = score(v, &pa_new, &mut cache)? - node_bics[v];
                    let key = (delta, 0u8, u, v);
                    if best
                        .as_ref()
                        .map(|b| key < (b.0, b.1, b.2, b.3))
                        .unwrap_or(true)
                    {
                        best = Some((delta, 0, u, v, pa_new, None));
                    }
                } else {
                    // delete u -> v
                    let pa_del = without_edge(&parents[v], u);
                    let delta_del = score(v, &pa_del, &mut cache)? - node_bics[v];
                    let key = (delta_del, 1u8, u, v);
                    if best
                        .as_ref()
                        .map(|b| key < (b.0, b.1, b.2, b.3))
                        .unwrap_or(true)
                    {
                        best = Some((delta_del, 1, u, v, pa_del.clone(), None));
                    }
                    // reverse u -> v into v -> u
                    if parents[u].len() < config.max_parents {
                        let pa_u = with_edge(&parents[u], v);
                        let old_v = std::mem::replace(&mut parents[v], pa_del.clone());
                        let old_u = std::mem::replace(&mut parents[u], pa_u.clone());
                        let ok = is_acyclic(&parents);
                        parents[v] = old_v;
                        parents[u] = old_u;
                        if !ok {
                            continue;
                        }
                        let delta = score(v, &pa_del, &mut cache)? - node_bics[v]
                            + score(u, &pa_u, &mut cache)?
                            - node_bics[u];
                        let key = (delta, 2u8, u, v);
                        if best
                            .as_ref()
                            .map(|b| key < (b.0, b.1, b.2, b.3))
                            .unwrap_or(true)
                        {
                            best = Some((delta, 2, u, v, pa_del, Some(pa_u)));
                        }
                    }
                }
            }
        }
        match best {
            Some((delta, rank, u, v, pa_v, pa_u)) if delta < -ACCEPT_TOL => {
                let bic_before = total_bic;
                parents[v] = pa_v;
                node_bics[v] = score(v, &parents[v], &mut cache)?;
                if let Some(pa_u) = pa_u {
                    parents[u] = pa_u;
                    node_bics[u] = score(u, &parents[u], &mut cache)?;
                }
                total_bic += delta;
                debug_assert!(is_acyclic(&parents));
                steps.push(SearchStep {
                    op: match rank {
                        0 => MoveKind::Add,
                        1 => MoveKind::Delete,
                        _ => MoveKind::Reverse,
                    },
                    source: u,
                    target: v,
                    bic_before,
                    bic_after: total_bic,
                });
            }
            _ => break,
        }
    }

    let mut nodes = Vec::with_capacity(j_nodes);
    for (v, pa) in parents.iter().enumerate() {
        let (_, fit) = cache
            .get(&(v, pa.clone()))
            .expect("final parent set was scored");
        nodes.push(NodeParams {
            parents: pa.clone(),
            weights: fit.coefficients[1..].to_vec(),
            intercept: fit.coefficients[0],
            residual_var: (fit.rss / fit.n_eff).max(VARIANCE_FLOOR),
        });
    }
    let trace = SearchTrace {
        initial_bic,
        final_bic: total_bic,
        steps,
    };
    Ok((ArchetypeDag::new(nodes)?, trace))
}

/// Serialized graph: named edge list plus per-node intercepts and residual
/// variances, nodes in item order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub items: Vec<String>,
    pub edges: Vec<EdgeJson>,
    pub intercepts: Vec<f64>,
    pub residual_vars: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeJson {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

impl GraphJson {
    pub fn from_dag(dag: &ArchetypeDag, items: &[String]) -> GraphJson {
        assert_eq!(dag.n_nodes(), items.len());
        GraphJson {
            items: items.to_vec(),
            edges: dag
                .edges()
                .into_iter()
                .map(|(s, t, w)| EdgeJson {
                    source: items[s].clone(),
                    target: items[t].clone(),
                    weight: w,
                })
                .collect(),
            intercepts: dag.nodes().iter().map(|n| n.intercept).collect(),
            residual_vars: dag.nodes().iter().map(|n| n.residual_var).collect(),
        }
    }

    pub fn to_dag(&self) -> Result<ArchetypeDag> {
        let j = self.items.len();
        if self.intercepts.len() != j || self.residual_vars.len() != j {
            return Err(Error::SchemaMismatch(format!(
                "graph json: {j} items but {} intercepts / {} residual variances",
                self.intercepts.len(),
                self.residual_vars.len()
            )));
        }
        let index = |name: &str| -> Result<usize> {
            self.items
                .iter()
                .position(|i| i == name)
                .ok_or_else(|| Error::SchemaMismatch(format!("unknown item {name:?} in edge")))
        };
        let mut nodes: Vec<NodeParams> = (0..j)
            .map(|v| NodeParams {
                parents: Vec::new(),
                weights: Vec::new(),
                intercept: self.intercepts[v],
                residual_var: self.residual_vars[v],
            })
            .collect();
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            edges.push((index(&e.source)?, index(&e.target)?, e.weight));
        }
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (s, t, w) in edges {
            nodes[t].parents.push(s);
            nodes[t].weights.push(w);
        }
        for node in &mut nodes {
            let mut order: Vec<usize> = (0..node.parents.len()).collect();
            order.sort_by_key(|&m| node.parents[m]);
            node.parents = order.iter().map(|&m| node.parents[m]).collect();
            node.weights = order.iter().map(|&m| node.weights[m]).collect();
        }
        ArchetypeDag::new(nodes)
    }
}
