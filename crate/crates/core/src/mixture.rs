//! Truncated stick-breaking mixture of DAGs fit by generalized EM.
//!
//! The E-step computes responsibilities r_ik from the current graphs and
//! smoothed weights; the M-step refits each surviving cluster's DAG by
//! warm-started greedy BIC search under its responsibility column; weights
//! follow the Dirichlet-smoothed update (n_k + alpha/K)/(N + alpha). The
//! recorded objective is the responsibility-weighted log-likelihood minus
//! half the BIC complexity penalty, the quantity the structural updates
//! improve at fixed responsibilities. A full E+M cycle that would decrease
//! it is rolled back and fitting stops, so the reported trace is monotone
//! even where the E-step's reshuffling of cluster masses works against the
//! penalty term.
//!
//! Also hosts the two baselines: one DAG over the whole sample, and a
//! diagonal-covariance Gaussian mixture without any graphs.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{
    greedy_search, ArchetypeDag, GraphJson, SearchConfig, SearchTrace, VARIANCE_FLOOR,
};
use crate::embedding::TransformedMatrix;
use crate::error::{Error, Result};
use crate::math::{log_normal_pdf, logsumexp};
use crate::seeding::{derive_seed, seeded_rng};

/// Mass threshold under which a cluster counts as inactive when reporting
/// the effective number of clusters.
pub const EFFECTIVE_K_THRESHOLD: f64 = 0.05;

/// Clusters with less effective mass than this are left unrefit (their warm
/// graph is carried) even when `n_min` is lower; a regression on fewer than
/// two effective rows is meaningless.
const REFIT_FLOOR: f64 = 2.0;

/// Discovery mode (truncated stick-breaking with K_max slots) or a fixed
/// component count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMode {
    Bnp { k_max: usize },
    Fixed { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub mode: FitMode,
    /// Concentration of the stick-breaking prior; also the smoothing
    /// strength in the weight update.
    pub alpha: f64,
    pub max_iters: usize,
    /// Convergence threshold on |ΔL| of the raw mixture log-likelihood.
    pub eps_loglik: f64,
    /// Convergence threshold on the fraction of rows changing hard label.
    pub eps_assign: f64,
    pub search: SearchConfig,
    /// Minimum effective cluster mass; below it a cluster is pruned (weight
    /// zeroed, excluded from argmax, never revived).
    pub n_min: f64,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn bnp(k_max: usize, seed: u64) -> MixtureConfig {
        MixtureConfig {
            mode: FitMode::Bnp { k_max },
            alpha: 1.0,
            max_iters: 100,
            eps_loglik: 1.0,
            eps_assign: 0.001,
            search: SearchConfig::default(),
            n_min: 120.0,
            seed,
        }
    }

    pub fn fixed(k: usize, seed: u64) -> MixtureConfig {
        MixtureConfig {
            mode: FitMode::Fixed { k },
            ..MixtureConfig::bnp(1, seed)
        }
    }

    /// Number of component slots the fit starts with.
    pub fn k_slots(&self) -> usize {
        match self.mode {
            FitMode::Bnp { k_max } => k_max,
            FitMode::Fixed { k } => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_slots() < 1 {
            return Err(Error::InvalidConfig("component count must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.eps_loglik > 0.0) || !(self.eps_assign > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence thresholds must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.search.max_parents == 0 {
            return Err(Error::InvalidConfig("max_parents must be >= 1".into()));
        }
        if self.n_min < 0.0 {
            return Err(Error::InvalidConfig("n_min must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub loglik: f64,
    pub penalized_objective: f64,
    pub assign_change: f64,
    pub effective_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// |ΔL| and the assignment-change rate both fell under their thresholds.
    Converged,
    /// max_iters elapsed first; the model is usable but flagged.
    MaxIters,
    /// A further E+M cycle would have decreased the penalized objective;
    /// the fit stopped at the previous state.
    AscentGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Mixture log-likelihood of the initialization (hard partition plus
    /// one M-step), before the first E-step.
    pub init_loglik: f64,
    /// One row per full E+M cycle. The initialization itself is not a row:
    /// its hard assignments nearly maximize the weighted log-likelihood
    /// over all responsibility matrices, so comparing the first soft cycle
    /// against it would read as a spurious drop.
    pub iterations: Vec<IterationStats>,
    pub termination: Termination,
    pub converged: bool,
}

/// A fitted mixture: per-cluster DAGs, smoothed weights, responsibilities,
/// hard assignments, and the fit trace. Pruned clusters are compacted away;
/// indices run over surviving clusters only.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    config: MixtureConfig,
    item_names: Vec<String>,
    dags: Vec<ArchetypeDag>,
    weights: Vec<f64>,
    responsibilities: Array2<f64>,
    assignments: Vec<usize>,
    trace: FitTrace,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.dags.len()
    }

    pub fn dags(&self) -> &[ArchetypeDag] {
        &self.dags
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn responsibilities(&self) -> &Array2<f64> {
        &self.responsibilities
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn trace(&self) -> &FitTrace {
        &self.trace
    }

    pub fn config(&self) -> &MixtureConfig {
        &self.config
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn n_rows(&self) -> usize {
        self.responsibilities.nrows()
    }

    /// Σ_i r_ik per cluster.
    pub fn cluster_masses(&self) -> Vec<f64> {
        (0..self.k())
            .map(|k| self.responsibilities.column(k).sum())
            .collect()
    }

    /// Clusters holding more than `threshold` of the total responsibility
    /// mass (default threshold `EFFECTIVE_K_THRESHOLD`).
    pub fn effective_k(&self, threshold: f64) -> usize {
        effective_k_from_masses(&self.cluster_masses(), self.n_rows() as f64, threshold)
    }

    /// Responsibility-weighted item means per cluster (K x J), evaluated on
    /// the rows the model was fit to.
    pub fn cluster_profiles(&self, x: &TransformedMatrix) -> Array2<f64> {
        assert_eq!(x.n_rows(), self.n_rows());
        let j = x.n_items();
        let mut out = Array2::zeros((self.k(), j));
        let masses = self.cluster_masses();
        for k in 0..self.k() {
            let r = self.responsibilities.column(k);
            for jj in 0..j {
                let s: f64 = x
                    .x()
                    .column(jj)
                    .iter()
                    .zip(r.iter())
                    .map(|(&v, &w)| v * w)
                    .sum();
                out[[k, jj]] = if masses[k] > 0.0 { s / masses[k] } else { 0.0 };
            }
        }
        out
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            config: self.config,
            item_names: self.item_names.clone(),
            weights: self.weights.clone(),
            cluster_masses: self.cluster_masses(),
            graphs: self
                .dags
                .iter()
                .map(|d| GraphJson::from_dag(d, &self.item_names))
                .collect(),
            assignments: self.assignments.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// Serialized mixture model: everything but the N x K responsibility matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub config: MixtureConfig,
    pub item_names: Vec<String>,
    pub weights: Vec<f64>,
    pub cluster_masses: Vec<f64>,
    pub graphs: Vec<GraphJson>,
    pub assignments: Vec<usize>,
    pub trace: FitTrace,
}

/// Count of clusters whose mass exceeds threshold * n.
pub fn effective_k_from_masses(masses: &[f64], n: f64, threshold: f64) -> usize {
    masses.iter().filter(|&&m| m > threshold * n).count()
}

/// π_k = V_k Π_{l<k} (1 - V_l) for k < K_max; the last component absorbs
/// the remaining stick so the weights sum to 1 exactly.
pub fn stick_breaking_weights(v: &[f64], k_max: usize) -> Vec<f64> {
    assert!(k_max >= 1);
    assert!(v.len() >= k_max - 1, "need K_max - 1 stick fractions");
    let mut weights = Vec::with_capacity(k_max);
    let mut remaining = 1.0;
    for &vk in v.iter().take(k_max - 1) {
        debug_assert!(vk > 0.0 && vk < 1.0);
        weights.push(vk * remaining);
        remaining *= 1.0 - vk;
    }
    weights.push(remaining);
    weights
}

/// π̃_k = (Σ_i r_ik + alpha/K)/(N + alpha), renormalized. With no rows this
/// degenerates to the uniform vector.
pub fn smooth_weights(r: &Array2<f64>, alpha: f64) -> Vec<f64> {
    let k = r.ncols();
    let n = r.nrows() as f64;
    let mut w: Vec<f64> = (0..k)
        .map(|col| (r.column(col).sum() + alpha / k as f64) / (n + alpha))
        .collect();
    let total: f64 = w.iter().sum();
    for wk in &mut w {
        *wk /= total;
    }
    w
}

/// Smoothing restricted to active clusters; inactive ones stay at exactly 0.
fn smooth_weights_masked(r: &Array2<f64>, alpha: f64, active: &[bool]) -> Vec<f64> {
    let k_active = active.iter().filter(|&&a| a).count().max(1);
    let n = r.nrows() as f64;
    let mut w = vec![0.0; r.ncols()];
    for (k, wk) in w.iter_mut().enumerate() {
        if active[k] {
            *wk = (r.column(k).sum() + alpha / k_active as f64) / (n + alpha);
        }
    }
    let total: f64 = w.iter().sum();
    for wk in &mut w {
        *wk /= total;
    }
    w
}

/// N x K log-densities; clusters with `false` in `active` are skipped and
/// left at -inf.
fn log_densities(x: &Array2<f64>, dags: &[ArchetypeDag], active: &[bool]) -> Array2<f64> {
    let n = x.nrows();
    let mut dens = Array2::from_elem((n, dags.len()), f64::NEG_INFINITY);
    for (k, dag) in dags.iter().enumerate() {
        if !active[k] {
            continue;
        }
        for i in 0..n {
            dens[[i, k]] = dag.log_density_row(x.row(i));
        }
    }
    dens
}

fn e_step_from_densities(dens: &Array2<f64>, weights: &[f64]) -> Array2<f64> {
    let (n, k) = dens.dim();
    assert!(
        weights.iter().any(|&w| w > 0.0),
        "at least one cluster weight must be positive"
    );
    let logw: Vec<f64> = weights
        .iter()
        .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut r = Array2::zeros((n, k));
    let mut row_buf = vec![f64::NEG_INFINITY; k];
    for i in 0..n {
        for kk in 0..k {
            row_buf[kk] = if weights[kk] > 0.0 {
                logw[kk] + dens[[i, kk]]
            } else {
                f64::NEG_INFINITY
            };
        }
        let m = row_buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for kk in 0..k {
            let e = if row_buf[kk].is_finite() {
                (row_buf[kk] - m).exp()
            } else {
                0.0
            };
            r[[i, kk]] = e;
            sum += e;
        }
        for kk in 0..k {
            r[[i, kk]] /= sum;
        }
    }
    r
}

/// Posterior responsibilities r_ik ∝ π_k p(x_i | G_k, θ_k), in log space
/// with per-row max subtraction. Clusters with nonpositive weight get zero
/// responsibility.
pub fn e_step(x: &Array2<f64>, dags: &[ArchetypeDag], weights: &[f64]) -> Array2<f64> {
    assert_eq!(dags.len(), weights.len());
    let active: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
    let dens = log_densities(x, dags, &active);
    e_step_from_densities(&dens, weights)
}

fn mixture_loglik(dens: &Array2<f64>, weights: &[f64]) -> f64 {
    let (n, k) = dens.dim();
    let mut buf = Vec::with_capacity(k);
    let mut total = 0.0;
    for i in 0..n {
        buf.clear();
        for kk in 0..k {
            if weights[kk] > 0.0 {
                buf.push(weights[kk].ln() + dens[[i, kk]]);
            }
        }
        total += logsumexp(&buf);
    }
    total
}

/// Σ_ik r_ik log p(x_i | G_k) - (lambda/2) Σ_k d_k log n_k, the structural
/// objective the M-step improves at fixed responsibilities.
fn penalized_objective(
    dens: &Array2<f64>,
    r: &Array2<f64>,
    dags: &[ArchetypeDag],
    active: &[bool],
    lambda: f64,
) -> f64 {
    let (n, k) = dens.dim();
    let mut wll = 0.0;
    for i in 0..n {
        for kk in 0..k {
            let w = r[[i, kk]];
            if w > 0.0 {
                wll += w * dens[[i, kk]];
            }
        }
    }
    let mut penalty = 0.0;
    for kk in 0..k {
        if !active[kk] {
            continue;
        }
        let n_k: f64 = r.column(kk).sum();
        if n_k <= 0.0 {
            continue;
        }
        let d_total: usize = dags[kk].nodes().iter().map(|nd| nd.parents.len() + 1).sum();
        penalty += 0.5 * lambda * d_total as f64 * n_k.ln();
    }
    wll - penalty
}

/// Zeroes newly under-mass clusters and renormalizes rows over survivors.
/// At least one cluster always survives (the heaviest).
fn apply_pruning(r: &mut Array2<f64>, active: &mut [bool], n_min: f64) {
    let k = r.ncols();
    let masses: Vec<f64> = (0..k).map(|kk| r.column(kk).sum()).collect();
    let mut keep: Vec<bool> = (0..k).map(|kk| active[kk] && masses[kk] >= n_min).collect();
    if !keep.iter().any(|&b| b) {
        let best = (0..k)
            .filter(|&kk| active[kk])
            .max_by(|&a, &b| masses[a].partial_cmp(&masses[b]).unwrap())
            .expect("at least one active cluster");
        keep[best] = true;
    }
    let changed = (0..k).any(|kk| active[kk] && !keep[kk]);
    active.copy_from_slice(&keep);
    if !changed {
        return;
    }
    for kk in 0..k {
        if !active[kk] {
            r.column_mut(kk).fill(0.0);
        }
    }
    for mut row in r.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        } else {
            // a row fully supported by pruned clusters falls back to the
            // surviving set uniformly
            let k_active = active.iter().filter(|&&a| a).count() as f64;
            for kk in 0..k {
                row[kk] = if active[kk] { 1.0 / k_active } else { 0.0 };
            }
        }
    }
}

fn m_step_masked(
    x: &Array2<f64>,
    r: &Array2<f64>,
    config: &MixtureConfig,
    warm: Option<&[ArchetypeDag]>,
    active: &[bool],
) -> Result<Vec<ArchetypeDag>> {
    let j = x.ncols();
    let mut dags = Vec::with_capacity(r.ncols());
    for k in 0..r.ncols() {
        let carry = || match warm {
            Some(w) => w[k].clone(),
            None => ArchetypeDag::empty(j),
        };
        if !active[k] {
            dags.push(carry());
            continue;
        }
        let col: Vec<f64> = r.column(k).to_vec();
        let mass: f64 = col.iter().sum();
        if mass < REFIT_FLOOR {
            dags.push(carry());
            continue;
        }
        let (dag, _) = greedy_search(x, &col, &config.search, warm.map(|w| &w[k]))?;
        dags.push(dag);
    }
    Ok(dags)
}

/// One structural M-step: per cluster with enough mass, a warm-started
/// greedy search under its responsibility column. Returns the graphs and a
/// flag per cluster, false where the cluster fell under `n_min` and was
/// left unrefit.
pub fn m_step(
    x: &Array2<f64>,
    r: &Array2<f64>,
    config: &MixtureConfig,
    warm: Option<&[ArchetypeDag]>,
) -> Result<(Vec<ArchetypeDag>, Vec<bool>)> {
    let k = r.ncols();
    let masses: Vec<f64> = (0..k).map(|kk| r.column(kk).sum()).collect();
    let mut active: Vec<bool> = masses.iter().map(|&m| m >= config.n_min).collect();
    if !active.iter().any(|&b| b) {
        let best = (0..k)
            .max_by(|&a, &b| masses[a].partial_cmp(&masses[b]).unwrap())
            .expect("at least one cluster");
        active[best] = true;
    }
    let dags = m_step_masked(x, r, config, warm, &active)?;
    Ok((dags, active))
}

fn argmax_assignments(r: &Array2<f64>, active: &[bool]) -> Vec<usize> {
    let (n, k) = r.dim();
    (0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for kk in 0..k {
                if active[kk] && r[[i, kk]] > best_v {
                    best_v = r[[i, kk]];
                    best = kk;
                }
            }
            debug_assert_ne!(best, usize::MAX);
            best
        })
        .collect()
}

fn assign_change(a: &[usize], b: &[usize]) -> f64 {
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / a.len() as f64
}

/// Seeded k-means-style hard partition used to initialize EM: k-means++
/// seeding then Lloyd iterations, empty clusters reseeded at the farthest
/// point.
fn kmeans_partition(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let j = x.ncols();
    assert!(n >= k && k >= 1);
    let row_dist2 = |a: usize, center: &[f64]| -> f64 {
        let mut s = 0.0;
        for jj in 0..j {
            let d = x[[a, jj]] - center[jj];
            s += d * d;
        }
        s
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(x.row(rng.random_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| row_dist2(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(x.row(pick).to_vec());
        for i in 0..n {
            d2[i] = d2[i].min(row_dist2(i, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = row_dist2(i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed at the row farthest from its own center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        row_dist2(a, &centers[labels[a]])
                            .partial_cmp(&row_dist2(b, &centers[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = x.row(far).to_vec();
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            for v in center.iter_mut() {
                *v = 0.0;
            }
            for i in 0..n {
                if labels[i] == c {
                    for jj in 0..j {
                        center[jj] += x[[i, jj]];
                    }
                }
            }
            for v in center.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Fits the mixture from the seeded k-means initialization.
pub fn fit(x: &TransformedMatrix, config: &MixtureConfig) -> Result<MixtureModel> {
    config.validate()?;
    let k = config.k_slots();
    if x.n_rows() < k {
        return Err(Error::InvalidConfig(format!(
            "{} rows cannot support {} components",
            x.n_rows(),
            k
        )));
    }
    let mut rng = seeded_rng(derive_seed(config.seed, "mixture-init", &[]));
    let labels = kmeans_partition(x.x(), k, &mut rng);
    fit_with_init(x, config, &labels)
}

/// Fits the mixture from explicit initial hard assignments (labels in
/// 0..K). `fit` delegates here; exposing the entry point makes
/// initialization-sensitivity and label-permutation tests possible and lets
/// the confirmatory stage reuse discovery assignments.
pub fn fit_with_init(
    x: &TransformedMatrix,
    config: &MixtureConfig,
    init_labels: &[usize],
) -> Result<MixtureModel> {
    config.validate()?;
    let k = config.k_slots();
    let n = x.n_rows();
    if init_labels.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} initial labels for {} rows",
            init_labels.len(),
            n
        )));
    }
    if init_labels.iter().any(|&l| l >= k) {
        return Err(Error::InvalidConfig(
            "initial label outside 0..K".to_string(),
        ));
    }
    if x.x().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix contains non-finite values".into()));
    }

    let xa = x.x();
    let mut active = vec![true; k];
    let mut r = Array2::zeros((n, k));
    for (i, &l) in init_labels.iter().enumerate() {
        r[[i, l]] = 1.0;
    }
    apply_pruning(&mut r, &mut active, config.n_min);

    let mut weights = match config.mode {
        FitMode::Fixed { .. } => smooth_weights_masked(&r, config.alpha, &active),
        FitMode::Bnp { k_max } => {
            let mut rng = seeded_rng(derive_seed(config.seed, "mixture-sticks", &[]));
            let draws: Vec<f64> = (0..k_max.saturating_sub(1))
                .map(|_| {
                    // Beta(1, alpha) by inverse CDF: 1 - (1-u)^(1/alpha)
                    let u: f64 = rng.random();
                    (1.0 - (1.0 - u).powf(1.0 / config.alpha)).clamp(1e-12, 1.0 - 1e-12)
                })
                .collect();
            let mut w = stick_breaking_weights(&draws, k_max);
            for (kk, wk) in w.iter_mut().enumerate() {
                if !active[kk] {
                    *wk = 0.0;
                }
            }
            let total: f64 = w.iter().sum();
            for wk in &mut w {
                *wk /= total;
            }
            w
        }
    };

    let mut dags = m_step_masked(xa, &r, config, None, &active)?;
    let mut dens = log_densities(xa, &dags, &active);
    let mut loglik = mixture_loglik(&dens, &weights);
    let mut penobj = penalized_objective(&dens, &r, &dags, &active, config.search.lambda);
    let mut assignments = argmax_assignments(&r, &active);

    let init_loglik = loglik;
    let mut iterations: Vec<IterationStats> = Vec::new();
    let mut termination = Termination::MaxIters;

    for cycle in 0..config.max_iters {
        let snapshot = (
            r.clone(),
            weights.clone(),
            dags.clone(),
            active.clone(),
            assignments.clone(),
        );

        let r_new = e_step_from_densities(&dens, &weights);
        r = r_new;
        apply_pruning(&mut r, &mut active, config.n_min);
        weights = smooth_weights_masked(&r, config.alpha, &active);
        dags = m_step_masked(xa, &r, config, Some(&dags), &active)?;
        dens = log_densities(xa, &dags, &active);
        let new_loglik = mixture_loglik(&dens, &weights);
        let new_penobj = penalized_objective(&dens, &r, &dags, &active, config.search.lambda);

        if cycle > 0 && new_penobj < penobj - 1e-9 {
            // roll the cycle back; continuing would trade objective for
            // penalty drift through the shifting cluster masses. The first
            // cycle has no comparable (soft) predecessor, so the guard
            // starts at the second.
            let (r0, w0, d0, a0, z0) = snapshot;
            r = r0;
            weights = w0;
            dags = d0;
            active = a0;
            assignments = z0;
            termination = Termination::AscentGuard;
            break;
        }

        let new_assignments = argmax_assignments(&r, &active);
        let dz = assign_change(&new_assignments, &assignments);
        assignments = new_assignments;
        let dl = (new_loglik - loglik).abs();
        loglik = new_loglik;
        penobj = new_penobj;
        iterations.push(IterationStats {
            loglik,
            penalized_objective: penobj,
            assign_change: dz,
            effective_k: effective_k_from_masses(
                &(0..k).map(|kk| r.column(kk).sum()).collect::<Vec<_>>(),
                n as f64,
                EFFECTIVE_K_THRESHOLD,
            ),
        });
        if dl < config.eps_loglik && dz < config.eps_assign {
            termination = Termination::Converged;
            break;
        }
    }

    // compact to surviving clusters
    let kept: Vec<usize> = (0..k).filter(|&kk| active[kk]).collect();
    let remap: Vec<usize> = {
        let mut m = vec![usize::MAX; k];
        for (new, &old) in kept.iter().enumerate() {
            m[old] = new;
        }
        m
    };
    let mut r_out = Array2::zeros((n, kept.len()));
    for (new, &old) in kept.iter().enumerate() {
        r_out.column_mut(new).assign(&r.column(old));
    }
    let model = MixtureModel {
        config: *config,
        item_names: x.item_names().to_vec(),
        dags: kept.iter().map(|&old| dags[old].clone()).collect(),
        weights: kept.iter().map(|&old| weights[old]).collect(),
        responsibilities: r_out,
        assignments: assignments.iter().map(|&z| remap[z]).collect(),
        trace: FitTrace {
            init_loglik,
            iterations,
            converged: termination != Termination::MaxIters,
            termination,
        },
    };
    debug_assert!(model
        .responsibilities
        .rows()
        .into_iter()
        .all(|row| (row.sum() - 1.0).abs() < 1e-10));
    Ok(model)
}

/// The two non-heterogeneous baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    /// One DAG over the full sample.
    SingleGraph {
        item_names: Vec<String>,
        dag: ArchetypeDag,
        trace: SearchTrace,
    },
    /// Diagonal-covariance Gaussian mixture; no graphs.
    MixtureOnly {
        item_names: Vec<String>,
        means: Array2<f64>,
        vars: Array2<f64>,
        weights: Vec<f64>,
        loglik_trace: Vec<f64>,
    },
}

impl BaselineModel {
    pub fn variant(&self) -> &'static str {
        match self {
            BaselineModel::SingleGraph { .. } => "single_graph",
            BaselineModel::MixtureOnly { .. } => "mixture_only",
        }
    }

    pub fn item_names(&self) -> &[String] {
        match self {
            BaselineModel::SingleGraph { item_names, .. } => item_names,
            BaselineModel::MixtureOnly { item_names, .. } => item_names,
        }
    }

    pub fn to_json(&self) -> BaselineJson {
        match self {
            BaselineModel::SingleGraph {
                item_names,
                dag,
                trace,
            } => BaselineJson::SingleGraph {
                graph: GraphJson::from_dag(dag, item_names),
                search_trace: trace.clone(),
            },
            BaselineModel::MixtureOnly {
                item_names,
                means,
                vars,
                weights,
                loglik_trace,
            } => BaselineJson::MixtureOnly {
                item_names: item_names.clone(),
                means: means.rows().into_iter().map(|r| r.to_vec()).collect(),
                vars: vars.rows().into_iter().map(|r| r.to_vec()).collect(),
                weights: weights.clone(),
                loglik_trace: loglik_trace.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BaselineJson {
    SingleGraph {
        graph: GraphJson,
        search_trace: SearchTrace,
    },
    MixtureOnly {
        item_names: Vec<String>,
        means: Vec<Vec<f64>>,
        vars: Vec<Vec<f64>>,
        weights: Vec<f64>,
        loglik_trace: Vec<f64>,
    },
}

/// Unit-weight greedy search over the whole sample.
pub fn fit_single_graph(x: &TransformedMatrix, config: &MixtureConfig) -> Result<BaselineModel> {
    config.validate()?;
    let r = vec![1.0; x.n_rows()];
    let (dag, trace) = greedy_search(x.x(), &r, &config.search, None)?;
    Ok(BaselineModel::SingleGraph {
        item_names: x.item_names().to_vec(),
        dag,
        trace,
    })
}

/// Diagonal-covariance Gaussian mixture EM with the same weight smoothing
/// and convergence thresholds as the DAG mixture. No structure, no pruning.
pub fn fit_mixture_only(
    x: &TransformedMatrix,
    k: usize,
    config: &MixtureConfig,
) -> Result<BaselineModel> {
    config.validate()?;
    if k < 1 {
        return Err(Error::InvalidConfig("K must be >= 1".into()));
    }
    let n = x.n_rows();
    let j = x.n_items();
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "{n} rows cannot support {k} components"
        )));
    }
    let xa = x.x();
    let mut rng = seeded_rng(derive_seed(config.seed, "gmm-init", &[]));
    let labels = kmeans_partition(xa, k, &mut rng);
    let mut r = Array2::zeros((n, k));
    for (i, &l) in labels.iter().enumerate() {
        r[[i, l]] = 1.0;
    }

    let mut means = Array2::zeros((k, j));
    let mut vars = Array2::from_elem((k, j), 1.0);
    let update_params = |r: &Array2<f64>, means: &mut Array2<f64>, vars: &mut Array2<f64>| {
        for kk in 0..k {
            let n_k: f64 = r.column(kk).sum();
            if n_k < 1e-9 {
                continue; // frozen: smoothing keeps its weight tiny but positive
            }
            for jj in 0..j {
                let mut m = 0.0;
                for i in 0..n {
                    m += r[[i, kk]] * xa[[i, jj]];
                }
                m /= n_k;
                let mut v = 0.0;
                for i in 0..n {
                    let d = xa[[i, jj]] - m;
                    v += r[[i, kk]] * d * d;
                }
                means[[kk, jj]] = m;
                vars[[kk, jj]] = (v / n_k).max(VARIANCE_FLOOR);
            }
        }
    };
    update_params(&r, &mut means, &mut vars);
    let mut weights = smooth_weights(&r, config.alpha);

    let gauss_densities = |means: &Array2<f64>, vars: &Array2<f64>| -> Array2<f64> {
        let mut dens = Array2::zeros((n, k));
        for kk in 0..k {
            for i in 0..n {
                let mut s = 0.0;
                for jj in 0..j {
                    s += log_normal_pdf(xa[[i, jj]], means[[kk, jj]], vars[[kk, jj]]);
                }
                dens[[i, kk]] = s;
            }
        }
        dens
    };

    let mut dens = gauss_densities(&means, &vars);
    let mut loglik = mixture_loglik(&dens, &weights);
    let mut trace = vec![loglik];
    let all_active = vec![true; k];
    let mut assignments = argmax_assignments(&r, &all_active);
    for _ in 0..config.max_iters {
        r = e_step_from_densities(&dens, &weights);
        weights = smooth_weights(&r, config.alpha);
        update_params(&r, &mut means, &mut vars);
        dens = gauss_densities(&means, &vars);
        let new_loglik = mixture_loglik(&dens, &weights);
        let new_assignments = argmax_assignments(&r, &all_active);
        let dz = assign_change(&new_assignments, &assignments);
        let dl = (new_loglik - loglik).abs();
        loglik = new_loglik;
        assignments = new_assignments;
        trace.push(loglik);
        if dl < config.eps_loglik && dz < config.eps_assign {
            break;
        }
    }

    Ok(BaselineModel::MixtureOnly {
        item_names: x.item_names().to_vec(),
        means,
        vars,
        weights,
        loglik_trace: trace,
    })
}

/// Anything that predicts held-out scores and hard labels.
pub trait ScorePredictor {
    fn n_items(&self) -> usize;
    /// X̂_ij = Σ_k r_ik * prediction of cluster k for cell (i, j), with
    /// responsibilities from an E-step on the given rows.
    fn predict_scores(&self, x: &TransformedMatrix) -> Result<Array2<f64>>;
    /// argmax_k responsibilities on the given rows.
    fn predict_labels(&self, x: &TransformedMatrix) -> Result<Vec<usize>>;
}

fn check_schema(model_items: &[String], x: &TransformedMatrix) -> Result<()> {
    if model_items != x.item_names() {
        return Err(Error::SchemaMismatch(format!(
            "model items {:?} do not match data items {:?}",
            model_items,
            x.item_names()
        )));
    }
    Ok(())
}

impl ScorePredictor for MixtureModel {
    fn n_items(&self) -> usize {
        self.item_names.len()
    }

    fn predict_scores(&self, x: &TransformedMatrix) -> Result<Array2<f64>> {
        check_schema(&self.item_names, x)?;
        let r = e_step(x.x(), &self.dags, &self.weights);
        let n = x.n_rows();
        let j = x.n_items();
        let mut out = Array2::zeros((n, j));
        for i in 0..n {
            let row = x.x().row(i);
            for (k, dag) in self.dags.iter().enumerate() {
                let w = r[[i, k]];
                if w == 0.0 {
                    continue;
                }
                let pred = dag.predict_row(row);
                for jj in 0..j {
                    out[[i, jj]] += w * pred[jj];
                }
            }
        }
        Ok(out)
    }

    fn predict_labels(&self, x: &TransformedMatrix) -> Result<Vec<usize>> {
        check_schema(&self.item_names, x)?;
        let r = e_step(x.x(), &self.dags, &self.weights);
        let active = vec![true; self.k()];
        Ok(argmax_assignments(&r, &active))
    }
}

impl ScorePredictor for BaselineModel {
    fn n_items(&self) -> usize {
        self.item_names().len()
    }

    fn predict_scores(&self, x: &TransformedMatrix) -> Result<Array2<f64>> {
        check_schema(self.item_names(), x)?;
        match self {
            BaselineModel::SingleGraph { dag, .. } => {
                let n = x.n_rows();
                let j = x.n_items();
                let mut out = Array2::zeros((n, j));
                for i in 0..n {
                    let pred = dag.predict_row(x.x().row(i));
                    for jj in 0..j {
                        out[[i, jj]] = pred[jj];
                    }
                }
                Ok(out)
            }
            BaselineModel::MixtureOnly {
                means,
                vars,
                weights,
                ..
            } => {
                let r = gaussian_responsibilities(x.x(), means, vars, weights);
                let n = x.n_rows();
                let j = x.n_items();
                let mut out = Array2::zeros((n, j));
                for i in 0..n {
                    for k in 0..weights.len() {
                        let w = r[[i, k]];
                        if w == 0.0 {
                            continue;
                        }
                        for jj in 0..j {
                            out[[i, jj]] += w * means[[k, jj]];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn predict_labels(&self, x: &TransformedMatrix) -> Result<Vec<usize>> {
        check_schema(self.item_names(), x)?;
        match self {
            BaselineModel::SingleGraph { .. } => Ok(vec![0; x.n_rows()]),
            BaselineModel::MixtureOnly {
                means,
                vars,
                weights,
                ..
            } => {
                let r = gaussian_responsibilities(x.x(), means, vars, weights);
                let active = vec![true; weights.len()];
                Ok(argmax_assignments(&r, &active))
            }
        }
    }
}

fn gaussian_responsibilities(
    x: &Array2<f64>,
    means: &Array2<f64>,
    vars: &Array2<f64>,
    weights: &[f64],
) -> Array2<f64> {
    let (n, j) = x.dim();
    let k = weights.len();
    let mut dens = Array2::zeros((n, k));
    for kk in 0..k {
        for i in 0..n {
            let mut s = 0.0;
            for jj in 0..j {
                s += log_normal_pdf(x[[i, jj]], means[[kk, jj]], vars[[kk, jj]]);
            }
            dens[[i, kk]] = s;
        }
    }
    e_step_from_densities(&dens, weights)
}

/// Per-cluster hard-assignment counts of a fitted mixture.
pub fn cluster_counts(model: &MixtureModel) -> Vec<usize> {
    let mut counts = vec![0usize; model.k()];
    for &z in model.assignments() {
        counts[z] += 1;
    }
    counts
}

/// Smallest hard-assignment cluster size.
pub fn min_cluster_size(model: &MixtureModel) -> usize {
    cluster_counts(model).into_iter().min().unwrap_or(0)
}
