//! Stability analyses for a fitted pipeline: nonparametric bootstrap of
//! assignment agreement, plus the sensitivity sweeps over concentration,
//! item set, minimum cluster mass, and row-weighted resampling.
//!
//! Every sweep runs its reference setting through the identical code path
//! with the identical seed, so the reference row reproduces the reference
//! model exactly and its distance metrics are zero by construction, not by
//! special-casing.
//!
//! Agreement and alignment labels are computed on both sides by a fresh
//! posterior E-step under each model's final parameters. A fit's stored
//! assignments lag its final M-step by half a cycle, so symmetric posterior
//! scoring is what makes an identical refit agree exactly.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{transform, OrdinalDataset, TransformedMatrix};
use crate::error::{Error, Result};
use crate::metrics::{
    align_label_clusters, assignment_agreement, edge_jaccard, profile_rmse, shd, Alignment,
    GraphEdges, Partition,
};
use crate::mixture::{e_step, MixtureModel, EFFECTIVE_K_THRESHOLD};
use crate::seeding::{derive_seed, seeded_rng};
use crate::selection::{
    run_pipeline, run_pipeline_pinned, ModelVariant, PipelineConfig, PipelineOutput, SelectionPlan,
};

pub const DEFAULT_ALPHA_SWEEP: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_N_MIN_SWEEP: [f64; 4] = [120.0, 400.0, 500.0, 700.0];
pub const DEFAULT_WEIGHT_REPLICATES: usize = 4;
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReplicate {
    pub replicate: usize,
    /// Fraction of original rows whose aligned bootstrap-model label equals
    /// the reference label.
    pub agreement: f64,
    pub effective_k: usize,
    /// Mean over original rows of the row's maximum responsibility under
    /// the bootstrap model.
    pub mean_max_responsibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean_agreement: f64,
    pub sd_agreement: f64,
    pub min_agreement: f64,
    pub max_agreement: f64,
    pub mean_effective_k: f64,
    pub mean_max_responsibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub b: usize,
    pub replicates: Vec<BootstrapReplicate>,
    pub summary: BootstrapSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityAxis {
    Alpha,
    ItemSet,
    NMin,
    Weights,
}

impl SensitivityAxis {
    pub fn label(self) -> &'static str {
        match self {
            SensitivityAxis::Alpha => "alpha",
            SensitivityAxis::ItemSet => "item_set",
            SensitivityAxis::NMin => "n_min",
            SensitivityAxis::Weights => "weights",
        }
    }
}

/// One sweep setting's outcome. Distance metrics are against the sweep's
/// reference fit and are absent where an axis does not define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub setting: String,
    pub holdout_mse: f64,
    pub effective_k: usize,
    pub min_cluster_size: usize,
    pub mean_shd: Option<f64>,
    pub mean_jaccard: Option<f64>,
    pub profile_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub axis: SensitivityAxis,
    pub settings: Vec<SettingRow>,
}

/// Item-set perturbation: items to drop from the full set. An empty list is
/// the no-op variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSetVariant {
    pub name: String,
    pub remove: Vec<String>,
}

/// Posterior hard labels and mean max responsibility for `data` under a
/// fitted model, transforming through that model's own embedding.
fn posterior_labels(
    model: &MixtureModel,
    x: &TransformedMatrix,
) -> (Vec<usize>, f64, Array2<f64>) {
    let r = e_step(x.x(), model.dags(), model.weights());
    let n = r.nrows();
    let mut labels = Vec::with_capacity(n);
    let mut max_sum = 0.0;
    for row in r.rows() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (k, &v) in row.iter().enumerate() {
            if v > best.0 {
                best = (v, k);
            }
        }
        labels.push(best.1);
        max_sum += best.0;
    }
    (labels, max_sum / n as f64, r)
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

/// Nonparametric bootstrap: B refits of the full pipeline on row resamples,
/// each scored against the reference by assignment agreement on the
/// original rows. `pin_k` skips per-replicate K selection and holds the
/// confirmatory K at the given value; `None` re-runs selection per
/// replicate.
pub fn bootstrap_stability(
    data: &OrdinalDataset,
    reference: &PipelineOutput,
    b: usize,
    plan: &SelectionPlan,
    config: &PipelineConfig,
    pin_k: Option<usize>,
) -> Result<BootstrapReport> {
    bootstrap_stability_with(data, reference, b, plan, config, pin_k, |n, rng| {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    })
}

/// `bootstrap_stability` with an injectable row resampler, so an identity
/// resample can certify that an identical refit yields agreement exactly 1.
pub fn bootstrap_stability_with(
    data: &OrdinalDataset,
    reference: &PipelineOutput,
    b: usize,
    plan: &SelectionPlan,
    config: &PipelineConfig,
    pin_k: Option<usize>,
    resampler: impl Fn(usize, &mut ChaCha8Rng) -> Vec<usize>,
) -> Result<BootstrapReport> {
    if b == 0 {
        return Err(Error::InvalidConfig("bootstrap needs B >= 1".into()));
    }
    let n = data.n_rows();
    let x_ref = transform(data, &reference.embedding)?;
    let (z_ref, _, _) = posterior_labels(&reference.confirmatory, &x_ref);
    let ref_part = Partition::new(&z_ref);

    let mut replicates = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = seeded_rng(derive_seed(config.seed, "bootstrap", &[rep as u64]));
        let rows = resampler(n, &mut rng);
        let boot_data = data.select_rows(&rows);
        let boot = run_pipeline_pinned(&boot_data, plan, config, pin_k)?;

        let x_orig = transform(data, &boot.embedding)?;
        let (z_boot, mean_max, _) = posterior_labels(&boot.confirmatory, &x_orig);
        let agreement = assignment_agreement(&Partition::new(&z_boot), &ref_part)?;
        replicates.push(BootstrapReplicate {
            replicate: rep,
            agreement,
            effective_k: boot.confirmatory.effective_k(EFFECTIVE_K_THRESHOLD),
            mean_max_responsibility: mean_max,
        });
    }

    let agreements: Vec<f64> = replicates.iter().map(|r| r.agreement).collect();
    let (mean_agreement, sd_agreement) = mean_sd(&agreements);
    let summary = BootstrapSummary {
        mean_agreement,
        sd_agreement,
        min_agreement: agreements.iter().copied().fold(f64::INFINITY, f64::min),
        max_agreement: agreements
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        mean_effective_k: replicates.iter().map(|r| r.effective_k as f64).sum::<f64>()
            / b as f64,
        mean_max_responsibility: replicates
            .iter()
            .map(|r| r.mean_max_responsibility)
            .sum::<f64>()
            / b as f64,
    };
    Ok(BootstrapReport {
        b,
        replicates,
        summary,
    })
}

/// Shared comparison of one sweep fit against the reference fit: alignment
/// by posterior labels on the original rows, then mean SHD, mean edge
/// Jaccard, and profile RMSE over matched cluster pairs. `keep` lists the
/// original item indices the setting was fit on; reference graphs and
/// profiles are restricted to that shared set.
struct VsReference {
    mean_shd: Option<f64>,
    mean_jaccard: Option<f64>,
    profile_rmse: Option<f64>,
}

fn compare_to_reference(
    setting: &PipelineOutput,
    setting_x: &TransformedMatrix,
    reference: &PipelineOutput,
    reference_x: &TransformedMatrix,
    keep: &[usize],
) -> Result<VsReference> {
    let (z_set, _, _) = posterior_labels(&setting.confirmatory, setting_x);
    let (z_ref, _, _) = posterior_labels(&reference.confirmatory, reference_x);
    let k_set = setting.confirmatory.k();
    let k_ref = reference.confirmatory.k();
    let alignment: Alignment = align_label_clusters(&z_set, &z_ref, k_set, k_ref)?;

    let pairs = alignment.matched_pairs();
    if pairs.is_empty() {
        return Ok(VsReference {
            mean_shd: None,
            mean_jaccard: None,
            profile_rmse: None,
        });
    }

    let set_graph = |k: usize| -> Result<GraphEdges> {
        let dag = &setting.confirmatory.dags()[k];
        GraphEdges::new(dag.n_nodes(), dag.edge_pairs())
    };
    let ref_graph = |k: usize| -> Result<GraphEdges> {
        let dag = &reference.confirmatory.dags()[k];
        Ok(GraphEdges::new(dag.n_nodes(), dag.edge_pairs())?.restrict(keep))
    };

    let mut shd_sum = 0.0;
    let mut jac_sum = 0.0;
    for &(c, r) in &pairs {
        let a = set_graph(c)?;
        let b = ref_graph(r)?;
        shd_sum += shd(&a, &b)? as f64;
        jac_sum += edge_jaccard(&a, &b)?;
    }
    let m = pairs.len() as f64;

    let set_profiles = setting.confirmatory.cluster_profiles(setting_x);
    let ref_profiles_full = reference.confirmatory.cluster_profiles(reference_x);
    let mut ref_profiles = Array2::zeros((k_ref, keep.len()));
    for (new_j, &old_j) in keep.iter().enumerate() {
        ref_profiles
            .column_mut(new_j)
            .assign(&ref_profiles_full.column(old_j));
    }
    let rmse = profile_rmse(&set_profiles, &ref_profiles, &alignment)?;

    Ok(VsReference {
        mean_shd: Some(shd_sum / m),
        mean_jaccard: Some(jac_sum / m),
        profile_rmse: Some(rmse),
    })
}

fn fixed_k_mse(output: &PipelineOutput) -> f64 {
    output
        .report
        .variant_mse
        .iter()
        .find(|v| v.variant == ModelVariant::FixedKDag)
        .map(|v| v.holdout_mse)
        .expect("pipeline reports all four variants")
}

fn setting_row(
    label: String,
    output: &PipelineOutput,
    x: &TransformedMatrix,
    reference: &PipelineOutput,
    reference_x: &TransformedMatrix,
    keep: &[usize],
    with_distances: bool,
) -> Result<SettingRow> {
    let vs = if with_distances {
        compare_to_reference(output, x, reference, reference_x, keep)?
    } else {
        VsReference {
            mean_shd: None,
            mean_jaccard: None,
            profile_rmse: None,
        }
    };
    let counts = crate::mixture::cluster_counts(&output.confirmatory);
    Ok(SettingRow {
        setting: label,
        holdout_mse: fixed_k_mse(output),
        effective_k: output.confirmatory.effective_k(EFFECTIVE_K_THRESHOLD),
        min_cluster_size: counts.into_iter().min().unwrap_or(0),
        mean_shd: vs.mean_shd,
        mean_jaccard: vs.mean_jaccard,
        profile_rmse: vs.profile_rmse,
    })
}

/// Concentration sweep: per α, re-run discovery and the confirmatory
/// pipeline with K held at the reference K*, and report distances to the
/// reference fit. The α equal to `config.alpha` reuses the reference run
/// itself.
pub fn alpha_sweep(
    data: &OrdinalDataset,
    alphas: &[f64],
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<SensitivityReport> {
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("alpha sweep needs settings".into()));
    }
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidConfig("alphas must be positive".into()));
    }
    let reference = run_pipeline(data, plan, config)?;
    let x_ref = transform(data, &reference.embedding)?;
    let keep: Vec<usize> = (0..data.n_items()).collect();

    let mut settings = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let output;
        let out_ref = if alpha == config.alpha {
            &reference
        } else {
            let cfg = PipelineConfig { alpha, ..*config };
            output = run_pipeline_pinned(data, plan, &cfg, Some(reference.report.k_star))?;
            &output
        };
        settings.push(setting_row(
            format!("{alpha}"),
            out_ref,
            &x_ref,
            &reference,
            &x_ref,
            &keep,
            true,
        )?);
    }
    Ok(SensitivityReport {
        axis: SensitivityAxis::Alpha,
        settings,
    })
}

/// Item-set perturbations: refit on each reduced item set (K* pinned);
/// graph and profile distances are computed on the shared node set.
pub fn item_set_sweep(
    data: &OrdinalDataset,
    variants: &[ItemSetVariant],
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<SensitivityReport> {
    if variants.is_empty() {
        return Err(Error::InvalidConfig("item-set sweep needs variants".into()));
    }
    let names = data.item_names();
    for variant in variants {
        for removed in &variant.remove {
            if !names.contains(removed) {
                return Err(Error::InvalidVariant(format!(
                    "{}: unknown item {removed:?}",
                    variant.name
                )));
            }
        }
        if names.len() - variant.remove.len() < 3 {
            return Err(Error::InvalidVariant(format!(
                "{}: fewer than 3 items would remain",
                variant.name
            )));
        }
    }
    let reference = run_pipeline(data, plan, config)?;
    let x_ref = transform(data, &reference.embedding)?;

    let mut settings = Vec::with_capacity(variants.len());
    for variant in variants {
        if variant.remove.is_empty() {
            let keep: Vec<usize> = (0..data.n_items()).collect();
            settings.push(setting_row(
                variant.name.clone(),
                &reference,
                &x_ref,
                &reference,
                &x_ref,
                &keep,
                true,
            )?);
            continue;
        }
        let keep: Vec<usize> = (0..data.n_items())
            .filter(|&j| !variant.remove.contains(&names[j]))
            .collect();
        let kept_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
        let sub = data.select_items(&kept_names)?;
        let output = run_pipeline_pinned(&sub, plan, config, Some(reference.report.k_star))?;
        let x_sub = transform(&sub, &output.embedding)?;
        settings.push(setting_row(
            variant.name.clone(),
            &output,
            &x_sub,
            &reference,
            &x_ref,
            &keep,
            true,
        )?);
    }
    Ok(SensitivityReport {
        axis: SensitivityAxis::ItemSet,
        settings,
    })
}

/// Minimum-cluster-mass sweep: refit per threshold (K* pinned) and report
/// fit-level outcomes; no reference distances are defined on this axis.
pub fn n_min_sweep(
    data: &OrdinalDataset,
    thresholds: &[f64],
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<SensitivityReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("n_min sweep needs thresholds".into()));
    }
    if thresholds.iter().any(|&t| !(t >= 0.0)) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "n_min thresholds must be nonnegative and ascending".into(),
        ));
    }
    let reference = run_pipeline(data, plan, config)?;
    let x_ref = transform(data, &reference.embedding)?;
    let keep: Vec<usize> = (0..data.n_items()).collect();

    let mut settings = Vec::with_capacity(thresholds.len());
    for &n_min in thresholds {
        let output;
        let out_ref = if n_min == config.n_min {
            &reference
        } else {
            let cfg = PipelineConfig { n_min, ..*config };
            output = run_pipeline_pinned(data, plan, &cfg, Some(reference.report.k_star))?;
            &output
        };
        settings.push(setting_row(
            format!("{n_min}"),
            out_ref,
            &x_ref,
            &reference,
            &x_ref,
            &keep,
            false,
        )?);
    }
    Ok(SensitivityReport {
        axis: SensitivityAxis::NMin,
        settings,
    })
}

/// Weighted-resample refits: R resamples with row probabilities
/// proportional to `row_weights`, each refit with K* pinned and compared
/// to the unweighted reference.
pub fn weight_resample_refit(
    data: &OrdinalDataset,
    row_weights: &[f64],
    r: usize,
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<SensitivityReport> {
    let cumulative: Vec<f64> = {
        let mut cum = 0.0;
        row_weights
            .iter()
            .map(|&w| {
                cum += w;
                cum
            })
            .collect()
    };
    let total = *cumulative.last().unwrap_or(&0.0);
    weight_resample_refit_with(data, row_weights, r, plan, config, move |n, rng| {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                cumulative.partition_point(|&c| c <= u).min(n - 1)
            })
            .collect()
    })
}

/// `weight_resample_refit` with an injectable resampler, so an identity
/// resample can certify zero self-distance.
pub fn weight_resample_refit_with(
    data: &OrdinalDataset,
    row_weights: &[f64],
    r: usize,
    plan: &SelectionPlan,
    config: &PipelineConfig,
    resampler: impl Fn(usize, &mut ChaCha8Rng) -> Vec<usize>,
) -> Result<SensitivityReport> {
    if r == 0 {
        return Err(Error::InvalidConfig("weight resampling needs R >= 1".into()));
    }
    if row_weights.len() != data.n_rows() {
        return Err(Error::LengthMismatch(format!(
            "{} row weights for {} rows",
            row_weights.len(),
            data.n_rows()
        )));
    }
    if row_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidConfig("row weights must be positive".into()));
    }
    let reference = run_pipeline(data, plan, config)?;
    let x_ref = transform(data, &reference.embedding)?;
    let keep: Vec<usize> = (0..data.n_items()).collect();

    let mut settings = Vec::with_capacity(r);
    for rep in 0..r {
        let mut rng = seeded_rng(derive_seed(config.seed, "weight-resample", &[rep as u64]));
        let rows = resampler(data.n_rows(), &mut rng);
        let resampled = data.select_rows(&rows);
        let output = run_pipeline_pinned(&resampled, plan, config, Some(reference.report.k_star))?;
        let x_orig = transform(data, &output.embedding)?;
        settings.push(setting_row(
            format!("resample_{rep}"),
            &output,
            &x_orig,
            &reference,
            &x_ref,
            &keep,
            true,
        )?);
    }
    Ok(SensitivityReport {
        axis: SensitivityAxis::Weights,
        settings,
    })
}

/// One row per bootstrap replicate.
pub fn write_bootstrap_csv(report: &BootstrapReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "replicate",
        "agreement",
        "effective_k",
        "mean_max_responsibility",
    ])?;
    for rep in &report.replicates {
        w.write_record([
            rep.replicate.to_string(),
            format!("{}", rep.agreement),
            rep.effective_k.to_string(),
            format!("{}", rep.mean_max_responsibility),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (axis, setting); absent metrics are empty cells.
pub fn write_sensitivity_csv(reports: &[SensitivityReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "axis",
        "setting",
        "holdout_mse",
        "effective_k",
        "min_cluster_size",
        "mean_shd",
        "mean_jaccard",
        "profile_rmse",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for report in reports {
        for row in &report.settings {
            w.write_record([
                report.axis.label().to_string(),
                row.setting.clone(),
                format!("{}", row.holdout_mse),
                row.effective_k.to_string(),
                row.min_cluster_size.to_string(),
                opt(row.mean_shd),
                opt(row.mean_jaccard),
                opt(row.profile_rmse),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{default_tiers, generate};
    use crate::selection::ModelVariant;

    /// Small easy-tier dataset plus a pipeline sized for test runtime.
    fn small_setup(n_rows: usize, seed: u64) -> (OrdinalDataset, SelectionPlan, PipelineConfig) {
        let mut spec = default_tiers().remove(0);
        spec.n_rows = n_rows;
        spec.seed = seed;
        let instance = generate(&spec, 0).unwrap();
        let plan = SelectionPlan {
            k_grid: vec![2, 3],
            outer_test_fraction: 0.2,
            inner_folds: 3,
        };
        let mut config = PipelineConfig::new(seed ^ 0x5eed);
        config.k_max = 5;
        config.n_min = 25.0;
        (instance.data, plan, config)
    }

    #[test]
    fn identity_bootstrap_agrees_exactly() {
        let (data, plan, config) = small_setup(500, 3001);
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let report = bootstrap_stability_with(
            &data,
            &reference,
            1,
            &plan,
            &config,
            Some(reference.report.k_star),
            |n, _| (0..n).collect(),
        )
        .unwrap();
        assert_eq!(report.b, 1);
        assert_eq!(report.replicates[0].agreement, 1.0);
        assert_eq!(report.summary.mean_agreement, 1.0);
        assert_eq!(report.summary.min_agreement, 1.0);
        assert!(report.replicates[0].mean_max_responsibility > 0.5);
    }

    #[test]
    fn bootstrap_summary_is_recomputable_from_rows() {
        let (data, plan, config) = small_setup(400, 3023);
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let report = bootstrap_stability(
            &data,
            &reference,
            3,
            &plan,
            &config,
            Some(reference.report.k_star),
        )
        .unwrap();
        assert_eq!(report.replicates.len(), 3);
        let agreements: Vec<f64> = report.replicates.iter().map(|r| r.agreement).collect();
        for &a in &agreements {
            assert!((0.0..=1.0).contains(&a));
        }
        let mean = agreements.iter().sum::<f64>() / 3.0;
        assert!((report.summary.mean_agreement - mean).abs() < 1e-12);
        let min = agreements.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(report.summary.min_agreement, min);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let (data, plan, config) = small_setup(400, 3031);
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let a = bootstrap_stability(&data, &reference, 2, &plan, &config, Some(2)).unwrap();
        let b = bootstrap_stability(&data, &reference, 2, &plan, &config, Some(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alpha_sweep_reference_row_is_self_distance_zero() {
        let (data, plan, config) = small_setup(500, 3037);
        let report = alpha_sweep(&data, &[0.5, config.alpha, 2.0], &plan, &config).unwrap();
        assert_eq!(report.axis, SensitivityAxis::Alpha);
        assert_eq!(report.settings.len(), 3);
        let reference_row = &report.settings[1];
        assert_eq!(reference_row.setting, "1");
        assert_eq!(reference_row.mean_shd, Some(0.0));
        assert_eq!(reference_row.mean_jaccard, Some(1.0));
        assert_eq!(reference_row.profile_rmse, Some(0.0));
        for row in &report.settings {
            assert!(row.holdout_mse.is_finite());
            assert!(row.effective_k >= 1);
            if let (Some(s), Some(j)) = (row.mean_shd, row.mean_jaccard) {
                assert!(s >= 0.0 && (0.0..=1.0).contains(&j));
            }
        }
        // confirmatory stage absorbs prior variation on easy data
        let mses: Vec<f64> = report.settings.iter().map(|r| r.holdout_mse).collect();
        let spread = mses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - mses.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread <= 0.05, "MSE spread {spread}");
    }

    #[test]
    fn item_set_sweep_compares_on_shared_nodes() {
        let (data, plan, config) = small_setup(500, 3041);
        let noop = ItemSetVariant {
            name: "all_items".into(),
            remove: vec![],
        };
        let drop_one = ItemSetVariant {
            name: "drop_item_8".into(),
            remove: vec!["item_8".into()],
        };
        let report = item_set_sweep(&data, &[noop, drop_one], &plan, &config).unwrap();
        assert_eq!(report.settings.len(), 2);
        let no_op_row = &report.settings[0];
        assert_eq!(no_op_row.mean_shd, Some(0.0));
        assert_eq!(no_op_row.mean_jaccard, Some(1.0));
        assert_eq!(no_op_row.profile_rmse, Some(0.0));
        let dropped = &report.settings[1];
        // distances exist and are computed over the 7 shared items
        assert!(dropped.mean_shd.is_some());
        assert!(dropped.profile_rmse.is_some());

        // rejected variants
        let unknown = ItemSetVariant {
            name: "bad".into(),
            remove: vec!["no_such_item".into()],
        };
        assert!(matches!(
            item_set_sweep(&data, &[unknown], &plan, &config),
            Err(Error::InvalidVariant(_))
        ));
        let too_many = ItemSetVariant {
            name: "too_many".into(),
            remove: (1..=6).map(|i| format!("item_{i}")).collect(),
        };
        assert!(item_set_sweep(&data, &[too_many], &plan, &config).is_err());
    }

    #[test]
    fn n_min_collapse_approaches_single_graph() {
        let (data, plan, config) = small_setup(500, 3049);
        let n = data.n_rows() as f64;
        let report = n_min_sweep(&data, &[0.0, config.n_min, 2.0 * n], &plan, &config).unwrap();
        assert_eq!(report.settings.len(), 3);
        for row in &report.settings {
            assert!(row.mean_shd.is_none() && row.profile_rmse.is_none());
        }
        let collapsed = &report.settings[2];
        assert_eq!(collapsed.effective_k, 1);

        // at n_min beyond N the fixed-K fit prunes to one cluster, so its
        // holdout MSE sits at the single-graph level
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let single_mse = reference
            .report
            .variant_mse
            .iter()
            .find(|v| v.variant == ModelVariant::SingleGraph)
            .unwrap()
            .holdout_mse;
        assert!(
            (collapsed.holdout_mse - single_mse).abs() < 0.05,
            "collapsed {} vs single-graph {}",
            collapsed.holdout_mse,
            single_mse
        );
        // and the unpruned settings beat it on easy data
        assert!(report.settings[0].holdout_mse < single_mse);
        assert!(report.settings[1].holdout_mse < single_mse);
    }

    #[test]
    fn identity_weight_resample_is_self_comparison() {
        let (data, plan, config) = small_setup(500, 3061);
        let weights = vec![1.0; data.n_rows()];
        let report = weight_resample_refit_with(
            &data,
            &weights,
            1,
            &plan,
            &config,
            |n, _| (0..n).collect(),
        )
        .unwrap();
        assert_eq!(report.axis, SensitivityAxis::Weights);
        let row = &report.settings[0];
        assert_eq!(row.mean_shd, Some(0.0));
        assert_eq!(row.mean_jaccard, Some(1.0));
        assert_eq!(row.profile_rmse, Some(0.0));
    }

    #[test]
    fn weight_resample_preserves_effective_k_on_easy_data() {
        let (data, plan, config) = small_setup(700, 3067);
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let ref_k = reference.confirmatory.effective_k(EFFECTIVE_K_THRESHOLD);
        // mild weights: uniform in [0.8, 1.2], deterministic pattern
        let weights: Vec<f64> = (0..data.n_rows())
            .map(|i| 0.8 + 0.4 * ((i * 7919 % 1000) as f64 / 1000.0))
            .collect();
        let report =
            weight_resample_refit(&data, &weights, 4, &plan, &config).unwrap();
        assert_eq!(report.settings.len(), 4);
        let preserved = report
            .settings
            .iter()
            .filter(|row| row.effective_k == ref_k)
            .count();
        assert!(preserved >= 3, "preserved {preserved}/4 (reference {ref_k})");
    }

    #[test]
    fn csv_outputs_have_the_declared_columns() {
        let (data, plan, config) = small_setup(400, 3079);
        let reference = run_pipeline(&data, &plan, &config).unwrap();
        let boot = bootstrap_stability_with(
            &data,
            &reference,
            1,
            &plan,
            &config,
            Some(reference.report.k_star),
            |n, _| (0..n).collect(),
        )
        .unwrap();
        let alpha = alpha_sweep(&data, &[config.alpha], &plan, &config).unwrap();
        let nmin = n_min_sweep(&data, &[config.n_min], &plan, &config).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let boot_path = dir.path().join("bootstrap.csv");
        write_bootstrap_csv(&boot, &boot_path).unwrap();
        let mut reader = csv::Reader::from_path(&boot_path).unwrap();
        assert_eq!(
            reader.headers().unwrap().iter().collect::<Vec<_>>(),
            vec!["replicate", "agreement", "effective_k", "mean_max_responsibility"]
        );
        assert_eq!(reader.records().count(), 1);

        let sens_path = dir.path().join("sensitivity.csv");
        write_sensitivity_csv(&[alpha.clone(), nmin], &sens_path).unwrap();
        let mut reader = csv::Reader::from_path(&sens_path).unwrap();
        assert_eq!(
            reader.headers().unwrap().iter().collect::<Vec<_>>(),
            vec![
                "axis",
                "setting",
                "holdout_mse",
                "effective_k",
                "min_cluster_size",
                "mean_shd",
                "mean_jaccard",
                "profile_rmse"
            ]
        );
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[0][0], "alpha");
        assert_eq!(&rows[1][0], "n_min");
        // n_min rows leave the distance cells empty
        assert_eq!(&rows[1][5], "");

        // round trip of the JSON forms
        let text = serde_json::to_string(&alpha).unwrap();
        let parsed: SensitivityReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, alpha);
        let text = serde_json::to_string(&boot).unwrap();
        let parsed: BootstrapReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, boot);
    }
}
