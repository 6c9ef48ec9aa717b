//! Discovery-to-confirmation orchestration.
//!
//! The full sample is embedded once, split 80/20, and the training side
//! carries both the BNP discovery fit and an inner K-fold cross-validation
//! over the K grid scored by held-out transformed-score MSE. The selected
//! K* is refit on the training split for the holdout comparison and on the
//! full sample for the confirmatory model. Inner folds are built once per
//! selection run (seeded shuffle, contiguous blocks) and reused across
//! every K so the curve differences come from K alone.

use serde::{Deserialize, Serialize};

use crate::embedding::{
    fit_embedding, transform, OrdinalDataset, ScoreEmbedding, TransformedMatrix,
};
use crate::error::{Error, Result};
use crate::mixture::{
    fit, fit_mixture_only, fit_single_graph, BaselineModel, FitMode, MixtureConfig, MixtureModel,
    ScorePredictor, EFFECTIVE_K_THRESHOLD,
};
use crate::seeding::{derive_seed, seeded_rng};
use rand::Rng;

/// The four models every comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    BnpDag,
    FixedKDag,
    SingleGraph,
    MixtureOnly,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::BnpDag,
        ModelVariant::FixedKDag,
        ModelVariant::SingleGraph,
        ModelVariant::MixtureOnly,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::BnpDag => "bnp_dag",
            ModelVariant::FixedKDag => "fixed_k_dag",
            ModelVariant::SingleGraph => "single_graph",
            ModelVariant::MixtureOnly => "mixture_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub k_grid: Vec<usize>,
    pub outer_test_fraction: f64,
    pub inner_folds: usize,
}

impl Default for SelectionPlan {
    fn default() -> SelectionPlan {
        SelectionPlan {
            k_grid: vec![2, 3, 4, 5, 6],
            outer_test_fraction: 0.2,
            inner_folds: 5,
        }
    }
}

impl SelectionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::InvalidConfig("K grid is empty".into()));
        }
        if self.k_grid[0] < 1 || self.k_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "K grid must be ascending and >= 1".into(),
            ));
        }
        if !(self.outer_test_fraction > 0.0 && self.outer_test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "outer test fraction must lie in (0,1), got {}",
                self.outer_test_fraction
            )));
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidConfig("inner_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// Knobs shared by every fit the pipeline launches. Stage seeds are all
/// derived from `seed` with distinct tags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k_max: usize,
    pub alpha: f64,
    pub n_min: f64,
    pub max_parents: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub eps_loglik: f64,
    pub eps_assign: f64,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> PipelineConfig {
        PipelineConfig {
            k_max: 10,
            alpha: 1.0,
            n_min: 120.0,
            max_parents: 2,
            lambda: 1.0,
            max_iters: 100,
            eps_loglik: 1.0,
            eps_assign: 0.001,
            seed,
        }
    }

    pub fn mixture_config(&self, mode: FitMode, seed: u64) -> MixtureConfig {
        MixtureConfig {
            mode,
            alpha: self.alpha,
            max_iters: self.max_iters,
            eps_loglik: self.eps_loglik,
            eps_assign: self.eps_assign,
            search: crate::dag::SearchConfig {
                max_parents: self.max_parents,
                lambda: self.lambda,
            },
            n_min: self.n_min,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KCurvePoint {
    pub k: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantMse {
    pub variant: ModelVariant,
    pub holdout_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub plan: SelectionPlan,
    pub n_train: usize,
    pub n_test: usize,
    /// Effective K of the BNP discovery fit on the training split.
    pub effective_k_discovery: usize,
    /// Validation curve; empty when K was pinned externally.
    pub curve: Vec<KCurvePoint>,
    pub k_star: usize,
    pub variant_mse: Vec<VariantMse>,
}

/// Everything the pipeline produces, models included. The report is the
/// serializable summary; models serialize separately through their own
/// JSON forms.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: SelectionReport,
    pub embedding: ScoreEmbedding,
    pub discovery: MixtureModel,
    pub fixed_k: MixtureModel,
    pub single_graph: BaselineModel,
    pub mixture_only: BaselineModel,
    /// Fixed-K* refit on the full analytic sample (train and test rows).
    pub confirmatory: MixtureModel,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Mean over test rows and all columns of (X_ij - X̂_ij)².
pub fn holdout_mse(model: &dyn ScorePredictor, x_test: &TransformedMatrix) -> Result<f64> {
    if x_test.n_rows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    let pred = model.predict_scores(x_test)?;
    let diff = x_test.x() - &pred;
    Ok(diff.iter().map(|d| d * d).sum::<f64>() / (diff.len() as f64))
}

/// Seeded-shuffle 80/20-style split; both sides returned sorted ascending.
pub fn outer_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} leaves an empty split at n={n}"
        )));
    }
    let perm = shuffled_indices(n, seed);
    let mut test: Vec<usize> = perm[..n_test].to_vec();
    let mut train: Vec<usize> = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Seeded shuffle then contiguous blocks; the remainder rows go to the
/// leading folds. Returns `folds` disjoint sorted index sets covering 0..n.
pub fn inner_fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let perm = shuffled_indices(n, seed);
    let base = n / folds;
    let rem = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < rem);
        let mut fold: Vec<usize> = perm[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    out
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded_rng(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Cross-validated K choice: for each K in the grid, a fixed-K fit on each
/// fold complement scored on the fold, averaged; argmin with ties to the
/// smaller K. The folds are built once and shared across the grid.
pub fn select_k(
    x_train: &TransformedMatrix,
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<(usize, Vec<KCurvePoint>)> {
    plan.validate()?;
    let n = x_train.n_rows();
    let max_k = *plan.k_grid.iter().max().unwrap();
    if n < plan.inner_folds * max_k {
        return Err(Error::InvalidConfig(format!(
            "{n} training rows cannot support {} folds over K up to {max_k}",
            plan.inner_folds
        )));
    }
    let folds = inner_fold_indices(n, plan.inner_folds, derive_seed(config.seed, "inner-folds", &[]));
    let mut curve = Vec::with_capacity(plan.k_grid.len());
    for &k in &plan.k_grid {
        let mut total = 0.0;
        for (f, fold) in folds.iter().enumerate() {
            let in_fold: Vec<bool> = {
                let mut mask = vec![false; n];
                for &i in fold {
                    mask[i] = true;
                }
                mask
            };
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let x_fit = x_train.select_rows(&train_rows);
            let x_val = x_train.select_rows(fold);
            let seed = derive_seed(config.seed, "select-k", &[k as u64, f as u64]);
            let model = fit(&x_fit, &config.mixture_config(FitMode::Fixed { k }, seed))?;
            total += holdout_mse(&model, &x_val)?;
        }
        curve.push(KCurvePoint {
            k,
            mse: total / plan.inner_folds as f64,
        });
    }
    let mut k_star = curve[0].k;
    let mut best = curve[0].mse;
    for point in &curve[1..] {
        if point.mse < best {
            best = point.mse;
            k_star = point.k;
        }
    }
    Ok((k_star, curve))
}

/// Embed, split, discover, select, refit, compare. `pin_k` skips the inner
/// cross-validation and uses the given K directly (the curve comes back
/// empty); the bootstrap machinery uses that to hold K fixed across
/// resamples.
pub fn run_pipeline_pinned(
    data: &OrdinalDataset,
    plan: &SelectionPlan,
    config: &PipelineConfig,
    pin_k: Option<usize>,
) -> Result<PipelineOutput> {
    plan.validate()?;
    let embedding = fit_embedding(data)?;
    let x_full = transform(data, &embedding)?;
    let (train_rows, test_rows) = outer_split(
        data.n_rows(),
        plan.outer_test_fraction,
        derive_seed(config.seed, "outer-split", &[]),
    )?;
    let x_train = x_full.select_rows(&train_rows);
    let x_test = x_full.select_rows(&test_rows);

    let discovery = fit(
        &x_train,
        &config.mixture_config(
            FitMode::Bnp { k_max: config.k_max },
            derive_seed(config.seed, "discovery", &[]),
        ),
    )?;
    let effective_k_discovery = discovery.effective_k(EFFECTIVE_K_THRESHOLD);

    let (k_star, curve) = match pin_k {
        Some(k) => (k, Vec::new()),
        None => select_k(&x_train, plan, config)?,
    };

    let fixed_k = fit(
        &x_train,
        &config.mixture_config(
            FitMode::Fixed { k: k_star },
            derive_seed(config.seed, "variant-fixed", &[]),
        ),
    )?;
    let single_graph = fit_single_graph(
        &x_train,
        &config.mixture_config(
            FitMode::Fixed { k: 1 },
            derive_seed(config.seed, "variant-single", &[]),
        ),
    )?;
    let mixture_only = fit_mixture_only(
        &x_train,
        k_star,
        &config.mixture_config(
            FitMode::Fixed { k: k_star },
            derive_seed(config.seed, "variant-gmm", &[]),
        ),
    )?;

    let variant_mse = vec![
        VariantMse {
            variant: ModelVariant::BnpDag,
            holdout_mse: holdout_mse(&discovery, &x_test)?,
        },
        VariantMse {
            variant: ModelVariant::FixedKDag,
            holdout_mse: holdout_mse(&fixed_k, &x_test)?,
        },
        VariantMse {
            variant: ModelVariant::SingleGraph,
            holdout_mse: holdout_mse(&single_graph, &x_test)?,
        },
        VariantMse {
            variant: ModelVariant::MixtureOnly,
            holdout_mse: holdout_mse(&mixture_only, &x_test)?,
        },
    ];

    let confirmatory = fit(
        &x_full,
        &config.mixture_config(
            FitMode::Fixed { k: k_star },
            derive_seed(config.seed, "confirm", &[]),
        ),
    )?;

    Ok(PipelineOutput {
        report: SelectionReport {
            plan: plan.clone(),
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            effective_k_discovery,
            curve,
            k_star,
            variant_mse,
        },
        embedding,
        discovery,
        fixed_k,
        single_graph,
        mixture_only,
        confirmatory,
        train_rows,
        test_rows,
    })
}

pub fn run_pipeline(
    data: &OrdinalDataset,
    plan: &SelectionPlan,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    run_pipeline_pinned(data, plan, config, None)
}
