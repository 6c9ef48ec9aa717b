//! Python bindings: a thin veneer over the core crate. Matrices cross the
//! boundary as plain nested lists, models as opaque handles with JSON
//! export, and every fallible call maps the core error to `ValueError`.
//! Fitted models carry their score embedding so prediction on new data
//! only needs the raw ordinal codes.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ordmix::benchmark::{default_tiers, default_tiers_seeded, generate};
use ordmix::embedding::{fit_embedding, transform, OrdinalDataset, ScoreEmbedding};
use ordmix::ingest::{ingest_csv, read_schema};
use ordmix::metrics::{self, GraphEdges, Partition};
use ordmix::mixture::{self, FitMode, MixtureModel, ScorePredictor, EFFECTIVE_K_THRESHOLD};
use ordmix::selection::{run_pipeline_pinned, PipelineConfig, PipelineOutput, SelectionPlan};

fn err(e: ordmix::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_nested(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Hyperparameters shared by `fit` and `select`; `None` keeps the core
/// default for the given seed.
#[allow(clippy::too_many_arguments)]
fn pipeline_config(
    seed: u64,
    alpha: Option<f64>,
    n_min: Option<f64>,
    max_parents: Option<usize>,
    lam: Option<f64>,
    max_iters: Option<usize>,
) -> PipelineConfig {
    let mut config = PipelineConfig::new(seed);
    if let Some(v) = alpha {
        config.alpha = v;
    }
    if let Some(v) = n_min {
        config.n_min = v;
    }
    if let Some(v) = max_parents {
        config.max_parents = v;
    }
    if let Some(v) = lam {
        config.lambda = v;
    }
    if let Some(v) = max_iters {
        config.max_iters = v;
    }
    config
}

/// Ordinal survey matrix with 1-based category codes.
#[pyclass(frozen)]
pub struct Dataset {
    inner: OrdinalDataset,
}

#[pymethods]
impl Dataset {
    /// Build from nested lists of 1-based codes. Names default to
    /// `item_0..`; category counts default to the per-column maximum code.
    #[new]
    #[pyo3(signature = (rows, item_names=None, category_counts=None))]
    fn new(
        rows: Vec<Vec<u32>>,
        item_names: Option<Vec<String>>,
        category_counts: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        if rows.is_empty() {
            return Err(PyValueError::new_err("rows must be non-empty"));
        }
        let j = rows[0].len();
        if rows.iter().any(|r| r.len() != j) {
            return Err(PyValueError::new_err("rows must all have equal length"));
        }
        let mut values = Array2::<u32>::zeros((rows.len(), j));
        for (i, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                values[[i, c]] = v;
            }
        }
        let names =
            item_names.unwrap_or_else(|| (0..j).map(|c| format!("item_{c}")).collect());
        let counts = category_counts.unwrap_or_else(|| {
            (0..j)
                .map(|c| values.column(c).iter().copied().max().unwrap_or(2) as usize)
                .collect()
        });
        Ok(Self {
            inner: OrdinalDataset::new(values, names, counts).map_err(err)?,
        })
    }

    /// Read a headed CSV of integer codes, dropping rows containing
    /// `missing_token`. `schema_path` pins item category counts.
    #[staticmethod]
    #[pyo3(signature = (path, missing_token=None, schema_path=None))]
    fn load_csv(
        path: &str,
        missing_token: Option<&str>,
        schema_path: Option<&str>,
    ) -> PyResult<Self> {
        let schema = match schema_path {
            Some(p) => Some(read_schema(std::path::Path::new(p)).map_err(err)?),
            None => None,
        };
        let (inner, _) =
            ingest_csv(std::path::Path::new(path), missing_token, schema.as_ref()).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn item_names(&self) -> Vec<String> {
        self.inner.item_names().to_vec()
    }

    #[getter]
    fn category_counts(&self) -> Vec<usize> {
        self.inner.category_counts().to_vec()
    }

    /// The raw 1-based category codes as nested lists.
    fn codes(&self) -> Vec<Vec<u32>> {
        self.inner
            .values()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Latent-score matrix under a normal-quantile midpoint embedding fit
    /// on this dataset.
    fn scores(&self) -> PyResult<Vec<Vec<f64>>> {
        let emb = fit_embedding(&self.inner).map_err(err)?;
        let x = transform(&self.inner, &emb).map_err(err)?;
        Ok(to_nested(x.x()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_rows={}, n_items={})",
            self.inner.n_rows(),
            self.inner.n_items()
        )
    }
}

/// Fitted mixture of archetype DAGs, bundled with the score embedding it
/// was trained under.
#[pyclass(frozen)]
pub struct Model {
    model: MixtureModel,
    embedding: ScoreEmbedding,
}

impl Model {
    fn transform_new(&self, data: &Dataset) -> PyResult<ordmix::embedding::TransformedMatrix> {
        transform(&data.inner, &self.embedding).map_err(err)
    }
}

#[pymethods]
impl Model {
    #[getter]
    fn k(&self) -> usize {
        self.model.k()
    }

    #[getter]
    fn effective_k(&self) -> usize {
        self.model.effective_k(EFFECTIVE_K_THRESHOLD)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.model.weights().to_vec()
    }

    #[getter]
    fn assignments(&self) -> Vec<usize> {
        self.model.assignments().to_vec()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.model.trace().converged
    }

    /// Directed edges (parent, child) of one cluster's DAG.
    fn edges(&self, cluster: usize) -> PyResult<Vec<(usize, usize)>> {
        self.model
            .dags()
            .get(cluster)
            .map(|d| d.edge_pairs())
            .ok_or_else(|| {
                PyValueError::new_err(format!(
                    "cluster {cluster} out of range for k={}",
                    self.model.k()
                ))
            })
    }

    /// Hard labels for new rows under this model's embedding.
    fn predict_labels(&self, data: &Dataset) -> PyResult<Vec<usize>> {
        let x = self.transform_new(data)?;
        self.model.predict_labels(&x).map_err(err)
    }

    /// Responsibility-blended score predictions for new rows.
    fn predict_scores(&self, data: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        let x = self.transform_new(data)?;
        Ok(to_nested(&self.model.predict_scores(&x).map_err(err)?))
    }

    /// Full model as a JSON string (graphs, weights, trace).
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.model.to_json())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// The fitted score embedding as a JSON string.
    fn embedding_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.embedding.to_json())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(k={}, effective_k={}, converged={})",
            self.model.k(),
            self.model.effective_k(EFFECTIVE_K_THRESHOLD),
            self.model.trace().converged
        )
    }
}

/// Output of the two-stage K selection pipeline.
#[pyclass(frozen)]
pub struct Selection {
    output: PipelineOutput,
}

#[pymethods]
impl Selection {
    #[getter]
    fn k_star(&self) -> usize {
        self.output.report.k_star
    }

    #[getter]
    fn effective_k_discovery(&self) -> usize {
        self.output.report.effective_k_discovery
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.output.report.n_train
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.output.report.n_test
    }

    /// Inner-CV curve as (k, holdout_mse) pairs; empty when K was pinned.
    #[getter]
    fn curve(&self) -> Vec<(usize, f64)> {
        self.output
            .report
            .curve
            .iter()
            .map(|p| (p.k, p.mse))
            .collect()
    }

    /// Outer-holdout MSE per model variant, keyed by variant label.
    #[getter]
    fn variant_mse(&self) -> Vec<(String, f64)> {
        self.output
            .report
            .variant_mse
            .iter()
            .map(|v| (v.variant.label().to_string(), v.holdout_mse))
            .collect()
    }

    /// Confirmatory fixed-K* model refit on all rows.
    fn confirmatory(&self) -> Model {
        Model {
            model: self.output.confirmatory.clone(),
            embedding: self.output.embedding.clone(),
        }
    }

    /// The selection report as a JSON string.
    fn report_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.output.report)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Selection(k_star={}, n_train={}, n_test={})",
            self.output.report.k_star, self.output.report.n_train, self.output.report.n_test
        )
    }
}

/// Fit a mixture of archetype DAGs. Exactly one of `k` (fixed) or `k_max`
/// (stick-breaking cap) may be given; the default is the capped mode at
/// the core default cap.
#[pyfunction]
#[pyo3(signature = (data, seed, k=None, k_max=None, alpha=None, n_min=None, max_parents=None, lam=None, max_iters=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    data: &Dataset,
    seed: u64,
    k: Option<usize>,
    k_max: Option<usize>,
    alpha: Option<f64>,
    n_min: Option<f64>,
    max_parents: Option<usize>,
    lam: Option<f64>,
    max_iters: Option<usize>,
) -> PyResult<Model> {
    if k.is_some() && k_max.is_some() {
        return Err(PyValueError::new_err("pass k or k_max, not both"));
    }
    let config = pipeline_config(seed, alpha, n_min, max_parents, lam, max_iters);
    let mode = match (k, k_max) {
        (Some(k), _) => FitMode::Fixed { k },
        (None, Some(cap)) => FitMode::Bnp { k_max: cap },
        (None, None) => FitMode::Bnp {
            k_max: config.k_max,
        },
    };
    let emb = fit_embedding(&data.inner).map_err(err)?;
    let x = transform(&data.inner, &emb).map_err(err)?;
    let model = mixture::fit(&x, &config.mixture_config(mode, seed)).map_err(err)?;
    Ok(Model {
        model,
        embedding: emb,
    })
}

/// Run the full selection pipeline: outer split, capped discovery fit,
/// inner-CV over `k_grid`, variant comparison, confirmatory refit.
#[pyfunction]
#[pyo3(signature = (data, seed, k_grid=None, test_fraction=None, folds=None, pin_k=None, alpha=None, n_min=None, max_parents=None, lam=None, max_iters=None))]
#[allow(clippy::too_many_arguments)]
fn select(
    data: &Dataset,
    seed: u64,
    k_grid: Option<Vec<usize>>,
    test_fraction: Option<f64>,
    folds: Option<usize>,
    pin_k: Option<usize>,
    alpha: Option<f64>,
    n_min: Option<f64>,
    max_parents: Option<usize>,
    lam: Option<f64>,
    max_iters: Option<usize>,
) -> PyResult<Selection> {
    let config = pipeline_config(seed, alpha, n_min, max_parents, lam, max_iters);
    let mut plan = SelectionPlan::default();
    if let Some(grid) = k_grid {
        plan.k_grid = grid;
    }
    if let Some(f) = test_fraction {
        plan.outer_test_fraction = f;
    }
    if let Some(f) = folds {
        plan.inner_folds = f;
    }
    let output = run_pipeline_pinned(&data.inner, &plan, &config, pin_k).map_err(err)?;
    Ok(Selection { output })
}

/// Adjusted Rand index between two labelings.
#[pyfunction]
fn ari(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::ari(&Partition::new(&a), &Partition::new(&b)).map_err(err)
}

/// Normalized mutual information between two labelings.
#[pyfunction]
fn nmi(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::nmi(&Partition::new(&a), &Partition::new(&b)).map_err(err)
}

/// Structural Hamming distance between two edge sets on `n_nodes` shared
/// nodes: missing/extra adjacencies and flipped orientations each count 1.
#[pyfunction]
fn shd(
    n_nodes: usize,
    edges_a: Vec<(usize, usize)>,
    edges_b: Vec<(usize, usize)>,
) -> PyResult<usize> {
    let a = GraphEdges::new(n_nodes, edges_a).map_err(err)?;
    let b = GraphEdges::new(n_nodes, edges_b).map_err(err)?;
    metrics::shd(&a, &b).map_err(err)
}

/// Synthesize one replicate of a named benchmark tier ("easy", "moderate",
/// "hard", "stress"), returning the dataset and its true cluster labels.
#[pyfunction]
#[pyo3(signature = (tier, replicate=0, seed=None))]
fn generate_tier(tier: &str, replicate: usize, seed: Option<u64>) -> PyResult<(Dataset, Vec<usize>)> {
    let tiers = match seed {
        Some(s) => default_tiers_seeded(s),
        None => default_tiers(),
    };
    let spec = tiers
        .into_iter()
        .find(|t| t.name == tier)
        .ok_or_else(|| PyValueError::new_err(format!("unknown tier {tier:?}")))?;
    let instance = generate(&spec, replicate).map_err(err)?;
    Ok((
        Dataset {
            inner: instance.data,
        },
        instance.labels,
    ))
}

#[pymodule]
fn ordmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Selection>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(shd, m)?)?;
    m.add_function(wrap_pyfunction!(generate_tier, m)?)?;
    Ok(())
}
