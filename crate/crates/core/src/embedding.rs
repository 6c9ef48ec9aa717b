//! Monotone Gaussian score embedding of ordinal items.
//!
//! Each category c of item j carries empirical mass p_jc; its cumulative
//! midpoint u_jc = Σ_{l<c} p_jl + p_jc/2 is pushed through the standard
//! normal quantile to give the category score s_j(c). Transforming a dataset
//! is elementwise lookup X_ij = s_j(Y_ij). The map is strictly increasing
//! over positive-mass categories, so the transform preserves Spearman rank
//! correlations between columns exactly, ties included.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::normal_quantile;

/// Integer-coded responses, N rows by J items, codes in 1..=C_j.
///
/// The matrix is complete-case: missing values are dropped at ingestion,
/// never carried here.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalDataset {
    values: Array2<u32>,
    item_names: Vec<String>,
    category_counts: Vec<usize>,
}

impl OrdinalDataset {
    /// Validates shape, 1-based codes against declared category counts, and
    /// the two-category minimum per item.
    pub fn new(
        values: Array2<u32>,
        item_names: Vec<String>,
        category_counts: Vec<usize>,
    ) -> Result<Self> {
        let j = values.ncols();
        if item_names.len() != j || category_counts.len() != j {
            return Err(Error::SchemaMismatch(format!(
                "matrix has {} columns but {} names and {} category counts",
                j,
                item_names.len(),
                category_counts.len()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        for (jj, &c) in category_counts.iter().enumerate() {
            if c < 2 {
                return Err(Error::DegenerateItem {
                    item: item_names[jj].clone(),
                });
            }
        }
        for (row, r) in values.rows().into_iter().enumerate() {
            for (col, &v) in r.iter().enumerate() {
                if v == 0 {
                    return Err(Error::Parse {
                        row,
                        col,
                        message: "category code 0; codes are 1-based, remap 0..C-1 to 1..C"
                            .to_string(),
                    });
                }
                if v as usize > category_counts[col] {
                    return Err(Error::Parse {
                        row,
                        col,
                        message: format!(
                            "code {} exceeds declared category count {} for item {:?}",
                            v, category_counts[col], item_names[col]
                        ),
                    });
                }
            }
        }
        Ok(Self {
            values,
            item_names,
            category_counts,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<u32> {
        &self.values
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn category_counts(&self) -> &[usize] {
        &self.category_counts
    }

    /// Row subset in the given order; indices may repeat (bootstrap
    /// resamples). Panics on an out-of-range index.
    pub fn select_rows(&self, idx: &[usize]) -> OrdinalDataset {
        let j = self.n_items();
        let mut out = Array2::zeros((idx.len(), j));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&self.values.row(i));
        }
        OrdinalDataset {
            values: out,
            item_names: self.item_names.clone(),
            category_counts: self.category_counts.clone(),
        }
    }

    /// Column subset by item name, keeping all rows. The complete-case rows
    /// are frozen at ingestion, so dropping an item does not resurrect rows.
    pub fn select_items(&self, names: &[String]) -> Result<OrdinalDataset> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            match self.item_names.iter().position(|n| n == name) {
                Some(p) => cols.push(p),
                None => {
                    return Err(Error::InvalidVariant(format!(
                        "item {name:?} not present in the dataset"
                    )))
                }
            }
        }
        let n = self.n_rows();
        let mut out = Array2::zeros((n, cols.len()));
        for (cnew, &cold) in cols.iter().enumerate() {
            out.column_mut(cnew).assign(&self.values.column(cold));
        }
        OrdinalDataset::new(
            out,
            cols.iter().map(|&c| self.item_names[c].clone()).collect(),
            cols.iter().map(|&c| self.category_counts[c]).collect(),
        )
    }
}

/// Per-item category score tables and the masses that produced them.
///
/// Scores of zero-mass categories outside the observed range are stored as
/// ±inf; they are unreachable through `transform` (it raises
/// `UnseenCategory` instead of emitting a non-finite value).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEmbedding {
    item_names: Vec<String>,
    category_counts: Vec<usize>,
    masses: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
}

impl ScoreEmbedding {
    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn category_counts(&self) -> &[usize] {
        &self.category_counts
    }

    /// Empirical category masses p_jc of item j, in category order.
    pub fn masses(&self, j: usize) -> &[f64] {
        &self.masses[j]
    }

    /// Category scores s_j(1..C_j) of item j.
    pub fn scores(&self, j: usize) -> &[f64] {
        &self.scores[j]
    }

    pub fn to_json(&self) -> EmbeddingJson {
        EmbeddingJson {
            items: (0..self.item_names.len())
                .map(|j| EmbeddingItemJson {
                    name: self.item_names[j].clone(),
                    categories: self.category_counts[j],
                    masses: self.masses[j].clone(),
                    scores: self.scores[j]
                        .iter()
                        .map(|&s| if s.is_finite() { Some(s) } else { None })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &EmbeddingJson) -> Result<ScoreEmbedding> {
        let mut item_names = Vec::new();
        let mut category_counts = Vec::new();
        let mut masses = Vec::new();
        let mut scores = Vec::new();
        for item in &json.items {
            if item.masses.len() != item.categories || item.scores.len() != item.categories {
                return Err(Error::SchemaMismatch(format!(
                    "item {:?}: {} categories but {} masses and {} scores",
                    item.name,
                    item.categories,
                    item.masses.len(),
                    item.scores.len()
                )));
            }
            // A null score is an out-of-range zero-mass category: -inf while
            // no positive mass has been seen yet, +inf afterwards.
            let mut seen_mass = false;
            let mut s = Vec::with_capacity(item.categories);
            for (c, sc) in item.scores.iter().enumerate() {
                if item.masses[c] > 0.0 {
                    seen_mass = true;
                }
                s.push(match sc {
                    Some(v) => *v,
                    None if !seen_mass => f64::NEG_INFINITY,
                    None => f64::INFINITY,
                });
            }
            item_names.push(item.name.clone());
            category_counts.push(item.categories);
            masses.push(item.masses.clone());
            scores.push(s);
        }
        Ok(ScoreEmbedding {
            item_names,
            category_counts,
            masses,
            scores,
        })
    }
}

/// JSON form of an embedding; unreachable scores serialize as null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingJson {
    pub items: Vec<EmbeddingItemJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingItemJson {
    pub name: String,
    pub categories: usize,
    pub masses: Vec<f64>,
    pub scores: Vec<Option<f64>>,
}

/// Real-valued matrix produced by score lookup, with the item names carried
/// along for serialization and schema checks downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    x: Array2<f64>,
    item_names: Vec<String>,
    provenance: String,
}

impl TransformedMatrix {
    pub fn new(x: Array2<f64>, item_names: Vec<String>, provenance: String) -> Self {
        assert_eq!(x.ncols(), item_names.len());
        Self {
            x,
            item_names,
            provenance,
        }
    }

    /// Wraps an already-real matrix (generated or test data) with synthetic
    /// item names x1..xJ.
    pub fn from_array(x: Array2<f64>) -> Self {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, names, "array".to_string())
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.x.ncols()
    }

    /// Row subset in the given order; indices may repeat.
    pub fn select_rows(&self, idx: &[usize]) -> TransformedMatrix {
        let mut out = Array2::zeros((idx.len(), self.n_items()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&self.x.row(i));
        }
        TransformedMatrix {
            x: out,
            item_names: self.item_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Builds the score tables from empirical category masses.
///
/// Zero-mass categories interior to the observed range still get a
/// well-defined cumulative-midpoint score; zero-mass categories outside it
/// would need u = 0 or u = 1 and are stored as ±inf instead.
pub fn fit_embedding(data: &OrdinalDataset) -> Result<ScoreEmbedding> {
    let n = data.n_rows() as f64;
    let j_items = data.n_items();
    let mut masses = Vec::with_capacity(j_items);
    let mut scores = Vec::with_capacity(j_items);
    for j in 0..j_items {
        let c_j = data.category_counts()[j];
        let mut counts = vec![0usize; c_j];
        for &v in data.values().column(j) {
            counts[(v - 1) as usize] += 1;
        }
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::DegenerateItem {
                item: data.item_names()[j].clone(),
            });
        }
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let mut s = Vec::with_capacity(c_j);
        let mut cum = 0.0;
        for &pc in &p {
            let u = cum + 0.5 * pc;
            cum += pc;
            s.push(if u <= 0.0 {
                f64::NEG_INFINITY
            } else if u >= 1.0 {
                f64::INFINITY
            } else {
                normal_quantile(u)?
            });
        }
        masses.push(p);
        scores.push(s);
    }
    Ok(ScoreEmbedding {
        item_names: data.item_names().to_vec(),
        category_counts: data.category_counts().to_vec(),
        masses,
        scores,
    })
}

/// Elementwise score lookup X_ij = s_j(Y_ij).
pub fn transform(data: &OrdinalDataset, emb: &ScoreEmbedding) -> Result<TransformedMatrix> {
    if data.item_names() != emb.item_names() || data.category_counts() != emb.category_counts() {
        return Err(Error::SchemaMismatch(format!(
            "dataset schema ({} items) differs from the embedding schema ({} items) \
             in names or category counts",
            data.n_items(),
            emb.item_names().len()
        )));
    }
    let mut x = Array2::zeros((data.n_rows(), data.n_items()));
    for j in 0..data.n_items() {
        let table = emb.scores(j);
        for (i, &v) in data.values().column(j).iter().enumerate() {
            let s = table[(v - 1) as usize];
            if !s.is_finite() {
                return Err(Error::UnseenCategory {
                    item: data.item_names()[j].clone(),
                    code: v,
                });
            }
            x[[i, j]] = s;
        }
    }
    let provenance = format!(
        "embed(n={}, j={}) applied to {} rows",
        data.n_rows(),
        data.n_items(),
        x.nrows()
    );
    Ok(TransformedMatrix::new(
        x,
        data.item_names().to_vec(),
        provenance,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::seeded_rng;
    use ndarray::arr2;
    use rand::Rng;

    fn dataset(values: Array2<u32>, counts: Vec<usize>) -> OrdinalDataset {
        let names = (1..=values.ncols()).map(|j| format!("item_{j}")).collect();
        OrdinalDataset::new(values, names, counts).unwrap()
    }

    #[test]
    fn rejects_zero_codes_with_remap_hint() {
        let err = OrdinalDataset::new(
            arr2(&[[0u32, 1], [1, 2]]),
            vec!["a".into(), "b".into()],
            vec![2, 2],
        )
        .unwrap_err();
        assert!(err.to_string().contains("1-based"));
    }

    #[test]
    fn rejects_empty_and_degenerate() {
        assert!(matches!(
            OrdinalDataset::new(Array2::zeros((0, 1)), vec!["a".into()], vec![2]),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            OrdinalDataset::new(arr2(&[[1u32]]), vec!["a".into()], vec![1]),
            Err(Error::DegenerateItem { .. })
        ));
    }

    #[test]
    fn binary_half_half_scores() {
        // masses (0.5, 0.5) → u = (0.25, 0.75) → ±Φ^{-1}(0.75)
        let d = dataset(arr2(&[[1u32], [2]]), vec![2]);
        let emb = fit_embedding(&d).unwrap();
        let s = emb.scores(0);
        assert!((s[0] + 0.6744897501960817).abs() < 1e-10);
        assert!((s[1] - 0.6744897501960817).abs() < 1e-10);
    }

    #[test]
    fn equal_thirds_middle_score_is_zero() {
        let d = dataset(arr2(&[[1u32], [2], [3]]), vec![3]);
        let emb = fit_embedding(&d).unwrap();
        assert_eq!(emb.scores(0)[1], 0.0);
    }

    #[test]
    fn skewed_three_category_scores() {
        // masses (0.8, 0.1, 0.1) → u = (0.40, 0.85, 0.95)
        let mut rows = vec![[1u32]; 8];
        rows.push([2]);
        rows.push([3]);
        let d = dataset(arr2(&rows), vec![3]);
        let emb = fit_embedding(&d).unwrap();
        let s = emb.scores(0);
        assert!((s[0] + 0.25335).abs() < 5e-6);
        assert!((s[1] - 1.03643).abs() < 5e-6);
        assert!((s[2] - 1.64485).abs() < 5e-6);
    }

    #[test]
    fn all_mass_one_category_is_degenerate() {
        let d = dataset(arr2(&[[1u32], [1], [1]]), vec![3]);
        assert!(matches!(
            fit_embedding(&d),
            Err(Error::DegenerateItem { .. })
        ));
    }

    #[test]
    fn masses_sum_to_one_and_scores_increase() {
        let mut rng = seeded_rng(11);
        for _ in 0..50 {
            let c = rng.random_range(2..=6usize);
            let n = rng.random_range(20..200usize);
            let vals =
                Array2::from_shape_fn((n, 1), |_| rng.random_range(1..=c as u32));
            let d = match OrdinalDataset::new(
                vals,
                vec!["q".into()],
                vec![c],
            ) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let emb = match fit_embedding(&d) {
                Ok(e) => e,
                Err(Error::DegenerateItem { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let total: f64 = emb.masses(0).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            // strict monotonicity over positive-mass categories
            let mut last: Option<f64> = None;
            for (cat, &m) in emb.masses(0).iter().enumerate() {
                if m > 0.0 {
                    let s = emb.scores(0)[cat];
                    if let Some(prev) = last {
                        assert!(s > prev);
                    }
                    last = Some(s);
                }
            }
        }
    }

    #[test]
    fn transform_is_lookup_and_preserves_order() {
        let d = dataset(arr2(&[[1u32, 2], [2, 1], [2, 2], [1, 1]]), vec![2, 3]);
        let emb = fit_embedding(&d).unwrap();
        let t = transform(&d, &emb).unwrap();
        for i in 0..d.n_rows() {
            for j in 0..2 {
                let code = d.values()[[i, j]] as usize;
                assert_eq!(t.x()[[i, j]], emb.scores(j)[code - 1]);
            }
        }
    }

    #[test]
    fn one_row_at_category_one_gets_minimal_scores() {
        let train = dataset(arr2(&[[1u32, 1], [2, 2], [1, 2]]), vec![2, 2]);
        let emb = fit_embedding(&train).unwrap();
        let probe = dataset(arr2(&[[1u32, 1]]), vec![2, 2]);
        let t = transform(&probe, &emb).unwrap();
        assert_eq!(t.x()[[0, 0]], emb.scores(0)[0]);
        assert_eq!(t.x()[[0, 1]], emb.scores(1)[0]);
    }

    #[test]
    fn schema_mismatch_detected() {
        let a = dataset(arr2(&[[1u32], [2]]), vec![2]);
        let b = dataset(arr2(&[[1u32], [2], [3]]), vec![3]);
        let emb = fit_embedding(&a).unwrap();
        assert!(matches!(
            transform(&b, &emb),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn unseen_trailing_category_errors_on_lookup() {
        // Declared 3 categories, trained mass only on 1..2: the trailing
        // score is +inf and must not leak through transform.
        let train = dataset(arr2(&[[1u32], [2], [1]]), vec![3]);
        let emb = fit_embedding(&train).unwrap();
        assert_eq!(emb.scores(0)[2], f64::INFINITY);
        let probe = dataset(arr2(&[[3u32]]), vec![3]);
        assert!(matches!(
            transform(&probe, &emb),
            Err(Error::UnseenCategory { code: 3, .. })
        ));
    }

    #[test]
    fn interior_zero_mass_category_keeps_a_finite_score() {
        let train = dataset(arr2(&[[1u32], [3], [1], [3]]), vec![3]);
        let emb = fit_embedding(&train).unwrap();
        // u for the empty middle category is exactly the boundary 0.5
        assert_eq!(emb.scores(0)[1], 0.0);
        assert!(emb.scores(0)[0] < emb.scores(0)[1]);
        assert!(emb.scores(0)[1] < emb.scores(0)[2]);
    }

    #[test]
    fn embedding_json_round_trip() {
        let train = dataset(arr2(&[[1u32, 2], [2, 1], [1, 3]]), vec![3, 3]);
        let emb = fit_embedding(&train).unwrap();
        let json = serde_json::to_string(&emb.to_json()).unwrap();
        let back = ScoreEmbedding::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(emb, back);
    }

    #[test]
    fn select_items_reorders_columns() {
        let d = dataset(arr2(&[[1u32, 2, 1], [2, 1, 2]]), vec![2, 2, 2]);
        let sub = d
            .select_items(&["item_3".to_string(), "item_1".to_string()])
            .unwrap();
        assert_eq!(sub.item_names(), &["item_3".to_string(), "item_1".to_string()]);
        assert_eq!(sub.values()[[0, 0]], 1);
        assert_eq!(sub.values()[[0, 1]], 1);
        assert!(d.select_items(&["missing".to_string()]).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let d = dataset(arr2(&[[1u32, 2], [2, 3], [1, 1], [2, 2]]), vec![2, 3]);
        let a = fit_embedding(&d).unwrap();
        let b = fit_embedding(&d).unwrap();
        assert_eq!(a, b);
    }
}
