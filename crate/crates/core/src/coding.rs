//! Design matrices: within-cluster centering, split (backward-difference)
//! coding of items, and the map back to dummy coefficients.
//!
//! Under split coding, item `k` with `C` categories contributes columns
//! `[code >= c]` for `c = 2..=C`. Their coefficients are the adjacent-category
//! contrasts `gamma[c] - gamma[c-1]`, so a zero contrast merges category `c`
//! with `c - 1`.

use nalgebra::DMatrix;

use crate::data::{HierarchicalDataset, ItemSpec, ItemTable};
use crate::error::{Error, Result};

/// Role of a design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum ColumnRole {
    Intercept,
    /// Level-1 covariate (centered within cluster).
    X(usize),
    /// Fully observed level-2 covariate.
    Z(usize),
    /// Contrast between category `category` and `category - 1` of item `item`.
    Contrast { item: usize, category: u8 },
}

impl ColumnRole {
    pub fn is_penalized(&self) -> bool {
        matches!(self, ColumnRole::Contrast { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCodedDesign {
    pub matrix: DMatrix<f64>,
    pub columns: Vec<ColumnRole>,
    pub names: Vec<String>,
    pub penalized: Vec<bool>,
}

impl SplitCodedDesign {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Number of penalized (contrast) columns.
    pub fn p_penalized(&self) -> usize {
        self.penalized.iter().filter(|&&p| p).count()
    }

    pub fn column_of(&self, role: ColumnRole) -> Option<usize> {
        self.columns.iter().position(|&r| r == role)
    }

    /// Keep the listed columns, in the given order.
    pub fn select(&self, keep: &[usize]) -> SplitCodedDesign {
        SplitCodedDesign {
            matrix: self.matrix.select_columns(keep),
            columns: keep.iter().map(|&j| self.columns[j]).collect(),
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            penalized: keep.iter().map(|&j| self.penalized[j]).collect(),
        }
    }

    /// Keep all unpenalized columns plus the listed contrasts.
    pub fn restrict_to_contrasts(&self, contrasts: &[ColumnRole]) -> SplitCodedDesign {
        let keep: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_penalized() || contrasts.contains(r))
            .map(|(j, _)| j)
            .collect();
        self.select(&keep)
    }
}

pub fn contrast_name(spec: &ItemSpec, category: u8) -> String {
    format!("{}:{}", spec.name, category)
}

/// Level-1 covariates centered around their cluster means (`n x n_x`).
pub fn center_within_cluster(ds: &HierarchicalDataset) -> DMatrix<f64> {
    let n_x = ds.n_x();
    let mut sums = DMatrix::<f64>::zeros(ds.n_clusters(), n_x);
    for (row, &j) in ds.level1().iter().zip(ds.cluster_of_row()) {
        for k in 0..n_x {
            sums[(j, k)] += row.covariates[k];
        }
    }
    for (j, l2) in ds.level2().iter().enumerate() {
        for k in 0..n_x {
            sums[(j, k)] /= l2.cluster_size as f64;
        }
    }
    let mut out = DMatrix::<f64>::zeros(ds.n(), n_x);
    for (i, (row, &j)) in ds.level1().iter().zip(ds.cluster_of_row()).enumerate() {
        for k in 0..n_x {
            out[(i, k)] = row.covariates[k] - sums[(j, k)];
        }
    }
    out
}

/// Split coding of a category code: component `c - 2` is `[code >= c]`.
pub fn split_code(code: u8, n_categories: u8) -> Result<Vec<u8>> {
    if n_categories < 2 {
        return Err(Error::InvalidArgument(format!(
            "an item needs at least 2 categories, got {n_categories}"
        )));
    }
    if code < 1 || code > n_categories {
        return Err(Error::InvalidArgument(format!(
            "category code {code} outside [1, {n_categories}]"
        )));
    }
    Ok((2..=n_categories).map(|c| u8::from(code >= c)).collect())
}

/// Columns ordered `[intercept | centered x | z | contrasts]`, with level-2
/// values replicated across each cluster's level-1 rows.
pub fn build_design(ds: &HierarchicalDataset, completed: &ItemTable) -> Result<SplitCodedDesign> {
    if completed.len() != ds.n_clusters() {
        return Err(Error::InvalidArgument(format!(
            "completed item table has {} rows, dataset has {} clusters",
            completed.len(),
            ds.n_clusters()
        )));
    }
    let specs = ds.item_specs();
    let mut columns = vec![ColumnRole::Intercept];
    let mut names = vec!["(Intercept)".to_string()];
    for (k, name) in ds.names().x.iter().enumerate() {
        columns.push(ColumnRole::X(k));
        names.push(name.clone());
    }
    for (k, name) in ds.names().z.iter().enumerate() {
        columns.push(ColumnRole::Z(k));
        names.push(name.clone());
    }
    for (k, spec) in specs.iter().enumerate() {
        for c in 2..=spec.n_categories {
            columns.push(ColumnRole::Contrast { item: k, category: c });
            names.push(contrast_name(spec, c));
        }
    }

    // Per-cluster coded level-2 block.
    let mut cluster_rows: Vec<Vec<f64>> = Vec::with_capacity(ds.n_clusters());
    for (row, codes) in ds.level2().iter().zip(completed) {
        if codes.len() != specs.len() {
            return Err(Error::InvalidArgument(format!(
                "cluster '{}' has {} completed items, expected {}",
                row.cluster_id,
                codes.len(),
                specs.len()
            )));
        }
        let mut v = row.full_covariates.clone();
        for (&code, spec) in codes.iter().zip(specs) {
            v.extend(split_code(code, spec.n_categories)?.into_iter().map(f64::from));
        }
        cluster_rows.push(v);
    }

    let n_x = ds.n_x();
    let centered = center_within_cluster(ds);
    let p = columns.len();
    let n = ds.n();
    let cluster_of_row = ds.cluster_of_row();
    let matrix = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else if j <= n_x {
            centered[(i, j - 1)]
        } else {
            cluster_rows[cluster_of_row[i]][j - 1 - n_x]
        }
    });
    let penalized = columns.iter().map(ColumnRole::is_penalized).collect();
    Ok(SplitCodedDesign {
        matrix,
        columns,
        names,
        penalized,
    })
}

/// Dummy-coded item effects; `gamma[k][0]` is the baseline and always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DummyCoefficients {
    pub gamma: Vec<Vec<f64>>,
}

/// Cumulative sums of contrasts. `tilde[k]` holds the `C_k - 1` contrasts for
/// categories `2..=C_k`.
pub fn back_transform(tilde: &[Vec<f64>]) -> DummyCoefficients {
    let gamma = tilde
        .iter()
        .map(|t| {
            let mut g = Vec::with_capacity(t.len() + 1);
            g.push(0.0);
            let mut acc = 0.0;
            for &d in t {
                acc += d;
                g.push(acc);
            }
            g
        })
        .collect();
    DummyCoefficients { gamma }
}

/// Maximal runs of adjacent categories sharing the same dummy coefficient.
pub fn collapse_report(dummy: &DummyCoefficients) -> Vec<Vec<Vec<u8>>> {
    dummy
        .gamma
        .iter()
        .map(|g| {
            let mut groups: Vec<Vec<u8>> = Vec::new();
            for (idx, value) in g.iter().enumerate() {
                let code = idx as u8 + 1;
                match groups.last_mut() {
                    Some(last) if g[idx - 1] == *value => last.push(code),
                    _ => groups.push(vec![code]),
                }
            }
            groups
        })
        .collect()
}

/// Scatter a coefficient vector over `design` into per-item contrast vectors
/// (absent contrast columns read as 0).
pub fn contrasts_by_item(design: &SplitCodedDesign, specs: &[ItemSpec], coef: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| vec![0.0; s.n_categories as usize - 1])
        .collect();
    for (role, &b) in design.columns.iter().zip(coef) {
        if let ColumnRole::Contrast { item, category } = *role {
            out[item][category as usize - 2] = b;
        }
    }
    out
}

/// Format a group of categories as `{1,2,3}`.
pub fn format_group(group: &[u8]) -> String {
    let inner: Vec<String> = group.iter().map(u8::to_string).collect();
    format!("{{{}}}", inner.join(","))
}
