//! Two-level data: level-1 observations nested in level-2 clusters, with
//! partially observed binary/ordinal items at level 2.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cluster sizes below this trigger a warning (cluster-mean summaries get noisy).
pub const SMALL_CLUSTER_WARNING: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Binary,
    Ordinal,
}

/// A questionnaire item with categories coded `1..=n_categories`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub name: String,
    pub n_categories: u8,
    pub kind: ItemKind,
}

impl ItemSpec {
    pub fn new(name: impl Into<String>, n_categories: u8, kind: ItemKind) -> Result<Self> {
        let name = name.into();
        if n_categories < 2 {
            return Err(Error::Config(format!(
                "item '{name}' must have at least 2 categories, got {n_categories}"
            )));
        }
        if kind == ItemKind::Binary && n_categories != 2 {
            return Err(Error::Config(format!(
                "binary item '{name}' must have exactly 2 categories, got {n_categories}"
            )));
        }
        Ok(Self {
            name,
            n_categories,
            kind,
        })
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            n_categories: 2,
            kind: ItemKind::Binary,
        }
    }

    pub fn ordinal(name: impl Into<String>, n_categories: u8) -> Self {
        Self::new(name, n_categories, ItemKind::Ordinal).expect("ordinal item needs >= 2 categories")
    }

    pub fn contains(&self, code: u8) -> bool {
        (1..=self.n_categories).contains(&code)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level1Row {
    pub cluster_id: String,
    pub response: f64,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level2Row {
    pub cluster_id: String,
    pub full_covariates: Vec<f64>,
    /// `None` marks a missing answer.
    pub items: Vec<Option<u8>>,
    /// Number of level-1 rows in the cluster; recomputed on construction.
    pub cluster_size: usize,
}

/// Completed (no missing) item codes: one row per cluster, one entry per item.
pub type ItemTable = Vec<Vec<u8>>;

#[derive(Debug, Clone, PartialEq)]
pub struct VariableNames {
    pub cluster: String,
    pub response: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

/// Validated two-level dataset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalDataset {
    level1: Vec<Level1Row>,
    level2: Vec<Level2Row>,
    item_specs: Vec<ItemSpec>,
    names: VariableNames,
    cluster_of_row: Vec<usize>,
}

impl HierarchicalDataset {
    pub fn new(
        level1: Vec<Level1Row>,
        mut level2: Vec<Level2Row>,
        item_specs: Vec<ItemSpec>,
        names: VariableNames,
    ) -> Result<Self> {
        if level1.is_empty() {
            return Err(Error::Data("level-1 table has no rows".into()));
        }
        if level2.is_empty() {
            return Err(Error::Data("level-2 table has no rows".into()));
        }
        let n_x = names.x.len();
        let n_z = names.z.len();
        let n_items = item_specs.len();

        let mut index: HashMap<&str, usize> = HashMap::with_capacity(level2.len());
        for (j, row) in level2.iter().enumerate() {
            if index.insert(row.cluster_id.as_str(), j).is_some() {
                return Err(Error::Data(format!(
                    "duplicate level-2 cluster id '{}'",
                    row.cluster_id
                )));
            }
            if row.full_covariates.len() != n_z {
                return Err(Error::Data(format!(
                    "cluster '{}' has {} level-2 covariates, expected {n_z}",
                    row.cluster_id,
                    row.full_covariates.len()
                )));
            }
            if let Some(v) = row.full_covariates.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "cluster '{}' has a non-finite level-2 covariate ({v})",
                    row.cluster_id
                )));
            }
            if row.items.len() != n_items {
                return Err(Error::Data(format!(
                    "cluster '{}' has {} items, expected {n_items}",
                    row.cluster_id,
                    row.items.len()
                )));
            }
            for (code, spec) in row.items.iter().zip(&item_specs) {
                if let Some(c) = code {
                    if !spec.contains(*c) {
                        return Err(Error::Data(format!(
                            "cluster '{}': item '{}' code {c} outside [1, {}]",
                            row.cluster_id, spec.name, spec.n_categories
                        )));
                    }
                }
            }
        }

        let mut cluster_of_row = Vec::with_capacity(level1.len());
        let mut sizes = vec![0usize; level2.len()];
        for (i, row) in level1.iter().enumerate() {
            let j = *index.get(row.cluster_id.as_str()).ok_or_else(|| {
                Error::Data(format!(
                    "level-1 row {} refers to unknown cluster '{}'",
                    i + 1,
                    row.cluster_id
                ))
            })?;
            if row.covariates.len() != n_x {
                return Err(Error::Data(format!(
                    "level-1 row {} has {} covariates, expected {n_x}",
                    i + 1,
                    row.covariates.len()
                )));
            }
            if !row.response.is_finite() || row.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "level-1 row {} has a non-finite value",
                    i + 1
                )));
            }
            cluster_of_row.push(j);
            sizes[j] += 1;
        }
        drop(index);

        for (row, &size) in level2.iter_mut().zip(&sizes) {
            if size == 0 {
                return Err(Error::Data(format!(
                    "cluster '{}' has no level-1 rows",
                    row.cluster_id
                )));
            }
            row.cluster_size = size;
        }
        let small = sizes.iter().filter(|&&s| s < SMALL_CLUSTER_WARNING).count();
        if small > 0 {
            log::warn!(
                "{small} cluster(s) have fewer than {SMALL_CLUSTER_WARNING} level-1 rows; cluster means will be noisy"
            );
        }

        Ok(Self {
            level1,
            level2,
            item_specs,
            names,
            cluster_of_row,
        })
    }

    pub fn level1(&self) -> &[Level1Row] {
        &self.level1
    }

    pub fn level2(&self) -> &[Level2Row] {
        &self.level2
    }

    pub fn item_specs(&self) -> &[ItemSpec] {
        &self.item_specs
    }

    pub fn names(&self) -> &VariableNames {
        &self.names
    }

    /// Total number of level-1 rows.
    pub fn n(&self) -> usize {
        self.level1.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.level2.len()
    }

    pub fn n_x(&self) -> usize {
        self.names.x.len()
    }

    pub fn n_z(&self) -> usize {
        self.names.z.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_specs.len()
    }

    /// Level-2 index of each level-1 row.
    pub fn cluster_of_row(&self) -> &[usize] {
        &self.cluster_of_row
    }

    pub fn responses(&self) -> Vec<f64> {
        self.level1.iter().map(|r| r.response).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.level2.iter().map(|r| r.cluster_size).collect()
    }

    pub fn observed_mask(&self) -> Vec<Vec<bool>> {
        self.level2
            .iter()
            .map(|r| r.items.iter().map(Option::is_some).collect())
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.level2.iter().any(|r| r.items.iter().any(Option::is_none))
    }

    /// Item table when nothing is missing.
    pub fn complete_items(&self) -> Option<ItemTable> {
        self.level2
            .iter()
            .map(|r| r.items.iter().copied().collect::<Option<Vec<u8>>>())
            .collect()
    }

    /// Same dataset with the item block replaced by a completed table.
    pub fn with_items(&self, items: &ItemTable) -> Result<Self> {
        if items.len() != self.n_clusters() {
            return Err(Error::InvalidArgument(format!(
                "item table has {} rows, dataset has {} clusters",
                items.len(),
                self.n_clusters()
            )));
        }
        let level2 = self
            .level2
            .iter()
            .zip(items)
            .map(|(row, codes)| Level2Row {
                items: codes.iter().map(|&c| Some(c)).collect(),
                ..row.clone()
            })
            .collect();
        Self::new(
            self.level1.clone(),
            level2,
            self.item_specs.clone(),
            self.names.clone(),
        )
    }

    /// Listwise deletion: keep only clusters whose items are all observed,
    /// together with their level-1 rows.
    pub fn complete_cases(&self) -> Result<Self> {
        let keep: Vec<bool> = self
            .level2
            .iter()
            .map(|r| r.items.iter().all(Option::is_some))
            .collect();
        let level2: Vec<Level2Row> = self
            .level2
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect();
        let level1: Vec<Level1Row> = self
            .level1
            .iter()
            .zip(&self.cluster_of_row)
            .filter(|(_, &j)| keep[j])
            .map(|(r, _)| r.clone())
            .collect();
        Self::new(level1, level2, self.item_specs.clone(), self.names.clone())
    }
}

/// A level-1 column selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level1Column {
    Response,
    Covariate(usize),
}

/// Per-cluster arithmetic means of the selected level-1 columns, one row per
/// cluster in level-2 order.
pub fn cluster_means(ds: &HierarchicalDataset, columns: &[Level1Column]) -> Result<DMatrix<f64>> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument("empty column selector".into()));
    }
    for c in columns {
        if let Level1Column::Covariate(k) = c {
            if *k >= ds.n_x() {
                return Err(Error::InvalidArgument(format!(
                    "covariate index {k} out of range ({} covariates)",
                    ds.n_x()
                )));
            }
        }
    }
    let mut sums = DMatrix::<f64>::zeros(ds.n_clusters(), columns.len());
    for (row, &j) in ds.level1.iter().zip(&ds.cluster_of_row) {
        for (c, col) in columns.iter().enumerate() {
            sums[(j, c)] += match col {
                Level1Column::Response => row.response,
                Level1Column::Covariate(k) => row.covariates[*k],
            };
        }
    }
    for (j, l2) in ds.level2.iter().enumerate() {
        let size = l2.cluster_size as f64;
        for c in 0..columns.len() {
            sums[(j, c)] /= size;
        }
    }
    Ok(sums)
}

// ---------------------------------------------------------------------------
// Descriptive statistics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Level {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub name: String,
    pub level: Level,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemSummary {
    pub name: String,
    pub n_missing: usize,
    pub pct_missing: f64,
    pub counts: Vec<usize>,
    /// Relative frequency of each category among observed answers.
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveReport {
    pub n: usize,
    pub n_clusters: usize,
    pub variables: Vec<VariableSummary>,
    pub items: Vec<ItemSummary>,
}

fn summarize(name: &str, level: Level, values: impl Iterator<Item = f64> + Clone) -> VariableSummary {
    let count = values.clone().count();
    let mean = values.clone().sum::<f64>() / count as f64;
    let ss: f64 = values.clone().map(|v| (v - mean).powi(2)).sum();
    let sd = if count > 1 {
        (ss / (count as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    VariableSummary {
        name: name.to_string(),
        level,
        count,
        mean,
        sd,
        min,
        max,
    }
}

/// Category frequencies of an item column; empty categories get 0.
pub(crate) fn item_frequencies(codes: impl Iterator<Item = u8>, n_categories: u8) -> (Vec<usize>, Vec<f64>) {
    let mut counts = vec![0usize; n_categories as usize];
    for c in codes {
        counts[c as usize - 1] += 1;
    }
    let total: usize = counts.iter().sum();
    let freqs = counts
        .iter()
        .map(|&k| if total > 0 { k as f64 / total as f64 } else { 0.0 })
        .collect();
    (counts, freqs)
}

pub fn describe(ds: &HierarchicalDataset) -> DescriptiveReport {
    let mut variables = Vec::new();
    variables.push(summarize(
        &ds.names.response,
        Level::One,
        ds.level1.iter().map(|r| r.response),
    ));
    for (k, name) in ds.names.x.iter().enumerate() {
        variables.push(summarize(
            name,
            Level::One,
            ds.level1.iter().map(move |r| r.covariates[k]),
        ));
    }
    for (k, name) in ds.names.z.iter().enumerate() {
        variables.push(summarize(
            name,
            Level::Two,
            ds.level2.iter().map(move |r| r.full_covariates[k]),
        ));
    }
    variables.push(summarize(
        "cluster_size",
        Level::Two,
        ds.level2.iter().map(|r| r.cluster_size as f64),
    ));

    let items = ds
        .item_specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let n_missing = ds.level2.iter().filter(|r| r.items[k].is_none()).count();
            let (counts, frequencies) =
                item_frequencies(ds.level2.iter().filter_map(|r| r.items[k]), spec.n_categories);
            ItemSummary {
                name: spec.name.clone(),
                n_missing,
                pct_missing: 100.0 * n_missing as f64 / ds.n_clusters() as f64,
                counts,
                frequencies,
            }
        })
        .collect();

    DescriptiveReport {
        n: ds.n(),
        n_clusters: ds.n_clusters(),
        variables,
        items,
    }
}

// ---------------------------------------------------------------------------
// CSV schema and I/O

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemColumn {
    pub name: String,
    pub categories: u8,
    #[serde(default)]
    pub kind: Option<ItemKind>,
}

impl ItemColumn {
    pub fn spec(&self) -> Result<ItemSpec> {
        let kind = self.kind.unwrap_or(if self.categories == 2 {
            ItemKind::Binary
        } else {
            ItemKind::Ordinal
        });
        ItemSpec::new(self.name.clone(), self.categories, kind)
    }
}

fn default_missing_tokens() -> Vec<String> {
    vec![String::new(), "NA".to_string()]
}

/// Column roles for the level-1 and level-2 CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Cluster id column, present in both files.
    pub cluster: String,
    /// Response column of the level-1 file.
    pub response: String,
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub items: Vec<ItemColumn>,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    /// Columns present in either file that play no role.
    #[serde(default)]
    pub ignore: Vec<String>,
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Schema matching the columns written by [`write_dataset`].
    pub fn for_dataset(ds: &HierarchicalDataset) -> Self {
        Self {
            cluster: ds.names.cluster.clone(),
            response: ds.names.response.clone(),
            x: ds.names.x.clone(),
            z: ds.names.z.clone(),
            items: ds
                .item_specs
                .iter()
                .map(|s| ItemColumn {
                    name: s.name.clone(),
                    categories: s.n_categories,
                    kind: Some(s.kind),
                })
                .collect(),
            missing_tokens: default_missing_tokens(),
            ignore: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let all = std::iter::once(&self.cluster)
            .chain(std::iter::once(&self.response))
            .chain(&self.x)
            .chain(&self.z)
            .chain(self.items.iter().map(|i| &i.name))
            .chain(&self.ignore);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!(
                    "column '{name}' is assigned more than one role"
                )));
            }
        }
        for item in &self.items {
            item.spec()?;
        }
        Ok(())
    }

    pub fn item_specs(&self) -> Result<Vec<ItemSpec>> {
        self.items.iter().map(ItemColumn::spec).collect()
    }

    fn is_missing(&self, cell: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == cell)
    }
}

fn column_positions(
    headers: &csv::StringRecord,
    file: &str,
    required: &[&str],
    allowed_extra: &HashSet<&str>,
) -> Result<HashMap<String, usize>> {
    let mut pos = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if pos.insert(h.to_string(), i).is_some() {
            return Err(Error::Data(format!("{file} file: duplicate column '{h}'")));
        }
        if !required.contains(&h) && !allowed_extra.contains(h) {
            return Err(Error::Data(format!(
                "{file} file: column '{h}' has no role in the schema"
            )));
        }
    }
    for r in required {
        if !pos.contains_key(*r) {
            return Err(Error::Data(format!("{file} file: missing column '{r}'")));
        }
    }
    Ok(pos)
}

fn parse_real(cell: &str, schema: &Schema, file: &str, line: u64, column: &str) -> Result<f64> {
    if schema.is_missing(cell) {
        return Err(Error::Data(format!(
            "{file} file line {line}, column '{column}': missing value (only item columns may be missing)"
        )));
    }
    // `str::parse` is locale independent ('.' decimal point).
    let v: f64 = cell.parse().map_err(|_| {
        Error::Data(format!(
            "{file} file line {line}, column '{column}': cannot parse '{cell}' as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "{file} file line {line}, column '{column}': non-finite value '{cell}'"
        )));
    }
    Ok(v)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Parse a dataset from level-1 and level-2 CSV streams.
pub fn read_dataset<R1: Read, R2: Read>(level1: R1, level2: R2, schema: &Schema) -> Result<HierarchicalDataset> {
    schema.validate()?;
    let specs = schema.item_specs()?;
    let ignore: HashSet<&str> = schema.ignore.iter().map(String::as_str).collect();

    let mut rdr = csv_reader(level1);
    let headers = rdr.headers()?.clone();
    let mut required1 = vec![schema.cluster.as_str(), schema.response.as_str()];
    required1.extend(schema.x.iter().map(String::as_str));
    let pos1 = column_positions(&headers, "level-1", &required1, &ignore)?;
    let mut rows1 = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |name: &str| rec.get(pos1[name]).unwrap_or("");
        let cluster_id = cell(&schema.cluster).to_string();
        if schema.is_missing(&cluster_id) {
            return Err(Error::Data(format!(
                "level-1 file line {line}, column '{}': missing cluster id",
                schema.cluster
            )));
        }
        let response = parse_real(cell(&schema.response), schema, "level-1", line, &schema.response)?;
        let covariates = schema
            .x
            .iter()
            .map(|c| parse_real(cell(c), schema, "level-1", line, c))
            .collect::<Result<Vec<_>>>()?;
        rows1.push(Level1Row {
            cluster_id,
            response,
            covariates,
        });
    }
    if rows1.is_empty() {
        return Err(Error::Data("level-1 file has no data rows".into()));
    }

    let mut rdr = csv_reader(level2);
    let headers = rdr.headers()?.clone();
    let mut required2 = vec![schema.cluster.as_str()];
    required2.extend(schema.z.iter().map(String::as_str));
    required2.extend(schema.items.iter().map(|i| i.name.as_str()));
    let pos2 = column_positions(&headers, "level-2", &required2, &ignore)?;
    let mut rows2 = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |name: &str| rec.get(pos2[name]).unwrap_or("");
        let cluster_id = cell(&schema.cluster).to_string();
        if schema.is_missing(&cluster_id) {
            return Err(Error::Data(format!(
                "level-2 file line {line}, column '{}': missing cluster id",
                schema.cluster
            )));
        }
        let full_covariates = schema
            .z
            .iter()
            .map(|c| parse_real(cell(c), schema, "level-2", line, c))
            .collect::<Result<Vec<_>>>()?;
        let items = schema
            .items
            .iter()
            .zip(&specs)
            .map(|(col, spec)| {
                let raw = cell(&col.name);
                if schema.is_missing(raw) {
                    return Ok(None);
                }
                let code: u8 = raw.parse().map_err(|_| {
                    Error::Data(format!(
                        "level-2 file line {line}, column '{}': cannot parse '{raw}' as a category code",
                        col.name
                    ))
                })?;
                if !spec.contains(code) {
                    return Err(Error::Data(format!(
                        "level-2 file line {line}, column '{}': code {code} outside [1, {}]",
                        col.name, spec.n_categories
                    )));
                }
                Ok(Some(code))
            })
            .collect::<Result<Vec<_>>>()?;
        rows2.push(Level2Row {
            cluster_id,
            full_covariates,
            items,
            cluster_size: 0,
        });
    }

    HierarchicalDataset::new(
        rows1,
        rows2,
        specs,
        VariableNames {
            cluster: schema.cluster.clone(),
            response: schema.response.clone(),
            x: schema.x.clone(),
            z: schema.z.clone(),
        },
    )
}

pub fn load_dataset(level1: &Path, level2: &Path, schema: &Schema) -> Result<HierarchicalDataset> {
    let f1 = File::open(level1).map_err(|e| Error::io(level1, e))?;
    let f2 = File::open(level2).map_err(|e| Error::io(level2, e))?;
    read_dataset(f1, f2, schema)
}

/// Write the level-1 file.
pub fn write_level1<W: Write>(ds: &HierarchicalDataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![ds.names.cluster.clone(), ds.names.response.clone()];
    header.extend(ds.names.x.iter().cloned());
    wtr.write_record(&header)?;
    for row in &ds.level1 {
        let mut rec = vec![row.cluster_id.clone(), row.response.to_string()];
        rec.extend(row.covariates.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<level-1 output>", e))?;
    Ok(())
}

/// Write the level-2 file; missing items use `missing_token`. When `items` is
/// given it replaces the dataset's item block (completed tables).
pub fn write_level2<W: Write>(
    ds: &HierarchicalDataset,
    items: Option<&ItemTable>,
    missing_token: &str,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![ds.names.cluster.clone()];
    header.extend(ds.names.z.iter().cloned());
    header.extend(ds.item_specs.iter().map(|s| s.name.clone()));
    wtr.write_record(&header)?;
    for (j, row) in ds.level2.iter().enumerate() {
        let mut rec = vec![row.cluster_id.clone()];
        rec.extend(row.full_covariates.iter().map(f64::to_string));
        match items {
            Some(t) => rec.extend(t[j].iter().map(u8::to_string)),
            None => rec.extend(row.items.iter().map(|c| match c {
                Some(c) => c.to_string(),
                None => missing_token.to_string(),
            })),
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<level-2 output>", e))?;
    Ok(())
}

pub fn write_dataset(ds: &HierarchicalDataset, level1: &Path, level2: &Path) -> Result<()> {
    let f1 = File::create(level1).map_err(|e| Error::io(level1, e))?;
    write_level1(ds, f1)?;
    let f2 = File::create(level2).map_err(|e| Error::io(level2, e))?;
    write_level2(ds, None, "NA", f2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            cluster: "id".into(),
            response: "y".into(),
            x: vec!["x1".into()],
            z: vec!["z1".into()],
            items: vec![ItemColumn {
                name: "q1".into(),
                categories: 3,
                kind: None,
            }],
            missing_tokens: default_missing_tokens(),
            ignore: vec![],
        }
    }

    fn load(l1: &str, l2: &str) -> Result<HierarchicalDataset> {
        read_dataset(l1.as_bytes(), l2.as_bytes(), &schema())
    }

    #[test]
    fn two_rows_one_cluster() {
        let ds = load("id,y,x1\nA,6,1\nA,8,2\n", "id,z1,q1\nA,0.5,2\n").unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.n_clusters(), 1);
        assert_eq!(ds.level2()[0].cluster_size, 2);
    }

    #[test]
    fn missing_token_gives_absent_code() {
        let ds = load("id,y,x1\nA,6,1\nB,8,2\n", "id,z1,q1\nA,0.5,NA\nB,1,\n").unwrap();
        assert_eq!(ds.level2()[0].items[0], None);
        assert_eq!(ds.level2()[1].items[0], None);
    }

    #[test]
    fn unknown_cluster_rejected() {
        let err = load("id,y,x1\nA,6,1\nB,8,2\n", "id,z1,q1\nA,0.5,1\n").unwrap_err();
        assert!(err.to_string().contains("unknown cluster 'B'"), "{err}");
    }

    #[test]
    fn code_out_of_range_rejected() {
        let err = load("id,y,x1\nA,6,1\n", "id,z1,q1\nA,0.5,4\n").unwrap_err();
        assert!(err.to_string().contains("outside [1, 3]"), "{err}");
    }

    #[test]
    fn missing_in_z_names_line_and_column() {
        let err = load("id,y,x1\nA,6,1\n", "id,z1,q1\nA,NA,1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("'z1'"), "{msg}");
    }

    #[test]
    fn missing_in_response_rejected() {
        assert!(load("id,y,x1\nA,,1\n", "id,z1,q1\nA,1,1\n").is_err());
    }

    #[test]
    fn duplicate_cluster_rejected() {
        let err = load("id,y,x1\nA,6,1\n", "id,z1,q1\nA,1,1\nA,2,2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unassigned_column_rejected() {
        let err = load("id,y,x1,extra\nA,6,1,3\n", "id,z1,q1\nA,1,1\n").unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn empty_level1_rejected() {
        assert!(load("id,y,x1\n", "id,z1,q1\nA,1,1\n").is_err());
    }

    #[test]
    fn cluster_means_basic() {
        let ds = load("id,y,x1\nA,6,1\nA,8,3\nB,5,2\n", "id,z1,q1\nA,0,1\nB,0,2\n").unwrap();
        let m = cluster_means(&ds, &[Level1Column::Response, Level1Column::Covariate(0)]).unwrap();
        assert_eq!(m[(0, 0)], 7.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 5.0);
        assert_eq!(m[(1, 1)], 2.0);
        assert!(cluster_means(&ds, &[]).is_err());
    }

    #[test]
    fn describe_item_frequencies() {
        let ds = load(
            "id,y,x1\nA,1,1\nB,1,1\nC,1,1\nD,1,1\n",
            "id,z1,q1\nA,0,1\nB,0,1\nC,0,2\nD,0,NA\n",
        )
        .unwrap();
        let rep = describe(&ds);
        let item = &rep.items[0];
        assert_eq!(item.pct_missing, 25.0);
        assert!((item.frequencies[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((item.frequencies[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(item.frequencies[2], 0.0);
        // constant response column
        assert_eq!(rep.variables[0].sd, 0.0);
    }

    #[test]
    fn schema_toml_roles() {
        let s = Schema::from_toml_str(
            r#"
cluster = "id"
response = "y"
x = ["a"]
z = ["b"]
items = [{ name = "q", categories = 7 }, { name = "p", categories = 2 }]
"#,
        )
        .unwrap();
        let specs = s.item_specs().unwrap();
        assert_eq!(specs[0].kind, ItemKind::Ordinal);
        assert_eq!(specs[1].kind, ItemKind::Binary);
        assert!(Schema::from_toml_str("cluster = \"id\"\nresponse = \"id\"\n").is_err());
        assert!(Schema::from_toml_str(
            "cluster = \"id\"\nresponse = \"y\"\nitems = [{ name = \"q\", categories = 3, kind = \"binary\" }]\n"
        )
        .is_err());
    }

    #[test]
    fn complete_cases_drops_clusters() {
        let ds = load("id,y,x1\nA,6,1\nA,8,3\nB,5,2\n", "id,z1,q1\nA,0,1\nB,0,NA\n").unwrap();
        let cc = ds.complete_cases().unwrap();
        assert_eq!(cc.n_clusters(), 1);
        assert_eq!(cc.n(), 2);
    }
}
