//! Dataset ingestion, standardization, PCA reduction and train/test splits.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Columns whose standard deviation falls below this are centered only.
pub const DEGENERATE_STD: f64 = 1e-12;

const IRIS_CSV: &str = include_str!("../data/iris.csv");
const WINE_CSV: &str = include_str!("../data/wine.csv");

/// Feature matrix (row-major, `n × d`) with contiguous class labels `1..=C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    features: Vec<f64>,
    n: usize,
    d: usize,
    labels: Vec<usize>,
    /// Original label text for class `c` at index `c - 1`.
    label_names: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset from rows and raw labels. Labels are remapped to
    /// `1..=C`: numerically sorted when every label parses as a number,
    /// lexicographically otherwise.
    pub fn from_rows<S: AsRef<str>>(name: &str, rows: Vec<Vec<f64>>, raw_labels: &[S]) -> Result<Self> {
        if rows.is_empty() {
            return invalid("dataset has no samples");
        }
        if rows.len() != raw_labels.len() {
            return invalid(format!("{} rows but {} labels", rows.len(), raw_labels.len()));
        }
        let d = rows[0].len();
        if d == 0 {
            return invalid("dataset has zero features");
        }
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return invalid(format!("row {i} has {} features, expected {d}", row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return invalid(format!("row {i} has a non-finite feature"));
            }
            features.extend_from_slice(row);
        }
        let (labels, label_names) = remap_labels(raw_labels);
        Ok(Self { name: name.to_string(), features, n: rows.len(), d, labels, label_names })
    }

    /// Builds a dataset whose labels are already contiguous `1..=C`.
    pub fn new(name: &str, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().copied().max().unwrap_or(0);
        if labels.contains(&0) {
            return invalid("labels must be in 1..=C");
        }
        let present: BTreeSet<usize> = labels.iter().copied().collect();
        if present.len() != c {
            return invalid("labels must cover 1..=C without gaps");
        }
        let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        let mut ds = Self::from_rows(name, rows, &names)?;
        ds.labels = labels;
        ds.label_names = (1..=c).map(|l| l.to_string()).collect();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes()];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.features)
    }

    /// Subset by row indices. Keeps the full label mapping so class ids stay
    /// comparable across train/test subsets.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            name: self.name.clone(),
            features,
            n: indices.len(),
            d: self.d,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
        }
    }

    /// Same labels, new feature rows.
    pub fn with_features(&self, d: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != self.n * d {
            return invalid("feature buffer has the wrong size");
        }
        Ok(Self { features, d, ..self.clone() })
    }
}

fn remap_labels<S: AsRef<str>>(raw: &[S]) -> (Vec<usize>, Vec<String>) {
    let unique: BTreeSet<&str> = raw.iter().map(|s| s.as_ref().trim()).collect();
    let mut names: Vec<&str> = unique.into_iter().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, &str)> = values.into_iter().zip(names.iter().copied()).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, s)| s).collect();
    }
    let labels = raw
        .iter()
        .map(|s| names.iter().position(|n| *n == s.as_ref().trim()).unwrap() + 1)
        .collect();
    (labels, names.into_iter().map(String::from).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Libsvm,
    CsvLastLabel,
    CsvFirstLabel,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "libsvm" => Ok(Format::Libsvm),
            "csv_last_label" | "csv-last-label" | "csv" => Ok(Format::CsvLastLabel),
            "csv_first_label" | "csv-first-label" => Ok(Format::CsvFirstLabel),
            other => invalid(format!("unknown format '{other}'")),
        }
    }
}

pub fn load_dataset(path: &Path, format: Format, delimiter: u8) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_dataset(name, &text, format, delimiter)
}

pub fn parse_dataset(name: &str, text: &str, format: Format, delimiter: u8) -> Result<LabeledDataset> {
    match format {
        Format::Libsvm => parse_libsvm(name, text, None),
        Format::CsvLastLabel => parse_csv(name, text, delimiter, false),
        Format::CsvFirstLabel => parse_csv(name, text, delimiter, true),
    }
}

/// Sparse `label idx:val ...` lines with 1-based indices, densified to
/// `n_features` columns (or the largest index seen).
pub fn parse_libsvm(name: &str, text: &str, n_features: Option<usize>) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap();
        if label.contains(':') {
            return Err(Error::Parse { line: line_no, message: format!("missing label before '{label}'") });
        }
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got '{tok}'"),
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line: line_no, message: format!("bad feature index '{idx}'") })?;
            if idx == 0 {
                return Err(Error::Parse { line: line_no, message: "feature indices are 1-based".into() });
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::Parse { line: line_no, message: format!("bad feature value '{val}'") })?;
            if !val.is_finite() {
                return Err(Error::Parse { line: line_no, message: "non-finite feature value".into() });
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(label.to_string());
        sparse.push(entries);
    }
    if labels.is_empty() {
        return invalid("empty dataset file");
    }
    let d = match n_features {
        Some(d) if d < max_index => return invalid(format!("feature index {max_index} exceeds d = {d}")),
        Some(d) => d,
        None => max_index.max(1),
    };
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; d];
            for (j, v) in entries {
                row[j] = v;
            }
            row
        })
        .collect();
    LabeledDataset::from_rows(name, rows, &labels)
}

pub fn parse_csv(name: &str, text: &str, delimiter: u8, label_first: bool) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if record.len() < 2 {
            return Err(Error::Parse { line, message: "need at least one feature and a label".into() });
        }
        let (label, feats): (&str, Vec<&str>) = if label_first {
            (&record[0], record.iter().skip(1).collect())
        } else {
            (&record[record.len() - 1], record.iter().take(record.len() - 1).collect())
        };
        let row = feats
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, message: format!("bad feature value '{f}'") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        labels.push(label.to_string());
    }
    if rows.is_empty() {
        return invalid("empty dataset file");
    }
    LabeledDataset::from_rows(name, rows, &labels)
}

/// Datasets shipped inside the crate.
pub fn bundled(name: &str) -> Option<LabeledDataset> {
    let text = match name {
        "iris" => IRIS_CSV,
        "wine" => WINE_CSV,
        _ => return None,
    };
    Some(parse_csv(name, text, b',', false).expect("bundled dataset parses"))
}

pub const BUNDLED: &[&str] = &["iris", "wine"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns left centered but unscaled.
    pub degenerate: Vec<bool>,
    pub convention: String,
}

impl StandardizeRecord {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        if data.len() < 2 {
            return invalid("standardize needs at least two samples");
        }
        let n = data.len() as f64;
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let degenerate = std.iter().map(|&s| s < DEGENERATE_STD).collect();
        Ok(Self { mean, std, degenerate, convention: "population".into() })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.dim() != self.mean.len() {
            return invalid("dimension mismatch applying standardization");
        }
        let mut out = Vec::with_capacity(data.len() * data.dim());
        for row in data.rows() {
            for (j, v) in row.iter().enumerate() {
                let c = v - self.mean[j];
                out.push(if self.degenerate[j] { c } else { c / self.std[j] });
            }
        }
        data.with_features(data.dim(), out)
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &z)| if self.degenerate[j] { z + self.mean[j] } else { z * self.std[j] + self.mean[j] })
            .collect()
    }
}

pub fn standardize(data: &LabeledDataset) -> Result<(LabeledDataset, StandardizeRecord)> {
    let rec = StandardizeRecord::fit(data)?;
    Ok((rec.apply(data)?, rec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRecord {
    pub mean: Vec<f64>,
    /// `k` principal directions, each of length `d`, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaRecord {
    pub fn fit(data: &LabeledDataset, target_dim: usize) -> Result<Self> {
        let (n, d) = (data.len(), data.dim());
        if target_dim == 0 || target_dim > n.min(d) {
            return invalid(format!("target_dim {target_dim} must be in 1..={}", n.min(d)));
        }
        let x = data.to_matrix();
        let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let mut centered = x;
        for (j, m) in mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut components = Vec::with_capacity(target_dim);
        let mut explained_variance = Vec::with_capacity(target_dim);
        for &k in order.iter().take(target_dim) {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // sign convention: largest-magnitude entry positive
            let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if pivot < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            components.push(v);
            explained_variance.push(eig.eigenvalues[k].max(0.0));
        }
        let explained_variance_ratio = explained_variance
            .iter()
            .map(|v| if total > 0.0 { v / total } else { 0.0 })
            .collect();
        Ok(Self { mean, components, explained_variance, explained_variance_ratio })
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect()
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.dim() != self.mean.len() {
            return invalid("dimension mismatch applying PCA projection");
        }
        let k = self.components.len();
        let mut out = Vec::with_capacity(data.len() * k);
        for row in data.rows() {
            out.extend(self.project_row(row));
        }
        data.with_features(k, out)
    }
}

pub fn pca_reduce(data: &LabeledDataset, target_dim: usize) -> Result<(LabeledDataset, PcaRecord)> {
    let rec = PcaRecord::fit(data, target_dim)?;
    Ok((rec.apply(data)?, rec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { train_fraction: 0.7, trials: 30, seed: 0, stratified: false }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid("train_fraction must be in (0, 1)");
        }
        if self.trials == 0 {
            return invalid("trials must be positive");
        }
        Ok(())
    }

    fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n - 1)
}

/// Uniform (unstratified) splits; trial `t` draws from ChaCha stream `t` of
/// the plan's seed, so any single trial can be regenerated independently.
pub fn make_splits(n: usize, plan: &SplitPlan) -> Result<Vec<Split>> {
    plan.validate()?;
    if n < 2 {
        return invalid("need at least two samples to split");
    }
    let n_train = train_count(n, plan.train_fraction);
    Ok((0..plan.trials)
        .map(|t| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut plan.rng(t));
            let mut train = idx[..n_train].to_vec();
            let mut test = idx[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}

/// Per-class splits; each class contributes `ceil(fraction · n_c)` training
/// samples (at least one test sample when the class has two or more).
pub fn make_stratified_splits(labels: &[usize], plan: &SplitPlan) -> Result<Vec<Split>> {
    plan.validate()?;
    if labels.len() < 2 {
        return invalid("need at least two samples to split");
    }
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    Ok((0..plan.trials)
        .map(|t| {
            let mut rng = plan.rng(t);
            let mut train = Vec::new();
            let mut test = Vec::new();
            for &c in &classes {
                let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                members.shuffle(&mut rng);
                let k = if members.len() < 2 { members.len() } else { train_count(members.len(), plan.train_fraction) };
                train.extend_from_slice(&members[..k]);
                test.extend_from_slice(&members[k..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}
