//! Tabular data ingestion: schema-driven CSV encoding, seeded 60/20/20
//! splits, and a synthetic generator with a tunable group bias.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    MinMax,
    Standard,
}

/// A column whose raw string values are mapped onto `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryColumn {
    pub name: String,
    pub mapping: BTreeMap<String, u8>,
}

/// Declarative description of a raw CSV file.
///
/// JSON keys match the field names. Feature columns are every column except
/// the label (and the protected column when `drop_protected_from_features`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub column_names: Vec<String>,
    #[serde(default)]
    pub categorical_columns: BTreeSet<String>,
    #[serde(default)]
    pub numerical_columns: BTreeSet<String>,
    pub protected_column: BinaryColumn,
    pub label_column: BinaryColumn,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub drop_protected_from_features: bool,
}

impl DatasetSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn feature_columns(&self) -> Vec<&str> {
        self.column_names
            .iter()
            .filter(|c| **c != self.label_column.name)
            .filter(|c| !(self.drop_protected_from_features && **c == self.protected_column.name))
            .map(String::as_str)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let names: BTreeSet<&str> = self.column_names.iter().map(String::as_str).collect();
        if names.len() != self.column_names.len() {
            return Err(Error::Schema("duplicate column names".into()));
        }
        for (role, col) in [
            ("protected", &self.protected_column),
            ("label", &self.label_column),
        ] {
            if !names.contains(col.name.as_str()) {
                return Err(Error::Schema(format!(
                    "{role} column `{}` is not in column_names",
                    col.name
                )));
            }
            if col.mapping.values().any(|&v| v > 1) {
                return Err(Error::Schema(format!(
                    "{role} column `{}` maps to values other than 0/1",
                    col.name
                )));
            }
        }
        if self.protected_column.name == self.label_column.name {
            return Err(Error::Schema(
                "protected and label columns must be distinct".into(),
            ));
        }
        if let Some(c) = self.categorical_columns.intersection(&self.numerical_columns).next() {
            return Err(Error::Schema(format!(
                "column `{c}` is both categorical and numerical"
            )));
        }
        for c in self.categorical_columns.iter().chain(&self.numerical_columns) {
            if !names.contains(c.as_str()) {
                return Err(Error::Schema(format!("unknown column `{c}` in type sets")));
            }
            if *c == self.label_column.name {
                return Err(Error::Schema(format!(
                    "label column `{c}` cannot be a feature"
                )));
            }
        }
        for c in self.feature_columns() {
            if !self.categorical_columns.contains(c) && !self.numerical_columns.contains(c) {
                return Err(Error::Schema(format!(
                    "feature column `{c}` is neither categorical nor numerical"
                )));
            }
        }
        Ok(())
    }
}

/// Encoded dataset. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    n_features: usize,
    pub labels: Vec<u8>,
    pub protected: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        protected: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let rows = labels.len();
        if protected.len() != rows {
            return Err(Error::Shape(format!(
                "{} labels but {} protected values",
                rows,
                protected.len()
            )));
        }
        if features.len() != rows * n_features {
            return Err(Error::Shape(format!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                rows,
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(Error::Shape(format!(
                "{} feature names for {} features",
                feature_names.len(),
                n_features
            )));
        }
        if labels.iter().chain(&protected).any(|&v| v > 1) {
            return Err(Error::Shape("labels and protected must be 0/1".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite feature value".into()));
        }
        Ok(TabularDataset {
            features,
            n_features,
            labels,
            protected,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features.max(1)).take(self.len())
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TabularDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        TabularDataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            protected: indices.iter().map(|&i| self.protected[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes features plus `protected` and `label` columns as CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("protected".into());
        header.push("label".into());
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.protected[i].to_string());
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Schema matching [`write_csv`](Self::write_csv) output: numerical
    /// features, `protected` and `label` mapped `"0"→0`, `"1"→1`.
    pub fn raw_schema(&self, scaling: Scaling) -> DatasetSchema {
        let binary = |name: &str| BinaryColumn {
            name: name.into(),
            mapping: [("0".to_string(), 0u8), ("1".to_string(), 1u8)].into(),
        };
        let mut column_names = self.feature_names.clone();
        column_names.push("protected".into());
        column_names.push("label".into());
        DatasetSchema {
            column_names,
            categorical_columns: BTreeSet::new(),
            numerical_columns: self.feature_names.iter().cloned().collect(),
            protected_column: binary("protected"),
            label_column: binary("label"),
            scaling,
            drop_protected_from_features: true,
        }
    }
}

/// Loads and encodes a CSV file.
///
/// Categorical columns are one-hot expanded with categories in sorted order
/// (`name=value`); numerical columns are scaled with statistics from the whole
/// file. Header names must match `schema.column_names` as a set.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<TabularDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_from_reader(file, schema)
}

pub fn load_csv_from_reader<R: std::io::Read>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<TabularDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let position: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    for name in &schema.column_names {
        if !position.contains_key(name.as_str()) {
            return Err(Error::Schema(format!("missing column `{name}` in CSV header")));
        }
    }
    if let Some(extra) = header.iter().find(|h| !schema.column_names.contains(h)) {
        return Err(Error::Schema(format!(
            "CSV column `{extra}` is not declared in the schema"
        )));
    }

    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let n = records.len();
    let field = |row: usize, col: &str| -> &str { &records[row][position[col]] };

    let binarize = |col: &BinaryColumn| -> Result<Vec<u8>> {
        (0..n)
            .map(|r| {
                let raw = field(r, &col.name);
                col.mapping.get(raw).copied().ok_or_else(|| Error::Data {
                    row: r + 1,
                    msg: format!("value `{raw}` of `{}` has no 0/1 mapping", col.name),
                })
            })
            .collect()
    };
    let labels = binarize(&schema.label_column)?;
    let protected = binarize(&schema.protected_column)?;

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    for name in schema.feature_columns() {
        if schema.categorical_columns.contains(name) {
            let categories: BTreeSet<&str> = (0..n).map(|r| field(r, name)).collect();
            for cat in categories {
                columns.push(
                    (0..n)
                        .map(|r| if field(r, name) == cat { 1.0 } else { 0.0 })
                        .collect(),
                );
                feature_names.push(format!("{name}={cat}"));
            }
        } else {
            let mut values = Vec::with_capacity(n);
            for r in 0..n {
                let raw = field(r, name);
                let v: f64 = raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: r + 1,
                        column: name.to_string(),
                        value: raw.to_string(),
                    })?;
                values.push(v);
            }
            scale_column(&mut values, schema.scaling);
            columns.push(values);
            feature_names.push(name.to_string());
        }
    }

    let n_features = columns.len();
    let mut features = Vec::with_capacity(n * n_features);
    for r in 0..n {
        features.extend(columns.iter().map(|c| c[r]));
    }
    TabularDataset::new(features, n_features, labels, protected, feature_names)
}

/// In-place scaling. Constant columns encode to 0 under both schemes.
pub fn scale_column(values: &mut [f64], scaling: Scaling) {
    if values.is_empty() {
        return;
    }
    match scaling {
        Scaling::MinMax => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            for v in values.iter_mut() {
                *v = if range > 0.0 { (*v - min) / range } else { 0.0 };
            }
        }
        Scaling::Standard => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for v in values.iter_mut() {
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
    }
}

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.60, 0.20, 0.20);

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: TabularDataset,
    pub validation: TabularDataset,
    pub test: TabularDataset,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub split_seed: u64,
}

/// Shuffled 60/20/20 partition: train gets `floor(0.6 n)`, validation
/// `floor(0.2 n)`, test the rest.
pub fn split(data: &TabularDataset, seed: u64) -> Result<SplitDataset> {
    let n = data.len();
    if n < 5 {
        return Err(Error::Size(format!("need at least 5 rows to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::with_stream(seed, stream::SPLIT).shuffle(&mut order);
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    let train_indices = order[..n_train].to_vec();
    let validation_indices = order[n_train..n_train + n_val].to_vec();
    let test_indices = order[n_train + n_val..].to_vec();
    Ok(SplitDataset {
        train: data.select(&train_indices),
        validation: data.select(&validation_indices),
        test: data.select(&test_indices),
        train_indices,
        validation_indices,
        test_indices,
        split_seed: seed,
    })
}

/// Shift applied to the label score of each group at full bias.
const GROUP_SHIFT: f64 = 0.6;
const LABEL_NOISE: f64 = 0.5;

/// Synthetic dataset with a binary group whose favorable-outcome rate is
/// shifted by `bias_strength`.
///
/// `protected ~ Bernoulli(0.5)`; feature 0 is a noisy proxy `±1 + 0.5 N(0,1)`
/// of the group, the remaining features are `N(0,1)`. Labels are
/// `1[z + bias_strength * 0.6 * (2a - 1) + 0.5 N(0,1) > 0]` where `z` is a
/// fixed unit-variance linear combination of the non-proxy features.
pub fn synthesize_biased(
    n_rows: usize,
    n_features: usize,
    bias_strength: f64,
    seed: u64,
) -> Result<TabularDataset> {
    if n_rows < 100 {
        return Err(Error::Size(format!("n_rows must be >= 100, got {n_rows}")));
    }
    if n_features < 2 {
        return Err(Error::Size(format!(
            "n_features must be >= 2, got {n_features}"
        )));
    }
    if !(0.0..=1.0).contains(&bias_strength) {
        return Err(Error::Config(format!(
            "bias_strength must lie in [0, 1], got {bias_strength}"
        )));
    }
    let mut rng = Rng::with_stream(seed, stream::SYNTH);
    let mut coef: Vec<f64> = (1..n_features).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
    coef.iter_mut().for_each(|c| *c /= norm);

    let mut features = Vec::with_capacity(n_rows * n_features);
    let mut labels = Vec::with_capacity(n_rows);
    let mut protected = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let a = u8::from(rng.bernoulli(0.5));
        let sign = if a == 1 { 1.0 } else { -1.0 };
        features.push(sign + 0.5 * rng.normal());
        let mut z = 0.0;
        for c in &coef {
            let x = rng.normal();
            features.push(x);
            z += c * x;
        }
        let score = z + bias_strength * GROUP_SHIFT * sign + LABEL_NOISE * rng.normal();
        labels.push(u8::from(score > 0.0));
        protected.push(a);
    }
    let names = (0..n_features).map(|j| format!("x{j}")).collect();
    TabularDataset::new(features, n_features, labels, protected, names)
}

/// `|P(y=1 | a=0) - P(y=1 | a=1)|` over the labels.
pub fn favorable_rate_gap(data: &TabularDataset) -> f64 {
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&y, &a) in data.labels.iter().zip(&data.protected) {
        tot[a as usize] += 1;
        pos[a as usize] += y as usize;
    }
    let rate = |g: usize| {
        if tot[g] == 0 {
            0.0
        } else {
            pos[g] as f64 / tot[g] as f64
        }
    };
    (rate(0) - rate(1)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DatasetSchema {
        DatasetSchema {
            column_names: vec!["age".into(), "job".into(), "sex".into(), "y".into()],
            categorical_columns: ["job".to_string(), "sex".to_string()].into(),
            numerical_columns: ["age".to_string()].into(),
            protected_column: BinaryColumn {
                name: "sex".into(),
                mapping: [("Male".to_string(), 0), ("Female".to_string(), 1)].into(),
            },
            label_column: BinaryColumn {
                name: "y".into(),
                mapping: [("no".to_string(), 0), ("yes".to_string(), 1)].into(),
            },
            scaling: Scaling::MinMax,
            drop_protected_from_features: false,
        }
    }

    const CSV: &str = "age,job,sex,y\n0,clerk,Male,no\n5,chef,Female,yes\n10,clerk,Male,yes\n";

    #[test]
    fn one_hot_and_min_max() {
        let d = load_csv_from_reader(CSV.as_bytes(), &schema()).unwrap();
        assert_eq!(
            d.feature_names,
            ["age", "job=chef", "job=clerk", "sex=Female", "sex=Male"]
        );
        assert_eq!(d.row(0), &[0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.row(1), &[0.5, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.row(2), &[1.0, 0.0, 1.0, 0.0, 1.0]);
        for r in d.rows() {
            assert_eq!(r[1] + r[2], 1.0);
        }
        assert_eq!(d.protected, [0, 1, 0]);
        assert_eq!(d.labels, [0, 1, 1]);
    }

    #[test]
    fn drop_protected_removes_columns() {
        let mut s = schema();
        s.drop_protected_from_features = true;
        let d = load_csv_from_reader(CSV.as_bytes(), &s).unwrap();
        assert_eq!(d.feature_names, ["age", "job=chef", "job=clerk"]);
        assert_eq!(d.protected, [0, 1, 0]);
    }

    #[test]
    fn standard_scaling_uses_population_sd() {
        let mut v = vec![0.0, 5.0, 10.0];
        scale_column(&mut v, Scaling::Standard);
        let sd = (50.0f64 / 3.0).sqrt();
        assert!((v[0] + 5.0 / sd).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        let mut c = vec![3.0, 3.0];
        scale_column(&mut c, Scaling::Standard);
        assert_eq!(c, [0.0, 0.0]);
        let mut c = vec![3.0, 3.0];
        scale_column(&mut c, Scaling::MinMax);
        assert_eq!(c, [0.0, 0.0]);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "age,job,y\n1,clerk,no\n";
        assert!(matches!(
            load_csv_from_reader(csv.as_bytes(), &schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn unmapped_protected_value_is_data_error() {
        let csv = "age,job,sex,y\n1,clerk,Other,no\n";
        assert!(matches!(
            load_csv_from_reader(csv.as_bytes(), &schema()),
            Err(Error::Data { row: 1, .. })
        ));
    }

    #[test]
    fn non_numeric_value_is_parse_error() {
        let csv = "age,job,sex,y\n1,clerk,Male,no\nold,chef,Male,yes\n";
        match load_csv_from_reader(csv.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("{other:?}"),
        }
        let csv = "age,job,sex,y\nNaN,clerk,Male,no\n";
        assert!(matches!(
            load_csv_from_reader(csv.as_bytes(), &schema()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn encoded_file_is_rejected() {
        let d = load_csv_from_reader(CSV.as_bytes(), &schema()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("enc.csv");
        d.write_csv(&p).unwrap();
        assert!(matches!(load_csv(&p, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_validation() {
        let mut s = schema();
        s.label_column.name = "sex".into();
        assert!(s.validate().is_err());
        let mut s = schema();
        s.numerical_columns.insert("job".into());
        assert!(s.validate().is_err());
        let mut s = schema();
        s.categorical_columns.remove("job");
        assert!(s.validate().is_err());
        let mut s = schema();
        s.protected_column.name = "race".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let s = schema();
        let text = serde_json::to_string_pretty(&s).unwrap();
        assert!(text.contains("\"min_max\""));
        let back: DatasetSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = synthesize_biased(100, 3, 0.5, 1).unwrap().select(&(0..10).collect::<Vec<_>>());
        let s = split(&d, 4).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (6, 2, 2)
        );
        let again = split(&d, 4).unwrap();
        assert_eq!(s.train_indices, again.train_indices);
        assert_eq!(s.validation_indices, again.validation_indices);
        assert_eq!(s.test_indices, again.test_indices);
        let mut all: Vec<usize> = s
            .train_indices
            .iter()
            .chain(&s.validation_indices)
            .chain(&s.test_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_too_small() {
        let d = synthesize_biased(100, 3, 0.5, 1).unwrap().select(&[0, 1, 2, 3]);
        assert!(matches!(split(&d, 0), Err(Error::Size(_))));
    }

    #[test]
    fn synth_preconditions() {
        assert!(synthesize_biased(99, 3, 0.5, 1).is_err());
        assert!(synthesize_biased(100, 1, 0.5, 1).is_err());
        assert!(synthesize_biased(100, 3, 1.5, 1).is_err());
    }

    #[test]
    fn synth_bias_gap() {
        let unbiased = synthesize_biased(10_000, 5, 0.0, 3).unwrap();
        assert!(favorable_rate_gap(&unbiased) <= 0.05);
        let biased = synthesize_biased(10_000, 5, 1.0, 3).unwrap();
        assert!(favorable_rate_gap(&biased) >= 0.2);
        let mid = synthesize_biased(10_000, 5, 0.5, 3).unwrap();
        let g = favorable_rate_gap(&mid);
        assert!(g > favorable_rate_gap(&unbiased) && g < favorable_rate_gap(&biased));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synthesize_biased(500, 4, 0.7, 9).unwrap();
        let b = synthesize_biased(500, 4, 0.7, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthesize_biased(500, 4, 0.7, 10).unwrap());
    }

    #[test]
    fn raw_csv_round_trip_through_schema() {
        let d = synthesize_biased(200, 3, 0.5, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("raw.csv");
        d.write_csv(&p).unwrap();
        let loaded = load_csv(&p, &d.raw_schema(Scaling::MinMax)).unwrap();
        assert_eq!(loaded.labels, d.labels);
        assert_eq!(loaded.protected, d.protected);
        assert_eq!(loaded.n_features(), 3);
        assert!(loaded.features().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
