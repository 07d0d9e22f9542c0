//! CSV loading, dataset recipes, train/test split and standardization.
//!
//! A [`Recipe`] maps source columns to named features, caps counts, drops
//! incomplete rows and removes excluded columns. Applying a recipe to its own
//! output (written back with [`Dataset::write_csv`]) reproduces that output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Feature, FeatureKind, FeatureSchema};

/// One feature taken from a source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    /// Source column; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    /// Inferred from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeatureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}

impl ColumnDecl {
    pub fn new(name: &str, column: &str, kind: FeatureKind) -> Self {
        ColumnDecl {
            name: name.to_owned(),
            column: Some(column.to_owned()),
            kind: Some(kind),
            domain: None,
        }
    }

    pub fn source(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

fn default_true() -> bool {
    true
}

fn default_missing() -> Vec<String> {
    ["", "NA", "NaN", "nan", "null"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub target_column: String,
    /// Kept features in order. Empty means every non-target, non-excluded column.
    #[serde(default)]
    pub features: Vec<ColumnDecl>,
    /// Source columns never used as features.
    #[serde(default)]
    pub excluded_features: Vec<String>,
    /// Upper caps by feature name.
    #[serde(default)]
    pub truncations: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub drop_missing: bool,
    /// Literal replacements per source column, e.g. `{"c_charge_degree": {"F": 1, "M": 0}}`.
    #[serde(default)]
    pub value_maps: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default = "default_missing")]
    pub missing_tokens: Vec<String>,
}

impl Recipe {
    /// A recipe that keeps every column except `target_column`.
    pub fn plain(target_column: &str) -> Self {
        Recipe {
            target_column: target_column.to_owned(),
            features: Vec::new(),
            excluded_features: Vec::new(),
            truncations: BTreeMap::new(),
            drop_missing: true,
            value_maps: BTreeMap::new(),
            missing_tokens: default_missing(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Recipe = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.features {
            if self.excluded_features.iter().any(|e| e == d.source() || *e == d.name) {
                return Err(Error::InvalidConfig(format!(
                    "column `{}` is both kept and excluded",
                    d.source()
                )));
            }
        }
        for name in self.truncations.keys() {
            if !self.features.is_empty() && !self.features.iter().any(|d| &d.name == name) {
                return Err(Error::UnknownFeature(name.clone()));
            }
        }
        Ok(())
    }

    /// Built-in recipes: `gmsc`, `compas`, `heart`.
    pub fn builtin(name: &str) -> Result<Recipe> {
        use FeatureKind::*;
        let mut r;
        match name {
            "gmsc" => {
                r = Recipe::plain("SeriousDlqin2yrs");
                r.features = vec![
                    ColumnDecl::new("x1", "RevolvingUtilizationOfUnsecuredLines", Continuous),
                    ColumnDecl::new("x3", "NumberOfTime30-59DaysPastDueNotWorse", Count),
                    ColumnDecl::new("x4", "DebtRatio", Continuous),
                    ColumnDecl::new("x5", "MonthlyIncome", Continuous),
                    ColumnDecl::new("x6", "NumberOfOpenCreditLinesAndLoans", Count),
                    ColumnDecl::new("x7", "NumberOfTimes90DaysLate", Count),
                    ColumnDecl::new("x8", "NumberRealEstateLoansOrLines", Count),
                    ColumnDecl::new("x9", "NumberOfTime60-89DaysPastDueNotWorse", Count),
                    ColumnDecl::new("x10", "NumberOfDependents", Count),
                ];
                r.excluded_features = vec!["age".into()];
                for f in ["x3", "x7", "x9"] {
                    r.truncations.insert(f.into(), 4.0);
                }
                // heavy right tails; caps keep standardized inputs usable
                r.truncations.insert("x1".into(), 2.0);
                r.truncations.insert("x4".into(), 5.0);
                r.truncations.insert("x5".into(), 50_000.0);
            }
            "compas" => {
                r = Recipe::plain("two_year_recid");
                r.features = vec![
                    ColumnDecl::new("x3", "age", Continuous),
                    ColumnDecl::new("x4", "juv_fel_count", Count),
                    ColumnDecl::new("x5", "juv_misd_count", Count),
                    ColumnDecl::new("x6", "priors_count", Count),
                    ColumnDecl::new("x7", "charge_id", Continuous),
                    ColumnDecl::new("x8", "charge_degree", Binary),
                ];
                r.excluded_features = vec!["race".into(), "sex".into(), "compas_decile_score".into()];
                r.truncations.insert("x4".into(), 3.0);
                r.truncations.insert("x5".into(), 3.0);
                let mut degree = BTreeMap::new();
                for (k, v) in [("F", 1.0), ("M", 0.0), ("(F)", 1.0), ("(M)", 0.0)] {
                    degree.insert(k.to_string(), v);
                }
                r.value_maps.insert("charge_degree".into(), degree);
            }
            "heart" => {
                r = Recipe::plain("DEATH_EVENT");
                r.features = vec![
                    ColumnDecl::new("x1", "age", Continuous),
                    ColumnDecl::new("x2", "anaemia", Binary),
                    ColumnDecl::new("x3", "high_blood_pressure", Binary),
                    ColumnDecl::new("x4", "creatinine_phosphokinase", Continuous),
                    ColumnDecl::new("x5", "diabetes", Binary),
                    ColumnDecl::new("x6", "ejection_fraction", Continuous),
                    ColumnDecl::new("x7", "platelets", Continuous),
                    ColumnDecl::new("x8", "sex", Binary),
                    ColumnDecl::new("x9", "serum_creatinine", Continuous),
                    ColumnDecl::new("x10", "serum_sodium", Continuous),
                    ColumnDecl::new("x11", "smoking", Binary),
                    ColumnDecl::new("x12", "time", Continuous),
                ];
            }
            other => return Err(Error::InvalidConfig(format!("unknown recipe `{other}`"))),
        }
        Ok(r)
    }
}

/// Row counts from one load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_missing: usize,
    pub rows_kept: usize,
    pub truncated_cells: usize,
}

/// Feature matrix, target and schema. Columns follow the schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Source column of each feature, used when writing the data back out.
    pub columns: Vec<String>,
    pub target: String,
}

impl Dataset {
    /// Validates shapes and finiteness.
    pub fn new(schema: FeatureSchema, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let columns = schema.names().iter().map(|s| s.to_string()).collect();
        let ds = Dataset {
            schema,
            x,
            y,
            columns,
            target: "y".into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::EmptyData("dataset has no rows".into()));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                found: self.y.len(),
            });
        }
        let m = self.schema.len();
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) || !self.y[i].is_finite() {
                return Err(Error::NonFinite(format!("row {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn is_binary_target(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn positive_rate(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            columns: self.columns.clone(),
            target: self.target.clone(),
        }
    }

    /// Writes source-named columns followed by the target.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.columns.clone();
        header.push(self.target.clone());
        w.write_record(&header)?;
        for (row, y) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV file and applies `recipe`.
pub fn load_csv(path: impl AsRef<Path>, recipe: &Recipe) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    load_reader(file, recipe)
}

pub fn load_reader<R: Read>(reader: R, recipe: &Recipe) -> Result<(Dataset, LoadReport)> {
    recipe.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::UnknownFeature(col.to_owned()))
    };
    let target_idx = find(&recipe.target_column)?;
    let decls: Vec<ColumnDecl> = if recipe.features.is_empty() {
        headers
            .iter()
            .filter(|h| **h != recipe.target_column && !h.is_empty() && !recipe.excluded_features.contains(h))
            .map(|h| ColumnDecl {
                name: h.clone(),
                column: None,
                kind: None,
                domain: None,
            })
            .collect()
    } else {
        recipe.features.clone()
    };
    let idx: Vec<usize> = decls.iter().map(|d| find(d.source())).collect::<Result<_>>()?;
    for e in &recipe.excluded_features {
        if decls.iter().any(|d| d.source() == e) {
            return Err(Error::InvalidConfig(format!("column `{e}` is both kept and excluded")));
        }
    }

    let parse = |col: &str, raw: &str| -> Result<Option<f64>> {
        let raw = raw.trim();
        if recipe.missing_tokens.iter().any(|t| t == raw) {
            return Ok(None);
        }
        if let Some(v) = recipe.value_maps.get(col).and_then(|m| m.get(raw)) {
            return Ok(Some(*v));
        }
        raw.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Malformed(format!("column `{col}`: cannot parse `{raw}`")))
    };

    let mut report = LoadReport::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        report.rows_read += 1;
        if rec.len() != headers.len() {
            return Err(Error::Malformed(format!("row {} has {} fields, expected {}", line + 2, rec.len(), headers.len())));
        }
        let target = parse(&recipe.target_column, &rec[target_idx])?;
        let mut row = Vec::with_capacity(idx.len());
        let mut missing = target.is_none();
        for (d, &i) in decls.iter().zip(&idx) {
            match parse(d.source(), &rec[i])? {
                Some(v) => row.push(v),
                None => {
                    missing = true;
                    row.push(f64::NAN);
                }
            }
        }
        if missing {
            if recipe.drop_missing {
                report.rows_missing += 1;
                continue;
            }
            return Err(Error::Malformed(format!("row {} has missing values", line + 2)));
        }
        for (d, v) in decls.iter().zip(row.iter_mut()) {
            if let Some(&cap) = recipe.truncations.get(&d.name) {
                if *v > cap {
                    *v = cap;
                    report.truncated_cells += 1;
                }
            }
        }
        x.push(row);
        y.push(target.unwrap());
    }
    report.rows_kept = x.len();
    if x.is_empty() {
        return Err(Error::EmptyData("no rows left after preprocessing".into()));
    }

    let features = decls
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            infer_feature(d, &col, recipe.truncations.get(&d.name).copied())
        })
        .collect::<Result<Vec<_>>>()?;
    let schema = FeatureSchema::new(features)?;
    log::info!(
        "loaded {} rows, dropped {} with missing values, kept {}",
        report.rows_read,
        report.rows_missing,
        report.rows_kept
    );
    let ds = Dataset {
        schema,
        x,
        y,
        columns: decls.iter().map(|d| d.source().to_owned()).collect(),
        target: recipe.target_column.clone(),
    };
    ds.validate()?;
    Ok((ds, report))
}

fn infer_feature(d: &ColumnDecl, col: &[f64], cap: Option<f64>) -> Result<Feature> {
    let kind = d.kind.unwrap_or_else(|| {
        if col.iter().all(|&v| v == 0.0 || v == 1.0) {
            FeatureKind::Binary
        } else if col.iter().all(|&v| v >= 0.0 && v.fract() == 0.0) {
            FeatureKind::Count
        } else {
            FeatureKind::Continuous
        }
    });
    if kind == FeatureKind::Binary {
        if let Some(v) = col.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Malformed(format!("binary feature `{}` has value {v}", d.name)));
        }
        return Ok(Feature::binary(&d.name));
    }
    let (lo, hi) = d.domain.unwrap_or_else(|| {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi } else { lo + 1.0 })
    });
    Ok(Feature {
        name: d.name.clone(),
        kind,
        domain: (lo, hi),
        truncation: cap,
    })
}

/// Seeded shuffle, then the first `round(n · fraction)` rows train.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = ds.len();
    let n_train = (n as f64 * fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::EmptyData(format!("{n} rows cannot be split at {fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((ds.subset(&order[..n_train]), ds.subset(&order[n_train..])))
}

/// Per-feature affine map fitted on training data; `None` leaves a column raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<String>,
    pub params: Vec<Option<(f64, f64)>>,
}

impl Scaler {
    /// Mean and population standard deviation of each continuous feature.
    pub fn fit(ds: &Dataset) -> Scaler {
        let n = ds.len() as f64;
        let params = ds
            .schema
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if f.kind != FeatureKind::Continuous {
                    return None;
                }
                let mean = ds.x.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = ds.x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 {
                    Some((mean, sd))
                } else {
                    log::warn!("feature `{}` is constant; left unscaled", f.name);
                    None
                }
            })
            .collect();
        Scaler {
            features: ds.schema.names().iter().map(|s| s.to_string()).collect(),
            params,
        }
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for (v, p) in row.iter_mut().zip(&self.params) {
            if let Some((m, s)) = p {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.schema.names() != self.features {
            return Err(Error::Schema("scaler was fitted on different features".into()));
        }
        let mut out = ds.clone();
        for row in &mut out.x {
            self.transform_row(row);
        }
        for (j, p) in self.params.iter().enumerate() {
            if let Some((m, s)) = p {
                let f = out.schema.feature_mut(j);
                f.domain = ((f.domain.0 - m) / s, (f.domain.1 - m) / s);
            }
        }
        Ok(out)
    }
}

/// Scales continuous features with training statistics; counts and binaries stay raw.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Scaler)> {
    if train.is_empty() {
        return Err(Error::EmptyData("training set is empty".into()));
    }
    let scaler = Scaler::fit(train);
    Ok((scaler.apply(train)?, scaler.apply(test)?, scaler))
}
