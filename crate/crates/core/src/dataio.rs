//! CSV loading and preprocessing: dummy coding, median imputation, label
//! binarization and min-max scaling.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn missing_rows(&self) -> Vec<usize> {
        let rows = |it: &mut dyn Iterator<Item = bool>| {
            it.enumerate().filter_map(|(i, m)| m.then_some(i)).collect()
        };
        match self {
            Column::Numeric(v) => rows(&mut v.iter().map(Option::is_none)),
            Column::Categorical(v) => rows(&mut v.iter().map(Option::is_none)),
        }
    }
}

/// Indicator columns produced from one categorical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyGroup {
    pub source: String,
    /// All levels; the first is the dropped reference level and the rest
    /// are in lexicographic order.
    pub levels: Vec<String>,
    /// Feature indices of the indicators for `levels[1..]`.
    pub columns: Vec<usize>,
    /// Rows whose level was imputed.
    pub imputed_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub label: usize,
    /// Rows imputed so far, per column.
    pub imputed: Vec<Vec<usize>>,
    pub groups: Vec<DummyGroup>,
    /// Reference level per categorical column, overriding the
    /// lexicographically first one.
    pub reference: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Column>, label: usize) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                got: columns.len(),
            });
        }
        if label >= columns.len() {
            return Err(Error::Data(format!("label column index {label} out of range")));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(Error::Data("table has no rows".into()));
        }
        if let Some((name, c)) = names.iter().zip(&columns).find(|(_, c)| c.len() != rows) {
            return Err(Error::Data(format!(
                "column `{name}` has {} rows, expected {rows}",
                c.len()
            )));
        }
        let n = columns.len();
        Ok(RawTable {
            names,
            columns,
            label,
            imputed: vec![Vec::new(); n],
            groups: Vec::new(),
            reference: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn imputed_cells(&self) -> usize {
        self.imputed.iter().map(Vec::len).sum::<usize>()
            + self.groups.iter().map(|g| g.imputed_rows.len()).sum::<usize>()
    }
}

/// Per-file overrides, read from a TOML sidecar next to the CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub label: Option<String>,
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
    /// Class mapped to +1 instead of the largest one.
    pub positive_class: Option<String>,
    /// Dropped dummy level per column, instead of the lexicographically first.
    pub reference: BTreeMap<String, String>,
}

impl TableConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `<stem>.toml` beside `csv_path` if present.
    pub fn sidecar(csv_path: impl AsRef<Path>) -> Result<Self> {
        let side = csv_path.as_ref().with_extension("toml");
        if side.is_file() {
            Self::from_path(side)
        } else {
            Ok(Self::default())
        }
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "?"
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn read_csv(path: impl AsRef<Path>, cfg: &TableConfig) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, cfg)
}

pub fn read_csv_from<R: Read>(reader: R, cfg: &TableConfig) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Data("empty header".into()));
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, v) in rec.iter().enumerate() {
            cells[k].push(v.to_string());
        }
    }

    let label = match &cfg.label {
        Some(l) => names
            .iter()
            .position(|n| n == l)
            .ok_or_else(|| Error::Config(format!("label column `{l}` not found")))?,
        None => names.len() - 1,
    };
    for listed in cfg.categorical.iter().chain(&cfg.numeric).chain(cfg.reference.keys()) {
        if !names.contains(listed) {
            return Err(Error::Config(format!("column `{listed}` not found")));
        }
    }

    let mut columns = Vec::with_capacity(names.len());
    for (k, raw) in cells.into_iter().enumerate() {
        let name = &names[k];
        let force_cat = k == label || cfg.categorical.contains(name);
        let force_num = cfg.numeric.contains(name);
        if force_cat && force_num {
            return Err(Error::Config(format!("column `{name}` declared both numeric and categorical")));
        }
        let numeric_ok = raw.iter().all(|s| is_missing(s) || parse_number(s).is_some());
        if force_num && !numeric_ok {
            return Err(Error::Data(format!("column `{name}` declared numeric has non-numeric values")));
        }
        if !force_cat && numeric_ok {
            columns.push(Column::Numeric(
                raw.iter().map(|s| if is_missing(s) { None } else { parse_number(s) }).collect(),
            ));
        } else {
            columns.push(Column::Categorical(
                raw.into_iter().map(|s| (!is_missing(&s)).then_some(s)).collect(),
            ));
        }
    }
    let mut table = RawTable::new(names, columns, label)?;
    table.reference = cfg.reference.clone();
    Ok(table)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Most frequent value; ties go to the lexicographically smallest.
fn mode<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (k, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k.to_string())
}

/// Fills missing feature cells with the column median (numeric) or mode
/// (categorical). The label column must be complete.
pub fn impute_median(raw: &RawTable) -> Result<RawTable> {
    let mut out = raw.clone();
    for (k, col) in out.columns.iter_mut().enumerate() {
        let missing = col.missing_rows();
        if missing.is_empty() {
            continue;
        }
        let name = &raw.names[k];
        if k == raw.label {
            return Err(Error::Data(format!("label column `{name}` has missing values")));
        }
        match col {
            Column::Numeric(v) => {
                let fill = median(v.iter().flatten().copied().collect())
                    .ok_or_else(|| Error::AllMissing(name.clone()))?;
                for &i in &missing {
                    v[i] = Some(fill);
                }
            }
            Column::Categorical(v) => {
                let fill = mode(v.iter().flatten().map(String::as_str))
                    .ok_or_else(|| Error::AllMissing(name.clone()))?;
                for &i in &missing {
                    v[i] = Some(fill.clone());
                }
            }
        }
        out.imputed[k].extend(missing);
    }
    let total = out.imputed_cells();
    if total > 0 {
        out.notes.push(format!("imputed {total} cells"));
    }
    Ok(out)
}

/// Replaces each categorical feature column with `levels - 1` indicator
/// columns named `<col>=<level>`; the lexicographically first level is the
/// reference. Missing cells must have been imputed already.
pub fn encode_categoricals(raw: &RawTable) -> Result<RawTable> {
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut imputed = Vec::new();
    let mut groups = raw.groups.clone();
    let mut notes = raw.notes.clone();
    let mut label = 0;
    for (k, col) in raw.columns.iter().enumerate() {
        let name = &raw.names[k];
        if k == raw.label {
            label = columns.len();
            names.push(name.clone());
            columns.push(col.clone());
            imputed.push(raw.imputed[k].clone());
            continue;
        }
        match col {
            Column::Numeric(_) => {
                names.push(name.clone());
                columns.push(col.clone());
                imputed.push(raw.imputed[k].clone());
            }
            Column::Categorical(v) => {
                let mut levels: Vec<&str> = Vec::with_capacity(v.len());
                for cell in v {
                    let s = cell.as_deref().ok_or_else(|| {
                        Error::Data(format!("column `{name}` has missing values; impute before encoding"))
                    })?;
                    levels.push(s);
                }
                levels.sort_unstable();
                levels.dedup();
                if let Some(r) = raw.reference.get(name) {
                    let p = levels.iter().position(|l| l == r).ok_or_else(|| {
                        Error::Config(format!("reference level `{r}` not found in column `{name}`"))
                    })?;
                    let r = levels.remove(p);
                    levels.insert(0, r);
                }
                if levels.len() == 1 {
                    let msg = format!("column `{name}` has a single level and was dropped");
                    warn!("{msg}");
                    notes.push(msg);
                }
                let first = columns.len();
                for level in &levels[1..] {
                    names.push(format!("{name}={level}"));
                    columns.push(Column::Numeric(
                        v.iter()
                            .map(|c| Some(if c.as_deref() == Some(level) { 1.0 } else { 0.0 }))
                            .collect(),
                    ));
                    imputed.push(Vec::new());
                }
                groups.push(DummyGroup {
                    source: name.clone(),
                    levels: levels.iter().map(|s| s.to_string()).collect(),
                    columns: (first..columns.len()).collect(),
                    imputed_rows: raw.imputed[k].clone(),
                });
            }
        }
    }
    // Group column indices were recorded in table coordinates; they become
    // feature coordinates once the label is removed.
    Ok(RawTable {
        names,
        columns,
        label,
        imputed,
        groups,
        reference: raw.reference.clone(),
        notes,
    })
}

/// Cells that were imputed, kept so they can be re-imputed from training
/// rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MissingCells {
    Numeric { feature: usize, rows: Vec<usize> },
    Categorical { group: DummyGroup },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub costs: Vec<f64>,
    pub notes: Vec<String>,
    /// Name of the class mapped to +1.
    pub positive_class: String,
    pub missing: Vec<MissingCells>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let n = x.ncols();
        let d = Dataset {
            x,
            y,
            names,
            costs: vec![1.0; n],
            notes: Vec::new(),
            positive_class: "+1".into(),
            missing: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.x.dim();
        if self.y.len() != m {
            return Err(Error::Dimension { expected: m, got: self.y.len() });
        }
        if self.names.len() != n {
            return Err(Error::Dimension { expected: n, got: self.names.len() });
        }
        if self.costs.len() != n {
            return Err(Error::Dimension { expected: n, got: self.costs.len() });
        }
        if n == 0 {
            return Err(Error::Data("dataset has no features".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature matrix has missing or non-finite values".into()));
        }
        if self.y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Data("labels must be +1 or -1".into()));
        }
        if self.n_pos() == 0 || self.n_neg() == 0 {
            return Err(Error::Data("both classes must be present".into()));
        }
        if self.costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Data("feature costs must be positive".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_pos(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn n_neg(&self) -> usize {
        self.y.len() - self.n_pos()
    }

    pub fn with_costs(mut self, costs: Vec<f64>) -> Result<Self> {
        self.costs = costs;
        self.validate()?;
        Ok(self)
    }

    /// Rows `idx` in that order. Imputation records are dropped; subsets are
    /// taken after [`Dataset::reimpute`].
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
            costs: self.costs.clone(),
            notes: self.notes.clone(),
            positive_class: self.positive_class.clone(),
            missing: Vec::new(),
        }
    }

    /// Recomputes every imputed cell from the statistics of `train` rows.
    /// A column with no observed training value keeps its global fill.
    pub fn reimpute(&self, train: &[usize]) -> Dataset {
        let mut out = self.clone();
        let mut in_train = vec![false; self.n_samples()];
        for &i in train {
            in_train[i] = true;
        }
        for rec in &self.missing {
            match rec {
                MissingCells::Numeric { feature, rows } => {
                    let mut is_missing = vec![false; self.n_samples()];
                    for &r in rows {
                        is_missing[r] = true;
                    }
                    let observed = (0..self.n_samples())
                        .filter(|&i| in_train[i] && !is_missing[i])
                        .map(|i| self.x[[i, *feature]])
                        .collect();
                    if let Some(fill) = median(observed) {
                        for &r in rows {
                            out.x[[r, *feature]] = fill;
                        }
                    }
                }
                MissingCells::Categorical { group } => {
                    let mut is_missing = vec![false; self.n_samples()];
                    for &r in &group.imputed_rows {
                        is_missing[r] = true;
                    }
                    let level_of = |i: usize| {
                        group
                            .columns
                            .iter()
                            .position(|&c| self.x[[i, c]] == 1.0)
                            .map_or(0, |p| p + 1)
                    };
                    let observed: Vec<&str> = (0..self.n_samples())
                        .filter(|&i| in_train[i] && !is_missing[i])
                        .map(|i| group.levels[level_of(i)].as_str())
                        .collect();
                    if let Some(fill) = mode(observed.into_iter()) {
                        let li = group.levels.iter().position(|l| *l == fill).unwrap_or(0);
                        for &r in &group.imputed_rows {
                            for (p, &c) in group.columns.iter().enumerate() {
                                out.x[[r, c]] = if li == p + 1 { 1.0 } else { 0.0 };
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Maps the largest class (ties: lexicographically smallest name) or the
/// configured `positive` class to +1 and every other class to -1.
pub fn binarize_labels(raw: &RawTable, positive: Option<&str>) -> Result<Dataset> {
    let label_name = &raw.names[raw.label];
    let labels: Vec<String> = match &raw.columns[raw.label] {
        Column::Categorical(v) => v
            .iter()
            .map(|c| c.clone().ok_or_else(|| Error::Data(format!("label column `{label_name}` has missing values"))))
            .collect::<Result<_>>()?,
        Column::Numeric(v) => v
            .iter()
            .map(|c| c.map(|x| x.to_string()).ok_or_else(|| Error::Data(format!("label column `{label_name}` has missing values"))))
            .collect::<Result<_>>()?,
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Data(format!("label column `{label_name}` has a single class")));
    }
    let pos = match positive {
        Some(p) => {
            if !counts.contains_key(p) {
                return Err(Error::Config(format!("positive class `{p}` not present")));
            }
            p.to_string()
        }
        None => mode(labels.iter().map(String::as_str)).expect("non-empty"),
    };
    let y: Vec<f64> = labels.iter().map(|l| if *l == pos { 1.0 } else { -1.0 }).collect();

    let mut names = Vec::new();
    let mut feature_of = vec![usize::MAX; raw.columns.len()];
    let mut cols = Vec::new();
    for (k, col) in raw.columns.iter().enumerate() {
        if k == raw.label {
            continue;
        }
        match col {
            Column::Numeric(v) => {
                let vals: Vec<f64> = v
                    .iter()
                    .map(|c| c.ok_or_else(|| Error::Data(format!("column `{}` has missing values", raw.names[k]))))
                    .collect::<Result<_>>()?;
                feature_of[k] = cols.len();
                names.push(raw.names[k].clone());
                cols.push(vals);
            }
            Column::Categorical(_) => {
                return Err(Error::Data(format!(
                    "column `{}` is categorical; encode before binarizing",
                    raw.names[k]
                )))
            }
        }
    }
    let m = raw.n_rows();
    let n = cols.len();
    let x = Array2::from_shape_fn((m, n), |(i, j)| cols[j][i]);

    let mut missing = Vec::new();
    for (k, rows) in raw.imputed.iter().enumerate() {
        if !rows.is_empty() && feature_of[k] != usize::MAX {
            missing.push(MissingCells::Numeric {
                feature: feature_of[k],
                rows: rows.clone(),
            });
        }
    }
    for g in &raw.groups {
        if !g.imputed_rows.is_empty() && !g.columns.is_empty() {
            let mut g = g.clone();
            g.columns = g.columns.iter().map(|&c| feature_of[c]).collect();
            missing.push(MissingCells::Categorical { group: g });
        }
    }

    let d = Dataset {
        x,
        y,
        names,
        costs: vec![1.0; n],
        notes: raw.notes.clone(),
        positive_class: pos,
        missing,
    };
    d.validate()?;
    Ok(d)
}

/// Reads, imputes, encodes and binarizes a CSV file. The sidecar TOML next
/// to it supplies defaults that `label` overrides.
pub fn load_dataset(path: impl AsRef<Path>, label: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut cfg = TableConfig::sidecar(path)?;
    if let Some(l) = label {
        cfg.label = Some(l.to_string());
    }
    let raw = read_csv(path, &cfg)?;
    let raw = encode_categoricals(&impute_median(&raw)?)?;
    binarize_labels(&raw, cfg.positive_class.as_deref())
}

/// Reads feature costs: one value per line, or `name,cost` lines in any order.
pub fn read_costs(path: impl AsRef<Path>, names: &[String]) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let bad = |l: &str| Error::Data(format!("bad cost line `{l}`"));
    let mut costs = vec![f64::NAN; names.len()];
    if lines.iter().all(|l| !l.contains(',')) {
        if lines.len() != names.len() {
            return Err(Error::Dimension { expected: names.len(), got: lines.len() });
        }
        for (c, l) in costs.iter_mut().zip(&lines) {
            *c = l.parse().map_err(|_| bad(l))?;
        }
    } else {
        for l in lines {
            let (name, v) = l.rsplit_once(',').ok_or_else(|| bad(l))?;
            let Ok(v) = v.trim().parse::<f64>() else {
                if name.trim() == "feature" {
                    continue;
                }
                return Err(bad(l));
            };
            let k = names
                .iter()
                .position(|n| n == name.trim())
                .ok_or_else(|| Error::Data(format!("unknown feature `{name}` in costs")))?;
            costs[k] = v;
        }
        if let Some(k) = costs.iter().position(|c| c.is_nan()) {
            return Err(Error::Data(format!("no cost given for `{}`", names[k])));
        }
    }
    if costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Data("feature costs must be positive".into()));
    }
    Ok(costs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    None,
    Minmax01,
}

impl std::str::FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ScaleMode::None),
            "minmax01" => Ok(ScaleMode::Minmax01),
            other => Err(Error::InvalidArgument(format!("unknown scaling mode `{other}`"))),
        }
    }
}

/// Affine per-column map `(x - min) / (max - min)`, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mode: ScaleMode,
    pub min: Vec<f64>,
    /// `max - min`; zero for constant columns, which map to 0.
    pub span: Vec<f64>,
}

impl Scaler {
    pub fn fit(mode: ScaleMode, x: ArrayView2<f64>) -> Scaler {
        let n = x.ncols();
        let mut min = vec![0.0; n];
        let mut span = vec![1.0; n];
        if mode == ScaleMode::Minmax01 {
            for (k, col) in x.columns().into_iter().enumerate() {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo.is_finite() {
                    min[k] = lo;
                    span[k] = hi - lo;
                }
            }
        }
        Scaler { mode, min, span }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        if self.mode == ScaleMode::None {
            return out;
        }
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, s) = (self.min[k], self.span[k]);
            col.mapv_inplace(|v| if s > 0.0 { (v - lo) / s } else { 0.0 });
        }
        out
    }
}

/// Scales `d` with parameters fitted on `d` itself.
pub fn scale_features(d: &Dataset, mode: ScaleMode) -> (Dataset, Scaler) {
    let scaler = Scaler::fit(mode, d.x.view());
    let mut out = d.clone();
    out.x = scaler.transform(d.x.view());
    (out, scaler)
}
