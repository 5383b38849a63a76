//! CSV data schema: header row with required columns `u`, `v`, `delta1`,
//! `delta2` (any order), covariates as a contiguous `z1..zd` block or an
//! explicit `--covariates` list, UTF-8, comma separated, `.` decimal.
//! Unknown columns are rejected unless allow-listed. A reserved
//! `format_version` column (constant 1) versions the file; the writer always
//! emits it and the reader validates it when present. Errors name the
//! offending row and column.

use std::path::Path;

use icox::survival::{Dataset, IntervalSample};

use crate::error::CliError;

pub const CSV_FORMAT_VERSION: &str = "1";

/// Column selection options shared by every reading command.
#[derive(Debug, Clone, Default)]
pub struct ColumnSpec {
    /// Explicit covariate column names in model order; `None` selects the
    /// contiguous `z1..zd` block.
    pub covariates: Option<Vec<String>>,
    /// Extra columns to skip instead of rejecting.
    pub ignore: Vec<String>,
}

impl ColumnSpec {
    pub fn new(covariates: &Option<Vec<String>>, ignore: &[String]) -> Self {
        Self {
            covariates: covariates.clone(),
            ignore: ignore.to_vec(),
        }
    }
}

/// Parsed header: indices of the structural columns and the ordered
/// covariate columns.
struct HeaderPlan {
    u: Option<usize>,
    v: Option<usize>,
    delta1: Option<usize>,
    delta2: Option<usize>,
    format_version: Option<usize>,
    id: Option<usize>,
    /// (column name, column index) in covariate order.
    z: Vec<(String, usize)>,
}

/// `z7` -> `Some(7)`; leading zeros and `z0` do not count as covariate
/// columns.
fn z_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('z')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0')
    {
        return None;
    }
    digits.parse().ok()
}

fn plan_header(
    path: &Path,
    headers: &[String],
    spec: &ColumnSpec,
    structural_required: bool,
) -> Result<HeaderPlan, CliError> {
    let file = path.display();
    let mut seen = std::collections::BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if seen.insert(h.as_str(), i).is_some() {
            return Err(CliError::Data(format!("{file}: duplicate column '{h}'")));
        }
    }
    let mut claimed = vec![false; headers.len()];
    let mut take = |name: &str| -> Option<usize> {
        seen.get(name).copied().inspect(|&i| claimed[i] = true)
    };

    let u = take("u");
    let v = take("v");
    let delta1 = take("delta1");
    let delta2 = take("delta2");
    let format_version = take("format_version");
    let id = if structural_required { None } else { take("id") };
    if structural_required {
        for (name, col) in [("u", u), ("v", v), ("delta1", delta1), ("delta2", delta2)] {
            if col.is_none() {
                return Err(CliError::Data(format!(
                    "{file}: missing required column '{name}'"
                )));
            }
        }
    }

    let z: Vec<(String, usize)> = match &spec.covariates {
        Some(names) => {
            let mut z = Vec::with_capacity(names.len());
            for name in names {
                match seen.get(name.as_str()) {
                    Some(&i) if !claimed[i] => {
                        claimed[i] = true;
                        z.push((name.clone(), i));
                    }
                    Some(_) => {
                        return Err(CliError::Data(format!(
                            "{file}: column '{name}' cannot double as a covariate"
                        )))
                    }
                    None => {
                        return Err(CliError::Data(format!(
                            "{file}: covariate column '{name}' not found"
                        )))
                    }
                }
            }
            z
        }
        None => {
            let mut indexed: Vec<(usize, String, usize)> = headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !claimed[*i])
                .filter_map(|(i, h)| z_index(h).map(|k| (k, h.clone(), i)))
                .collect();
            indexed.sort_unstable();
            for (rank, (k, name, _)) in indexed.iter().enumerate() {
                if *k != rank + 1 {
                    let found: Vec<&str> =
                        indexed.iter().map(|(_, n, _)| n.as_str()).take(8).collect();
                    return Err(CliError::Data(format!(
                        "{file}: covariate columns must form a contiguous block z1..zd; \
                         found {} (missing z{})",
                        found.join(", "),
                        rank + 1
                    )));
                }
                let _ = name;
            }
            indexed
                .into_iter()
                .map(|(_, name, i)| {
                    claimed[i] = true;
                    (name, i)
                })
                .collect()
        }
    };
    if z.is_empty() {
        return Err(CliError::Data(format!(
            "{file}: no covariate columns (name them z1..zd or pass --covariates)"
        )));
    }

    for (i, h) in headers.iter().enumerate() {
        if !claimed[i] && !spec.ignore.iter().any(|g| g == h) {
            return Err(CliError::Data(format!(
                "{file}: unexpected column '{h}' (allow-list it with --ignore-columns {h})"
            )));
        }
    }

    Ok(HeaderPlan {
        u,
        v,
        delta1,
        delta2,
        format_version,
        id,
        z,
    })
}

struct RowReader<'a> {
    file: String,
    record: &'a csv::StringRecord,
    row: usize,
}

impl RowReader<'_> {
    fn field(&self, col: usize, name: &str) -> Result<&str, CliError> {
        let raw = self.record.get(col).ok_or_else(|| {
            CliError::Data(format!(
                "{}: row {}: missing value in column '{name}'",
                self.file, self.row
            ))
        })?;
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(CliError::Data(format!(
                "{}: row {}: missing value in column '{name}'",
                self.file, self.row
            )));
        }
        Ok(raw)
    }

    fn float(&self, col: usize, name: &str) -> Result<f64, CliError> {
        let raw = self.field(col, name)?;
        let x: f64 = raw.parse().map_err(|_| {
            CliError::Data(format!(
                "{}: row {}, column '{name}': cannot parse '{raw}' as a number",
                self.file, self.row
            ))
        })?;
        if !x.is_finite() {
            return Err(CliError::Data(format!(
                "{}: row {}, column '{name}': value must be finite, got {raw}",
                self.file, self.row
            )));
        }
        Ok(x)
    }

    fn flag(&self, col: usize, name: &str) -> Result<bool, CliError> {
        match self.field(col, name)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(CliError::Data(format!(
                "{}: row {}, column '{name}': expected 0 or 1, got '{other}'",
                self.file, self.row
            ))),
        }
    }

    fn check_format_version(&self, col: Option<usize>) -> Result<(), CliError> {
        if let Some(col) = col {
            let raw = self.field(col, "format_version")?;
            if raw != CSV_FORMAT_VERSION {
                return Err(CliError::Data(format!(
                    "{}: row {}: unsupported format_version '{raw}' (expected {})",
                    self.file, self.row, CSV_FORMAT_VERSION
                )));
            }
        }
        Ok(())
    }
}

fn open_reader(path: &Path) -> Result<(csv::Reader<std::fs::File>, Vec<String>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok((rdr, headers))
}

/// Read a full interval-censored dataset.
pub fn read_dataset(path: &Path, spec: &ColumnSpec) -> Result<Dataset, CliError> {
    let (mut rdr, headers) = open_reader(path)?;
    let plan = plan_header(path, &headers, spec, true)?;
    let file = path.display().to_string();
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("{file}: row {row}: {e}")))?;
        let r = RowReader {
            file: file.clone(),
            record: &record,
            row,
        };
        r.check_format_version(plan.format_version)?;
        let u = r.float(plan.u.expect("required"), "u")?;
        let v = r.float(plan.v.expect("required"), "v")?;
        let d1 = r.flag(plan.delta1.expect("required"), "delta1")?;
        let d2 = r.flag(plan.delta2.expect("required"), "delta2")?;
        let z = plan
            .z
            .iter()
            .map(|(name, col)| r.float(*col, name))
            .collect::<Result<Vec<f64>, CliError>>()?;
        let sample = IntervalSample::new(u, v, d1, d2, z)
            .map_err(|e| CliError::Data(format!("{file}: row {row}: {e}")))?;
        samples.push(sample);
    }
    Dataset::new(samples).map_err(|e| CliError::Data(format!("{file}: {e}")))
}

/// Read covariate rows for prediction: structural columns are tolerated and
/// skipped, an `id` column (when present) labels the rows, otherwise the
/// 1-based row number does.
pub fn read_covariate_rows(
    path: &Path,
    spec: &ColumnSpec,
) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let (mut rdr, headers) = open_reader(path)?;
    let plan = plan_header(path, &headers, spec, false)?;
    let file = path.display().to_string();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("{file}: row {row}: {e}")))?;
        let r = RowReader {
            file: file.clone(),
            record: &record,
            row,
        };
        r.check_format_version(plan.format_version)?;
        let z = plan
            .z
            .iter()
            .map(|(name, col)| r.float(*col, name))
            .collect::<Result<Vec<f64>, CliError>>()?;
        let id = match plan.id {
            Some(col) => r.field(col, "id")?.to_string(),
            None => row.to_string(),
        };
        ids.push(id);
        rows.push(z);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{file}: no data rows")));
    }
    Ok((ids, rows))
}

/// Shortest-round-trip decimal rendering; reading the field back yields the
/// identical f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Write a dataset in the canonical column order
/// `format_version,u,v,delta1,delta2,z1..zd`.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut header = vec![
        "format_version".to_string(),
        "u".into(),
        "v".into(),
        "delta1".into(),
        "delta2".into(),
    ];
    header.extend((1..=data.d()).map(|j| format!("z{j}")));
    let write_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(write_err)?;
    for s in data.samples() {
        let mut record = vec![
            CSV_FORMAT_VERSION.to_string(),
            fmt_f64(s.u()),
            fmt_f64(s.v()),
            (s.delta1() as u8).to_string(),
            (s.delta2() as u8).to_string(),
        ];
        record.extend(s.covariates().iter().map(|&z| fmt_f64(z)));
        w.write_record(&record).map_err(write_err)?;
    }
    w.flush().map_err(|e| crate::error::io(path, e))
}
