//! CSV readers for experimental records, scored records and finite populations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use elig_core::simlab::PopulationRow;
use elig_core::{CellId, Covariates, Propensity, RawRecord, ScoredRecord};

use crate::config::PropensityConfig;
use crate::error::{CliError, Result};

/// Records plus the confounder cells they were grouped into.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<RawRecord>,
    /// Cell key (joined `v_*` values) for each `CellId`, in id order.
    pub cells: Vec<String>,
}

impl Dataset {
    /// Known propensities for each cell from the config.
    pub fn propensity(&self, cfg: &PropensityConfig) -> Result<Propensity> {
        if cfg.cells.is_empty() {
            return cfg.default.map(Propensity::Constant).ok_or_else(|| {
                CliError::Config("ipw scoring needs propensity.default or propensity.cells".into())
            });
        }
        for key in cfg.cells.keys() {
            if !self.cells.contains(key) {
                return Err(CliError::Config(format!(
                    "propensity.cells: no records in cell {key:?}"
                )));
            }
        }
        let mut map = BTreeMap::new();
        for (id, key) in self.cells.iter().enumerate() {
            let p = cfg.cells.get(key).copied().or(cfg.default).ok_or_else(|| {
                CliError::Config(format!("propensity.cells: no value for cell {key:?}"))
            })?;
            map.insert(CellId(id as u32), p);
        }
        Ok(Propensity::ByCell(map))
    }
}

/// Separator between confounder values inside a cell key.
pub const CELL_SEPARATOR: char = '|';

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn new(rdr: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Self> {
        let headers = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        Ok(Self { headers })
    }

    fn find(&self, name: &str, path: &Path) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Data(format!("{}: missing column `{name}`", path.display()))
        })
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Parses a finite decimal number with `.` as the only separator.
pub fn parse_number(field: &str) -> std::result::Result<f64, String> {
    let s = field.trim();
    if s.is_empty() {
        return Err("missing value".into());
    }
    let ok = s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if !ok {
        return Err(format!("not a number: {s:?}"));
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("not a number: {s:?}")),
    }
}

fn parse_flag(field: &str) -> std::result::Result<bool, String> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        "" => Err("missing value".into()),
        s => Err(format!("expected 0 or 1, got {s:?}")),
    }
}

fn parse_group(field: &str) -> std::result::Result<usize, String> {
    let s = field.trim();
    if s.is_empty() {
        return Err("missing value".into());
    }
    s.parse::<usize>()
        .map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
}

fn row_error(path: &Path, line: u64, column: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{} line {line}, column `{column}`: {msg}", path.display()))
}

fn read_rows(path: &Path) -> Result<(Columns, Vec<(u64, csv::StringRecord)>)> {
    let mut rdr = open(path)?;
    let cols = Columns::new(&mut rdr, path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok((cols, rows))
}

/// Reads experimental records with columns `y, c, m, d, income, group` and any
/// `v_*` confounders. Group values at or above `groups - 1` fall into the top
/// bucket.
pub fn read_records(path: &Path, groups: usize) -> Result<Dataset> {
    let (cols, rows) = read_rows(path)?;
    let idx: Vec<usize> = ["y", "c", "m", "d", "income", "group"]
        .iter()
        .map(|c| cols.find(c, path))
        .collect::<Result<_>>()?;
    let v_cols: Vec<usize> = (0..cols.headers.len())
        .filter(|&i| cols.headers[i].starts_with("v_"))
        .collect();

    let key = |rec: &csv::StringRecord| -> String {
        let parts: Vec<&str> = v_cols.iter().map(|&i| rec.get(i).unwrap_or("")).collect();
        parts.join(&CELL_SEPARATOR.to_string())
    };
    let cells: Vec<String> = rows
        .iter()
        .map(|(_, r)| key(r))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut records = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let field = |j: usize| rec.get(idx[j]).unwrap_or("");
        let num = |j: usize, name: &str| parse_number(field(j)).map_err(|e| row_error(path, *line, name, e));
        let flag = |j: usize, name: &str| parse_flag(field(j)).map_err(|e| row_error(path, *line, name, e));
        for &i in &v_cols {
            if rec.get(i).map_or(true, |s| s.trim().is_empty()) {
                return Err(row_error(path, *line, &cols.headers[i], "missing value"));
            }
        }
        let y = num(0, "y")?;
        let c = num(1, "c")?;
        let m = flag(2, "m")?;
        let d = flag(3, "d")?;
        let income = num(4, "income")?;
        let group = parse_group(field(5)).map_err(|e| row_error(path, *line, "group", e))?;
        let x = Covariates::new(income, group.min(groups - 1))
            .map_err(|e| row_error(path, *line, "income", e))?;
        let cell = cells.binary_search(&key(rec)).expect("cell key collected above");
        let r = RawRecord::new(y, c, m, d, x, CellId(cell as u32))
            .map_err(|e| CliError::Data(format!("{} line {line}: {e}", path.display())))?;
        records.push(r);
    }
    Ok(Dataset { records, cells })
}

/// Reads scored records with columns `gamma_star, r_star, income, group`.
pub fn read_scores(path: &Path, groups: usize) -> Result<Vec<ScoredRecord>> {
    let (cols, rows) = read_rows(path)?;
    let idx: Vec<usize> = ["gamma_star", "r_star", "income", "group"]
        .iter()
        .map(|c| cols.find(c, path))
        .collect::<Result<_>>()?;
    rows.iter()
        .map(|(line, rec)| {
            let field = |j: usize| rec.get(idx[j]).unwrap_or("");
            let num = |j: usize, name: &str| parse_number(field(j)).map_err(|e| row_error(path, *line, name, e));
            let group = parse_group(field(3)).map_err(|e| row_error(path, *line, "group", e))?;
            if group >= groups {
                return Err(row_error(path, *line, "group", format!("{group} outside the grid's {groups} groups")));
            }
            let income = num(2, "income")?;
            Ok(ScoredRecord {
                gamma_star: num(0, "gamma_star")?,
                r_star: num(1, "r_star")?,
                x: Covariates::new(income, group).map_err(|e| row_error(path, *line, "income", e))?,
            })
        })
        .collect()
}

/// Reads a finite population with columns `weight, gamma, r, income, group`.
pub fn read_population(path: &Path) -> Result<Vec<PopulationRow>> {
    let (cols, rows) = read_rows(path)?;
    let idx: Vec<usize> = ["weight", "gamma", "r", "income", "group"]
        .iter()
        .map(|c| cols.find(c, path))
        .collect::<Result<_>>()?;
    rows.iter()
        .map(|(line, rec)| {
            let field = |j: usize| rec.get(idx[j]).unwrap_or("");
            let num = |j: usize, name: &str| parse_number(field(j)).map_err(|e| row_error(path, *line, name, e));
            Ok(PopulationRow {
                weight: num(0, "weight")?,
                gamma: num(1, "gamma")?,
                r: num(2, "r")?,
                income: num(3, "income")?,
                group: parse_group(field(4)).map_err(|e| row_error(path, *line, "group", e))?,
            })
        })
        .collect()
}
