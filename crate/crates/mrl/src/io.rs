//! On-disk formats: dataset CSV, chain JSON-lines, curve and report CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mrl_core::cpo::CpoReport;
use mrl_core::functionals::CurveSummary;
use mrl_core::properties::PropertyRow;
use mrl_core::{ChainMeta, Dataset, Group, Observation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CHAIN_FORMAT: &str = "mrl-chain/1";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

/// Shortest round-tripping decimal form.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

// ---------------------------------------------------------------------------
// Dataset CSV

#[derive(Debug, Deserialize)]
struct RawRow {
    time: String,
    status: String,
    #[serde(default)]
    covariate: Option<String>,
    #[serde(default)]
    group: Option<String>,
}

fn parse_group(s: &str) -> Option<Group> {
    match s {
        "C" | "c" | "0" => Some(Group::C),
        "T" | "t" | "1" => Some(Group::T),
        _ => None,
    }
}

/// Parse dataset CSV text. Row numbers in errors are zero-based data rows.
pub fn parse_dataset(text: &str, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err(origin))?.clone();
    for required in ["time", "status"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::format(origin, format!("missing `{required}` column")));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let raw = rec.map_err(|e| CliError::format(origin, format!("row {i}: {e}")))?;
        let bad = |what: &str, v: &str| CliError::format(origin, format!("row {i}: invalid {what} `{v}`"));
        let time: f64 = raw.time.parse().map_err(|_| bad("time", &raw.time))?;
        let censored = match raw.status.as_str() {
            "0" => false,
            "1" => true,
            s => return Err(bad("status", s)),
        };
        let covariate = match raw.covariate.as_deref() {
            None | Some("") => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| bad("covariate", s))?),
        };
        let group = match raw.group.as_deref() {
            None | Some("") => None,
            Some(s) => Some(parse_group(s).ok_or_else(|| bad("group", s))?),
        };
        rows.push(Observation { time, censored, covariate, group });
    }
    Ok(mrl_core::model::validate_dataset(rows)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(&text, path)
}

/// Dataset CSV; covariate and group columns appear only when present.
pub fn dataset_csv(data: &Dataset) -> String {
    let with_group = data.rows.iter().any(|o| o.group.is_some());
    let mut out = String::from("time,status");
    if data.has_covariate {
        out.push_str(",covariate");
    }
    if with_group {
        out.push_str(",group");
    }
    out.push('\n');
    for o in &data.rows {
        out.push_str(&fmt_f64(o.time));
        out.push_str(if o.censored { ",1" } else { ",0" });
        if data.has_covariate {
            out.push(',');
            out.push_str(&o.covariate.map(fmt_f64).unwrap_or_default());
        }
        if with_group {
            out.push(',');
            out.push_str(o.group.map_or("", Group::label));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(dataset_csv(data).as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// SHA-256 over the exact bit patterns of every row.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(b"mrl-dataset/1\n");
    for o in &data.rows {
        h.update(o.time.to_bits().to_le_bytes());
        h.update([o.censored as u8]);
        match o.covariate {
            Some(x) => {
                h.update([1]);
                h.update(x.to_bits().to_le_bytes());
            }
            None => h.update([0]),
        }
        h.update([o.group.map_or(0, |g| g.index() as u8 + 1)]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Chain JSON-lines

/// First line of a chain file. `meta` describes the merged chain; `chains`
/// holds each constituent run in merge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHeader {
    pub format: String,
    pub meta: ChainMeta,
    pub chains: Vec<ChainMeta>,
    pub draws: usize,
}

pub fn write_chain<D: Serialize>(path: &Path, header: &ChainHeader, draws: &[D]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    let json = |e: serde_json::Error| CliError::format(path, e);
    serde_json::to_writer(&mut w, header).map_err(json)?;
    w.write_all(b"\n").map_err(io)?;
    for d in draws {
        serde_json::to_writer(&mut w, d).map_err(json)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_chain_header(path: &Path) -> Result<ChainHeader> {
    let mut line = String::new();
    open(path)?.read_line(&mut line).map_err(|e| CliError::io(path, e))?;
    let header: ChainHeader =
        serde_json::from_str(&line).map_err(|e| CliError::format(path, format!("bad chain header: {e}")))?;
    if header.format != CHAIN_FORMAT {
        return Err(CliError::format(path, format!("unsupported chain format `{}`", header.format)));
    }
    Ok(header)
}

pub fn read_chain<D: DeserializeOwned>(path: &Path) -> Result<(ChainHeader, Vec<D>)> {
    let header = read_chain_header(path)?;
    let mut draws = Vec::with_capacity(header.draws);
    for (i, line) in open(path)?.lines().enumerate().skip(1) {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        draws.push(
            serde_json::from_str(&line).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1)))?,
        );
    }
    if draws.len() != header.draws {
        return Err(CliError::format(
            path,
            format!("header announces {} draws, file holds {}", header.draws, draws.len()),
        ));
    }
    Ok((header, draws))
}

// ---------------------------------------------------------------------------
// Curves

/// Column name for a quantile level, e.g. `q_0.025`.
pub fn quantile_column(q: f64) -> String {
    format!("q_{}", fmt_f64(q))
}

/// File stem for a curve: kind, then group and covariate when present.
pub fn curve_stem(c: &CurveSummary) -> String {
    let mut s = c.kind.name().to_string();
    if let Some(g) = c.group {
        s.push('_');
        s.push_str(g.label());
    }
    if let Some(x) = c.covariate {
        s.push_str("_x");
        s.push_str(&fmt_f64(x));
    }
    s
}

/// Writes `<stem>.csv` and, for truncated curves, `<stem>.note.txt`.
pub fn write_curve(dir: &Path, c: &CurveSummary) -> Result<Vec<PathBuf>> {
    let stem = curve_stem(c);
    let path = dir.join(format!("{stem}.csv"));
    let mut w = csv_writer(&path)?;
    let mut header = vec!["grid".to_string(), "mean".to_string()];
    header.extend(c.quantiles.iter().map(|(q, _)| quantile_column(*q)));
    w.write_record(&header).map_err(csv_err(&path))?;
    for k in 0..c.grid.len() {
        let mut rec = vec![fmt_f64(c.grid[k]), fmt_f64(c.mean[k])];
        rec.extend(c.quantiles.iter().map(|(_, v)| fmt_f64(v[k])));
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let mut written = vec![path];
    if let Some(t) = c.undefined_from {
        let note = dir.join(format!("{stem}.note.txt"));
        let mut f = create(&note)?;
        writeln!(
            f,
            "{} truncated at grid value {}: the mixture survival of at least one draw fell below {:e}, \
             so the functional is undefined from there on.",
            c.kind.name(),
            fmt_f64(t),
            mrl_core::functionals::SURVIVAL_FLOOR
        )
        .map_err(|e| CliError::io(&note, e))?;
        f.flush().map_err(|e| CliError::io(&note, e))?;
        written.push(note);
    }
    Ok(written)
}

/// Parsed curve CSV: grid, mean, and `(level, values)` per quantile column.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

pub fn read_curve(path: &Path) -> Result<CurveTable> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let levels: Vec<f64> = headers
        .iter()
        .skip(2)
        .map(|h| h.strip_prefix("q_").and_then(|q| q.parse().ok()).ok_or_else(|| CliError::format(path, h)))
        .collect::<Result<_>>()?;
    let mut t = CurveTable { grid: Vec::new(), mean: Vec::new(), quantiles: levels.iter().map(|&q| (q, Vec::new())).collect() };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let v: Vec<f64> = rec.iter().map(|s| s.parse().map_err(|_| CliError::format(path, s))).collect::<Result<_>>()?;
        t.grid.push(v[0]);
        t.mean.push(v[1]);
        for (k, (_, col)) in t.quantiles.iter_mut().enumerate() {
            col.push(v[2 + k]);
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Reports

pub fn write_cpo(path: &Path, r: &CpoReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["group", "row", "time", "status", "cpo", "log_cpo", "unstable"]).map_err(csv_err(path))?;
    for row in &r.rows {
        w.write_record([
            row.group.map_or("", Group::label).to_string(),
            row.row.to_string(),
            fmt_f64(row.time),
            (row.censored as u8).to_string(),
            fmt_f64(row.cpo),
            fmt_f64(row.log_cpo),
            row.unstable.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::format(path, e))
}

pub fn write_properties(path: &Path, rows: &[PropertyRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["formula", "alpha", "b", "analytic", "mc_estimate", "mc_se", "pass"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.formula.clone(),
            fmt_f64(r.alpha),
            fmt_f64(r.b),
            fmt_f64(r.analytic),
            fmt_f64(r.mc_estimate),
            fmt_f64(r.mc_se),
            if r.pass { "pass" } else { "fail" }.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One row of the truth-overlay CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub functional: String,
    pub group: Option<Group>,
    pub covariate: Option<f64>,
    pub grid: f64,
    pub value: Option<f64>,
}

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["functional", "group", "covariate", "grid", "value"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.functional.clone(),
            r.group.map_or("", Group::label).to_string(),
            r.covariate.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.grid),
            r.value.map(fmt_f64).unwrap_or_default(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|_| CliError::format(path, s)) }
        };
        out.push(TruthRow {
            functional: rec[0].to_string(),
            group: parse_group(&rec[1]),
            covariate: num(&rec[2])?,
            grid: num(&rec[3])?.unwrap_or(f64::NAN),
            value: num(&rec[4])?,
        });
    }
    Ok(out)
}
