//! Power-trace and profile text files.
//!
//! Power traces are rows of `unix_timestamp watts`, separated by commas or
//! whitespace, optionally preceded by one header line; `#` lines are
//! comments. Profiles are comma-separated with a `timestamp,state` header
//! (extra columns, such as `posterior`, are allowed and ignored on read).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ActivationProfile, SignalSeries};
use crate::error::{config_err, data_err, Error, Result};

/// How to interpret an ingested power trace.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    /// Nominal sample period in seconds.
    pub period: f64,
    /// Longest gap (seconds of missing data) that is forward-filled; longer
    /// gaps split the trace into independent series.
    pub max_gap: f64,
    /// Unparseable rows tolerated before ingestion fails.
    pub max_bad_rows: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            period: 1.0,
            max_gap: 180.0,
            max_bad_rows: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub rows: usize,
    pub bad_rows: usize,
    /// Gaps closed by forward filling.
    pub gaps_filled: usize,
    pub samples_filled: usize,
    /// Gaps too long to fill, each starting a new series.
    pub splits: usize,
    /// Seconds from the first to the last row.
    pub span: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub series: Vec<SignalSeries>,
    pub report: IngestReport,
}

impl Ingested {
    /// The longest contiguous piece.
    pub fn longest(&self) -> Option<&SignalSeries> {
        self.series.iter().max_by_key(|s| s.len())
    }
}

fn parse_row(line: &str) -> Option<(f64, f64)> {
    let mut fields = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty());
    let t = fields.next()?.parse::<f64>().ok()?;
    let w = fields.next()?.parse::<f64>().ok()?;
    (t.is_finite() && w.is_finite()).then_some((t, w))
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text, schema).map_err(|e| match e {
        Error::Data(msg) => data_err!("{}: {msg}", path.display()),
        other => other,
    })
}

pub(crate) fn ingest_str(text: &str, schema: &CsvSchema) -> Result<Ingested> {
    if !(schema.period > 0.0) {
        return Err(config_err!("schema period must be positive"));
    }
    let mut report = IngestReport::default();
    let mut series: Vec<SignalSeries> = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut start = 0.0;
    let mut first_t: Option<f64> = None;
    let mut last: Option<(f64, f64, usize)> = None;
    let mut seen_data_or_header = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((t, w)) = parse_row(line) else {
            let header = !seen_data_or_header && line.chars().any(|c| c.is_ascii_alphabetic());
            seen_data_or_header = true;
            if !header {
                report.bad_rows += 1;
                if report.bad_rows > schema.max_bad_rows {
                    return Err(data_err!(
                        "row {}: cannot parse `{line}` ({} bad rows, {} tolerated)",
                        lineno + 1,
                        report.bad_rows,
                        schema.max_bad_rows
                    ));
                }
            }
            continue;
        };
        seen_data_or_header = true;
        report.rows += 1;
        match last {
            None => {
                start = t;
                first_t = Some(t);
                current.push(w);
            }
            Some((pt, pw, prow)) => {
                if t <= pt {
                    return Err(data_err!(
                        "row {}: timestamp {t} does not increase (previous {pt} at row {prow})",
                        lineno + 1
                    ));
                }
                let steps = ((t - pt) / schema.period).round().max(1.0) as usize;
                let missing = steps - 1;
                if missing == 0 {
                    current.push(w);
                } else if missing as f64 * schema.period <= schema.max_gap {
                    report.gaps_filled += 1;
                    report.samples_filled += missing;
                    current.extend(std::iter::repeat_n(pw, missing));
                    current.push(w);
                } else {
                    report.splits += 1;
                    series.push(SignalSeries::new(std::mem::take(&mut current), schema.period, start)?);
                    start = t;
                    current.push(w);
                }
            }
        }
        last = Some((t, w, lineno + 1));
    }
    if let (Some(t0), Some((t1, _, _))) = (first_t, last) {
        report.span = t1 - t0;
    }
    if !current.is_empty() {
        series.push(SignalSeries::new(current, schema.period, start)?);
    }
    if series.is_empty() {
        return Err(data_err!("no samples"));
    }
    Ok(Ingested { series, report })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `timestamp,watts` rows under a header.
pub fn write_series_csv(path: &Path, s: &SignalSeries) -> Result<()> {
    let mut text = String::with_capacity(s.len() * 20);
    text.push_str("timestamp,watts\n");
    for (i, v) in s.samples.iter().enumerate() {
        let _ = writeln!(text, "{},{}", s.timestamp(i), v);
    }
    write_text(path, &text)
}

/// Writes `timestamp,state` rows, or `timestamp,posterior,state` when
/// posteriors are given. Several pieces (e.g. split by long gaps) are
/// written one after another; either all or none carry posteriors.
pub fn write_profile_csv(path: &Path, parts: &[(&ActivationProfile, Option<&[f64]>)]) -> Result<()> {
    let with_post = parts.first().is_some_and(|(_, g)| g.is_some());
    if parts.iter().any(|(_, g)| g.is_some() != with_post) {
        return Err(data_err!("either every profile piece has posteriors or none does"));
    }
    let total: usize = parts.iter().map(|(p, _)| p.len()).sum();
    let mut text = String::with_capacity(total * 24);
    text.push_str(if with_post { "timestamp,posterior,state\n" } else { "timestamp,state\n" });
    for (p, post) in parts {
        match post {
            Some(post) => {
                if post.len() != p.len() {
                    return Err(data_err!("posterior and profile lengths differ"));
                }
                for (i, (&s, g)) in p.states.iter().zip(post.iter()).enumerate() {
                    let _ = writeln!(text, "{},{},{}", p.timestamp(i), g, s as u8);
                }
            }
            None => {
                for (i, &s) in p.states.iter().enumerate() {
                    let _ = writeln!(text, "{},{}", p.timestamp(i), s as u8);
                }
            }
        }
    }
    write_text(path, &text)
}

/// Reads `(timestamp, state)` pairs from a profile file.
pub fn read_profile_csv(path: &Path) -> Result<Vec<(f64, bool)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err!("{}: {e}", path.display()))?;
    let headers = rdr
        .headers()
        .map_err(|e| data_err!("{}: {e}", path.display()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err!("{}: missing `{name}` column", path.display()))
    };
    let (tc, sc) = (col("timestamp")?, col("state")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err!("{}: {e}", path.display()))?;
        let t: f64 = rec[tc]
            .parse()
            .map_err(|_| data_err!("{}: row {}: bad timestamp", path.display(), i + 2))?;
        let s = match &rec[sc] {
            "0" => false,
            "1" => true,
            other => {
                return Err(data_err!(
                    "{}: row {}: state must be 0 or 1, got `{other}`",
                    path.display(),
                    i + 2
                ))
            }
        };
        out.push((t, s));
    }
    Ok(out)
}
