//! Threshold-and-hold estimation of activation profiles from sub-metered power.

use std::path::Path;

use super::{ActivationProfile, SignalSeries};
use crate::error::{config_err, Error, Result};

/// Load-dependent thresholds for ground-truth estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadParams {
    pub code: String,
    pub name: String,
    /// Watts at or above which a sample counts toward switching on.
    pub p_on: f64,
    /// Watts at or below which a sample counts toward switching off.
    pub p_off: f64,
    /// Seconds the on-condition must hold.
    pub n_on: f64,
    /// Seconds the off-condition must hold.
    pub n_off: f64,
}

impl LoadParams {
    pub fn new(code: &str, p_on: f64, p_off: f64, n_on: f64, n_off: f64) -> Result<Self> {
        let p = LoadParams {
            code: code.to_string(),
            name: display_name(code).unwrap_or(code).to_string(),
            p_on,
            p_off,
            n_on,
            n_off,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_off >= 0.0 && self.p_on >= self.p_off) {
            return Err(config_err!(
                "load {}: need P_on >= P_off >= 0, got P_on={} P_off={}",
                self.code,
                self.p_on,
                self.p_off
            ));
        }
        if !(self.n_on > 0.0 && self.n_off > 0.0) {
            return Err(config_err!("load {}: hold durations must be positive", self.code));
        }
        Ok(())
    }

    /// Hold durations in whole samples at the given period: rounded to the
    /// nearest sample, never below one. A duration shorter than one sample
    /// cannot be represented and is rejected.
    pub fn hold_samples(&self, period: f64) -> Result<(usize, usize)> {
        let conv = |secs: f64, which: &str| {
            if secs < period {
                return Err(config_err!(
                    "load {}: {which} duration {secs} s is shorter than one {period} s sample",
                    self.code
                ));
            }
            Ok(((secs / period).round() as usize).max(1))
        };
        Ok((conv(self.n_on, "on")?, conv(self.n_off, "off")?))
    }
}

fn display_name(code: &str) -> Option<&'static str> {
    Some(match code {
        "FR" => "fridge",
        "LC" => "lights",
        "DW" => "dishwasher",
        "WM" => "washing machine",
        "SP" => "solar pump",
        "TV" => "television",
        "BL" => "boiler",
        "KT" => "kettle",
        "MC" => "microwave",
        "TS" => "toaster",
        _ => return None,
    })
}

/// The shipped per-load thresholds (watts and seconds).
pub fn table1_loads() -> Vec<LoadParams> {
    [
        ("FR", 5.0, 60.0, 60.0),
        ("LC", 10.0, 60.0, 60.0),
        ("DW", 10.0, 1800.0, 300.0),
        ("WM", 20.0, 1800.0, 300.0),
        ("SP", 20.0, 60.0, 60.0),
        ("TV", 5.0, 180.0, 180.0),
        ("BL", 25.0, 300.0, 300.0),
        ("KT", 1000.0, 20.0, 10.0),
        ("MC", 50.0, 10.0, 10.0),
        ("TS", 300.0, 10.0, 3.0),
    ]
    .into_iter()
    .map(|(code, p, on, off)| LoadParams::new(code, p, p, on, off).expect("valid table"))
    .collect()
}

/// Estimates the on/off profile of one load.
///
/// Sample `n` is on if every sample in `[n, n + N_on)` is `>= P_on`, off if
/// every sample in `[n, n + N_off)` is `<= P_off`, and otherwise keeps the
/// previous state (off before the first sample). The on-condition is tested
/// first. Windows running past the end of the series certify nothing.
pub fn extract_activation_profile(x: &SignalSeries, p: &LoadParams) -> Result<ActivationProfile> {
    p.validate()?;
    let (n_on, n_off) = p.hold_samples(x.period)?;
    let n = x.len();
    // run lengths of qualifying samples starting at each index
    let mut run_on = vec![0usize; n + 1];
    let mut run_off = vec![0usize; n + 1];
    for i in (0..n).rev() {
        let v = x.samples[i];
        run_on[i] = if v >= p.p_on { run_on[i + 1] + 1 } else { 0 };
        run_off[i] = if v <= p.p_off { run_off[i + 1] + 1 } else { 0 };
    }
    let mut states = Vec::with_capacity(n);
    let mut prev = false;
    for i in 0..n {
        let s = if run_on[i] >= n_on {
            true
        } else if run_off[i] >= n_off {
            false
        } else {
            prev
        };
        states.push(s);
        prev = s;
    }
    Ok(ActivationProfile::new(states, x.period, x.start, p.code.clone()))
}

/// Reads a load-parameter file: comma-separated records
/// `code,p_on_w,p_off_w,n_on_s,n_off_s` under that header; `#` starts a comment.
pub fn read_load_params(path: &Path) -> Result<Vec<LoadParams>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["code", "p_on_w", "p_off_w", "n_on_s", "n_off_s"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(config_err!(
            "{}: header must be `{}`",
            path.display(),
            expected.join(",")
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| {
                config_err!("{}: record {}: bad number `{}`", path.display(), i + 1, &rec[k])
            })
        };
        out.push(LoadParams::new(&rec[0], num(1)?, num(2)?, num(3)?, num(4)?)?);
    }
    Ok(out)
}

pub fn write_load_params(path: &Path, loads: &[LoadParams]) -> Result<()> {
    let mut text = String::from("code,p_on_w,p_off_w,n_on_s,n_off_s\n");
    for l in loads {
        text.push_str(&format!("{},{},{},{},{}\n", l.code, l.p_on, l.p_off, l.n_on, l.n_off));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    config_err!("{}: {e}", path.display())
}
