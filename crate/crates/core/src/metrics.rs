//! Contingency tables and the chance-corrected evaluation suite.
//!
//! Every ratio whose denominator is zero is reported as undefined (`None`)
//! rather than silently substituted.

use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use crate::dataio::ActivationProfile;
use crate::error::{config_err, data_err, Result};
use crate::kv::KvDoc;

/// Sample counts with "on" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ContingencyTable {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ContingencyTable {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ContingencyTable { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Real positives.
    pub fn rp(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Real negatives.
    pub fn rn(&self) -> u64 {
        self.fp + self.tn
    }

    /// Predicted positives.
    pub fn pp(&self) -> u64 {
        self.tp + self.fp
    }

    /// Predicted negatives.
    pub fn pn(&self) -> u64 {
        self.fn_ + self.tn
    }

    /// The table with the class labels exchanged.
    pub fn swapped(&self) -> Self {
        ContingencyTable::new(self.tn, self.fp, self.fn_, self.tp)
    }

    pub fn scaled(&self, k: u64) -> Self {
        ContingencyTable::new(self.tp * k, self.fn_ * k, self.fp * k, self.tn * k)
    }

    /// Exact MCC ingredients `(TP·TN − FP·FN, PP·RP·RN·PN)`, so that
    /// `MCC² = num² / den` can be checked in integers.
    pub fn mcc_parts(&self) -> (i128, u128) {
        let num = self.tp as i128 * self.tn as i128 - self.fp as i128 * self.fn_ as i128;
        let den = self.pp() as u128 * self.rp() as u128 * self.rn() as u128 * self.pn() as u128;
        (num, den)
    }

    pub fn add_sample(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (false, true) => self.fn_ += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl Add for ContingencyTable {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ContingencyTable::new(self.tp + o.tp, self.fn_ + o.fn_, self.fp + o.fp, self.tn + o.tn)
    }
}

impl AddAssign for ContingencyTable {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ContingencyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn tabulate_states(predicted: &[bool], truth: &[bool]) -> Result<ContingencyTable> {
    if predicted.len() != truth.len() {
        return Err(data_err!(
            "prediction has {} samples but truth has {}",
            predicted.len(),
            truth.len()
        ));
    }
    let mut t = ContingencyTable::default();
    for (&p, &g) in predicted.iter().zip(truth) {
        t.add_sample(p, g);
    }
    Ok(t)
}

pub fn tabulate(predicted: &ActivationProfile, truth: &ActivationProfile) -> Result<ContingencyTable> {
    tabulate_states(&predicted.states, &truth.states)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub table: ContingencyTable,
    pub accuracy: Option<f64>,
    /// Precision, TP/PP.
    pub tpa: Option<f64>,
    /// Recall, TP/RP.
    pub tpr: Option<f64>,
    /// Inverse precision, TN/PN.
    pub tna: Option<f64>,
    /// Inverse recall, TN/RN.
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
    pub informedness: Option<f64>,
    pub markedness: Option<f64>,
    pub mcc: Option<f64>,
    /// Product of informedness and markedness.
    pub bxm: Option<f64>,
    /// Negative-class prevalence RN/N.
    pub rn: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_report(t: ContingencyTable) -> MetricReport {
    let n = t.total();
    let tpa = ratio(t.tp, t.pp());
    let tpr = ratio(t.tp, t.rp());
    let tna = ratio(t.tn, t.pn());
    let tnr = ratio(t.tn, t.rn());
    let informedness = tpr.zip(tnr).map(|(a, b)| a + b - 1.0);
    let markedness = tpa.zip(tna).map(|(a, b)| a + b - 1.0);
    let (num, den) = t.mcc_parts();
    let mcc = (den > 0).then(|| num as f64 / (den as f64).sqrt());
    MetricReport {
        table: t,
        accuracy: ratio(t.tp + t.tn, n),
        tpa,
        tpr,
        tna,
        tnr,
        f1: ratio(2 * t.tp, 2 * t.tp + t.fp + t.fn_),
        informedness,
        markedness,
        mcc,
        bxm: informedness.zip(markedness).map(|(b, m)| b * m),
        rn: ratio(t.rn(), n),
    }
}

/// Scores of the two constant predictors on data with negative prevalence `rn`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrivialAudit {
    pub always_negative: MetricReport,
    pub always_positive: MetricReport,
}

/// Builds an `n`-sample truth with `round(rn·n)` negatives and scores both
/// constant predictors against it.
pub fn trivial_classifier_audit(rn: f64, n: u64) -> Result<TrivialAudit> {
    if !(rn > 0.0 && rn < 1.0) {
        return Err(config_err!("negative prevalence must lie in (0, 1), got {rn}"));
    }
    let neg = (rn * n as f64).round() as u64;
    if neg == 0 || neg >= n {
        return Err(config_err!("{n} samples cannot represent prevalence {rn}"));
    }
    let pos = n - neg;
    Ok(TrivialAudit {
        always_negative: compute_report(ContingencyTable::new(0, pos, 0, neg)),
        always_positive: compute_report(ContingencyTable::new(pos, 0, neg, 0)),
    })
}

/// Report columns, in output order.
pub const REPORT_COLUMNS: [&str; 15] = [
    "rn", "TPA", "TPR", "B", "M", "f1", "MCC", "accuracy", "TNA", "TNR", "BxM", "TP", "FN", "FP", "TN",
];

impl MetricReport {
    fn values(&self) -> [String; 15] {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let t = &self.table;
        [
            f(self.rn),
            f(self.tpa),
            f(self.tpr),
            f(self.informedness),
            f(self.markedness),
            f(self.f1),
            f(self.mcc),
            f(self.accuracy),
            f(self.tna),
            f(self.tnr),
            f(self.bxm),
            t.tp.to_string(),
            t.fn_.to_string(),
            t.fp.to_string(),
            t.tn.to_string(),
        ]
    }
}

/// One header line then one row per labelled report; undefined values are `NA`.
pub fn report_csv(rows: &[(&str, &MetricReport)]) -> String {
    let mut out = format!("label,{}\n", REPORT_COLUMNS.join(","));
    for (label, r) in rows {
        let _ = writeln!(out, "{label},{}", r.values().join(","));
    }
    out
}

/// Key-value form, one section per labelled report.
pub fn report_kv(rows: &[(&str, &MetricReport)]) -> KvDoc {
    let mut doc = KvDoc::new();
    for (label, r) in rows {
        let s = doc.section_mut(&format!("report.{label}"));
        for (k, v) in REPORT_COLUMNS.iter().zip(r.values()) {
            s.set(k, v);
        }
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-6)
    }

    #[test]
    fn hand_counted_table() {
        let truth = [true, true, true, false, false, false, false, false, false, false];
        let pred = [true, true, false, true, false, false, false, false, false, false];
        let t = tabulate_states(&pred, &truth).unwrap();
        assert_eq!(t, ContingencyTable::new(2, 1, 1, 6));
        let r = compute_report(t);
        assert!(close(r.tpa, 2.0 / 3.0) && close(r.tpr, 2.0 / 3.0));
        assert!(close(r.tna, 6.0 / 7.0) && close(r.tnr, 6.0 / 7.0));
        assert!(close(r.informedness, 0.523810) && close(r.markedness, 0.523810));
        assert!(close(r.f1, 0.666667) && close(r.mcc, 11.0 / 21.0));
    }

    #[test]
    fn identical_and_inverted_predictions() {
        let truth: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let t = tabulate_states(&truth, &truth).unwrap();
        assert_eq!(t, ContingencyTable::new(4, 0, 0, 6));
        let r = compute_report(t);
        for v in [r.accuracy, r.f1, r.informedness, r.markedness, r.mcc] {
            assert_eq!(v, Some(1.0));
        }
        let inv: Vec<bool> = truth.iter().map(|s| !s).collect();
        let t = tabulate_states(&inv, &truth).unwrap();
        assert_eq!((t.tp, t.tn), (0, 0));
        assert_eq!(compute_report(t).mcc, Some(-1.0));
        assert!(tabulate_states(&inv[..3], &truth).is_err());
    }

    #[test]
    fn trivial_predictors() {
        let a = trivial_classifier_audit(0.99, 10_000).unwrap();
        assert!((a.always_negative.accuracy.unwrap() - 0.99).abs() <= 1e-12);
        assert_eq!(a.always_negative.informedness, Some(0.0));
        assert_eq!(a.always_negative.mcc, None);
        let b = trivial_classifier_audit(0.01, 10_000).unwrap();
        assert!(close(b.always_positive.f1, 1.98 / 1.99));
        assert_eq!(b.always_positive.informedness, Some(0.0));
        let c = trivial_classifier_audit(0.5, 10).unwrap();
        assert_eq!(c.always_positive.accuracy, Some(0.5));
        assert_eq!(c.always_negative.accuracy, Some(0.5));
        assert!(trivial_classifier_audit(1.0, 10).is_err());
    }

    #[test]
    fn merge_by_addition() {
        let a = ContingencyTable::new(1, 2, 3, 4);
        let b = ContingencyTable::new(5, 6, 7, 8);
        assert_eq!([a, b].into_iter().sum::<ContingencyTable>(), ContingencyTable::new(6, 8, 10, 12));
    }

    #[test]
    fn report_columns_and_na() {
        let r = compute_report(ContingencyTable::new(0, 0, 0, 5));
        let text = report_csv(&[("FR", &r)]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label,rn,TPA,TPR,B,M,f1,MCC,accuracy,TNA,TNR,BxM,TP,FN,FP,TN"
        );
        assert_eq!(lines.next().unwrap(), "FR,1.000000,NA,NA,NA,NA,NA,NA,1.000000,1.000000,1.000000,NA,0,0,0,5");
        let doc = report_kv(&[("FR", &r)]);
        assert_eq!(doc.section("report.FR").unwrap().get("MCC"), Some("NA"));
    }
}
