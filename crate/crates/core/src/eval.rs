//! Confusion-matrix metrics with undecided-frame exclusion, and the
//! thresholding-versus-SPRT comparison report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Label;
use crate::sprt::{Decision, DecisionLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub excluded_undecided: usize,
}

impl ConfusionMatrix {
    pub fn decided(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tallies decisions against truth; anomaly is the positive class and
/// undecided frames are counted separately.
pub fn confusion(decisions: &[Decision], truth: &[Label]) -> Result<ConfusionMatrix> {
    if decisions.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "{} decisions but {} truth labels",
            decisions.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (d, y) in decisions.iter().zip(truth) {
        match (d, y.is_anomaly()) {
            (Decision::Undecided, _) => cm.excluded_undecided += 1,
            (Decision::Anomaly, true) => cm.tp += 1,
            (Decision::Anomaly, false) => cm.fp += 1,
            (Decision::Normal, false) => cm.tn += 1,
            (Decision::Normal, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let decided = cm.decided();
    if decided == 0 {
        return Err(Error::Evaluation("no decided frames".into()));
    }
    let mut degenerate = false;
    let accuracy = (cm.tp + cm.tn) as f64 / decided as f64;
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut degenerate);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut degenerate);
    let fpr = ratio(cm.fp, cm.fp + cm.tn, &mut degenerate);
    let f1 = f1_score(precision, recall).unwrap_or_else(|| {
        degenerate = true;
        0.0
    });
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        fpr,
        f1,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
}

/// Side-by-side metrics for per-frame thresholding and SPRT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Second row minus first row.
    pub deltas: Deltas,
}

pub const CSV_HEADER: &str =
    "method,accuracy,precision,recall,fpr,f1,decided_frames,undecided_frames";

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                m.accuracy,
                m.precision,
                m.recall,
                m.fpr,
                m.f1,
                r.confusion.decided(),
                r.confusion.excluded_undecided
            ));
        }
        out
    }

    /// Aligned percentage table, two decimals.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>9}  {:>12}  {:>6}  {:>8}  {:>7}  {:>9}\n",
            "Method", "Accuracy", "Precision", "Recall (TPR)", "FPR", "F1-Score", "Decided", "Undecided"
        );
        let pct = |x: f64| format!("{:.2}", 100.0 * x);
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>9}  {:>12}  {:>6}  {:>8}  {:>7}  {:>9}\n",
                r.method,
                pct(m.accuracy),
                pct(m.precision),
                pct(m.recall),
                pct(m.fpr),
                pct(m.f1),
                r.confusion.decided(),
                r.confusion.excluded_undecided
            ));
        }
        let d = &self.deltas;
        out.push_str(&format!(
            "{:<width$}  {:>8}  {:>9}  {:>12}  {:>6}  {:>8}\n",
            "delta",
            pct(d.accuracy),
            pct(d.precision),
            pct(d.recall),
            pct(d.fpr),
            pct(d.f1)
        ));
        out
    }
}

/// Compares a thresholding log against an SPRT log over the same frames.
pub fn compare(threshold_log: &DecisionLog, sprt_log: &DecisionLog, truth: &[Label]) -> Result<Report> {
    compare_named(("threshold", threshold_log), ("sprt", sprt_log), truth)
}

pub fn compare_named(
    first: (&str, &DecisionLog),
    second: (&str, &DecisionLog),
    truth: &[Label],
) -> Result<Report> {
    let (a, b) = (first.1, second.1);
    if a.frames.len() != b.frames.len()
        || a.frames.iter().zip(&b.frames).any(|(x, y)| x.t != y.t)
    {
        return Err(Error::Evaluation(
            "decision logs cover different frame ranges".into(),
        ));
    }
    let row = |name: &str, log: &DecisionLog| -> Result<ReportRow> {
        let cm = confusion(&log.decisions(), truth)?;
        Ok(ReportRow {
            method: name.to_string(),
            metrics: metrics(&cm)?,
            confusion: cm,
        })
    };
    let ra = row(first.0, a)?;
    let rb = row(second.0, b)?;
    let (ma, mb) = (&ra.metrics, &rb.metrics);
    let deltas = Deltas {
        accuracy: mb.accuracy - ma.accuracy,
        precision: mb.precision - ma.precision,
        recall: mb.recall - ma.recall,
        fpr: mb.fpr - ma.fpr,
        f1: mb.f1 - ma.f1,
    };
    Ok(Report {
        rows: vec![ra, rb],
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprt::threshold_log;
    use crate::stream::{ScoreRecord, ScoreStream};
    use Decision::{Anomaly as DA, Normal as DN, Undecided as DU};
    use Label::{Anomaly as A, Normal as N};

    #[test]
    fn perfect_decisions() {
        let truth = [A, A, A, A, A, N, N, N, N, N];
        let d: Vec<Decision> = truth.iter().map(|l| if l.is_anomaly() { DA } else { DN }).collect();
        let cm = confusion(&d, &truth).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (5, 5, 0, 0));
        let m = metrics(&cm).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1, m.fpr), (1.0, 1.0, 1.0, 1.0, 0.0));
        assert!(!m.degenerate);
    }

    #[test]
    fn undecided_frames_are_excluded() {
        let truth = [N; 10];
        let mut d = vec![DN; 10];
        d[1] = DU;
        d[4] = DU;
        d[9] = DU;
        let cm = confusion(&d, &truth).unwrap();
        assert_eq!(cm.decided(), 7);
        assert_eq!(cm.excluded_undecided, 3);
    }

    #[test]
    fn six_frame_threshold_example() {
        let zs = [0.2, 0.6, 0.4, 0.9, 0.5, 0.1];
        let truth = [N, A, N, A, A, N];
        let s = ScoreStream::new(
            zs.iter()
                .zip(truth)
                .enumerate()
                .map(|(t, (&z, y))| ScoreRecord { t: t as u64, z, y })
                .collect(),
        );
        let cm = confusion(&threshold_log(&s, 0.5).decisions(), &truth).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (3, 0, 3, 0));
    }

    #[test]
    fn degenerate_conventions() {
        let cm = ConfusionMatrix { tn: 4, ..Default::default() };
        let m = metrics(&cm).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
        assert!(metrics(&ConfusionMatrix::default()).is_err());
        assert!(confusion(&[DN], &[N, A]).is_err());
    }

    #[test]
    fn f1_composes_reported_precision_and_recall() {
        let f1 = f1_score(0.9785, 0.9112).unwrap();
        assert!((f1 - 0.9436).abs() < 5e-4, "{f1}");
    }

    #[test]
    fn compare_identical_logs_and_csv_schema() {
        let s = ScoreStream::new(
            [0.1, 0.9, 0.4, 0.8]
                .iter()
                .enumerate()
                .map(|(t, &z)| ScoreRecord { t: t as u64, z, y: Label::from(z > 0.5) })
                .collect(),
        );
        let log = threshold_log(&s, 0.45);
        let r = compare(&log, &log, &s.labels()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.deltas.f1, 0.0);
        assert_eq!(r.deltas.fpr, 0.0);
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().count(), 3);
        assert!(r.to_table().contains("100.00"));

        let short = threshold_log(&ScoreStream::new(s.records[..2].to_vec()), 0.45);
        assert!(compare(&log, &short, &s.labels()).is_err());
    }
}
