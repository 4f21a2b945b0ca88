//! Confusion matrices, per-class metrics and their renderings.

mod render;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TitleRecord;
use crate::models::TitleClassifier;
use crate::{Error, LeaningLabel, Result, NUM_CLASSES};

pub use render::{render_confusion, row_bins, to_svg, NUM_BINS};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[LeaningLabel], predicted: &[LeaningLabel]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p);
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: LeaningLabel, predicted: LeaningLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Per true class, the share of its misclassifications that land on an
    /// ordinally adjacent class. `None` for rows without errors.
    pub fn adjacent_error_fraction(&self) -> [Option<f64>; NUM_CLASSES] {
        let mut out = [None; NUM_CLASSES];
        for (t, row) in self.counts.iter().enumerate() {
            let errors: u64 = row.iter().enumerate().filter(|&(p, _)| p != t).map(|(_, &c)| c).sum();
            if errors > 0 {
                let adjacent: u64 = row
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| p.abs_diff(t) == 1)
                    .map(|(_, &c)| c)
                    .sum();
                out[t] = Some(adjacent as f64 / errors as f64);
            }
        }
        out
    }

    /// Plain CSV with a header row of predicted labels and one row per true
    /// label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for l in LeaningLabel::ALL {
            write!(s, ",{l}").unwrap();
        }
        s.push('\n');
        for (l, row) in LeaningLabel::ALL.iter().zip(&self.counts) {
            s.push_str(l.as_str());
            for c in row {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut m = ConfusionMatrix::default();
        let mut rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow {
                line,
                message: e.to_string(),
            })?;
            let label: LeaningLabel = rec
                .get(0)
                .unwrap_or_default()
                .parse()
                .map_err(|_| Error::UnknownLabel {
                    line,
                    label: rec.get(0).unwrap_or_default().to_string(),
                })?;
            if rec.len() != NUM_CLASSES + 1 {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("expected {} fields, found {}", NUM_CLASSES + 1, rec.len()),
                });
            }
            for (j, field) in rec.iter().skip(1).enumerate() {
                m.counts[label.index()][j] = field.trim().parse().map_err(|e| Error::MalformedRow {
                    line,
                    message: format!("bad count {field:?}: {e}"),
                })?;
            }
            rows += 1;
        }
        if rows != NUM_CLASSES {
            return Err(Error::MalformedRow {
                line: rows + 1,
                message: format!("expected {NUM_CLASSES} rows, found {rows}"),
            });
        }
        Ok(m)
    }
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: LeaningLabel,
    /// Alias of recall, mirroring the per-class accuracy column of the
    /// published report layout.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a metric had a zero denominator and was defined as 0.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverages {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted: WeightedAverages,
    pub total: u64,
    pub accuracy: f64,
    /// Share of each row's errors that fall on an adjacent class.
    pub adjacent_error_fraction: Vec<Option<f64>>,
}

pub fn report(m: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Empty("classification report over zero records".into()));
    }
    let mut classes = Vec::with_capacity(NUM_CLASSES);
    let (mut wp, mut wf) = (0.0, 0.0);
    for (c, label) in LeaningLabel::ALL.into_iter().enumerate() {
        let tp = m.counts[c][c] as f64;
        let (row, col) = (m.row_sum(c), m.col_sum(c));
        let mut undefined = Vec::new();
        let recall = if row == 0 {
            undefined.push("recall".to_string());
            0.0
        } else {
            tp / row as f64
        };
        let precision = if col == 0 {
            undefined.push("precision".to_string());
            0.0
        } else {
            tp / col as f64
        };
        if precision + recall == 0.0 {
            undefined.push("f1".to_string());
        }
        let f1 = f1_score(precision, recall);
        wp += row as f64 * precision;
        wf += row as f64 * f1;
        classes.push(ClassMetrics {
            label,
            accuracy: recall,
            precision,
            recall,
            f1,
            support: row,
            undefined,
        });
    }
    let n = total as f64;
    // Σ support·recall collapses to the trace; computing it that way keeps
    // weighted recall exactly equal to overall accuracy.
    let accuracy = m.trace() as f64 / n;
    Ok(ClassificationReport {
        classes,
        weighted: WeightedAverages {
            accuracy,
            precision: wp / n,
            recall: accuracy,
            f1: wf / n,
        },
        total,
        accuracy,
        adjacent_error_fraction: m.adjacent_error_fraction().to_vec(),
    })
}

impl ClassificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<14}{:>10}{:>11}{:>8}{:>8}{:>10}\n",
            "class", "accuracy", "precision", "recall", "f1", "support"
        );
        for c in &self.classes {
            writeln!(
                s,
                "{:<14}{:>10.2}{:>11.2}{:>8.2}{:>8.2}{:>10}",
                c.label.as_str(),
                c.accuracy,
                c.precision,
                c.recall,
                c.f1,
                c.support
            )
            .unwrap();
        }
        let w = &self.weighted;
        writeln!(
            s,
            "{:<14}{:>10.2}{:>11.2}{:>8.2}{:>8.2}{:>10}",
            "weighted avg", w.accuracy, w.precision, w.recall, w.f1, self.total
        )
        .unwrap();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub report: ClassificationReport,
}

fn labels_of(records: &[TitleRecord]) -> Result<Vec<LeaningLabel>> {
    if records.is_empty() {
        return Err(Error::Empty("no records to evaluate".into()));
    }
    records
        .iter()
        .map(|r| {
            r.label.ok_or_else(|| Error::Unlabeled {
                video_id: r.video_id.clone(),
            })
        })
        .collect()
}

fn chunk_matrix<C: TitleClassifier + ?Sized>(
    classifier: &C,
    records: &[TitleRecord],
    truth: &[LeaningLabel],
) -> Result<ConfusionMatrix> {
    let titles: Vec<&str> = records.iter().map(|r| r.title.as_str()).collect();
    let rows = classifier.classify_batch(&titles)?;
    if rows.len() != titles.len() {
        return Err(Error::Shape(format!("{} rows for {} titles", rows.len(), titles.len())));
    }
    let mut m = ConfusionMatrix::default();
    for (row, &t) in rows.iter().zip(truth) {
        m.add(t, LeaningLabel::argmax(row));
    }
    Ok(m)
}

/// Classify labelled records in batches of `batch_size` on the calling
/// thread.
pub fn evaluate<C: TitleClassifier + ?Sized>(
    classifier: &C,
    records: &[TitleRecord],
    batch_size: usize,
) -> Result<Evaluation> {
    let truth = labels_of(records)?;
    let bs = batch_size.max(1);
    let mut matrix = ConfusionMatrix::default();
    for (rs, ts) in records.chunks(bs).zip(truth.chunks(bs)) {
        matrix.merge(&chunk_matrix(classifier, rs, ts)?);
    }
    Ok(Evaluation {
        report: report(&matrix)?,
        matrix,
    })
}

/// Same as [`evaluate`] with batches sharded across the rayon pool. The
/// merged matrix equals the serial one exactly.
pub fn evaluate_parallel<C: TitleClassifier + ?Sized>(
    classifier: &C,
    records: &[TitleRecord],
    batch_size: usize,
) -> Result<Evaluation> {
    let truth = labels_of(records)?;
    let bs = batch_size.max(1);
    let partials = records
        .par_chunks(bs)
        .zip(truth.par_chunks(bs))
        .map(|(rs, ts)| chunk_matrix(classifier, rs, ts))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = ConfusionMatrix::default();
    for p in &partials {
        matrix.merge(p);
    }
    Ok(Evaluation {
        report: report(&matrix)?,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use LeaningLabel::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [FarLeft, Left, Center, Center, Right];
        let m = ConfusionMatrix::from_pairs(&labels, &labels).unwrap();
        assert_eq!(m.trace(), 5);
        assert_eq!(m.total(), 5);
        assert_eq!(m.accuracy(), 1.0);
        assert!(ConfusionMatrix::from_pairs(&labels, &labels[..2]).is_err());
        assert_eq!(
            ConfusionMatrix::from_pairs(&[], &[]).unwrap(),
            ConfusionMatrix::default()
        );
    }

    #[test]
    fn two_class_toy() {
        let mut m = ConfusionMatrix::default();
        m.counts[1][1] = 3;
        m.counts[1][4] = 1;
        m.counts[4][1] = 1;
        m.counts[4][4] = 5;
        assert!(approx(m.accuracy(), 0.8, 1e-15));
        let r = report(&m).unwrap();
        assert_eq!(r.weighted.recall, 0.8);
        assert_eq!(r.classes[1].recall, 0.75);
        assert_eq!(r.classes[1].precision, 0.75);
        assert!(r.classes[0].undefined.contains(&"recall".to_string()));
        assert_eq!(r.classes[0].f1, 0.0);
    }

    #[test]
    fn published_f1_rows() {
        assert!(approx(f1_score(0.93, 0.80), 0.860, 5e-4));
        assert!(approx(f1_score(0.55, 0.67), 0.604, 5e-4));
        assert!(approx(f1_score(0.60, 0.64), 0.619, 5e-4));
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(report(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut m = ConfusionMatrix::default();
        for (i, row) in m.counts.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = (i * 7 + j * 3) as u64;
            }
        }
        assert_eq!(ConfusionMatrix::from_csv(&m.to_csv()).unwrap(), m);
        assert!(ConfusionMatrix::from_csv("true\\predicted,a\nLEFT,1\n").is_err());
    }

    #[test]
    fn adjacency_fraction() {
        let mut m = ConfusionMatrix::default();
        m.counts[2] = [0, 3, 10, 1, 0, 4];
        let adj = m.adjacent_error_fraction();
        assert_eq!(adj[2], Some(0.5));
        assert_eq!(adj[0], None);
    }

    #[test]
    fn text_table_has_all_rows() {
        let m = ConfusionMatrix::from_pairs(&[Left, Right], &[Left, Left]).unwrap();
        let text = report(&m).unwrap().to_text();
        assert_eq!(text.lines().count(), 8);
        assert!(text.contains("weighted avg"));
    }

    struct Always(LeaningLabel);

    impl TitleClassifier for Always {
        fn classify_batch(&self, titles: &[&str]) -> Result<Vec<[f64; NUM_CLASSES]>> {
            let mut row = [0.0; NUM_CLASSES];
            row[self.0.index()] = 1.0;
            Ok(vec![row; titles.len()])
        }
    }

    fn records(label: LeaningLabel, n: usize) -> Vec<TitleRecord> {
        (0..n)
            .map(|i| TitleRecord::new(&format!("v{i}"), "c", &format!("title {i}"), Some(label)))
            .collect()
    }

    #[test]
    fn stub_evaluations() {
        let recs = records(Center, 9);
        let e = evaluate(&Always(Center), &recs, 4).unwrap();
        assert_eq!(e.report.accuracy, 1.0);
        let e = evaluate(&Always(FarRight), &recs, 4).unwrap();
        assert_eq!(e.report.accuracy, 0.0);
        assert!(e.report.classes.iter().all(|c| c.f1 == 0.0));
        assert!(evaluate(&Always(Center), &[], 4).is_err());
        let unlabeled = vec![TitleRecord::new("x", "c", "t", None)];
        assert!(matches!(
            evaluate(&Always(Center), &unlabeled, 1),
            Err(Error::Unlabeled { .. })
        ));
    }
}
