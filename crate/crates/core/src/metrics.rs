//! Confusion matrices, accuracy and macro-averaged F1 / Jaccard.
//!
//! Undefined ratios (0/0) count as 0, and macro averages run over all C classes,
//! so a class that is never predicted or never present pulls the average down.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelRaster, NODATA};

/// C×C counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes: c,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize, n: u64) {
        self.counts[truth * self.classes + pred] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// Header row of class ids, then one row of counts per true class.
    pub fn to_csv(&self) -> String {
        let ids: Vec<String> = (0..self.classes).map(|c| c.to_string()).collect();
        let mut out = ids.join(",") + "\n";
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out += &(cells.join(",") + "\n");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty confusion CSV".into()))?;
        let c = header.split(',').filter(|s| !s.is_empty()).count();
        let rows = lines
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<u64>()
                            .map_err(|e| Error::Format(format!("bad count {v:?}: {e}")))
                    })
                    .collect::<Result<Vec<u64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != c {
            return Err(Error::Format(format!("expected {c} rows, found {}", rows.len())));
        }
        Self::from_rows(&rows)
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.classes, rhs.classes, "class counts differ");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

/// Counts pixels where both rasters carry a class; nodata on either side is skipped.
pub fn confusion(truth: &LabelRaster, pred: &LabelRaster, classes: usize) -> Result<ConfusionMatrix> {
    confusion_rows(truth, pred, classes, |_| true)
}

fn confusion_rows(
    truth: &LabelRaster,
    pred: &LabelRaster,
    classes: usize,
    keep_row: impl Fn(usize) -> bool,
) -> Result<ConfusionMatrix> {
    if truth.width() != pred.width() || truth.height() != pred.height() {
        return Err(Error::Shape(format!(
            "truth is {}x{}, prediction is {}x{}",
            truth.width(),
            truth.height(),
            pred.width(),
            pred.height()
        )));
    }
    let w = truth.width() as usize;
    let mut cm = ConfusionMatrix::zeros(classes);
    for (i, (&t, &p)) in truth.ids().iter().zip(pred.ids()).enumerate() {
        if t == NODATA || p == NODATA || !keep_row(i / w) {
            continue;
        }
        for id in [t, p] {
            if id as usize >= classes {
                return Err(Error::Data(format!("class id {id} out of range for {classes} classes")));
            }
        }
        cm.add(t as usize, p as usize, 1);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub jaccard: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_jaccard: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let (row, col) = (cm.row_sum(c), cm.col_sum(c));
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            // 2TP / (row + col) equals 2PR / (P + R) without the extra rounding
            ClassMetrics {
                precision,
                recall,
                f1: ratio(2 * tp, row + col),
                jaccard: ratio(tp, row + col - tp),
                support: row,
            }
        })
        .collect();
    let k = cm.classes() as f64;
    Ok(MetricsReport {
        accuracy: ratio(cm.trace(), total),
        macro_jaccard: per_class.iter().map(|m| m.jaccard).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band: usize,
    pub pixels: u64,
    /// Set when the band held no evaluable pixels; `report` is then absent.
    pub empty: bool,
    pub report: Option<MetricsReport>,
    pub confusion: ConfusionMatrix,
}

/// One report per band; `row_bands[y]` names the band of row `y`, `None` rows
/// are ignored.
pub fn evaluate_by_band(
    truth: &LabelRaster,
    pred: &LabelRaster,
    row_bands: &[Option<usize>],
    classes: usize,
) -> Result<Vec<BandReport>> {
    if row_bands.len() != truth.height() as usize {
        return Err(Error::Shape(format!(
            "band index covers {} rows, raster has {}",
            row_bands.len(),
            truth.height()
        )));
    }
    let n_bands = row_bands.iter().flatten().max().map_or(0, |&b| b + 1);
    (0..n_bands)
        .map(|b| {
            let cm = confusion_rows(truth, pred, classes, |y| row_bands[y] == Some(b))?;
            let pixels = cm.total();
            Ok(BandReport {
                band: b,
                pixels,
                empty: pixels == 0,
                report: if pixels == 0 { None } else { Some(report(&cm)?) },
                confusion: cm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_confusion() {
        let truth = LabelRaster::new(4, 1, vec![0, 0, 1, NODATA]).unwrap();
        let pred = LabelRaster::new(4, 1, vec![0, 1, 1, 0]).unwrap();
        let cm = confusion(&truth, &pred, 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.to_csv(), "0,1\n1,1\n0,1\n");
        assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
    }

    #[test]
    fn all_nodata_is_zero_matrix_and_report_errors() {
        let truth = LabelRaster::filled(2, 2, NODATA);
        let pred = LabelRaster::filled(2, 2, 0);
        let cm = confusion(&truth, &pred, 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(report(&cm), Err(Error::Data(_))));
    }

    #[test]
    fn out_of_range_and_shape_errors() {
        let a = LabelRaster::new(2, 1, vec![0, 5]).unwrap();
        let b = LabelRaster::new(2, 1, vec![0, 0]).unwrap();
        assert!(matches!(confusion(&a, &b, 2), Err(Error::Data(_))));
        let c = LabelRaster::new(1, 2, vec![0, 0]).unwrap();
        assert!(matches!(confusion(&b, &c, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn two_class_hand_values() {
        let cm = ConfusionMatrix::from_rows(&[vec![50, 10], vec![5, 35]]).unwrap();
        let r = report(&cm).unwrap();
        assert_eq!(r.accuracy, 0.85);
        // F1 = 2TP / (row + col): 100/115 and 70/85
        assert!((r.per_class[0].f1 - 100.0 / 115.0).abs() < 1e-15);
        assert!((r.per_class[1].f1 - 70.0 / 85.0).abs() < 1e-15);
        assert!((r.macro_f1 - 0.8466).abs() < 1e-4);
        assert!((r.per_class[0].jaccard - 50.0 / 65.0).abs() < 1e-15);
        assert!((r.per_class[1].jaccard - 0.7).abs() < 1e-15);
        assert!((r.macro_jaccard - 0.7346).abs() < 1e-4);
        for m in &r.per_class {
            assert!((m.jaccard - m.f1 / (2.0 - m.f1)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_support_class_scores_zero() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![1, 2, 0], vec![0, 0, 0]]).unwrap();
        let r = report(&cm).unwrap();
        assert_eq!(
            r.per_class[2],
            ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                jaccard: 0.0,
                support: 0
            }
        );
        assert!(r.macro_f1 < 0.67);
    }

    #[test]
    fn bands_split_rows() {
        let truth = LabelRaster::new(2, 3, vec![0, 1, 0, 1, 0, 1]).unwrap();
        let pred = LabelRaster::new(2, 3, vec![0, 1, 1, 1, 0, 0]).unwrap();
        let bands = vec![Some(0), Some(1), Some(3)];
        let out = evaluate_by_band(&truth, &pred, &bands, 2).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].report.as_ref().unwrap().accuracy, 1.0);
        assert_eq!(out[1].report.as_ref().unwrap().accuracy, 0.5);
        assert!(out[2].empty && out[2].report.is_none());
        assert_eq!(out[3].report.as_ref().unwrap().accuracy, 0.5);

        let all = evaluate_by_band(&truth, &pred, &[Some(0); 3], 2).unwrap();
        assert_eq!(
            all[0].report,
            Some(report(&confusion(&truth, &pred, 2).unwrap()).unwrap())
        );
    }
}
