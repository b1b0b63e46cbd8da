//! Per-class recall, precision and IoU, mean IoU and overall accuracy.
//!
//! Zero denominators resolve to 1.0: a class that never occurs in the ground
//! truth has recall 1, a class never predicted has precision 1, and a class
//! absent from both has IoU 1. Mean IoU is therefore always defined.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{CoreError, PartLabel, Result, NUM_CLASSES};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: [u64; NUM_CLASSES],
    pub fp: [u64; NUM_CLASSES],
    pub fn_: [u64; NUM_CLASSES],
    pub total: u64,
}

impl ConfusionCounts {
    pub fn from_labels(pred: &[PartLabel], gt: &[PartLabel]) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(CoreError::Argument(format!(
                "prediction length {} differs from ground truth length {}",
                pred.len(),
                gt.len()
            )));
        }
        if pred.is_empty() {
            return Err(CoreError::Argument("metrics need at least one point".into()));
        }
        let mut counts = ConfusionCounts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            if p == g {
                counts.tp[g.index()] += 1;
            } else {
                counts.fp[p.index()] += 1;
                counts.fn_[g.index()] += 1;
            }
        }
        counts.total = pred.len() as u64;
        Ok(counts)
    }

    /// Pools two count tables (micro averaging).
    pub fn merge(&mut self, other: &ConfusionCounts) {
        for c in 0..NUM_CLASSES {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
        self.total += other.total;
    }

    pub fn correct(&self) -> u64 {
        self.tp.iter().sum()
    }

    pub fn report(&self) -> MetricsReport {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let mut per_class = [ClassMetrics::default(); NUM_CLASSES];
        for (c, m) in per_class.iter_mut().enumerate() {
            let (tp, fp, fn_) = (self.tp[c], self.fp[c], self.fn_[c]);
            *m = ClassMetrics {
                recall: ratio(tp, tp + fn_),
                precision: ratio(tp, tp + fp),
                iou: ratio(tp, tp + fp + fn_),
            };
        }
        let miou = per_class.iter().map(|m| m.iou).sum::<f64>() / NUM_CLASSES as f64;
        let acc = ratio(self.correct(), self.total);
        MetricsReport { per_class, miou, acc }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub precision: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Indexed by [`PartLabel::index`].
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub miou: f64,
    pub acc: f64,
}

impl MetricsReport {
    pub fn class(&self, label: PartLabel) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    /// Unweighted mean of several reports (one per test model). Mean IoU is
    /// recomputed from the averaged per-class IoU values, which equals the
    /// mean of the individual mean IoUs.
    pub fn macro_mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(CoreError::Argument("cannot average zero reports".into()));
        }
        let n = reports.len() as f64;
        let mut per_class = [ClassMetrics::default(); NUM_CLASSES];
        for (c, m) in per_class.iter_mut().enumerate() {
            m.recall = reports.iter().map(|r| r.per_class[c].recall).sum::<f64>() / n;
            m.precision = reports.iter().map(|r| r.per_class[c].precision).sum::<f64>() / n;
            m.iou = reports.iter().map(|r| r.per_class[c].iou).sum::<f64>() / n;
        }
        let miou = per_class.iter().map(|m| m.iou).sum::<f64>() / NUM_CLASSES as f64;
        let acc = reports.iter().map(|r| r.acc).sum::<f64>() / n;
        Ok(MetricsReport { per_class, miou, acc })
    }

    /// CSV with header `class,recall,precision,iou`, one row per class and
    /// the summary rows `miou` and `acc` carrying their value in the last column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,recall,precision,iou\n");
        for label in PartLabel::ALL {
            let m = self.class(label);
            let _ = writeln!(out, "{},{},{},{}", label.name(), m.recall, m.precision, m.iou);
        }
        let _ = writeln!(out, "miou,,,{}", self.miou);
        let _ = writeln!(out, "acc,,,{}", self.acc);
        out
    }

    pub fn from_csv(text: &str) -> Result<MetricsReport> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or_default();
        if header.trim() != "class,recall,precision,iou" {
            return Err(CoreError::Parse { line: 1, message: format!("unexpected header {header:?}") });
        }
        let mut per_class = [None; NUM_CLASSES];
        let (mut miou, mut acc) = (None, None);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 {
                return Err(CoreError::Parse { line: lineno, message: "expected 4 columns".into() });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|e| CoreError::Parse { line: lineno, message: e.to_string() })
            };
            match cols[0] {
                "miou" => miou = Some(num(cols[3])?),
                "acc" => acc = Some(num(cols[3])?),
                name => {
                    let label = PartLabel::ALL
                        .into_iter()
                        .find(|l| l.name() == name)
                        .ok_or_else(|| CoreError::Parse {
                            line: lineno,
                            message: format!("unknown class {name:?}"),
                        })?;
                    per_class[label.index()] = Some(ClassMetrics {
                        recall: num(cols[1])?,
                        precision: num(cols[2])?,
                        iou: num(cols[3])?,
                    });
                }
            }
        }
        let missing = || CoreError::Parse { line: 0, message: "incomplete metrics table".into() };
        let mut classes = [ClassMetrics::default(); NUM_CLASSES];
        for (slot, parsed) in classes.iter_mut().zip(per_class) {
            *slot = parsed.ok_or_else(missing)?;
        }
        Ok(MetricsReport { per_class: classes, miou: miou.ok_or_else(missing)?, acc: acc.ok_or_else(missing)? })
    }
}

pub fn compute_metrics(pred: &[PartLabel], gt: &[PartLabel]) -> Result<MetricsReport> {
    Ok(ConfusionCounts::from_labels(pred, gt)?.report())
}

/// Class fractions ordered (Flower, Leaf, Stem).
pub fn class_distribution(labels: &[PartLabel]) -> Result<[f64; NUM_CLASSES]> {
    if labels.is_empty() {
        return Err(CoreError::Argument("class distribution of an empty label list".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.map(|c| c as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use PartLabel::*;

    #[test]
    fn perfect_prediction() {
        let gt = vec![Leaf, Stem, Flower, Leaf];
        let r = compute_metrics(&gt, &gt).unwrap();
        for m in r.per_class {
            assert_eq!((m.recall, m.precision, m.iou), (1.0, 1.0, 1.0));
        }
        assert_eq!((r.miou, r.acc), (1.0, 1.0));
    }

    #[test]
    fn hand_counted_example() {
        let r = compute_metrics(&[Leaf, Leaf, Stem], &[Leaf, Stem, Stem]).unwrap();
        assert_eq!(*r.class(Stem), ClassMetrics { recall: 0.5, precision: 1.0, iou: 0.5 });
        assert_eq!(*r.class(Leaf), ClassMetrics { recall: 1.0, precision: 0.5, iou: 0.5 });
        // Flower is absent from both sides.
        assert_eq!(*r.class(Flower), ClassMetrics { recall: 1.0, precision: 1.0, iou: 1.0 });
        assert!((r.acc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn predicted_but_absent_class() {
        let r = compute_metrics(&[Flower, Leaf], &[Leaf, Leaf]).unwrap();
        assert_eq!(*r.class(Flower), ClassMetrics { recall: 1.0, precision: 0.0, iou: 0.0 });
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_metrics(&[Leaf], &[Leaf, Stem]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn distribution() {
        assert_eq!(class_distribution(&[Leaf, Leaf, Stem, Flower]).unwrap(), [0.25, 0.5, 0.25]);
        assert_eq!(class_distribution(&[Leaf; 5]).unwrap(), [0.0, 1.0, 0.0]);
        assert!(class_distribution(&[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let r = compute_metrics(&[Leaf, Leaf, Stem, Flower], &[Leaf, Stem, Stem, Leaf]).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("class,recall,precision,iou\nflower,"));
        assert_eq!(MetricsReport::from_csv(&csv).unwrap(), r);
    }

    #[test]
    fn pooled_and_macro_differ_in_general() {
        let a = ConfusionCounts::from_labels(&[Leaf, Leaf], &[Leaf, Leaf]).unwrap();
        let b = ConfusionCounts::from_labels(&[Stem, Leaf, Leaf, Leaf], &[Leaf, Leaf, Leaf, Leaf]).unwrap();
        let macro_acc = MetricsReport::macro_mean(&[a.report(), b.report()]).unwrap().acc;
        let mut pooled = a.clone();
        pooled.merge(&b);
        assert_eq!(macro_acc, (1.0 + 0.75) / 2.0);
        assert_eq!(pooled.report().acc, 5.0 / 6.0);
    }
}
