//! Utility and group-fairness metrics over prediction vectors.
//!
//! Rates with a zero denominator are `None` and make every metric that
//! depends on them `None` as well; nothing is silently zeroed.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn add(&mut self, pred: u8, label: u8) {
        match (pred, label) {
            (1, 1) => self.tp += 1,
            (0, 0) => self.tn += 1,
            (1, 0) => self.fp += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn merged(&self, other: &Self) -> Self {
        ConfusionCounts {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// `tp / (tp + fn)`; `None` without positive labels.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `fp / (fp + tn)`; `None` without negative labels.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_lengths(preds: &[u8], labels: &[u8]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    check_lengths(preds, labels)?;
    if preds.is_empty() {
        return Err(Error::Size("no predictions to score".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in preds.iter().zip(labels) {
        c.add(p, y);
    }
    Ok(c)
}

/// `2tp / (2tp + fp + fn)`, or 0 when nothing is predicted or labelled
/// positive.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    ratio(c.tp + c.tn, c.total()).ok_or_else(|| Error::Size("accuracy of an empty set".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub counts: ConfusionCounts,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub positive_rate: Option<f64>,
}

impl From<ConfusionCounts> for GroupStats {
    fn from(counts: ConfusionCounts) -> Self {
        GroupStats {
            counts,
            tpr: counts.tpr(),
            fpr: counts.fpr(),
            positive_rate: counts.positive_rate(),
        }
    }
}

/// Per-group rates, indexed by protected value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub groups: [GroupStats; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Equalized odds difference.
    pub eod: Option<f64>,
    /// Demographic parity difference.
    pub dp_diff: Option<f64>,
    /// Equal opportunity difference.
    pub eo_diff: Option<f64>,
    pub group_rates: GroupRates,
    /// Some protected group has no rows at all.
    pub missing_group: bool,
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

impl FairnessReport {
    pub fn from_groups(groups: [ConfusionCounts; 2]) -> Self {
        let g: [GroupStats; 2] = [groups[0].into(), groups[1].into()];
        let eo_diff = gap(g[0].tpr, g[1].tpr);
        let fpr_gap = gap(g[0].fpr, g[1].fpr);
        let eod = match (eo_diff, fpr_gap) {
            (Some(t), Some(f)) => Some(t.max(f)),
            _ => None,
        };
        FairnessReport {
            eod,
            dp_diff: gap(g[0].positive_rate, g[1].positive_rate),
            eo_diff,
            group_rates: GroupRates { groups: g },
            missing_group: groups.iter().any(|c| c.total() == 0),
        }
    }

    pub fn is_fully_defined(&self) -> bool {
        self.eod.is_some() && self.dp_diff.is_some() && self.eo_diff.is_some()
    }
}

/// Confusion counts split by protected group.
pub fn group_confusion(
    preds: &[u8],
    labels: &[u8],
    protected: &[u8],
) -> Result<[ConfusionCounts; 2]> {
    check_lengths(preds, labels)?;
    check_lengths(preds, protected)?;
    let mut groups = [ConfusionCounts::default(); 2];
    for ((&p, &y), &a) in preds.iter().zip(labels).zip(protected) {
        groups[usize::from(a != 0)].add(p, y);
    }
    Ok(groups)
}

pub fn fairness(preds: &[u8], labels: &[u8], protected: &[u8]) -> Result<FairnessReport> {
    Ok(FairnessReport::from_groups(group_confusion(
        preds, labels, protected,
    )?))
}

/// Everything reported for one prediction vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub f1: f64,
    pub fairness: FairnessReport,
}

pub fn evaluate(preds: &[u8], labels: &[u8], protected: &[u8]) -> Result<Evaluation> {
    let groups = group_confusion(preds, labels, protected)?;
    let confusion = groups[0].merged(&groups[1]);
    Ok(Evaluation {
        confusion,
        accuracy: accuracy(&confusion)?,
        f1: f1(&confusion),
        fairness: FairnessReport::from_groups(groups),
    })
}

/// `Some(x)` as a number, `None` as the string `"undefined"`.
pub fn metric_value(v: Option<f64>) -> Value {
    match v {
        Some(x) => Value::from(x),
        None => Value::from("undefined"),
    }
}

impl Evaluation {
    /// Flat `name -> value | "undefined"` map.
    pub fn to_flat_json(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("accuracy".into(), Value::from(self.accuracy));
        m.insert("f1".into(), Value::from(self.f1));
        m.insert("eod".into(), metric_value(self.fairness.eod));
        m.insert("dp_diff".into(), metric_value(self.fairness.dp_diff));
        m.insert("eo_diff".into(), metric_value(self.fairness.eo_diff));
        for (g, s) in self.fairness.group_rates.groups.iter().enumerate() {
            m.insert(format!("tpr_{g}"), metric_value(s.tpr));
            m.insert(format!("fpr_{g}"), metric_value(s.fpr));
            m.insert(format!("positive_rate_{g}"), metric_value(s.positive_rate));
        }
        m.insert("tp".into(), self.confusion.tp.into());
        m.insert("tn".into(), self.confusion.tn.into());
        m.insert("fp".into(), self.confusion.fp.into());
        m.insert("fn".into(), self.confusion.fn_.into());
        m
    }
}

/// The three headline numbers of one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub eod: Option<f64>,
    pub f1: f64,
    pub accuracy: f64,
}

impl From<&Evaluation> for SplitMetrics {
    fn from(e: &Evaluation) -> Self {
        SplitMetrics {
            eod: e.fairness.eod,
            f1: e.f1,
            accuracy: e.accuracy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cc(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[1, 0, 1], &[1, 0, 1]).unwrap(), cc(2, 1, 0, 0));
        assert_eq!(confusion(&[1, 1], &[0, 0]).unwrap(), cc(0, 0, 2, 0));
        assert_eq!(
            confusion(&[1, 0, 0, 1], &[1, 1, 0, 0]).unwrap(),
            cc(1, 1, 1, 1)
        );
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert!((f1(&cc(2, 0, 1, 1)) - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(f1(&cc(0, 7, 0, 0)), 0.0);
        assert_eq!(f1(&cc(9, 0, 0, 0)), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&cc(5, 5, 0, 0)).unwrap(), 1.0);
        assert_eq!(accuracy(&cc(3, 3, 3, 3)).unwrap(), 0.5);
        // All-negative predictor on 88 negatives and 12 positives.
        assert!((accuracy(&cc(0, 88, 0, 12)).unwrap() - 0.88).abs() < 1e-12);
        assert!(accuracy(&cc(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn eod_is_max_gap() {
        // tpr_0 = 0.8, fpr_0 = 0.3, tpr_1 = 0.6, fpr_1 = 0.35
        let r = FairnessReport::from_groups([cc(8, 7, 3, 2), cc(12, 13, 7, 8)]);
        assert!((r.eod.unwrap() - 0.2).abs() < 1e-12);
        assert!((r.eo_diff.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_are_fair() {
        let preds = [1, 0, 1, 1, 1, 0, 1, 1];
        let labels = [1, 1, 0, 0, 1, 1, 0, 0];
        let prot = [0, 0, 0, 0, 1, 1, 1, 1];
        let r = fairness(&preds, &labels, &prot).unwrap();
        assert_eq!((r.eod, r.dp_diff, r.eo_diff), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn twelve_rows_cross_checked_by_cell_counting() {
        // 3 rows per (group, label) cell.
        let prot = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let labels = [1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0];
        let preds = [1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0];
        // group 0: tpr 2/3, fpr 1/3; group 1: tpr 1/3, fpr 2/3.
        let r = fairness(&preds, &labels, &prot).unwrap();
        assert!((r.eod.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.eo_diff.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.dp_diff.unwrap().abs() < 1e-12);
    }

    #[test]
    fn undefined_rates_are_flagged() {
        // Group 1 has no positive labels.
        let r = fairness(&[1, 0, 1], &[1, 0, 0], &[0, 0, 1]).unwrap();
        assert_eq!(r.group_rates.groups[1].tpr, None);
        assert_eq!(r.eod, None);
        assert_eq!(r.eo_diff, None);
        assert!(r.dp_diff.is_some());
        assert!(!r.missing_group);
        // Group 1 absent.
        let r = fairness(&[1, 0], &[1, 0], &[0, 0]).unwrap();
        assert!(r.missing_group);
        assert_eq!((r.eod, r.dp_diff, r.eo_diff), (None, None, None));
        let e = evaluate(&[1, 0], &[1, 0], &[0, 0]).unwrap();
        assert_eq!(e.to_flat_json()["eod"], Value::from("undefined"));
    }

    fn arb_vectors() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| {
            let v = || proptest::collection::vec(0u8..2, n);
            (v(), v(), v())
        })
    }

    proptest! {
        #[test]
        fn group_swap_symmetry((p, y, a) in arb_vectors()) {
            let r = fairness(&p, &y, &a).unwrap();
            let swapped: Vec<u8> = a.iter().map(|g| 1 - g).collect();
            let s = fairness(&p, &y, &swapped).unwrap();
            prop_assert_eq!((r.eod, r.dp_diff, r.eo_diff), (s.eod, s.dp_diff, s.eo_diff));
        }

        #[test]
        fn eod_bounds((p, y, a) in arb_vectors()) {
            let r = fairness(&p, &y, &a).unwrap();
            if let (Some(eod), Some(eo)) = (r.eod, r.eo_diff) {
                prop_assert!(eod >= eo);
            }
            for v in [r.eod, r.dp_diff, r.eo_diff].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn flipping_predictions_swaps_to_fnr_tnr_gaps((p, y, a) in arb_vectors()) {
            let flipped: Vec<u8> = p.iter().map(|v| 1 - v).collect();
            let r = fairness(&flipped, &y, &a).unwrap();
            // Independent per-cell counts on the original predictions.
            let mut fnr = [None; 2];
            let mut tnr = [None; 2];
            for g in 0..2u8 {
                let cell = |label: u8, pred: u8| {
                    p.iter().zip(&y).zip(&a)
                        .filter(|((&pp, &yy), &aa)| aa == g && yy == label && pp == pred)
                        .count() as f64
                };
                let pos = cell(1, 0) + cell(1, 1);
                let neg = cell(0, 0) + cell(0, 1);
                if pos > 0.0 { fnr[g as usize] = Some(cell(1, 0) / pos); }
                if neg > 0.0 { tnr[g as usize] = Some(cell(0, 0) / neg); }
            }
            let expected = match (gap(fnr[0], fnr[1]), gap(tnr[0], tnr[1])) {
                (Some(x), Some(y)) => Some(x.max(y)),
                _ => None,
            };
            match (r.eod, expected) {
                (Some(x), Some(e)) => prop_assert!((x - e).abs() < 1e-12),
                (x, e) => prop_assert_eq!(x, e),
            }
        }
    }
}
