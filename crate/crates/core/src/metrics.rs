// SPDX-License-Identifier: Apache-2.0

//! Confusion counting and the segmentation scores (F1, AP, precision,
//! recall, FPR, FNR). Scores whose denominator is zero are `None`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::{CellState, GridMap};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn swapped(&self) -> Self {
        Self { tp: self.tp, fp: self.fn_, tn: self.tn, fn_: self.fp }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

/// Counts over cells not flagged in `dont_care`.
pub fn confusion(pred: &[bool], gt: &[bool], dont_care: Option<&[bool]>) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() || dont_care.is_some_and(|d| d.len() != pred.len()) {
        return Err(Error::shape("prediction, ground truth and don't-care masks must have equal size"));
    }
    let mut c = ConfusionCounts::default();
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        if dont_care.is_some_and(|d| d[i]) {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Grid-map confusion; cells marked don't-care in either map or in
/// `dont_care` are skipped.
pub fn confusion_maps(pred: &GridMap, gt: &GridMap, dont_care: Option<&[bool]>) -> Result<ConfusionCounts> {
    if pred.cells().len() != gt.cells().len() {
        return Err(Error::shape("grid maps differ in size"));
    }
    let skip: Vec<bool> = pred
        .cells()
        .iter()
        .zip(gt.cells())
        .enumerate()
        .map(|(i, (&p, &g))| p == CellState::DontCare || g == CellState::DontCare || dont_care.is_some_and(|d| d[i]))
        .collect();
    if dont_care.is_some_and(|d| d.len() != skip.len()) {
        return Err(Error::shape("don't-care mask size differs from the grid map"));
    }
    let drivable = |m: &GridMap| m.cells().iter().map(|&c| c == CellState::Drivable).collect::<Vec<_>>();
    confusion(&drivable(pred), &drivable(gt), Some(&skip))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub ap: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        f1,
        ap: ratio(c.tp + c.tn, c.total()),
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.fn_ + c.tp),
    }
}

impl Metrics {
    pub const HEADER: &'static str = "     F1      AP     PRE     REC     FPR     FNR";

    /// Percentages in the column order F1, AP, PRE, REC, FPR, FNR.
    pub fn table_row(&self) -> String {
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{:>7.2}", 100.0 * v),
            None => format!("{:>7}", "undef"),
        };
        [self.f1, self.ap, self.precision, self.recall, self.fpr, self.fnr]
            .into_iter()
            .map(cell)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::HEADER)?;
        write!(f, "{}", self.table_row())
    }
}
