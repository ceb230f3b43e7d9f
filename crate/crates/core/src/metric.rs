//! Shared result type and the min-max ratio kernel.
//!
//! Every worst-case metric reduces a per-subgroup statistic to the ratio of
//! its smallest to its largest value. 1 means no disparity.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

const MODULE: &str = "classification_metrics";

pub const NOTE_ALL_ZERO: &str = "degenerate: all-zero";
pub const NOTE_SINGLE: &str = "single subgroup";

/// A secondary breakdown attached to a result, e.g. one rate family of
/// equalized odds or one output class of the multiclass metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Family {
    pub value: Option<f64>,
    pub per_subgroup: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub metric_id: String,
    /// `None` encodes an undefined metric.
    pub value: Option<f64>,
    pub per_subgroup: BTreeMap<String, f64>,
    pub min_subgroup: Option<String>,
    pub max_subgroup: Option<String>,
    pub notes: Vec<String>,
    /// Subgroups left out because their statistic was undefined.
    pub undefined_subgroups: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub families: BTreeMap<String, Family>,
}

impl MetricResult {
    pub fn undefined(metric_id: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            metric_id: metric_id.into(),
            value: None,
            per_subgroup: BTreeMap::new(),
            min_subgroup: None,
            max_subgroup: None,
            notes: vec![note.into()],
            undefined_subgroups: Vec::new(),
            families: BTreeMap::new(),
        }
    }

    pub fn with_id(mut self, metric_id: impl Into<String>) -> Self {
        self.metric_id = metric_id.into();
        self
    }

    /// Records subgroups whose statistic was undefined and notes each one.
    pub(crate) fn with_undefined(mut self, labels: Vec<String>, what: &str) -> Self {
        for label in &labels {
            self.notes
                .push(format!("excluded {label}: {what} undefined"));
        }
        self.undefined_subgroups.extend(labels);
        self
    }

    /// Turns undefined-subgroup exclusions into an error.
    pub fn into_strict(self) -> Result<Self> {
        if let Some(first) = self.undefined_subgroups.first() {
            return Err(Error::usage(
                MODULE,
                format!(
                    "{}: statistic undefined for subgroup {first} (strict mode)",
                    self.metric_id
                ),
            ));
        }
        if self.value.is_none() {
            return Err(Error::usage(
                MODULE,
                format!("{}: metric undefined (strict mode)", self.metric_id),
            ));
        }
        Ok(self)
    }
}

/// Returns (label of minimum, label of maximum). Ties go to the first label
/// in map order.
pub(crate) fn arg_extremes(values: &BTreeMap<String, f64>) -> Option<(&String, &String)> {
    let mut iter = values.iter();
    let (first, &v0) = iter.next()?;
    let (mut lo, mut lo_v, mut hi, mut hi_v) = (first, v0, first, v0);
    for (label, &v) in iter {
        if v < lo_v {
            lo = label;
            lo_v = v;
        }
        if v > hi_v {
            hi = label;
            hi_v = v;
        }
    }
    Some((lo, hi))
}

/// Minimum over maximum of a nonempty set of nonnegative statistics.
///
/// All-zero inputs and single-entry inputs yield 1 with an explanatory note.
pub fn min_max_ratio(metric_id: &str, values: &BTreeMap<String, f64>) -> Result<MetricResult> {
    if values.is_empty() {
        return Err(Error::usage(
            MODULE,
            format!("{metric_id}: no subgroup statistics to compare"),
        ));
    }
    if let Some((label, v)) = values
        .iter()
        .find(|(_, v)| v.is_nan() || **v < 0.0 || v.is_infinite())
    {
        return Err(Error::usage(
            MODULE,
            format!("{metric_id}: statistic for {label} is {v}, expected a finite value >= 0"),
        ));
    }
    let (lo, hi) = arg_extremes(values).expect("nonempty");
    let (min, max) = (values[lo], values[hi]);
    let mut notes = Vec::new();
    let value = if values.len() == 1 {
        notes.push(NOTE_SINGLE.to_owned());
        1.0
    } else if max == 0.0 {
        notes.push(NOTE_ALL_ZERO.to_owned());
        1.0
    } else {
        min / max
    };
    Ok(MetricResult {
        metric_id: metric_id.to_owned(),
        value: Some(value),
        per_subgroup: values.clone(),
        min_subgroup: Some(lo.clone()),
        max_subgroup: Some(hi.clone()),
        notes,
        undefined_subgroups: Vec::new(),
        families: BTreeMap::new(),
    })
}
