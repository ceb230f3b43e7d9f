//! Worst-case classification fairness metrics over a subgroup partition.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FieldRequirement, Record};
use crate::error::{Error, Result};
use crate::metric::{min_max_ratio, Family, MetricResult};
use crate::subgroups::{Subgroup, SubgroupPartition};

const MODULE: &str = "classification_metrics";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RateKind {
    PassRate,
    Tpr,
    Tnr,
    Fpr,
    Fnr,
    PredictedClassRate(String),
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::PassRate => f.write_str("pass rate"),
            RateKind::Tpr => f.write_str("TPR"),
            RateKind::Tnr => f.write_str("TNR"),
            RateKind::Fpr => f.write_str("FPR"),
            RateKind::Fnr => f.write_str("FNR"),
            RateKind::PredictedClassRate(c) => write!(f, "predicted rate of class {c}"),
        }
    }
}

impl RateKind {
    fn requirement(&self) -> FieldRequirement {
        match self {
            RateKind::PassRate | RateKind::PredictedClassRate(_) => FieldRequirement::predicted(),
            _ => FieldRequirement::predicted_and_truth(),
        }
    }

    /// Metric id of the parity ratio built on this rate.
    pub fn parity_id(&self) -> &'static str {
        match self {
            RateKind::PassRate => "dpr",
            RateKind::Tpr => "tpr-parity",
            RateKind::Tnr => "tnr-parity",
            RateKind::Fpr => "fpr-parity",
            RateKind::Fnr => "fnr-parity",
            RateKind::PredictedClassRate(_) => "class-rate-parity",
        }
    }
}

/// How the multiclass metric conditions each class rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MulticlassMode {
    /// P(Ŷ = y | subgroup).
    #[default]
    PredictedRate,
    /// P(Ŷ = y | Y = y, subgroup). Not part of the original metric definition.
    TrueLabelConditioned,
}

/// Conjunction of `flag == value` tests over legitimate-attribute flags.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LegitimateFilter {
    pub conditions: Vec<(String, bool)>,
}

impl LegitimateFilter {
    /// Parses `flag=true,other=false` (also accepts `&` or `&&` between terms).
    pub fn parse(expr: &str) -> Result<Self> {
        let mut conditions = Vec::new();
        for term in expr
            .split([',', '&'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            let (name, value) = term.split_once('=').ok_or_else(|| {
                Error::config(
                    MODULE,
                    format!("filter term {term:?} is not flag=true|false"),
                )
            })?;
            let value = match value.trim() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(Error::config(
                        MODULE,
                        format!("filter value {other:?} is not true or false"),
                    ))
                }
            };
            conditions.push((name.trim().to_owned(), value));
        }
        if conditions.is_empty() {
            return Err(Error::config(MODULE, "empty legitimate filter"));
        }
        Ok(Self { conditions })
    }

    pub fn flags(&self) -> impl Iterator<Item = &str> {
        self.conditions.iter().map(|(n, _)| n.as_str())
    }

    pub fn accepts(&self, record: &Record) -> bool {
        self.conditions
            .iter()
            .all(|(n, v)| record.legitimate_flags.get(n) == Some(v))
    }
}

impl fmt::Display for LegitimateFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self
            .conditions
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        f.write_str(&parts.join(","))
    }
}

fn check_fields<'a>(
    dataset: &Dataset,
    indices: impl Iterator<Item = &'a usize>,
    req: &FieldRequirement,
) -> Result<()> {
    for &i in indices {
        if let Some(field) = req.missing(&dataset.records()[i]).into_iter().next() {
            return Err(Error::MissingField {
                module: MODULE,
                record: i,
                field,
            });
        }
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn rate_over(
    dataset: &Dataset,
    members: &[usize],
    kind: &RateKind,
    positive_label: &str,
) -> Result<Option<f64>> {
    check_fields(dataset, members.iter(), &kind.requirement())?;
    let recs = members.iter().map(|&i| &dataset.records()[i]);
    let predicted_pos = |r: &Record| r.predicted_label.as_deref() == Some(positive_label);
    let actual_pos = |r: &Record| r.true_label.as_deref() == Some(positive_label);
    let count = |cond: &dyn Fn(&Record) -> bool, of: &dyn Fn(&Record) -> bool| {
        let mut hit = 0usize;
        let mut total = 0usize;
        for r in recs.clone() {
            if of(r) {
                total += 1;
                if cond(r) {
                    hit += 1;
                }
            }
        }
        ratio(hit, total)
    };
    Ok(match kind {
        RateKind::PassRate => count(&predicted_pos, &|_| true),
        RateKind::Tpr => count(&predicted_pos, &actual_pos),
        RateKind::Fnr => count(&|r| !predicted_pos(r), &actual_pos),
        RateKind::Tnr => count(&|r| !predicted_pos(r), &|r| !actual_pos(r)),
        RateKind::Fpr => count(&predicted_pos, &|r| !actual_pos(r)),
        RateKind::PredictedClassRate(class) => {
            if !dataset.class_set().contains(class) {
                return Err(Error::usage(
                    MODULE,
                    format!("class {class:?} is not in the dataset class set"),
                ));
            }
            count(&|r| r.predicted_label.as_ref() == Some(class), &|_| true)
        }
    })
}

/// Rate of `kind` within one subgroup; `None` when the conditioning set is
/// empty (e.g. no ground-truth positives for TPR).
pub fn subgroup_rate(
    dataset: &Dataset,
    subgroup: &Subgroup,
    kind: &RateKind,
    positive_label: &str,
) -> Result<Option<f64>> {
    if subgroup.is_empty() {
        return Err(Error::usage(
            MODULE,
            format!("subgroup {} is empty", subgroup.label()),
        ));
    }
    rate_over(dataset, subgroup.member_indices(), kind, positive_label)
}

fn require_subgroups(partition: &SubgroupPartition, metric: &str, at_least: usize) -> Result<()> {
    let n = partition.subgroups().len();
    if n < at_least {
        return Err(Error::usage(
            MODULE,
            format!("{metric} needs at least {at_least} included subgroup(s), partition has {n}"),
        ));
    }
    Ok(())
}

/// Defined per-subgroup statistics plus labels of subgroups where the
/// statistic is undefined.
struct Collected {
    values: BTreeMap<String, f64>,
    undefined: Vec<String>,
}

fn collect<F>(partition: &SubgroupPartition, mut stat: F) -> Result<Collected>
where
    F: FnMut(&Subgroup) -> Result<Option<f64>>,
{
    let mut values = BTreeMap::new();
    let mut undefined = Vec::new();
    for sg in partition.subgroups() {
        match stat(sg)? {
            Some(v) => {
                values.insert(sg.label(), v);
            }
            None => undefined.push(sg.label()),
        }
    }
    Ok(Collected { values, undefined })
}

fn reduce(metric_id: &str, collected: Collected, what: &str) -> Result<MetricResult> {
    if collected.values.is_empty() {
        let r = MetricResult::undefined(metric_id, format!("{what} undefined for every subgroup"));
        return Ok(r.with_undefined(collected.undefined, what));
    }
    Ok(min_max_ratio(metric_id, &collected.values)?.with_undefined(collected.undefined, what))
}

/// Min-max ratio of a rate family across all included subgroups.
pub fn rate_parity_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
    kind: &RateKind,
) -> Result<MetricResult> {
    require_subgroups(partition, kind.parity_id(), 1)?;
    let collected = collect(partition, |sg| {
        subgroup_rate(dataset, sg, kind, positive_label)
    })?;
    reduce(kind.parity_id(), collected, &kind.to_string())
}

/// DPR: min over max of subgroup pass rates.
pub fn demographic_parity_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
) -> Result<MetricResult> {
    rate_parity_ratio(dataset, partition, positive_label, &RateKind::PassRate)
}

/// Intersectional disparate impact: the smallest pass-rate ratio over every
/// ordered pair of distinct subgroups.
pub fn disparate_impact(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
) -> Result<MetricResult> {
    require_subgroups(partition, "di", 2)?;
    let rates = collect(partition, |sg| {
        subgroup_rate(dataset, sg, &RateKind::PassRate, positive_label)
    })?
    .values;

    let mut notes = Vec::new();
    // (ratio, denominator, numerator label, denominator label)
    let mut best: Option<(f64, f64, &String, &String)> = None;
    for (li, &ri) in &rates {
        for (lj, &rj) in &rates {
            if li == lj {
                continue;
            }
            let r = if rj == 0.0 {
                if ri != 0.0 {
                    notes.push(format!("skipped pair {li}/{lj}: zero denominator"));
                    continue;
                }
                1.0
            } else {
                ri / rj
            };
            let better = match best {
                None => true,
                Some((br, bden, _, _)) => r < br || (r == br && rj > bden),
            };
            if better {
                best = Some((r, rj, li, lj));
            }
        }
    }
    let (value, _, lo, hi) = best.expect("at least two subgroups give at least one usable pair");
    Ok(MetricResult {
        metric_id: "di".into(),
        value: Some(value),
        min_subgroup: Some(lo.clone()),
        max_subgroup: Some(hi.clone()),
        per_subgroup: rates.clone(),
        notes,
        undefined_subgroups: Vec::new(),
        families: BTreeMap::new(),
    })
}

/// CSPR: DPR restricted to records accepted by `filter`.
pub fn conditional_statistical_parity_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
    filter: &LegitimateFilter,
) -> Result<MetricResult> {
    require_subgroups(partition, "cspr", 1)?;
    for flag in filter.flags() {
        let known = dataset
            .records()
            .iter()
            .any(|r| r.legitimate_flags.contains_key(flag));
        if !known {
            return Err(Error::config(
                MODULE,
                format!("filter references unknown flag {flag:?}"),
            ));
        }
    }
    let req = FieldRequirement {
        legitimate: filter.flags().map(str::to_owned).collect(),
        ..FieldRequirement::default()
    };

    let mut values = BTreeMap::new();
    let mut emptied = Vec::new();
    for sg in partition.subgroups() {
        check_fields(dataset, sg.member_indices().iter(), &req)?;
        let kept: Vec<usize> = sg
            .member_indices()
            .iter()
            .copied()
            .filter(|&i| filter.accepts(&dataset.records()[i]))
            .collect();
        match rate_over(dataset, &kept, &RateKind::PassRate, positive_label)? {
            Some(v) => {
                values.insert(sg.label(), v);
            }
            None => emptied.push(sg.label()),
        }
    }
    if values.is_empty() {
        let mut r = MetricResult::undefined("cspr", "empty conditional population");
        r.undefined_subgroups = emptied;
        return Ok(r);
    }
    let mut r = min_max_ratio("cspr", &values)?;
    for label in &emptied {
        r.notes.push(format!(
            "excluded {label}: emptied by legitimate filter {filter}"
        ));
    }
    r.undefined_subgroups = emptied;
    Ok(r)
}

/// EOppR: TPR parity ratio.
pub fn equal_opportunity_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
) -> Result<MetricResult> {
    Ok(rate_parity_ratio(dataset, partition, positive_label, &RateKind::Tpr)?.with_id("eopp"))
}

/// Worst of the TPR-parity and FPR-parity ratios.
pub fn equalized_odds_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
) -> Result<MetricResult> {
    let tpr = rate_parity_ratio(dataset, partition, positive_label, &RateKind::Tpr)?;
    let fpr = rate_parity_ratio(dataset, partition, positive_label, &RateKind::Fpr)?;

    let pick_fpr = match (tpr.value, fpr.value) {
        (None, None) => {
            let mut r = MetricResult::undefined("eodds", "TPR and FPR families both undefined");
            r.undefined_subgroups = tpr.undefined_subgroups;
            r.undefined_subgroups.extend(fpr.undefined_subgroups);
            r.undefined_subgroups.sort();
            r.undefined_subgroups.dedup();
            return Ok(r);
        }
        (Some(_), None) => false,
        (None, Some(_)) => true,
        (Some(t), Some(f)) => f < t,
    };
    let families: BTreeMap<String, Family> = [("TPR", &tpr), ("FPR", &fpr)]
        .into_iter()
        .map(|(name, r)| {
            (
                name.to_owned(),
                Family {
                    value: r.value,
                    per_subgroup: r.per_subgroup.clone(),
                },
            )
        })
        .collect();
    let (chosen, other, name) = if pick_fpr {
        (fpr, tpr, "FPR family")
    } else {
        (tpr, fpr, "TPR family")
    };
    let mut r = chosen.with_id("eodds");
    r.notes.insert(0, name.to_owned());
    for note in other.notes {
        let tag = if pick_fpr { "TPR" } else { "FPR" };
        r.notes.push(format!("{tag}: {note}"));
    }
    for label in other.undefined_subgroups {
        if !r.undefined_subgroups.contains(&label) {
            r.undefined_subgroups.push(label);
        }
    }
    r.families = families;
    Ok(r)
}

/// Predicted pass rate over actual pass rate within one subgroup; `None`
/// when the subgroup has no actual positives.
pub fn group_benefit_ratio_per_subgroup(
    dataset: &Dataset,
    subgroup: &Subgroup,
    positive_label: &str,
) -> Result<Option<f64>> {
    check_fields(
        dataset,
        subgroup.member_indices().iter(),
        &FieldRequirement::predicted_and_truth(),
    )?;
    let predicted = subgroup_rate(dataset, subgroup, &RateKind::PassRate, positive_label)?;
    let actual = subgroup
        .members(dataset)
        .filter(|r| r.true_label.as_deref() == Some(positive_label))
        .count();
    let actual = actual as f64 / subgroup.len() as f64;
    Ok(match predicted {
        Some(p) if actual > 0.0 => Some(p / actual),
        _ => None,
    })
}

/// GBR_INT: min over max of per-subgroup group benefit ratios.
pub fn group_benefit_ratio_intersectional(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    positive_label: &str,
) -> Result<MetricResult> {
    require_subgroups(partition, "gbr", 1)?;
    let collected = collect(partition, |sg| {
        group_benefit_ratio_per_subgroup(dataset, sg, positive_label)
    })?;
    reduce("gbr", collected, "group benefit ratio")
}

/// M-EOddR: the worst per-class min-max ratio of predicted class rates.
pub fn multiclass_equalized_odds_ratio(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    mode: MulticlassMode,
) -> Result<MetricResult> {
    require_subgroups(partition, "meodd", 1)?;
    let classes = dataset.class_set();
    if classes.len() < 2 {
        return Err(Error::usage(
            MODULE,
            format!(
                "meodd needs at least 2 classes, class set has {}",
                classes.len()
            ),
        ));
    }

    let mut best: Option<(String, MetricResult)> = None;
    let mut families = BTreeMap::new();
    let mut notes = Vec::new();
    let mut undefined = Vec::new();
    for class in classes {
        let collected = match mode {
            MulticlassMode::PredictedRate => collect(partition, |sg| {
                subgroup_rate(
                    dataset,
                    sg,
                    &RateKind::PredictedClassRate(class.clone()),
                    class,
                )
            })?,
            MulticlassMode::TrueLabelConditioned => collect(partition, |sg| {
                subgroup_rate(dataset, sg, &RateKind::Tpr, class)
            })?,
        };
        let r = reduce("meodd", collected, &format!("rate of class {class}"))?;
        for note in &r.notes {
            notes.push(format!("class {class}: {note}"));
        }
        for label in &r.undefined_subgroups {
            if !undefined.contains(label) {
                undefined.push(label.clone());
            }
        }
        families.insert(
            format!("class={class}"),
            Family {
                value: r.value,
                per_subgroup: r.per_subgroup.clone(),
            },
        );
        let better = match (&best, r.value) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((_, b)), Some(v)) => v < b.value.expect("only defined results are kept"),
        };
        if better {
            best = Some((class.clone(), r));
        }
    }

    let mut result = match best {
        Some((class, mut r)) => {
            r.notes = vec![format!("achieving class: {class}")];
            r
        }
        None => MetricResult::undefined("meodd", "every class rate undefined"),
    };
    if mode == MulticlassMode::TrueLabelConditioned {
        result
            .notes
            .push("extension: class rates conditioned on the true label".to_owned());
    }
    result.notes.extend(notes);
    result.undefined_subgroups = undefined;
    result.families = families;
    Ok(result)
}
