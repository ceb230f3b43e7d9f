//! Cartesian-product subgroups over protected attributes.
//!
//! Every combination of one category per selected attribute is a candidate
//! subgroup. Candidates are enumerated lexicographically by attribute order,
//! then by domain order, so the first attribute varies slowest.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

const MODULE: &str = "subgroups";

/// Upper bound on candidate subgroups; guards against accidental
/// high-cardinality columns.
pub const MAX_CANDIDATES: usize = 1 << 20;

/// Separator between `name=value` pairs in subgroup labels.
pub const LABEL_SEPARATOR: &str = "×";

/// Formats a key as `name=value` pairs in `order`, joined by `×`.
///
/// Attributes in `order` that the key lacks are skipped.
pub fn subgroup_label(key: &BTreeMap<String, String>, order: &[String]) -> String {
    order
        .iter()
        .filter_map(|name| key.get(name).map(|v| format!("{name}={v}")))
        .collect::<Vec<_>>()
        .join(LABEL_SEPARATOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgroup {
    /// (attribute, category) pairs in partition attribute order.
    key: Vec<(String, String)>,
    member_indices: Vec<usize>,
}

impl Subgroup {
    pub fn key(&self) -> &[(String, String)] {
        &self.key
    }

    pub fn key_map(&self) -> BTreeMap<String, String> {
        self.key.iter().cloned().collect()
    }

    /// Strictly increasing record indices.
    pub fn member_indices(&self) -> &[usize] {
        &self.member_indices
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn label(&self) -> String {
        self.key
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(LABEL_SEPARATOR)
    }

    pub fn matches(&self, attributes: &BTreeMap<String, String>) -> bool {
        self.key
            .iter()
            .all(|(n, v)| attributes.get(n).is_some_and(|a| a == v))
    }

    pub fn members<'a>(&'a self, dataset: &'a Dataset) -> impl Iterator<Item = &'a Record> + 'a {
        self.member_indices.iter().map(|&i| &dataset.records()[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Empty,
    BelowSupport,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::Empty => "empty",
            ExclusionReason::BelowSupport => "below_support",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcludedSubgroup {
    pub subgroup: Subgroup,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupPartition {
    subgroups: Vec<Subgroup>,
    attribute_names: Vec<String>,
    total_candidates: usize,
    excluded: Vec<ExcludedSubgroup>,
    unassigned: Vec<usize>,
    min_support: usize,
}

impl SubgroupPartition {
    /// Included subgroups, in candidate enumeration order.
    pub fn subgroups(&self) -> &[Subgroup] {
        &self.subgroups
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn total_candidates(&self) -> usize {
        self.total_candidates
    }

    pub fn excluded(&self) -> &[ExcludedSubgroup] {
        &self.excluded
    }

    /// Records lacking a value for at least one selected attribute.
    pub fn unassigned(&self) -> &[usize] {
        &self.unassigned
    }

    pub fn min_support(&self) -> usize {
        self.min_support
    }

    pub fn label_of(&self, key: &BTreeMap<String, String>) -> String {
        subgroup_label(key, &self.attribute_names)
    }

    /// Index of the included subgroup whose key matches `attributes`.
    pub fn find(&self, attributes: &BTreeMap<String, String>) -> Option<usize> {
        self.subgroups.iter().position(|s| s.matches(attributes))
    }

    /// Number of records assigned to some candidate (included or excluded).
    pub fn assigned_count(&self) -> usize {
        self.subgroups.iter().map(Subgroup::len).sum::<usize>()
            + self
                .excluded
                .iter()
                .map(|e| e.subgroup.len())
                .sum::<usize>()
    }
}

/// Splits `dataset` into Cartesian-product subgroups of `attribute_names`.
///
/// Candidates with fewer than `max(min_support, 1)` members are moved to the
/// excluded list with reason `empty` or `below_support`.
pub fn build_partition<S: AsRef<str>>(
    dataset: &Dataset,
    attribute_names: &[S],
    min_support: usize,
) -> Result<SubgroupPartition> {
    if attribute_names.is_empty() {
        return Err(Error::config(MODULE, "no protected attributes selected"));
    }
    let mut schemas = Vec::with_capacity(attribute_names.len());
    for name in attribute_names {
        let name = name.as_ref();
        if schemas
            .iter()
            .any(|s: &&crate::data::AttributeSchema| s.name == name)
        {
            return Err(Error::config(
                MODULE,
                format!("attribute {name:?} selected twice"),
            ));
        }
        let schema = dataset.attribute(name).ok_or_else(|| {
            Error::config(MODULE, format!("unknown protected attribute {name:?}"))
        })?;
        schemas.push(schema);
    }

    let total_candidates = schemas
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.domain.len()))
        .filter(|&n| n <= MAX_CANDIDATES)
        .ok_or_else(|| {
            Error::config(
                MODULE,
                format!("more than {MAX_CANDIDATES} candidate subgroups"),
            )
        })?;

    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); total_candidates];
    let mut unassigned = Vec::new();
    'records: for (idx, rec) in dataset.records().iter().enumerate() {
        let mut slot = 0usize;
        for schema in &schemas {
            let Some(value) = rec.attributes.get(&schema.name) else {
                unassigned.push(idx);
                continue 'records;
            };
            let pos = schema
                .domain
                .iter()
                .position(|d| d == value)
                .expect("dataset invariant: values lie in their domain");
            slot = slot * schema.domain.len() + pos;
        }
        buckets[slot].push(idx);
    }

    let threshold = min_support.max(1);
    let mut subgroups = Vec::new();
    let mut excluded = Vec::new();
    for (slot, members) in buckets.into_iter().enumerate() {
        let mut rem = slot;
        let mut key = vec![(String::new(), String::new()); schemas.len()];
        for (k, schema) in schemas.iter().enumerate().rev() {
            let n = schema.domain.len();
            key[k] = (schema.name.clone(), schema.domain[rem % n].clone());
            rem /= n;
        }
        let subgroup = Subgroup {
            key,
            member_indices: members,
        };
        if subgroup.len() >= threshold {
            subgroups.push(subgroup);
        } else {
            let reason = if subgroup.is_empty() {
                ExclusionReason::Empty
            } else {
                ExclusionReason::BelowSupport
            };
            excluded.push(ExcludedSubgroup { subgroup, reason });
        }
    }

    Ok(SubgroupPartition {
        subgroups,
        attribute_names: attribute_names
            .iter()
            .map(|s| s.as_ref().to_owned())
            .collect(),
        total_candidates,
        excluded,
        unassigned,
        min_support,
    })
}
