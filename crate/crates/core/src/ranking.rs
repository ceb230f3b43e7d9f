//! Representation (skew@k) and exposure (attention) metrics for ranked lists.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::metric::{min_max_ratio, MetricResult};
use crate::subgroups::{Subgroup, SubgroupPartition};

const MODULE: &str = "ranking_metrics";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedItem {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
}

/// Items in rank order; the item at index `i` holds position `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    items: Vec<RankedItem>,
}

impl RankedList {
    pub fn new(items: Vec<RankedItem>) -> Self {
        Self { items }
    }

    /// Builds a list from explicit 1-based ranks, which must be exactly
    /// `1..=n` in some order.
    pub fn from_ranked(mut ranked: Vec<(usize, RankedItem)>) -> Result<Self> {
        ranked.sort_by_key(|(r, _)| *r);
        for (i, (rank, _)) in ranked.iter().enumerate() {
            if *rank != i + 1 {
                return Err(Error::config(
                    MODULE,
                    format!(
                        "ranks must be unique and contiguous from 1; expected {} found {rank}",
                        i + 1
                    ),
                ));
            }
        }
        Ok(Self {
            items: ranked.into_iter().map(|(_, item)| item).collect(),
        })
    }

    /// Shorthand for tests and demos: one single-attribute item per entry.
    pub fn from_labels(attribute: &str, labels: &[&str]) -> Self {
        Self::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| RankedItem {
                    id: (i + 1).to_string(),
                    attributes: [(attribute.to_owned(), (*l).to_owned())]
                        .into_iter()
                        .collect(),
                })
                .collect(),
        )
    }

    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Checks every item value against the population schema.
    pub fn check_schema(&self, population: &Dataset) -> Result<()> {
        for (i, item) in self.items.iter().enumerate() {
            for (name, value) in &item.attributes {
                if let Some(attr) = population.attribute(name) {
                    if !attr.contains(value) {
                        return Err(Error::Schema {
                            row: i + 1,
                            column: name.clone(),
                            value: value.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// The list's items as a dataset carrying only protected attributes, for
    /// use as the population when no other is supplied.
    pub fn to_dataset(&self, attribute_names: &[&str]) -> Result<Dataset> {
        let records = self
            .items
            .iter()
            .map(|item| Record {
                attributes: item
                    .attributes
                    .iter()
                    .filter(|(k, _)| attribute_names.contains(&k.as_str()))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
                ..Record::default()
            })
            .collect();
        Dataset::from_records(attribute_names, records)
    }

    fn positions_of<'a>(&'a self, subgroup: &'a Subgroup) -> impl Iterator<Item = usize> + 'a {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, item)| subgroup.matches(&item.attributes))
            .map(|(i, _)| i + 1)
    }
}

/// Reads a ranked list. The table needs an integer `rank` column (1-based,
/// unique, contiguous); `item_column` names an optional id column.
pub fn load_ranked_list<R: Read>(
    source: R,
    protected: &[String],
    item_column: Option<&str>,
    delimiter: u8,
) -> Result<RankedList> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(MODULE, format!("missing required column {name:?}")))
    };
    let rank_idx = find("rank")?;
    let item_idx = item_column.map(find).transpose()?;
    let attr_idx = protected
        .iter()
        .map(|p| find(p))
        .collect::<Result<Vec<_>>>()?;

    let mut ranked = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let fallback = n + 2;
        let row = row.map_err(|e| Error::Parse {
            row: fallback,
            message: e.to_string(),
        })?;
        let line = row.position().map_or(fallback, |p| p.line() as usize);
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let raw_rank = row.get(rank_idx).unwrap_or("").trim();
        let rank: usize = raw_rank.parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("rank {raw_rank:?} is not a positive integer"),
        })?;
        let id = item_idx
            .and_then(|i| row.get(i))
            .map(|s| s.trim().to_owned())
            .unwrap_or_else(|| rank.to_string());
        let attributes = protected
            .iter()
            .zip(&attr_idx)
            .filter_map(|(name, &i)| {
                let v = row.get(i).unwrap_or("").trim();
                (!v.is_empty()).then(|| (name.clone(), v.to_owned()))
            })
            .collect();
        ranked.push((rank, RankedItem { id, attributes }));
    }
    RankedList::from_ranked(ranked)
}

/// Share of the population in each subgroup, keyed by subgroup label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationShares(BTreeMap<String, f64>);

impl PopulationShares {
    /// Subgroup sizes over the number of records assigned to any candidate.
    pub fn from_partition(partition: &SubgroupPartition) -> Self {
        let total = partition.assigned_count();
        let shares = partition
            .subgroups()
            .iter()
            .map(|sg| {
                let share = if total == 0 {
                    0.0
                } else {
                    sg.len() as f64 / total as f64
                };
                (sg.label(), share)
            })
            .collect();
        Self(shares)
    }

    pub fn explicit(shares: BTreeMap<String, f64>) -> Result<Self> {
        for (label, &s) in &shares {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config(
                    MODULE,
                    format!("population share {s} for {label} is outside [0, 1]"),
                ));
            }
        }
        let total: f64 = shares.values().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::config(
                MODULE,
                format!("population shares sum to {total} > 1"),
            ));
        }
        Ok(Self(shares))
    }

    pub fn share(&self, label: &str) -> f64 {
        self.0.get(label).copied().unwrap_or(0.0)
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

/// Positional attention model Att(k).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttentionModel {
    /// 1 / log2(k + 1)
    #[default]
    Logarithmic,
    /// p (1 - p)^(k - 1)
    Geometric { p: f64 },
}

impl AttentionModel {
    pub const DEFAULT_GEOMETRIC_P: f64 = 0.5;

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config(
                MODULE,
                format!("geometric attention needs 0 < p < 1, got {p}"),
            ));
        }
        Ok(AttentionModel::Geometric { p })
    }
}

impl fmt::Display for AttentionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionModel::Logarithmic => f.write_str("log"),
            AttentionModel::Geometric { p } => write!(f, "geometric(p={p})"),
        }
    }
}

pub fn attention_value(model: AttentionModel, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::usage(MODULE, "rank positions start at 1"));
    }
    Ok(match model {
        AttentionModel::Logarithmic => 1.0 / ((k + 1) as f64).log2(),
        AttentionModel::Geometric { p } => {
            let exp = i32::try_from(k - 1).unwrap_or(i32::MAX);
            p * (1.0 - p).powi(exp)
        }
    })
}

fn check_k(ranked: &RankedList, k: usize) -> Result<()> {
    if k < 1 || k > ranked.len() {
        return Err(Error::usage(
            MODULE,
            format!("k = {k} is outside 1..={}", ranked.len()),
        ));
    }
    Ok(())
}

/// Top-k share of `subgroup` over its population share; `None` when the
/// population share is 0.
pub fn skew_at_k(
    ranked: &RankedList,
    population: &PopulationShares,
    subgroup: &Subgroup,
    k: usize,
) -> Result<Option<f64>> {
    check_k(ranked, k)?;
    let share = population.share(&subgroup.label());
    if share == 0.0 {
        return Ok(None);
    }
    let in_top = ranked.items[..k]
        .iter()
        .filter(|item| subgroup.matches(&item.attributes))
        .count();
    Ok(Some((in_top as f64 / k as f64) / share))
}

/// SR@K: min over max of skew@k across subgroups with a defined skew.
pub fn skew_ratio_at_k(
    ranked: &RankedList,
    partition: &SubgroupPartition,
    population: &PopulationShares,
    k: usize,
) -> Result<MetricResult> {
    check_k(ranked, k)?;
    let mut values = BTreeMap::new();
    let mut undefined = Vec::new();
    for sg in partition.subgroups() {
        match skew_at_k(ranked, population, sg, k)? {
            Some(v) => {
                values.insert(sg.label(), v);
            }
            None => undefined.push(sg.label()),
        }
    }
    let mut result = if values.is_empty() {
        MetricResult::undefined("skew", "skew undefined for every subgroup")
    } else {
        min_max_ratio("skew", &values)?
    };
    result.notes.push(format!("k = {k}"));
    Ok(result.with_undefined(undefined, "population share is zero; skew"))
}

/// Mean Att(k) over the positions held by `subgroup`; `None` when the
/// subgroup has no items in the list.
pub fn mean_attention(
    ranked: &RankedList,
    subgroup: &Subgroup,
    model: AttentionModel,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for k in ranked.positions_of(subgroup) {
        total += attention_value(model, k)?;
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// AR: min over max of per-subgroup mean attention.
pub fn attention_ratio(
    ranked: &RankedList,
    partition: &SubgroupPartition,
    model: AttentionModel,
) -> Result<MetricResult> {
    let mut values = BTreeMap::new();
    let mut undefined = Vec::new();
    for sg in partition.subgroups() {
        match mean_attention(ranked, sg, model)? {
            Some(v) => {
                values.insert(sg.label(), v);
            }
            None => undefined.push(sg.label()),
        }
    }
    let mut result = if values.is_empty() {
        MetricResult::undefined("attention", "no subgroup has items in the ranked list")
    } else {
        min_max_ratio("attention", &values)?
    };
    result.notes.push(format!("attention model: {model}"));
    let unmatched = ranked
        .items
        .iter()
        .filter(|item| partition.find(&item.attributes).is_none())
        .count();
    if unmatched > 0 {
        result.notes.push(format!(
            "{unmatched} ranked item(s) outside every included subgroup"
        ));
    }
    Ok(result.with_undefined(undefined, "no ranked items; mean attention"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgroups::build_partition;

    fn population(counts: &[(&str, usize)]) -> (Dataset, SubgroupPartition) {
        let records = counts
            .iter()
            .flat_map(|(g, n)| {
                (0..*n).map(move |_| Record {
                    attributes: [("g".to_string(), g.to_string())].into_iter().collect(),
                    ..Record::default()
                })
            })
            .collect();
        let ds = Dataset::from_records(&["g"], records).unwrap();
        let p = build_partition(&ds, &["g"], 1).unwrap();
        (ds, p)
    }

    #[test]
    fn attention_values() {
        let log = AttentionModel::Logarithmic;
        assert_eq!(attention_value(log, 1).unwrap(), 1.0);
        assert_eq!(attention_value(log, 3).unwrap(), 0.5);
        let geo = AttentionModel::geometric(0.5).unwrap();
        let v: Vec<f64> = (1..=4).map(|k| attention_value(geo, k).unwrap()).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.125, 0.0625]);
        assert!(attention_value(log, 0).is_err());
        assert!(AttentionModel::geometric(1.0).is_err());
        assert!(AttentionModel::geometric(0.0).is_err());
    }

    #[test]
    fn proportional_top_k() {
        let (_, p) = population(&[("a", 50), ("b", 50)]);
        let shares = PopulationShares::from_partition(&p);
        let list =
            RankedList::from_labels("g", &["a", "b", "a", "b", "a", "b", "a", "b", "a", "b"]);
        for sg in p.subgroups() {
            assert_eq!(skew_at_k(&list, &shares, sg, 10).unwrap(), Some(1.0));
        }
        assert_eq!(
            skew_ratio_at_k(&list, &p, &shares, 10).unwrap().value,
            Some(1.0)
        );
    }

    #[test]
    fn seventy_thirty_fixture() {
        let (_, p) = population(&[("a", 70), ("b", 30)]);
        let shares = PopulationShares::from_partition(&p);
        let mut labels = vec!["a"; 9];
        labels.push("b");
        let list = RankedList::from_labels("g", &labels);
        let a = skew_at_k(&list, &shares, &p.subgroups()[0], 10)
            .unwrap()
            .unwrap();
        let b = skew_at_k(&list, &shares, &p.subgroups()[1], 10)
            .unwrap()
            .unwrap();
        assert!((a - 0.9 / 0.7).abs() < 1e-12);
        assert!((a - 1.2857).abs() < 1e-4);
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        let r = skew_ratio_at_k(&list, &p, &shares, 10).unwrap();
        assert!((r.value.unwrap() - (0.1 / 0.3) / (0.9 / 0.7)).abs() < 1e-12);
        assert!((r.value.unwrap() - 0.2593).abs() < 1e-4);
    }

    #[test]
    fn absent_subgroup_skew_is_zero() {
        let (_, p) = population(&[("a", 5), ("b", 5)]);
        let shares = PopulationShares::from_partition(&p);
        let list = RankedList::from_labels("g", &["a", "a", "a"]);
        assert_eq!(
            skew_at_k(&list, &shares, &p.subgroups()[1], 3).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            skew_ratio_at_k(&list, &p, &shares, 3).unwrap().value,
            Some(0.0)
        );
    }

    #[test]
    fn skew_k_range_and_zero_share() {
        let (_, p) = population(&[("a", 5), ("b", 5)]);
        let list = RankedList::from_labels("g", &["a", "b"]);
        let shares = PopulationShares::from_partition(&p);
        assert!(skew_at_k(&list, &shares, &p.subgroups()[0], 0).is_err());
        assert!(skew_at_k(&list, &shares, &p.subgroups()[0], 3).is_err());
        let explicit =
            PopulationShares::explicit([("g=a".to_string(), 0.5)].into_iter().collect()).unwrap();
        assert_eq!(
            skew_at_k(&list, &explicit, &p.subgroups()[1], 2).unwrap(),
            None
        );
        let r = skew_ratio_at_k(&list, &p, &explicit, 2).unwrap();
        assert_eq!(r.value, Some(1.0));
        assert_eq!(r.undefined_subgroups, vec!["g=b"]);
    }

    #[test]
    fn mean_attention_abab() {
        let (_, p) = population(&[("a", 2), ("b", 2)]);
        let list = RankedList::from_labels("g", &["a", "b", "a", "b"]);
        let geo = AttentionModel::geometric(0.5).unwrap();
        let ma_a = mean_attention(&list, &p.subgroups()[0], geo).unwrap();
        let ma_b = mean_attention(&list, &p.subgroups()[1], geo).unwrap();
        assert_eq!(ma_a, Some(0.3125));
        assert_eq!(ma_b, Some(0.15625));
        let r = attention_ratio(&list, &p, geo).unwrap();
        assert_eq!(r.value, Some(0.5));
    }

    #[test]
    fn mean_attention_edges() {
        let (_, p) = population(&[("a", 2), ("b", 2)]);
        let single = RankedList::from_labels("g", &["a"]);
        let log = AttentionModel::Logarithmic;
        assert_eq!(
            mean_attention(&single, &p.subgroups()[0], log).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            mean_attention(&single, &p.subgroups()[1], log).unwrap(),
            None
        );
        let r = attention_ratio(&single, &p, log).unwrap();
        assert_eq!(r.value, Some(1.0));
        assert!(r.notes.iter().any(|n| n == "single subgroup"));
        assert_eq!(r.undefined_subgroups, vec!["g=b"]);
    }

    #[test]
    fn abba_closed_form() {
        let (_, p) = population(&[("a", 2), ("b", 2)]);
        let list = RankedList::from_labels("g", &["a", "b", "b", "a"]);
        for model in [
            AttentionModel::Logarithmic,
            AttentionModel::geometric(0.3).unwrap(),
        ] {
            let att = |k| attention_value(model, k).unwrap();
            let ma_a = (att(1) + att(4)) / 2.0;
            let ma_b = (att(2) + att(3)) / 2.0;
            let expected = ma_a.min(ma_b) / ma_a.max(ma_b);
            let r = attention_ratio(&list, &p, model).unwrap();
            assert!((r.value.unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn loads_ranked_csv() {
        let src = "rank,item,g\n2,y,b\n1,x,a\n3,z,\n";
        let list =
            load_ranked_list(src.as_bytes(), &["g".to_string()], Some("item"), b',').unwrap();
        assert_eq!(list.items()[0].id, "x");
        assert_eq!(list.items()[1].attributes["g"], "b");
        assert!(list.items()[2].attributes.is_empty());

        let gap = "rank,g\n1,a\n3,b\n";
        assert!(load_ranked_list(gap.as_bytes(), &["g".to_string()], None, b',').is_err());
        let dup = "rank,g\n1,a\n1,b\n";
        assert!(load_ranked_list(dup.as_bytes(), &["g".to_string()], None, b',').is_err());
        let no_rank = "pos,g\n1,a\n";
        assert!(matches!(
            load_ranked_list(no_rank.as_bytes(), &["g".to_string()], None, b','),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn explicit_shares_validate() {
        assert!(
            PopulationShares::explicit([("x".to_string(), 1.5)].into_iter().collect()).is_err()
        );
        assert!(PopulationShares::explicit(
            [("x".to_string(), 0.7), ("y".to_string(), 0.7)]
                .into_iter()
                .collect()
        )
        .is_err());
    }
}
