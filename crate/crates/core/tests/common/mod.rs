//! Random dataset generation and brute-force reference implementations.
//!
//! The oracles here work straight from raw rows with plain loops and hash
//! maps; they share no code with the library beyond the `Record` type used
//! to hand data over.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use fairsect::data::{Dataset, Record};
use fairsect::ranking::RankedList;
use rand::seq::SliceRandom;
use rand::Rng;

pub const POSITIVE: &str = "1";
pub const ATTRS: [&str; 3] = ["a", "b", "c"];

#[derive(Debug, Clone)]
pub struct Row {
    /// One entry per attribute in use; `None` is a missing value.
    pub attrs: Vec<Option<String>>,
    pub pred: String,
    pub truth: String,
    pub score: f64,
    pub legit: bool,
}

#[derive(Debug, Clone)]
pub struct RawData {
    pub names: Vec<String>,
    pub rows: Vec<Row>,
}

impl RawData {
    /// 1 to `max_rows` rows over 1 to 3 attributes with up to 3 values each.
    /// Labels are drawn from {0, 1, 2} so binary metrics also see a third
    /// class that counts as negative.
    pub fn random<R: Rng>(rng: &mut R, max_rows: usize) -> Self {
        let n_attrs = rng.gen_range(1..=3);
        let names: Vec<String> = ATTRS[..n_attrs].iter().map(|s| s.to_string()).collect();
        let sizes: Vec<usize> = (0..n_attrs).map(|_| rng.gen_range(1..=3)).collect();
        let n = rng.gen_range(1..=max_rows);
        let classes = if rng.gen_bool(0.7) { 2 } else { 3 };
        let p_pos: f64 = rng.gen_range(0.0..=1.0);
        // Row 0 is always complete so no attribute ends up with an empty domain.
        let rows = (0..n)
            .map(|i| Row {
                attrs: sizes
                    .iter()
                    .map(|&s| {
                        (i == 0 || !rng.gen_bool(0.04)).then(|| format!("v{}", rng.gen_range(0..s)))
                    })
                    .collect(),
                pred: if rng.gen_bool(p_pos) {
                    "1".into()
                } else {
                    ["0", "2"][rng.gen_range(0..classes - 1)].into()
                },
                truth: rng.gen_range(0..classes).to_string(),
                // Coarse values so ties and equal scores across groups occur.
                score: (rng.gen_range(0..40) as f64) / 4.0,
                legit: rng.gen_bool(0.6),
            })
            .collect();
        Self { names, rows }
    }

    pub fn name_refs(&self) -> Vec<&str> {
        self.names.iter().map(String::as_str).collect()
    }

    pub fn records(&self) -> Vec<Record> {
        self.rows
            .iter()
            .map(|r| Record {
                attributes: self
                    .names
                    .iter()
                    .zip(&r.attrs)
                    .filter_map(|(n, v)| v.as_ref().map(|v| (n.clone(), v.clone())))
                    .collect(),
                predicted_label: Some(r.pred.clone()),
                true_label: Some(r.truth.clone()),
                score: Some(r.score),
                legitimate_flags: [("legit".to_string(), r.legit)].into_iter().collect(),
            })
            .collect()
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::from_records(&self.name_refs(), self.records()).expect("generated data is valid")
    }

    pub fn doubled(&self) -> Self {
        let mut rows = self.rows.clone();
        rows.extend(self.rows.iter().cloned());
        Self {
            names: self.names.clone(),
            rows,
        }
    }

    pub fn shuffled<R: Rng>(&self, rng: &mut R) -> Self {
        let mut rows = self.rows.clone();
        rows.shuffle(rng);
        Self {
            names: self.names.clone(),
            rows,
        }
    }

    /// Label in the library's `name=value×name=value` format, or `None` for
    /// a row with a missing attribute.
    pub fn label(&self, row: &Row) -> Option<String> {
        let mut parts = Vec::new();
        for (n, v) in self.names.iter().zip(&row.attrs) {
            parts.push(format!("{n}={}", v.as_ref()?));
        }
        Some(parts.join("×"))
    }

    /// Rows grouped by subgroup label.
    pub fn groups(&self) -> BTreeMap<String, Vec<&Row>> {
        let mut out: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
        for r in &self.rows {
            if let Some(l) = self.label(r) {
                out.entry(l).or_default().push(r);
            }
        }
        out
    }
}

/// min/max with the all-zero convention; `None` when nothing is defined.
pub fn oracle_ratio(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Some(if hi == 0.0 { 1.0 } else { lo / hi })
}

fn frac(hit: usize, of: usize) -> Option<f64> {
    if of == 0 {
        None
    } else {
        Some(hit as f64 / of as f64)
    }
}

/// Per-subgroup rate where `cond` is counted among rows satisfying `given`.
pub fn oracle_rates(
    raw: &RawData,
    cond: impl Fn(&Row) -> bool,
    given: impl Fn(&Row) -> bool,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (label, rows) in raw.groups() {
        let of = rows.iter().filter(|r| given(r)).count();
        let hit = rows.iter().filter(|r| given(r) && cond(r)).count();
        if let Some(v) = frac(hit, of) {
            out.insert(label, v);
        }
    }
    out
}

pub fn pred_pos(r: &Row) -> bool {
    r.pred == POSITIVE
}

pub fn true_pos(r: &Row) -> bool {
    r.truth == POSITIVE
}

pub fn ratio_of(m: &BTreeMap<String, f64>) -> Option<f64> {
    oracle_ratio(&m.values().copied().collect::<Vec<_>>())
}

pub fn oracle_dpr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, pred_pos, |_| true))
}

pub fn oracle_tpr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, pred_pos, true_pos))
}

pub fn oracle_fnr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, |r| !pred_pos(r), true_pos))
}

pub fn oracle_tnr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, |r| !pred_pos(r), |r| !true_pos(r)))
}

pub fn oracle_fpr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, pred_pos, |r| !true_pos(r)))
}

pub fn oracle_eodds(raw: &RawData) -> Option<f64> {
    match (oracle_tpr(raw), oracle_fpr(raw)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

pub fn oracle_cspr(raw: &RawData) -> Option<f64> {
    ratio_of(&oracle_rates(raw, pred_pos, |r| r.legit))
}

/// Smallest pass-rate ratio over ordered pairs; pairs with a zero
/// denominator and nonzero numerator are skipped, 0/0 counts as 1.
pub fn oracle_di(raw: &RawData) -> Option<f64> {
    let rates: Vec<f64> = oracle_rates(raw, pred_pos, |_| true)
        .into_values()
        .collect();
    let mut best: Option<f64> = None;
    for i in 0..rates.len() {
        for j in 0..rates.len() {
            if i == j {
                continue;
            }
            let r = match (rates[i], rates[j]) {
                (0.0, 0.0) => 1.0,
                (_, 0.0) => continue,
                (a, b) => a / b,
            };
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    }
    best
}

pub fn oracle_gbr(raw: &RawData) -> Option<f64> {
    let mut vals = Vec::new();
    for rows in raw.groups().values() {
        let n = rows.len() as f64;
        let pred = rows.iter().filter(|r| pred_pos(r)).count() as f64 / n;
        let actual = rows.iter().filter(|r| true_pos(r)).count() as f64 / n;
        if actual > 0.0 {
            vals.push(pred / actual);
        }
    }
    oracle_ratio(&vals)
}

pub fn classes_of(raw: &RawData) -> Vec<String> {
    let mut c: Vec<String> = raw
        .rows
        .iter()
        .flat_map(|r| [r.pred.clone(), r.truth.clone()])
        .collect();
    c.sort();
    c.dedup();
    c
}

/// Worst class of per-class predicted-rate ratios; `truth_conditioned`
/// restricts each class's rate to rows whose true label is that class.
pub fn oracle_meodd(raw: &RawData, truth_conditioned: bool) -> Option<f64> {
    let mut best: Option<f64> = None;
    for class in classes_of(raw) {
        let rates = if truth_conditioned {
            oracle_rates(raw, |r| r.pred == class, |r| r.truth == class)
        } else {
            oracle_rates(raw, |r| r.pred == class, |_| true)
        };
        if let Some(v) = ratio_of(&rates) {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Histogram over `bins` equal-width bins of the pooled range, smoothed
/// relative frequencies, and the largest ordered-pair KL in nats.
pub fn oracle_wkl(raw: &RawData, bins: usize, eps: f64) -> Option<f64> {
    let groups = raw.groups();
    if groups.len() < 2 {
        return None;
    }
    let all: Vec<f64> = groups.values().flatten().map(|r| r.score).collect();
    let mut lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let edges: Vec<f64> = (0..bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    let hist = |rows: &Vec<&Row>| -> Vec<f64> {
        let mut counts = vec![0usize; bins];
        for r in rows {
            // Last bin whose left edge is at or below the score.
            let mut b = 0;
            for (i, &e) in edges.iter().enumerate() {
                if e <= r.score {
                    b = i;
                }
            }
            counts[b] += 1;
        }
        let n = rows.len() as f64;
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n + eps).collect();
        let t: f64 = p.iter().sum();
        p.into_iter().map(|x| x / t).collect()
    };
    let hs: Vec<Vec<f64>> = groups.values().map(hist).collect();
    let mut best = 0.0f64;
    for (i, p) in hs.iter().enumerate() {
        for (j, q) in hs.iter().enumerate() {
            if i != j {
                let d: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| if a == b { 0.0 } else { a * (a / b).ln() })
                    .sum();
                best = best.max(d);
            }
        }
    }
    Some(best)
}

/// A random ranked list of 1 to `max_len` items over one attribute.
pub fn random_ranking<R: Rng>(rng: &mut R, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(1..=max_len);
    let groups = rng.gen_range(1..=3);
    (0..len)
        .map(|_| ["A", "B", "C"][rng.gen_range(0..groups)].to_string())
        .collect()
}

pub fn ranked_list(labels: &[String]) -> RankedList {
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    RankedList::from_labels("g", &refs)
}

/// Skew ratio at `k`, with population shares taken from the list itself.
pub fn oracle_skew(labels: &[String], k: usize) -> Option<f64> {
    let mut total: HashMap<&str, usize> = HashMap::new();
    let mut top: HashMap<&str, usize> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        *total.entry(l).or_default() += 1;
        if i < k {
            *top.entry(l).or_default() += 1;
        }
    }
    let n = labels.len() as f64;
    let skews: Vec<f64> = total
        .iter()
        .map(|(l, &c)| {
            let share = c as f64 / n;
            (*top.get(l).unwrap_or(&0) as f64 / k as f64) / share
        })
        .collect();
    oracle_ratio(&skews)
}

pub fn log_attention(k: usize) -> f64 {
    1.0 / ((k + 1) as f64).log2()
}

pub fn geometric_attention(k: usize, p: f64) -> f64 {
    p * (1.0 - p).powi(k as i32 - 1)
}

pub fn oracle_attention(labels: &[String], att: impl Fn(usize) -> f64) -> Option<f64> {
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        let e = sums.entry(l).or_insert((0.0, 0));
        e.0 += att(i + 1);
        e.1 += 1;
    }
    let means: Vec<f64> = sums.values().map(|(s, c)| s / *c as f64).collect();
    oracle_ratio(&means)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol * (1.0 + y.abs()),
        _ => false,
    }
}

pub mod checks {
    //! Property checks shared by the proptest suite and the acceptance run.

    use super::*;
    use fairsect::classification::{self as cls, LegitimateFilter, MulticlassMode, RateKind};
    use fairsect::distribution::worst_case_kl;
    use fairsect::ranking::{attention_ratio, skew_ratio_at_k, AttentionModel, PopulationShares};
    use fairsect::subgroups::build_partition;
    use fairsect::MetricResult;

    pub type Check = Result<(), String>;

    /// Every library metric on `raw`, keyed by id. Usage errors (too few
    /// subgroups or classes) map to `None`, as do undefined results.
    pub fn library_metrics(raw: &RawData) -> BTreeMap<&'static str, Option<f64>> {
        let ds = raw.dataset();
        let part = build_partition(&ds, &raw.names, 1).expect("partition builds");
        let filter = LegitimateFilter::parse("legit=true").unwrap();
        let v = |r: fairsect::Result<MetricResult>| r.ok().and_then(|m| m.value);
        let p = POSITIVE;
        BTreeMap::from([
            ("dpr", v(cls::demographic_parity_ratio(&ds, &part, p))),
            ("di", v(cls::disparate_impact(&ds, &part, p))),
            (
                "cspr",
                v(cls::conditional_statistical_parity_ratio(
                    &ds, &part, p, &filter,
                )),
            ),
            ("eopp", v(cls::equal_opportunity_ratio(&ds, &part, p))),
            (
                "tnr-parity",
                v(cls::rate_parity_ratio(&ds, &part, p, &RateKind::Tnr)),
            ),
            (
                "fpr-parity",
                v(cls::rate_parity_ratio(&ds, &part, p, &RateKind::Fpr)),
            ),
            (
                "fnr-parity",
                v(cls::rate_parity_ratio(&ds, &part, p, &RateKind::Fnr)),
            ),
            ("eodds", v(cls::equalized_odds_ratio(&ds, &part, p))),
            (
                "gbr",
                v(cls::group_benefit_ratio_intersectional(&ds, &part, p)),
            ),
            (
                "meodd",
                v(cls::multiclass_equalized_odds_ratio(
                    &ds,
                    &part,
                    MulticlassMode::PredictedRate,
                )),
            ),
            (
                "meodd-truth",
                v(cls::multiclass_equalized_odds_ratio(
                    &ds,
                    &part,
                    MulticlassMode::TrueLabelConditioned,
                )),
            ),
            ("wkl", v(worst_case_kl(&ds, &part))),
        ])
    }

    pub fn oracle_metrics(raw: &RawData) -> BTreeMap<&'static str, Option<f64>> {
        let multiclass = classes_of(raw).len() >= 2;
        BTreeMap::from([
            ("dpr", oracle_dpr(raw)),
            ("di", oracle_di(raw)),
            ("cspr", oracle_cspr(raw)),
            ("eopp", oracle_tpr(raw)),
            ("tnr-parity", oracle_tnr(raw)),
            ("fpr-parity", oracle_fpr(raw)),
            ("fnr-parity", oracle_fnr(raw)),
            ("eodds", oracle_eodds(raw)),
            ("gbr", oracle_gbr(raw)),
            (
                "meodd",
                multiclass.then(|| oracle_meodd(raw, false)).flatten(),
            ),
            (
                "meodd-truth",
                multiclass.then(|| oracle_meodd(raw, true)).flatten(),
            ),
            ("wkl", oracle_wkl(raw, 64, 1e-9)),
        ])
    }

    fn ranking_values(labels: &[String], k: usize) -> [Option<f64>; 3] {
        let list = ranked_list(labels);
        let ds = list.to_dataset(&["g"]).unwrap();
        let part = build_partition(&ds, &["g"], 1).unwrap();
        let shares = PopulationShares::from_partition(&part);
        let v = |r: fairsect::Result<MetricResult>| r.ok().and_then(|m| m.value);
        [
            v(skew_ratio_at_k(&list, &part, &shares, k)),
            v(attention_ratio(&list, &part, AttentionModel::Logarithmic)),
            v(attention_ratio(
                &list,
                &part,
                AttentionModel::geometric(0.3).unwrap(),
            )),
        ]
    }

    /// (a) every defined ratio lies in [0, 1].
    pub fn ratios_in_unit_interval(raw: &RawData) -> Check {
        for (id, v) in library_metrics(raw) {
            if id == "wkl" {
                if let Some(x) = v {
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(format!("wkl = {x} is not a finite nonnegative value"));
                    }
                }
                continue;
            }
            if let Some(x) = v {
                if !(0.0..=1.0).contains(&x) {
                    return Err(format!("{id} = {x} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// (b) DI equals DPR bit-for-bit when every pass rate is positive.
    pub fn di_equals_dpr(raw: &RawData) -> Check {
        let rates = oracle_rates(raw, pred_pos, |_| true);
        if rates.len() < 2 || rates.values().any(|&r| r == 0.0) {
            return Ok(());
        }
        let m = library_metrics(raw);
        let (di, dpr) = (m["di"].unwrap(), m["dpr"].unwrap());
        if di.to_bits() != dpr.to_bits() {
            return Err(format!("di {di:e} != dpr {dpr:e}"));
        }
        Ok(())
    }

    /// (c) included and excluded subgroups and unassigned records partition
    /// the rows exactly once, and member keys match their rows.
    pub fn partition_invariants(raw: &RawData, min_support: usize) -> Check {
        let ds = raw.dataset();
        let part = build_partition(&ds, &raw.names, min_support).map_err(|e| e.to_string())?;
        let mut seen = vec![0usize; ds.len()];
        let mut labels = Vec::new();
        let all = part
            .subgroups()
            .iter()
            .chain(part.excluded().iter().map(|e| &e.subgroup));
        for sg in all {
            labels.push(sg.label());
            for &i in sg.member_indices() {
                seen[i] += 1;
                if raw.label(&raw.rows[i]).as_deref() != Some(sg.label().as_str()) {
                    return Err(format!("row {i} placed in {}", sg.label()));
                }
            }
        }
        for &i in part.unassigned() {
            seen[i] += 1;
            if raw.label(&raw.rows[i]).is_some() {
                return Err(format!("row {i} is complete but unassigned"));
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(format!("row {i} covered {} times", seen[i]));
        }
        let n_labels = labels.len();
        labels.sort();
        labels.dedup();
        if labels.len() != n_labels {
            return Err("duplicate subgroup label".into());
        }
        let domain_product: usize = ds.schema().iter().map(|a| a.domain.len()).product();
        if part.total_candidates() != domain_product {
            return Err("candidate count differs from the domain product".into());
        }
        for sg in part.subgroups() {
            if sg.len() < min_support.max(1) {
                return Err(format!("{} included below min_support", sg.label()));
            }
        }
        Ok(())
    }

    /// (d) library values match the brute-force oracles.
    pub fn oracle_equivalence(raw: &RawData) -> Check {
        let lib = library_metrics(raw);
        let ora = oracle_metrics(raw);
        for (id, want) in ora {
            let got = lib[id];
            if !close(got, want, 1e-9) {
                return Err(format!("{id}: library {got:?}, oracle {want:?}"));
            }
        }
        Ok(())
    }

    pub fn ranking_oracle_equivalence(labels: &[String], k: usize) -> Check {
        let [skew, log_ar, geo_ar] = ranking_values(labels, k);
        let want = [
            oracle_skew(labels, k),
            oracle_attention(labels, log_attention),
            oracle_attention(labels, |k| geometric_attention(k, 0.3)),
        ];
        for (name, got, want) in [
            ("skew", skew, want[0]),
            ("attention/log", log_ar, want[1]),
            ("attention/geometric", geo_ar, want[2]),
        ] {
            if !close(got, want, 1e-9) {
                return Err(format!(
                    "{name} on {labels:?} k={k}: library {got:?}, oracle {want:?}"
                ));
            }
            if let Some(x) = got {
                if !(0.0..=1.0).contains(&x) {
                    return Err(format!("{name} = {x} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// (e) doubling every record leaves every metric value unchanged.
    pub fn duplication_invariance(raw: &RawData) -> Check {
        let once = library_metrics(raw);
        let twice = library_metrics(&raw.doubled());
        for (id, a) in once {
            let b = twice[id];
            if a.map(f64::to_bits) != b.map(f64::to_bits) {
                return Err(format!("{id}: {a:?} became {b:?} after doubling"));
            }
        }
        Ok(())
    }

    /// Reordering records leaves every metric value unchanged.
    pub fn permutation_invariance<R: Rng>(raw: &RawData, rng: &mut R) -> Check {
        let a = library_metrics(raw);
        let b = library_metrics(&raw.shuffled(rng));
        for (id, x) in a {
            if !close(x, b[id], 1e-12) {
                return Err(format!("{id}: {x:?} became {:?} after shuffling", b[id]));
            }
        }
        Ok(())
    }
}
