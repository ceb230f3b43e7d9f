//! Per-subgroup score distributions and the worst-case pairwise divergence.
//!
//! Distributions are equal-width histograms over bin edges shared by every
//! subgroup in one audit. Each bin's relative frequency gets an additive
//! `smoothing` term before renormalisation, so every bin has positive mass
//! and divergences stay finite.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FieldRequirement};
use crate::error::{Error, Result};
use crate::metric::{Family, MetricResult};
use crate::subgroups::SubgroupPartition;

const MODULE: &str = "distribution_metrics";

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::usage(MODULE, "bin edges need at least two values"));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::usage(
                MODULE,
                "bin edges must be finite and strictly increasing",
            ));
        }
        Ok(Self(edges))
    }

    /// `bins` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::usage(MODULE, "bin count must be positive"));
        }
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::usage(MODULE, format!("empty range [{lo}, {hi}]")));
        }
        let width = hi - lo;
        let mut edges: Vec<f64> = (0..bins)
            .map(|i| lo + width * (i as f64) / (bins as f64))
            .collect();
        edges.push(hi);
        Self::new(edges)
    }

    /// Equal-width edges spanning the pooled range of `scores`. A degenerate
    /// range `[v, v]` is widened to `[v - 0.5, v + 0.5]`.
    pub fn pooled<I: IntoIterator<Item = f64>>(scores: I, bins: usize) -> Result<Self> {
        let (lo, hi) = scores
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            });
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::usage(MODULE, "no finite scores to bin"));
        }
        if lo == hi {
            Self::uniform(lo - 0.5, hi + 0.5, bins)
        } else {
            Self::uniform(lo, hi, bins)
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn bins(&self) -> usize {
        self.0.len() - 1
    }

    /// Bin holding `x`; values outside the range clamp to the end bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let last = self.bins() - 1;
        if x <= self.0[0] {
            return 0;
        }
        // Number of edges <= x, minus one, is the bin whose left edge is <= x.
        self.0
            .partition_point(|&e| e <= x)
            .saturating_sub(1)
            .min(last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEstimate {
    bin_edges: BinEdges,
    probabilities: Vec<f64>,
    sample_count: usize,
}

impl DistributionEstimate {
    pub fn bin_edges(&self) -> &BinEdges {
        &self.bin_edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
}

pub fn estimate_distribution(scores: &[f64], edges: &BinEdges) -> Result<DistributionEstimate> {
    estimate_distribution_with(scores, edges, DEFAULT_SMOOTHING)
}

pub fn estimate_distribution_with(
    scores: &[f64],
    edges: &BinEdges,
    smoothing: f64,
) -> Result<DistributionEstimate> {
    if scores.is_empty() {
        return Err(Error::usage(
            MODULE,
            "cannot estimate a distribution from zero scores",
        ));
    }
    if smoothing.is_nan() || smoothing <= 0.0 || !smoothing.is_finite() {
        return Err(Error::usage(
            MODULE,
            "smoothing must be a positive finite number",
        ));
    }
    let mut counts = vec![0usize; edges.bins()];
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::usage(MODULE, format!("score {s} is not finite")));
        }
        counts[edges.bin_of(s)] += 1;
    }
    let n = scores.len() as f64;
    let mut probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n + smoothing).collect();
    let total: f64 = probabilities.iter().sum();
    for p in &mut probabilities {
        *p /= total;
    }
    Ok(DistributionEstimate {
        bin_edges: edges.clone(),
        probabilities,
        sample_count: scores.len(),
    })
}

fn check_shared(p: &DistributionEstimate, q: &DistributionEstimate) -> Result<()> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::usage(MODULE, "distributions do not share bin edges"));
    }
    Ok(())
}

/// Discrete KL divergence D(p || q) in nats.
pub fn kl_divergence(p: &DistributionEstimate, q: &DistributionEstimate) -> Result<f64> {
    check_shared(p, q)?;
    let d: f64 = p
        .probabilities
        .iter()
        .zip(&q.probabilities)
        .map(|(&a, &b)| if a == b { 0.0 } else { a * (a / b).ln() })
        .sum();
    Ok(d.max(0.0))
}

/// Total variation distance: half the L1 distance between the histograms.
pub fn total_variation(p: &DistributionEstimate, q: &DistributionEstimate) -> Result<f64> {
    check_shared(p, q)?;
    Ok(0.5
        * p.probabilities
            .iter()
            .zip(&q.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    #[default]
    Kl,
    Tv,
}

impl Divergence {
    pub fn eval(self, p: &DistributionEstimate, q: &DistributionEstimate) -> Result<f64> {
        match self {
            Divergence::Kl => kl_divergence(p, q),
            Divergence::Tv => total_variation(p, q),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Divergence::Kl => "kl",
            Divergence::Tv => "tv",
        })
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Divergence::Kl),
            "tv" => Ok(Divergence::Tv),
            other => Err(Error::config(
                MODULE,
                format!("unknown divergence {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceOptions {
    pub bins: usize,
    pub divergence: Divergence,
    pub smoothing: f64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            divergence: Divergence::Kl,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

/// W-D_KL with default options.
pub fn worst_case_kl(dataset: &Dataset, partition: &SubgroupPartition) -> Result<MetricResult> {
    worst_case_divergence(dataset, partition, &DivergenceOptions::default())
}

/// Largest divergence over every ordered pair of distinct subgroups.
///
/// `min_subgroup` and `max_subgroup` carry the achieving pair as
/// (first argument, second argument). `per_subgroup` holds, for each
/// subgroup, its largest divergence to any other subgroup; the `pairs`
/// family lists every ordered pair as `a || b`.
pub fn worst_case_divergence(
    dataset: &Dataset,
    partition: &SubgroupPartition,
    options: &DivergenceOptions,
) -> Result<MetricResult> {
    let n = partition.subgroups().len();
    if n < 2 {
        return Err(Error::usage(
            MODULE,
            format!("worst-case divergence needs at least 2 included subgroups, partition has {n}"),
        ));
    }
    let req = FieldRequirement::score();
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for sg in partition.subgroups() {
        let mut scores = Vec::with_capacity(sg.len());
        for &i in sg.member_indices() {
            let rec = &dataset.records()[i];
            match rec.score {
                Some(s) => scores.push(s),
                None => {
                    return Err(Error::MissingField {
                        module: MODULE,
                        record: i,
                        field: req.missing(rec).remove(0),
                    })
                }
            }
        }
        samples.insert(sg.label(), scores);
    }
    let edges = BinEdges::pooled(samples.values().flatten().copied(), options.bins)?;
    let estimates: Vec<(&String, DistributionEstimate)> = samples
        .iter()
        .map(|(label, s)| {
            Ok((
                label,
                estimate_distribution_with(s, &edges, options.smoothing)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut pairs = BTreeMap::new();
    let mut per_subgroup = BTreeMap::new();
    let mut best: Option<(f64, &String, &String)> = None;
    for (li, p) in &estimates {
        let mut worst_from = 0.0f64;
        for (lj, q) in &estimates {
            if li == lj {
                continue;
            }
            let d = options.divergence.eval(p, q)?;
            pairs.insert(format!("{li} || {lj}"), d);
            worst_from = worst_from.max(d);
            if best.is_none_or(|(b, _, _)| d > b) {
                best = Some((d, li, lj));
            }
        }
        per_subgroup.insert((*li).clone(), worst_from);
    }
    let (value, from, to) = best.expect("at least two subgroups");
    let id = match options.divergence {
        Divergence::Kl => "wkl",
        Divergence::Tv => "wtv",
    };
    let unit = match options.divergence {
        Divergence::Kl => "nats",
        Divergence::Tv => "total variation",
    };
    Ok(MetricResult {
        metric_id: id.to_owned(),
        value: Some(value),
        per_subgroup,
        min_subgroup: Some(from.clone()),
        max_subgroup: Some(to.clone()),
        notes: vec![
            format!("achieving pair: {from} || {to}"),
            format!(
                "{} shared bins over [{}, {}], smoothing {}, {unit}",
                edges.bins(),
                edges.edges()[0],
                edges.edges()[edges.bins()],
                options.smoothing
            ),
        ],
        undefined_subgroups: Vec::new(),
        families: [(
            "pairs".to_owned(),
            Family {
                value: Some(value),
                per_subgroup: pairs,
            },
        )]
        .into_iter()
        .collect(),
    })
}
