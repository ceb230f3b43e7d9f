//! Browser bindings for three interactive fairsect explorers.
//!
//! Each export takes plain numbers or strings and returns a JSON document
//! for the page script to render. The `*_json` functions hold the logic and
//! are callable natively, which is how the tests exercise them.

use fairsect::classification::demographic_parity_ratio;
use fairsect::data::{Dataset, Record};
use fairsect::distribution::{worst_case_divergence, Divergence, DivergenceOptions};
use fairsect::ranking::{
    attention_ratio, skew_ratio_at_k, AttentionModel, PopulationShares, RankedList,
};
use fairsect::subgroups::build_partition;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest sample size the KL explorer accepts per group.
pub const MAX_SAMPLES: u32 = 200_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

fn dpr_value(ds: &Dataset, attrs: &[&str]) -> Result<Value, String> {
    let part = build_partition(ds, attrs, 1).map_err(err)?;
    let r = demographic_parity_ratio(ds, &part, "1").map_err(err)?;
    Ok(json!({
        "value": r.value,
        "per_subgroup": r.per_subgroup,
        "min_subgroup": r.min_subgroup,
        "max_subgroup": r.max_subgroup,
    }))
}

/// DPR on race alone, gender alone and race×gender for a 2×2 population of
/// `size` people per cell, where `passes` gives the pass count in the order
/// black×man, black×woman, white×man, white×woman.
pub fn gerrymander_json(passes: [u32; 4], size: u32) -> Result<Value, String> {
    if size == 0 || size > 10_000 {
        return Err("cell size must be between 1 and 10000".into());
    }
    if let Some(p) = passes.iter().find(|&&p| p > size) {
        return Err(format!("pass count {p} exceeds cell size {size}"));
    }
    let cells = [
        ("black", "man"),
        ("black", "woman"),
        ("white", "man"),
        ("white", "woman"),
    ];
    let mut records = Vec::new();
    for ((race, gender), &pass) in cells.iter().zip(&passes) {
        for i in 0..size {
            records.push(Record {
                attributes: [("race", *race), ("gender", *gender)]
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                predicted_label: Some(if i < pass { "1" } else { "0" }.to_string()),
                ..Record::default()
            });
        }
    }
    let ds = Dataset::from_records(&["race", "gender"], records).map_err(err)?;
    Ok(json!({
        "race": dpr_value(&ds, &["race"])?,
        "gender": dpr_value(&ds, &["gender"])?,
        "intersectional": dpr_value(&ds, &["race", "gender"])?,
    }))
}

#[wasm_bindgen]
pub fn gerrymander(
    black_man: u32,
    black_woman: u32,
    white_man: u32,
    white_woman: u32,
    size: u32,
) -> Result<String, JsError> {
    to_js(gerrymander_json(
        [black_man, black_woman, white_man, white_woman],
        size,
    ))
}

/// Worst-case divergence between samples of N(0, 1) and N(`shift`, 1).
/// Reports the histogram estimate next to the closed form shift²/2.
pub fn gaussian_kl_json(
    shift: f64,
    samples: u32,
    bins: u32,
    divergence: &str,
    seed: u64,
) -> Result<Value, String> {
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(format!("samples must be between 1 and {MAX_SAMPLES}"));
    }
    if !shift.is_finite() {
        return Err("shift must be a finite number".into());
    }
    let divergence: Divergence = divergence.parse().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(2 * samples as usize);
    for (group, mean) in [("p", 0.0), ("q", shift)] {
        let d = Normal::new(mean, 1.0).map_err(err)?;
        for _ in 0..samples {
            records.push(Record {
                attributes: [("group".to_string(), group.to_string())]
                    .into_iter()
                    .collect(),
                score: Some(d.sample(&mut rng)),
                ..Record::default()
            });
        }
    }
    let ds = Dataset::from_records(&["group"], records).map_err(err)?;
    let part = build_partition(&ds, &["group"], 1).map_err(err)?;
    let opts = DivergenceOptions {
        bins: bins as usize,
        divergence,
        ..DivergenceOptions::default()
    };
    let r = worst_case_divergence(&ds, &part, &opts).map_err(err)?;
    Ok(json!({
        "estimate": r.value,
        "analytic_kl": shift * shift / 2.0,
        "divergence": divergence.to_string(),
        "from": r.min_subgroup,
        "to": r.max_subgroup,
        "pairs": r.families.get("pairs").map(|f| &f.per_subgroup),
    }))
}

#[wasm_bindgen]
pub fn gaussian_kl(
    shift: f64,
    samples: u32,
    bins: u32,
    divergence: &str,
    seed: u32,
) -> Result<String, JsError> {
    to_js(gaussian_kl_json(
        shift,
        samples,
        bins,
        divergence,
        seed as u64,
    ))
}

/// Skew@k and attention ratio for a ranking written as one group letter per
/// position, e.g. `AABABBB`. Population shares come from the list itself.
pub fn ranking_json(sequence: &str, k: u32, model: &str, p: f64) -> Result<Value, String> {
    let labels: Vec<String> = sequence
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| c.to_string())
        .collect();
    if labels.is_empty() {
        return Err("enter at least one group letter".into());
    }
    if labels.len() > 1000 {
        return Err("rankings are limited to 1000 positions".into());
    }
    let model = match model {
        "log" => AttentionModel::Logarithmic,
        "geometric" => AttentionModel::geometric(p).map_err(err)?,
        other => return Err(format!("unknown attention model {other:?}")),
    };
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let list = RankedList::from_labels("group", &refs);
    let ds = list.to_dataset(&["group"]).map_err(err)?;
    let part = build_partition(&ds, &["group"], 1).map_err(err)?;
    let shares = PopulationShares::from_partition(&part);
    let k = (k as usize).clamp(1, list.len());
    let skew = skew_ratio_at_k(&list, &part, &shares, k).map_err(err)?;
    let attention = attention_ratio(&list, &part, model).map_err(err)?;
    Ok(json!({
        "k": k,
        "skew": { "value": skew.value, "per_subgroup": skew.per_subgroup },
        "attention": { "value": attention.value, "per_subgroup": attention.per_subgroup },
        "model": model.to_string(),
    }))
}

#[wasm_bindgen]
pub fn ranking(sequence: &str, k: u32, model: &str, p: f64) -> Result<String, JsError> {
    to_js(ranking_json(sequence, k, model, p))
}
