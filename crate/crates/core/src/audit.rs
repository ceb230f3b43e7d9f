//! End-to-end audit orchestration and report rendering.
//!
//! A run loads its inputs, builds one subgroup partition, evaluates each
//! selected metric in selection order and applies the ratio threshold.
//! Reports are deterministic: JSON keys are sorted and every float is
//! rounded to 6 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::classification::{self, LegitimateFilter, MulticlassMode, RateKind};
use crate::data::{load_dataset, ColumnRoles, Dataset};
use crate::distribution::{worst_case_divergence, Divergence, DivergenceOptions, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::metric::{min_max_ratio, MetricResult};
use crate::ranking::{self, load_ranked_list, AttentionModel, PopulationShares, RankedList};
use crate::subgroups::{build_partition, SubgroupPartition};

const MODULE: &str = "audit_cli";

pub const SCHEMA_VERSION: &str = "1";
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Classify,
    Dist,
    Rank,
    #[default]
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricId {
    Dpr,
    Di,
    Cspr,
    Eopp,
    TprParity,
    TnrParity,
    FprParity,
    FnrParity,
    Eodds,
    Gbr,
    Meodd,
    Wkl,
    Skew,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricFamily {
    Classification,
    Distribution,
    Ranking,
}

impl MetricId {
    pub const ALL: [MetricId; 14] = [
        MetricId::Dpr,
        MetricId::Di,
        MetricId::Cspr,
        MetricId::Eopp,
        MetricId::TprParity,
        MetricId::TnrParity,
        MetricId::FprParity,
        MetricId::FnrParity,
        MetricId::Eodds,
        MetricId::Gbr,
        MetricId::Meodd,
        MetricId::Wkl,
        MetricId::Skew,
        MetricId::Attention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Dpr => "dpr",
            MetricId::Di => "di",
            MetricId::Cspr => "cspr",
            MetricId::Eopp => "eopp",
            MetricId::TprParity => "tpr-parity",
            MetricId::TnrParity => "tnr-parity",
            MetricId::FprParity => "fpr-parity",
            MetricId::FnrParity => "fnr-parity",
            MetricId::Eodds => "eodds",
            MetricId::Gbr => "gbr",
            MetricId::Meodd => "meodd",
            MetricId::Wkl => "wkl",
            MetricId::Skew => "skew",
            MetricId::Attention => "attention",
        }
    }

    pub fn family(self) -> MetricFamily {
        match self {
            MetricId::Wkl => MetricFamily::Distribution,
            MetricId::Skew | MetricId::Attention => MetricFamily::Ranking,
            _ => MetricFamily::Classification,
        }
    }

    /// Min-max ratio metrics carry a threshold verdict; divergences do not.
    pub fn is_ratio(self) -> bool {
        self != MetricId::Wkl
    }

    fn allowed_in(self, mode: AuditMode) -> bool {
        match mode {
            AuditMode::Audit => true,
            AuditMode::Classify => self.family() == MetricFamily::Classification,
            AuditMode::Dist => self.family() == MetricFamily::Distribution,
            AuditMode::Rank => self.family() == MetricFamily::Ranking,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = MetricId::ALL.iter().map(|m| m.as_str()).collect();
                Error::config(
                    MODULE,
                    format!("unknown metric {s:?}; expected one of {}", known.join(", ")),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    #[default]
    Log,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Markdown,
}

/// Every effective audit setting. Echoed verbatim in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub mode: AuditMode,
    pub data: Option<PathBuf>,
    pub rank_data: Option<PathBuf>,
    pub rates_file: Option<PathBuf>,
    pub population_file: Option<PathBuf>,
    pub protected: Vec<String>,
    pub pred_col: Option<String>,
    pub label_col: Option<String>,
    pub score_col: Option<String>,
    pub item_col: Option<String>,
    /// Declared category domains, keyed by protected attribute.
    pub domains: BTreeMap<String, Vec<String>>,
    pub delimiter: char,
    pub positive: String,
    pub metrics: Vec<MetricId>,
    pub min_support: usize,
    pub legit_filter: Option<String>,
    pub attention: AttentionKind,
    pub attention_p: f64,
    pub bins: usize,
    pub divergence: Divergence,
    /// Cutoff for skew@k; defaults to the ranked list length.
    pub k: Option<usize>,
    pub multiclass_mode: MulticlassMode,
    pub threshold: f64,
    pub format: OutputFormat,
    pub strict: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            mode: AuditMode::Audit,
            data: None,
            rank_data: None,
            rates_file: None,
            population_file: None,
            protected: Vec::new(),
            pred_col: None,
            label_col: None,
            score_col: None,
            item_col: None,
            domains: BTreeMap::new(),
            delimiter: ',',
            positive: "1".into(),
            metrics: Vec::new(),
            min_support: 1,
            legit_filter: None,
            attention: AttentionKind::Log,
            attention_p: AttentionModel::DEFAULT_GEOMETRIC_P,
            bins: DEFAULT_BINS,
            divergence: Divergence::Kl,
            k: None,
            multiclass_mode: MulticlassMode::PredictedRate,
            threshold: DEFAULT_THRESHOLD,
            format: OutputFormat::Json,
            strict: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::config(
                MODULE,
                format!("threshold {} is outside (0, 1]", self.threshold),
            ));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::config(
                MODULE,
                "delimiter must be a single ASCII character",
            ));
        }
        if self.bins == 0 {
            return Err(Error::config(MODULE, "bin count must be positive"));
        }
        if self.rates_file.is_some() {
            if self.metrics.len() > 1 {
                return Err(Error::config(
                    MODULE,
                    "rates-file mode computes a single ratio; select at most one metric",
                ));
            }
            return Ok(());
        }
        if self.metrics.is_empty() {
            return Err(Error::config(MODULE, "no metrics selected"));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if self.metrics[..i].contains(m) {
                return Err(Error::config(MODULE, format!("metric {m} selected twice")));
            }
            if !m.allowed_in(self.mode) {
                return Err(Error::config(
                    MODULE,
                    format!("metric {m} is not available in {:?} mode", self.mode),
                ));
            }
        }
        if self.protected.is_empty() {
            return Err(Error::config(MODULE, "no protected attributes given"));
        }
        let needs_data = self
            .metrics
            .iter()
            .any(|m| m.family() != MetricFamily::Ranking);
        if needs_data && self.data.is_none() {
            return Err(Error::config(MODULE, "selected metrics need --data"));
        }
        let needs_rank = self
            .metrics
            .iter()
            .any(|m| m.family() == MetricFamily::Ranking);
        if needs_rank && self.rank_data.is_none() {
            return Err(Error::config(MODULE, "ranking metrics need --rank-data"));
        }
        if self.metrics.contains(&MetricId::Cspr) && self.legit_filter.is_none() {
            return Err(Error::config(MODULE, "cspr needs --legit-filter"));
        }
        if self.attention == AttentionKind::Geometric {
            AttentionModel::geometric(self.attention_p)?;
        }
        Ok(())
    }

    fn attention_model(&self) -> Result<AttentionModel> {
        match self.attention {
            AttentionKind::Log => Ok(AttentionModel::Logarithmic),
            AttentionKind::Geometric => AttentionModel::geometric(self.attention_p),
        }
    }

    fn delimiter_byte(&self) -> u8 {
        self.delimiter as u8
    }
}

/// Raw input bytes for one run, keyed by role.
#[derive(Debug, Clone, Default)]
pub struct AuditInputs {
    pub data: Option<Vec<u8>>,
    pub rank_data: Option<Vec<u8>>,
    pub rates: Option<Vec<u8>>,
    pub population: Option<Vec<u8>>,
}

impl AuditInputs {
    pub fn read(config: &AuditConfig) -> Result<Self> {
        let read = |p: &Option<PathBuf>| -> Result<Option<Vec<u8>>> {
            p.as_ref()
                .map(|path| {
                    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
                })
                .transpose()
        };
        Ok(Self {
            data: read(&config.data)?,
            rank_data: read(&config.rank_data)?,
            rates: read(&config.rates_file)?,
            population: read(&config.population_file)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub rule: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricEntry {
    pub result: MetricResult,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupCount {
    pub label: String,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedCount {
    pub label: String,
    pub members: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub attributes: Vec<String>,
    pub total_candidates: usize,
    pub min_support: usize,
    pub included: Vec<SubgroupCount>,
    pub excluded: Vec<ExcludedCount>,
    pub unassigned: usize,
}

impl PartitionSummary {
    pub fn of(partition: &SubgroupPartition) -> Self {
        Self {
            attributes: partition.attribute_names().to_vec(),
            total_candidates: partition.total_candidates(),
            min_support: partition.min_support(),
            included: partition
                .subgroups()
                .iter()
                .map(|s| SubgroupCount {
                    label: s.label(),
                    members: s.len(),
                })
                .collect(),
            excluded: partition
                .excluded()
                .iter()
                .map(|e| ExcludedCount {
                    label: e.subgroup.label(),
                    members: e.subgroup.len(),
                    reason: e.reason.to_string(),
                })
                .collect(),
            unassigned: partition.unassigned().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub partition: Option<PartitionSummary>,
    pub metrics: Vec<MetricEntry>,
    pub inputs: Vec<InputDigest>,
    pub tool_version: &'static str,
}

impl AuditReport {
    pub fn failed_verdicts(&self) -> usize {
        self.metrics
            .iter()
            .filter(|m| m.verdict.as_ref().is_some_and(|v| !v.pass))
            .count()
    }

    /// 0 when every verdict passes, 2 when any fails.
    pub fn exit_code(&self) -> i32 {
        if self.failed_verdicts() > 0 {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Value {
        let passed = self
            .metrics
            .iter()
            .filter(|m| m.verdict.as_ref().is_some_and(|v| v.pass))
            .count();
        let failed = self.failed_verdicts();
        json!({
            "schema_version": SCHEMA_VERSION,
            "tool": { "name": "fairsect", "version": self.tool_version },
            "inputs": self.inputs,
            "config": self.config,
            "partition": self.partition,
            "metrics": self.metrics.iter().map(metric_json).collect::<Vec<_>>(),
            "summary": {
                "verdicts_passed": passed,
                "verdicts_failed": failed,
                "status": if failed > 0 { "fail" } else { "pass" },
            },
        })
    }
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig6(x)).map_or(Value::Null, Value::Number)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn rounded_map(m: &BTreeMap<String, f64>) -> Value {
    Value::Object(m.iter().map(|(k, v)| (k.clone(), num(*v))).collect())
}

fn metric_json(entry: &MetricEntry) -> Value {
    let r = &entry.result;
    let mut obj = json!({
        "metric_id": r.metric_id,
        "value": opt_num(r.value),
        "per_subgroup": rounded_map(&r.per_subgroup),
        "min_subgroup": r.min_subgroup,
        "max_subgroup": r.max_subgroup,
        "notes": r.notes,
        "undefined_subgroups": r.undefined_subgroups,
        "verdict": entry.verdict.as_ref().map(|v| json!({
            "rule": v.rule,
            "threshold": num(v.threshold),
            "pass": v.pass,
        })),
    });
    if !r.families.is_empty() {
        obj["families"] = Value::Object(
            r.families
                .iter()
                .map(|(k, f)| {
                    (
                        k.clone(),
                        json!({ "value": opt_num(f.value), "per_subgroup": rounded_map(&f.per_subgroup) }),
                    )
                })
                .collect(),
        );
    }
    obj
}

fn fmt6(x: f64) -> String {
    round_sig6(x).to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_owned(), fmt6)
}

fn markdown(report: &AuditReport) -> String {
    use fmt::Write;
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "# Intersectional fairness audit\n").unwrap();
    writeln!(
        w,
        "fairsect {} · schema {} · threshold {}\n",
        report.tool_version,
        SCHEMA_VERSION,
        fmt6(report.config.threshold)
    )
    .unwrap();
    for input in &report.inputs {
        writeln!(
            w,
            "- {} `{}` sha256 `{}`",
            input.role, input.path, input.sha256
        )
        .unwrap();
    }
    if !report.inputs.is_empty() {
        writeln!(w).unwrap();
    }
    if let Some(p) = &report.partition {
        writeln!(w, "## Partition\n").unwrap();
        writeln!(
            w,
            "Attributes: {} · candidates: {} · included: {} · excluded: {} · unassigned records: {}\n",
            p.attributes.join(" × "),
            p.total_candidates,
            p.included.len(),
            p.excluded.len(),
            p.unassigned
        )
        .unwrap();
        let mut rows: Vec<(&str, usize, &str)> = p
            .included
            .iter()
            .map(|s| (s.label.as_str(), s.members, "included"))
            .chain(
                p.excluded
                    .iter()
                    .map(|e| (e.label.as_str(), e.members, e.reason.as_str())),
            )
            .collect();
        rows.sort();
        writeln!(w, "| subgroup | members | status |\n|---|---:|---|").unwrap();
        for (label, members, status) in rows {
            writeln!(w, "| {label} | {members} | {status} |").unwrap();
        }
        writeln!(w).unwrap();
    }
    for entry in &report.metrics {
        let r = &entry.result;
        writeln!(w, "## {}\n", r.metric_id).unwrap();
        write!(w, "Value: **{}**", fmt_opt(r.value)).unwrap();
        if let Some(v) = &entry.verdict {
            write!(
                w,
                " · verdict: **{}** ({}, threshold {})",
                if v.pass { "PASS" } else { "FAIL" },
                v.rule,
                fmt6(v.threshold)
            )
            .unwrap();
        }
        writeln!(w, "\n").unwrap();
        if let (Some(lo), Some(hi)) = (&r.min_subgroup, &r.max_subgroup) {
            writeln!(w, "Min: {lo} · Max: {hi}\n").unwrap();
        }
        if !r.per_subgroup.is_empty() {
            writeln!(w, "| subgroup | statistic |\n|---|---:|").unwrap();
            for (label, v) in &r.per_subgroup {
                writeln!(w, "| {label} | {} |", fmt6(*v)).unwrap();
            }
            writeln!(w).unwrap();
        }
        for (name, fam) in &r.families {
            writeln!(w, "### {name}: {}\n", fmt_opt(fam.value)).unwrap();
            writeln!(w, "| subgroup | value |\n|---|---:|").unwrap();
            for (label, v) in &fam.per_subgroup {
                writeln!(w, "| {label} | {} |", fmt6(*v)).unwrap();
            }
            writeln!(w).unwrap();
        }
        if !r.notes.is_empty() {
            writeln!(w, "Notes:\n").unwrap();
            for n in &r.notes {
                writeln!(w, "- {n}").unwrap();
            }
            writeln!(w).unwrap();
        }
    }
    writeln!(
        w,
        "Status: **{}** ({} failed verdict(s))",
        if report.failed_verdicts() > 0 {
            "FAIL"
        } else {
            "PASS"
        },
        report.failed_verdicts()
    )
    .unwrap();
    out
}

/// Renders a report. JSON output is a single canonical document ending in a
/// newline.
pub fn emit_report(report: &AuditReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(&report.to_json()).expect("json values serialize");
            s.push('\n');
            s
        }
        OutputFormat::Markdown => markdown(report),
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a two-column `label,rate` table. A first row whose second field is
/// not a number is treated as a header.
pub fn parse_rates(bytes: &[u8], delimiter: u8) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        if row.len() != 2 {
            return Err(Error::Parse {
                row: row_no,
                message: format!("expected 2 fields (subgroup, rate), found {}", row.len()),
            });
        }
        let label = row[0].trim();
        let raw = row[1].trim();
        let rate: f64 = match raw.parse() {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    row: row_no,
                    message: format!("rate {raw:?} is not a number"),
                })
            }
        };
        if out.insert(label.to_owned(), rate).is_some() {
            return Err(Error::Parse {
                row: row_no,
                message: format!("subgroup {label:?} listed twice"),
            });
        }
    }
    Ok(out)
}

fn verdict_for(id: Option<MetricId>, value: Option<f64>, threshold: f64) -> Option<Verdict> {
    if id.is_some_and(|m| !m.is_ratio()) {
        return None;
    }
    let v = value?;
    Some(Verdict {
        rule: if id == Some(MetricId::Di) {
            "four-fifths"
        } else {
            "four-fifths (extended)"
        },
        threshold,
        pass: v >= threshold,
    })
}

fn entry(id: MetricId, result: MetricResult, config: &AuditConfig) -> Result<MetricEntry> {
    let result = if config.strict {
        result.into_strict()?
    } else {
        result
    };
    let verdict = verdict_for(Some(id), result.value, config.threshold);
    Ok(MetricEntry { result, verdict })
}

fn classification_metric(
    id: MetricId,
    ds: &Dataset,
    part: &SubgroupPartition,
    config: &AuditConfig,
    filter: Option<&LegitimateFilter>,
) -> Result<MetricResult> {
    let pos = config.positive.as_str();
    let parity = |kind: RateKind| classification::rate_parity_ratio(ds, part, pos, &kind);
    match id {
        MetricId::Dpr => classification::demographic_parity_ratio(ds, part, pos),
        MetricId::Di => classification::disparate_impact(ds, part, pos),
        MetricId::Cspr => classification::conditional_statistical_parity_ratio(
            ds,
            part,
            pos,
            filter.expect("validated: cspr has a filter"),
        ),
        MetricId::Eopp => classification::equal_opportunity_ratio(ds, part, pos),
        MetricId::TprParity => parity(RateKind::Tpr),
        MetricId::TnrParity => parity(RateKind::Tnr),
        MetricId::FprParity => parity(RateKind::Fpr),
        MetricId::FnrParity => parity(RateKind::Fnr),
        MetricId::Eodds => classification::equalized_odds_ratio(ds, part, pos),
        MetricId::Gbr => classification::group_benefit_ratio_intersectional(ds, part, pos),
        MetricId::Meodd => {
            classification::multiclass_equalized_odds_ratio(ds, part, config.multiclass_mode)
        }
        MetricId::Wkl => {
            let opts = DivergenceOptions {
                bins: config.bins,
                divergence: config.divergence,
                ..DivergenceOptions::default()
            };
            let mut r = worst_case_divergence(ds, part, &opts)?.with_id("wkl");
            r.notes.push(format!("divergence: {}", config.divergence));
            Ok(r)
        }
        MetricId::Skew | MetricId::Attention => unreachable!("ranking metrics handled separately"),
    }
}

fn path_string(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

/// Runs an audit, reading inputs from the paths in `config`.
pub fn run_audit(config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let inputs = AuditInputs::read(config)?;
    run_audit_with(config, &inputs)
}

/// Runs an audit over already-read inputs.
pub fn run_audit_with(config: &AuditConfig, inputs: &AuditInputs) -> Result<AuditReport> {
    config.validate()?;
    let delim = config.delimiter_byte();
    let mut digests = Vec::new();
    let mut add_digest = |role: &'static str, path: &Option<PathBuf>, bytes: &Option<Vec<u8>>| {
        if let Some(b) = bytes {
            digests.push(InputDigest {
                role,
                path: path_string(path),
                sha256: digest(b),
            });
        }
    };
    add_digest("data", &config.data, &inputs.data);
    add_digest("rank_data", &config.rank_data, &inputs.rank_data);
    add_digest("rates", &config.rates_file, &inputs.rates);
    add_digest("population", &config.population_file, &inputs.population);

    let missing = |what: &str| Error::config(MODULE, format!("{what} input was not provided"));

    if config.rates_file.is_some() {
        let bytes = inputs.rates.as_ref().ok_or_else(|| missing("rates"))?;
        let rates = parse_rates(bytes, delim)?;
        let id = config.metrics.first().copied();
        let name = id.map_or("min-max-ratio", MetricId::as_str);
        let mut result = min_max_ratio(name, &rates)?;
        result
            .notes
            .push("computed from precomputed subgroup rates".into());
        let verdict = verdict_for(id, result.value, config.threshold);
        return Ok(AuditReport {
            config: config.clone(),
            partition: None,
            metrics: vec![MetricEntry { result, verdict }],
            inputs: digests,
            tool_version: env!("CARGO_PKG_VERSION"),
        });
    }

    let filter = config
        .legit_filter
        .as_deref()
        .map(LegitimateFilter::parse)
        .transpose()?;

    let dataset = match &inputs.data {
        Some(bytes) => {
            let roles = ColumnRoles {
                protected: config.protected.clone(),
                predicted: config.pred_col.clone(),
                truth: config.label_col.clone(),
                score: config.score_col.clone(),
                legitimate: filter
                    .as_ref()
                    .map(|f| f.flags().map(|n| (n.to_owned(), n.to_owned())).collect())
                    .unwrap_or_default(),
                domains: config.domains.clone(),
                classes: None,
                delimiter: delim,
            };
            Some(load_dataset(bytes.as_slice(), &roles)?)
        }
        None => None,
    };
    let ranked: Option<RankedList> = match &inputs.rank_data {
        Some(bytes) => Some(load_ranked_list(
            bytes.as_slice(),
            &config.protected,
            config.item_col.as_deref(),
            delim,
        )?),
        None => None,
    };

    let population = match (&dataset, &ranked) {
        (Some(ds), _) => ds.clone(),
        (None, Some(list)) => {
            let names: Vec<&str> = config.protected.iter().map(String::as_str).collect();
            list.to_dataset(&names)?
        }
        (None, None) => return Err(missing("data")),
    };
    let partition = build_partition(&population, &config.protected, config.min_support)?;

    let mut metrics = Vec::with_capacity(config.metrics.len());
    for &id in &config.metrics {
        let result = match id.family() {
            MetricFamily::Ranking => {
                let list = ranked.as_ref().ok_or_else(|| missing("rank_data"))?;
                list.check_schema(&population)?;
                match id {
                    MetricId::Skew => {
                        let shares = match &inputs.population {
                            Some(bytes) => PopulationShares::explicit(parse_rates(bytes, delim)?)?,
                            None => PopulationShares::from_partition(&partition),
                        };
                        let k = config.k.unwrap_or(list.len());
                        ranking::skew_ratio_at_k(list, &partition, &shares, k)?
                    }
                    _ => ranking::attention_ratio(list, &partition, config.attention_model()?)?,
                }
            }
            _ => {
                let ds = dataset.as_ref().ok_or_else(|| missing("data"))?;
                classification_metric(id, ds, &partition, config, filter.as_ref())?
            }
        };
        metrics.push(entry(id, result, config)?);
    }

    Ok(AuditReport {
        config: config.clone(),
        partition: Some(PartitionSummary::of(&partition)),
        metrics,
        inputs: digests,
        tool_version: env!("CARGO_PKG_VERSION"),
    })
}
