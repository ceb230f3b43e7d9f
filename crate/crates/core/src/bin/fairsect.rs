use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairsect::audit::{
    emit_report, run_audit, AttentionKind, AuditConfig, AuditMode, MetricId, OutputFormat,
};
use fairsect::classification::MulticlassMode;
use fairsect::distribution::Divergence;
use fairsect::Error;

/// Intersectional fairness audits over recorded model outputs.
#[derive(Parser, Debug)]
#[command(name = "fairsect", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classification parity metrics (dpr, di, cspr, eopp, eodds, gbr, ...).
    Classify(Opts),
    /// Worst-case divergence between subgroup score distributions.
    Dist(Opts),
    /// Ranking metrics (skew, attention).
    Rank(Opts),
    /// Any mix of metrics over the same inputs.
    Audit(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// TOML file with default settings; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record-level CSV input.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ranked list CSV with a `rank` column.
    #[arg(long)]
    rank_data: Option<PathBuf>,
    /// Two-column `subgroup,rate` table; skips record-level computation.
    #[arg(long)]
    rates_file: Option<PathBuf>,
    /// Two-column `subgroup,share` table of population shares for skew.
    #[arg(long)]
    population: Option<PathBuf>,
    /// Protected attribute columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    protected: Vec<String>,
    #[arg(long)]
    pred_col: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    score_col: Option<String>,
    #[arg(long)]
    item_col: Option<String>,
    /// Declared domain for an attribute, as `attr=v1|v2|...`. Repeatable.
    #[arg(long = "domain", value_name = "ATTR=V1|V2")]
    domains: Vec<String>,
    /// Label treated as the favourable outcome.
    #[arg(long)]
    positive: Option<String>,
    /// Metric ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long)]
    min_support: Option<usize>,
    /// Legitimate-factor condition such as `employed=true,insured=false`.
    #[arg(long)]
    legit_filter: Option<String>,
    /// Multiclass equalized odds mode: predicted-rate or true-label-conditioned.
    #[arg(long)]
    multiclass_mode: Option<String>,
    /// Attention model: log or geometric.
    #[arg(long)]
    attention: Option<String>,
    #[arg(long)]
    attention_p: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Divergence: kl or tv.
    #[arg(long)]
    divergence: Option<String>,
    /// Cutoff for skew@k (defaults to the list length).
    #[arg(long)]
    k: Option<usize>,
    /// Ratio threshold in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Output format: json or markdown.
    #[arg(long)]
    format: Option<String>,
    /// Field delimiter for every input file.
    #[arg(long)]
    delimiter: Option<char>,
    /// Shorthand for `--delimiter '\t'`.
    #[arg(long, conflicts_with = "delimiter")]
    tab: bool,
    /// Treat undefined subgroups as errors instead of exclusions.
    #[arg(long)]
    strict: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(flag: &str, raw: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(raw.to_owned())).map_err(|_| Error::Config {
        module: "audit_cli",
        message: format!("invalid value {raw:?} for --{flag}"),
    })
}

fn build_config(mode: AuditMode, o: &Opts) -> Result<AuditConfig, Error> {
    let mut c = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config {
                module: "audit_cli",
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => AuditConfig::default(),
    };
    c.mode = mode;
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                c.$field = Some(v.clone());
            }
        };
    }
    take!(data);
    take!(rank_data);
    take!(rates_file);
    take!(pred_col);
    take!(label_col);
    take!(score_col);
    take!(item_col);
    take!(legit_filter);
    if let Some(p) = &o.population {
        c.population_file = Some(p.clone());
    }
    if !o.protected.is_empty() {
        c.protected = o.protected.clone();
    }
    if !o.domains.is_empty() {
        let mut domains = BTreeMap::new();
        for d in &o.domains {
            let (attr, values) = d.split_once('=').ok_or_else(|| Error::Config {
                module: "audit_cli",
                message: format!("--domain {d:?} is not of the form attr=v1|v2"),
            })?;
            domains.insert(
                attr.trim().to_owned(),
                values.split('|').map(|v| v.trim().to_owned()).collect(),
            );
        }
        c.domains = domains;
    }
    if let Some(p) = &o.positive {
        c.positive = p.clone();
    }
    if !o.metrics.is_empty() {
        c.metrics = o
            .metrics
            .iter()
            .map(|m| m.trim().parse::<MetricId>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = o.min_support {
        c.min_support = v;
    }
    if let Some(v) = &o.multiclass_mode {
        c.multiclass_mode = parse_enum::<MulticlassMode>("multiclass-mode", v)?;
    }
    if let Some(v) = &o.attention {
        c.attention = parse_enum::<AttentionKind>("attention", v)?;
    }
    if let Some(v) = o.attention_p {
        c.attention_p = v;
    }
    if let Some(v) = o.bins {
        c.bins = v;
    }
    if let Some(v) = &o.divergence {
        c.divergence = v.parse::<Divergence>()?;
    }
    if let Some(v) = o.k {
        c.k = Some(v);
    }
    if let Some(v) = o.threshold {
        c.threshold = v;
    }
    if let Some(v) = &o.format {
        c.format = parse_enum::<OutputFormat>("format", v)?;
    }
    if o.tab {
        c.delimiter = '\t';
    } else if let Some(d) = o.delimiter {
        c.delimiter = d;
    }
    c.strict |= o.strict;
    Ok(c)
}

fn run(cli: Cli) -> Result<i32, Error> {
    let (mode, opts) = match &cli.command {
        Command::Classify(o) => (AuditMode::Classify, o),
        Command::Dist(o) => (AuditMode::Dist, o),
        Command::Rank(o) => (AuditMode::Rank, o),
        Command::Audit(o) => (AuditMode::Audit, o),
    };
    let config = build_config(mode, opts)?;
    let report = run_audit(&config)?;
    let text = emit_report(&report, config.format);
    match &opts.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        }
        None => print!("{text}"),
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fairsect: error: {e}");
            ExitCode::from(1)
        }
    }
}
