//! Record schema and tabular ingestion.
//!
//! Input is delimiter-separated UTF-8 text with a header row. Every cell is
//! trimmed before use and compared byte-for-byte afterwards; empty cells are
//! treated as missing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "data_model";

/// A protected attribute and its finite, ordered set of categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub domain: Vec<String>,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, domain: Vec<String>) -> Result<Self> {
        let name = name.into();
        if domain.is_empty() {
            return Err(Error::config(
                MODULE,
                format!("attribute {name:?} has an empty domain"),
            ));
        }
        let mut seen = BTreeSet::new();
        for label in &domain {
            if !seen.insert(label.as_str()) {
                return Err(Error::config(
                    MODULE,
                    format!("attribute {name:?} lists category {label:?} twice"),
                ));
            }
        }
        Ok(Self { name, domain })
    }

    pub fn contains(&self, label: &str) -> bool {
        self.domain.iter().any(|d| d == label)
    }
}

/// One row of recorded model output.
///
/// A protected attribute that is absent from `attributes` means the value was
/// missing in the input; such records are left out of subgroup partitions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Record {
    pub attributes: BTreeMap<String, String>,
    pub predicted_label: Option<String>,
    pub true_label: Option<String>,
    pub score: Option<f64>,
    pub legitimate_flags: BTreeMap<String, bool>,
}

/// Immutable table of records plus the protected-attribute schema and the
/// ordered set of output classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<AttributeSchema>,
    records: Vec<Record>,
    class_set: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking that every protected value belongs to its
    /// declared domain and that `class_set` covers every label in use.
    pub fn new(
        schema: Vec<AttributeSchema>,
        records: Vec<Record>,
        class_set: Vec<String>,
    ) -> Result<Self> {
        let mut names = BTreeSet::new();
        for attr in &schema {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::config(
                    MODULE,
                    format!("protected attribute {:?} declared twice", attr.name),
                ));
            }
        }
        let classes: BTreeSet<&str> = class_set.iter().map(String::as_str).collect();
        if classes.len() != class_set.len() {
            return Err(Error::config(MODULE, "class set contains duplicates"));
        }
        for (idx, rec) in records.iter().enumerate() {
            for (name, value) in &rec.attributes {
                let attr = schema.iter().find(|a| &a.name == name).ok_or_else(|| {
                    Error::config(
                        MODULE,
                        format!("record {idx} carries undeclared attribute {name:?}"),
                    )
                })?;
                if !attr.contains(value) {
                    return Err(Error::Schema {
                        row: idx + 2,
                        column: name.clone(),
                        value: value.clone(),
                    });
                }
            }
            for label in rec.predicted_label.iter().chain(rec.true_label.iter()) {
                if !classes.contains(label.as_str()) {
                    return Err(Error::config(
                        MODULE,
                        format!("record {idx} uses label {label:?} outside the class set"),
                    ));
                }
            }
        }
        Ok(Self {
            schema,
            records,
            class_set,
        })
    }

    /// Builds a dataset whose domains and class set are inferred from the
    /// records (distinct values, sorted lexicographically).
    pub fn from_records(attribute_names: &[&str], records: Vec<Record>) -> Result<Self> {
        let mut schema = Vec::with_capacity(attribute_names.len());
        for name in attribute_names {
            let domain: BTreeSet<&str> = records
                .iter()
                .filter_map(|r| r.attributes.get(*name).map(String::as_str))
                .collect();
            schema.push(AttributeSchema::new(
                *name,
                domain.into_iter().map(str::to_owned).collect(),
            )?);
        }
        let class_set = infer_classes(&records);
        Self::new(schema, records, class_set)
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSchema> {
        self.schema.iter().find(|a| a.name == name)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }

    /// Serializes to the canonical delimited form read back by
    /// [`Dataset::canonical_roles`].
    pub fn to_csv(&self) -> String {
        let legit = self.legitimate_names();
        let mut header: Vec<String> = self.schema.iter().map(|a| a.name.clone()).collect();
        header.extend(["predicted".into(), "true".into(), "score".into()]);
        header.extend(legit.iter().map(|l| format!("legit:{l}")));

        let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
        wtr.write_record(&header).expect("in-memory write");
        for rec in &self.records {
            let mut row: Vec<String> = self
                .schema
                .iter()
                .map(|a| rec.attributes.get(&a.name).cloned().unwrap_or_default())
                .collect();
            row.push(rec.predicted_label.clone().unwrap_or_default());
            row.push(rec.true_label.clone().unwrap_or_default());
            row.push(rec.score.map(|s| s.to_string()).unwrap_or_default());
            for l in &legit {
                row.push(
                    rec.legitimate_flags
                        .get(l)
                        .map(|b| b.to_string())
                        .unwrap_or_default(),
                );
            }
            wtr.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Column roles matching the layout written by [`Dataset::to_csv`].
    pub fn canonical_roles(&self) -> ColumnRoles {
        ColumnRoles {
            protected: self.schema.iter().map(|a| a.name.clone()).collect(),
            predicted: Some("predicted".into()),
            truth: Some("true".into()),
            score: Some("score".into()),
            legitimate: self
                .legitimate_names()
                .into_iter()
                .map(|l| (format!("legit:{l}"), l))
                .collect(),
            domains: self
                .schema
                .iter()
                .filter(|a| !a.domain.is_empty())
                .map(|a| (a.name.clone(), a.domain.clone()))
                .collect(),
            classes: Some(self.class_set.clone()),
            delimiter: b',',
        }
    }

    fn legitimate_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self
            .records
            .iter()
            .flat_map(|r| r.legitimate_flags.keys())
            .collect();
        names.into_iter().cloned().collect()
    }
}

fn infer_classes(records: &[Record]) -> Vec<String> {
    let set: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.predicted_label.iter().chain(r.true_label.iter()))
        .map(String::as_str)
        .collect();
    set.into_iter().map(str::to_owned).collect()
}

/// Maps input columns onto record roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnRoles {
    pub protected: Vec<String>,
    pub predicted: Option<String>,
    pub truth: Option<String>,
    pub score: Option<String>,
    /// (column name, flag name) pairs. The flag name is what filters refer to.
    pub legitimate: Vec<(String, String)>,
    /// Explicitly declared domains; attributes not listed here are inferred.
    pub domains: BTreeMap<String, Vec<String>>,
    pub classes: Option<Vec<String>>,
    pub delimiter: u8,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            protected: Vec::new(),
            predicted: None,
            truth: None,
            score: None,
            legitimate: Vec::new(),
            domains: BTreeMap::new(),
            classes: None,
            delimiter: b',',
        }
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw {
        "1" | "true" | "TRUE" | "True" | "yes" => Some(true),
        "0" | "false" | "FALSE" | "False" | "no" => Some(false),
        _ => None,
    }
}

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::config(MODULE, format!("missing required column {name:?}")))
}

/// Reads a delimited table into a [`Dataset`].
pub fn load_dataset<R: Read>(source: R, roles: &ColumnRoles) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(roles.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(source);

    let mut rows = rdr.records();
    let header: Vec<String> = match rows.next() {
        Some(Ok(h)) => h.iter().map(|f| f.trim().to_owned()).collect(),
        Some(Err(e)) => {
            return Err(Error::Parse {
                row: 1,
                message: e.to_string(),
            })
        }
        None => {
            return Err(Error::Parse {
                row: 1,
                message: "missing header row".into(),
            })
        }
    };

    if roles.protected.is_empty() {
        return Err(Error::config(
            MODULE,
            "no protected attribute columns given",
        ));
    }
    let protected_idx = roles
        .protected
        .iter()
        .map(|p| column_index(&header, p))
        .collect::<Result<Vec<_>>>()?;
    let pred_idx = roles
        .predicted
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let truth_idx = roles
        .truth
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let score_idx = roles
        .score
        .as_deref()
        .map(|c| column_index(&header, c))
        .transpose()?;
    let legit_idx = roles
        .legitimate
        .iter()
        .map(|(col, flag)| Ok((column_index(&header, col)?, flag.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut declared = Vec::with_capacity(roles.protected.len());
    for name in &roles.protected {
        declared.push(match roles.domains.get(name) {
            Some(d) => Some(AttributeSchema::new(name.clone(), d.clone())?),
            None => None,
        });
    }
    if let Some(classes) = &roles.classes {
        if classes.iter().collect::<BTreeSet<_>>().len() != classes.len() {
            return Err(Error::config(
                MODULE,
                "declared class set contains duplicates",
            ));
        }
    }

    let mut records = Vec::new();
    let mut observed: Vec<BTreeSet<String>> = vec![BTreeSet::new(); roles.protected.len()];
    let mut fallback_row = 1usize;
    for row in rows {
        fallback_row += 1;
        let row = row.map_err(|e| Error::Parse {
            row: fallback_row,
            message: e.to_string(),
        })?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(fallback_row);
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let cell = |i: usize| -> Option<&str> {
            let v = row.get(i).unwrap_or("").trim();
            (!v.is_empty()).then_some(v)
        };

        let mut rec = Record::default();
        for (k, &i) in protected_idx.iter().enumerate() {
            if let Some(v) = cell(i) {
                let name = &roles.protected[k];
                if let Some(schema) = &declared[k] {
                    if !schema.contains(v) {
                        return Err(Error::Schema {
                            row: line,
                            column: name.clone(),
                            value: v.to_owned(),
                        });
                    }
                } else if !observed[k].contains(v) {
                    observed[k].insert(v.to_owned());
                }
                rec.attributes.insert(name.clone(), v.to_owned());
            }
        }
        rec.predicted_label = pred_idx.and_then(cell).map(str::to_owned);
        rec.true_label = truth_idx.and_then(cell).map(str::to_owned);
        if let Some(raw) = score_idx.and_then(cell) {
            let score: f64 = raw.parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("score {raw:?} is not a number"),
            })?;
            if !score.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    message: format!("score {raw:?} is not finite"),
                });
            }
            rec.score = Some(score);
        }
        for (i, flag) in &legit_idx {
            if let Some(raw) = cell(*i) {
                let value = parse_flag(raw).ok_or_else(|| Error::Parse {
                    row: line,
                    message: format!("flag {flag:?} has non-boolean value {raw:?}"),
                })?;
                rec.legitimate_flags.insert(flag.clone(), value);
            }
        }
        if let Some(classes) = &roles.classes {
            for label in rec.predicted_label.iter().chain(rec.true_label.iter()) {
                if !classes.contains(label) {
                    return Err(Error::Schema {
                        row: line,
                        column: "label".into(),
                        value: label.clone(),
                    });
                }
            }
        }
        records.push(rec);
    }

    let schema = roles
        .protected
        .iter()
        .zip(declared)
        .zip(observed)
        .map(|((name, declared), observed)| match declared {
            Some(s) => Ok(s),
            // Nothing observed (header-only input): domain stays empty.
            None if observed.is_empty() => Ok(AttributeSchema {
                name: name.clone(),
                domain: Vec::new(),
            }),
            None => AttributeSchema::new(name.clone(), observed.into_iter().collect()),
        })
        .collect::<Result<Vec<_>>>()?;
    let class_set = roles
        .classes
        .clone()
        .unwrap_or_else(|| infer_classes(&records));
    Dataset::new(schema, records, class_set)
}

/// Which record fields an operation needs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldRequirement {
    pub predicted: bool,
    pub truth: bool,
    pub score: bool,
    pub legitimate: Vec<String>,
}

impl FieldRequirement {
    pub fn predicted() -> Self {
        Self {
            predicted: true,
            ..Self::default()
        }
    }

    pub fn predicted_and_truth() -> Self {
        Self {
            predicted: true,
            truth: true,
            ..Self::default()
        }
    }

    pub fn score() -> Self {
        Self {
            score: true,
            ..Self::default()
        }
    }

    /// Names of the fields `record` lacks.
    pub fn missing(&self, record: &Record) -> Vec<String> {
        let mut out = Vec::new();
        if self.predicted && record.predicted_label.is_none() {
            out.push("predicted".to_owned());
        }
        if self.truth && record.true_label.is_none() {
            out.push("true".to_owned());
        }
        if self.score && record.score.is_none() {
            out.push("score".to_owned());
        }
        for flag in &self.legitimate {
            if !record.legitimate_flags.contains_key(flag) {
                out.push(format!("legit:{flag}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: usize,
    pub missing: Vec<String>,
}

/// Lists every record that lacks a field named by `requirement`.
pub fn validate_for_metric(dataset: &Dataset, requirement: &FieldRequirement) -> Vec<Violation> {
    dataset
        .records()
        .iter()
        .enumerate()
        .filter_map(|(record, r)| {
            let missing = requirement.missing(r);
            (!missing.is_empty()).then_some(Violation { record, missing })
        })
        .collect()
}
