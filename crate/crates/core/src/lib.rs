//! Intersectional fairness auditing for recorded model outputs.
//!
//! Protected attributes are crossed into Cartesian-product subgroups
//! ([`subgroups`]), a per-subgroup statistic is computed for each, and the
//! statistic's worst-case spread is reported as a min-max ratio
//! ([`metric::min_max_ratio`]) or, for continuous outputs, the largest
//! pairwise divergence ([`distribution`]).
//!
//! ```
//! use fairsect::data::{Dataset, Record};
//! use fairsect::subgroups::build_partition;
//! use fairsect::classification::demographic_parity_ratio;
//!
//! let rec = |race: &str, gender: &str, pass: bool| Record {
//!     attributes: [("race", race), ("gender", gender)]
//!         .iter()
//!         .map(|(k, v)| (k.to_string(), v.to_string()))
//!         .collect(),
//!     predicted_label: Some(if pass { "1" } else { "0" }.to_string()),
//!     ..Record::default()
//! };
//! let ds = Dataset::from_records(
//!     &["race", "gender"],
//!     vec![
//!         rec("black", "man", true),
//!         rec("black", "woman", false),
//!         rec("white", "man", false),
//!         rec("white", "woman", true),
//!     ],
//! )
//! .unwrap();
//!
//! let by_race = build_partition(&ds, &["race"], 1).unwrap();
//! assert_eq!(demographic_parity_ratio(&ds, &by_race, "1").unwrap().value, Some(1.0));
//!
//! let crossed = build_partition(&ds, &["race", "gender"], 1).unwrap();
//! assert_eq!(demographic_parity_ratio(&ds, &crossed, "1").unwrap().value, Some(0.0));
//! ```

pub mod audit;
pub mod classification;
pub mod data;
pub mod distribution;
pub mod error;
pub mod metric;
pub mod ranking;
pub mod subgroups;

pub use error::{Error, Result};
pub use metric::{min_max_ratio, MetricResult};
