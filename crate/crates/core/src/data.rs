//! Job records, feature schemas and datasets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowIssue};
use crate::scalar::Real;

/// Name under which a record's start time can be used as a model feature.
///
/// It is not a CSV feature column: it is read from the record itself.
pub const START_TIME: &str = "start_time";

/// Source of a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Posix,
    Mpiio,
    Lmt,
    Scheduler,
    Timing,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Posix,
        FeatureGroup::Mpiio,
        FeatureGroup::Lmt,
        FeatureGroup::Scheduler,
        FeatureGroup::Timing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Posix => "posix",
            FeatureGroup::Mpiio => "mpiio",
            FeatureGroup::Lmt => "lmt",
            FeatureGroup::Scheduler => "scheduler",
            FeatureGroup::Timing => "timing",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feature names grouped by source, plus the subset that identifies an
/// application run for duplicate matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct FeatureSchema {
    groups: BTreeMap<FeatureGroup, Vec<String>>,
    observable_app_features: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observable_app_features: Option<Vec<String>>,
    groups: BTreeMap<FeatureGroup, Vec<String>>,
}

impl TryFrom<SchemaFile> for FeatureSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        FeatureSchema::new(file.groups, file.observable_app_features)
    }
}

impl From<FeatureSchema> for SchemaFile {
    fn from(schema: FeatureSchema) -> Self {
        SchemaFile {
            observable_app_features: Some(schema.observable_app_features),
            groups: schema.groups,
        }
    }
}

impl FeatureSchema {
    /// Builds a schema; `observable` defaults to posix ∪ mpiio.
    pub fn new(
        groups: BTreeMap<FeatureGroup, Vec<String>>,
        observable: Option<Vec<String>>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for (group, names) in &groups {
            for name in names {
                if name.is_empty() {
                    return Err(Error::Schema(format!("empty feature name in group {group}")));
                }
                if !seen.insert(name.as_str()) {
                    return Err(Error::Schema(format!("feature `{name}` listed twice")));
                }
                if name == START_TIME && *group != FeatureGroup::Timing {
                    return Err(Error::Schema(format!(
                        "`{START_TIME}` may only appear in the timing group"
                    )));
                }
            }
        }
        let observable = observable.unwrap_or_else(|| {
            [FeatureGroup::Posix, FeatureGroup::Mpiio]
                .iter()
                .flat_map(|g| groups.get(g).into_iter().flatten().cloned())
                .collect()
        });
        let schema = FeatureSchema {
            groups,
            observable_app_features: observable,
        };
        let mut keyed = HashSet::new();
        for name in &schema.observable_app_features {
            match schema.group_of(name) {
                None => return Err(Error::Schema(format!("observable feature `{name}` not in any group"))),
                Some(g @ (FeatureGroup::Timing | FeatureGroup::Lmt)) => {
                    return Err(Error::Schema(format!(
                        "observable feature `{name}` belongs to the {g} group"
                    )))
                }
                Some(_) => {}
            }
            if !keyed.insert(name) {
                return Err(Error::Schema(format!("observable feature `{name}` listed twice")));
            }
        }
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn group(&self, group: FeatureGroup) -> &[String] {
        self.groups.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> &BTreeMap<FeatureGroup, Vec<String>> {
        &self.groups
    }

    pub fn group_of(&self, name: &str) -> Option<FeatureGroup> {
        self.groups
            .iter()
            .find(|(_, names)| names.iter().any(|n| n == name))
            .map(|(g, _)| *g)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.group_of(name).is_some()
    }

    pub fn observable_app_features(&self) -> &[String] {
        &self.observable_app_features
    }

    /// Features stored as CSV columns, in group order. Excludes [`START_TIME`].
    pub fn column_features(&self) -> Vec<String> {
        self.groups
            .values()
            .flatten()
            .filter(|n| *n != START_TIME)
            .cloned()
            .collect()
    }

    /// Concatenation of the given groups, in the order requested.
    pub fn features_of(&self, groups: &[FeatureGroup]) -> Vec<String> {
        groups.iter().flat_map(|g| self.group(*g).iter().cloned()).collect()
    }

    /// Checks that a model feature list can be resolved against this schema.
    pub fn check_features(&self, names: &[String]) -> Result<()> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("empty feature list".into()));
        }
        for name in names {
            if name != START_TIME && !self.contains(name) {
                return Err(Error::UnknownFeature(name.clone()));
            }
        }
        Ok(())
    }
}

/// One HPC job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord<T> {
    pub job_id: String,
    pub app_id: String,
    /// Seconds since the epoch.
    pub start_time: f64,
    pub end_time: f64,
    pub features: BTreeMap<String, T>,
    /// Measured I/O throughput, bytes/second.
    pub throughput: T,
}

impl<T: Real> JobRecord<T> {
    pub fn log_throughput(&self) -> T {
        self.throughput.log10()
    }

    pub fn feature(&self, name: &str) -> Option<T> {
        self.features.get(name).copied()
    }

    /// Checks the record invariants against a schema.
    pub fn validate(&self, schema: &FeatureSchema) -> std::result::Result<(), String> {
        if self.job_id.is_empty() {
            return Err("empty job_id".into());
        }
        if !self.start_time.is_finite() || !self.end_time.is_finite() {
            return Err("non-finite start_time or end_time".into());
        }
        if self.end_time < self.start_time {
            return Err(format!(
                "end_time {} precedes start_time {}",
                self.end_time, self.start_time
            ));
        }
        if !(self.throughput.is_finite() && self.throughput > T::zero()) {
            return Err(format!("throughput must be positive, got {}", self.throughput));
        }
        for name in schema.column_features() {
            match self.features.get(&name) {
                None => return Err(format!("missing feature `{name}`")),
                Some(v) if !v.is_finite() => return Err(format!("non-finite value for `{name}`")),
                Some(_) => {}
            }
        }
        if let Some(extra) = self.features.keys().find(|k| !schema.contains(k)) {
            return Err(format!("feature `{extra}` is not in the schema"));
        }
        Ok(())
    }
}

/// A validated, immutable collection of jobs sharing a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    schema: FeatureSchema,
    records: Vec<JobRecord<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(schema: FeatureSchema, records: Vec<JobRecord<T>>) -> Result<Self> {
        let mut issues = Vec::new();
        let mut ids = HashSet::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            if let Err(message) = record.validate(&schema) {
                issues.push(RowIssue { row: i + 1, message });
            }
            if !ids.insert(record.job_id.as_str()) {
                issues.push(RowIssue {
                    row: i + 1,
                    message: format!("duplicate job_id `{}`", record.job_id),
                });
            }
        }
        if !issues.is_empty() {
            return Err(Error::InvalidRows(issues));
        }
        Ok(Dataset { schema, records })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[JobRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, JobRecord<T>> {
        self.records.iter()
    }

    /// Records at the given positions, in the given order. Indices must be
    /// distinct so job ids stay unique.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Keeps the records matching `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&JobRecord<T>) -> bool) -> Dataset<T> {
        Dataset {
            schema: self.schema.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn log_throughputs(&self) -> Vec<T> {
        self.records.iter().map(JobRecord::log_throughput).collect()
    }
}

impl<'a, T> IntoIterator for &'a Dataset<T> {
    type Item = &'a JobRecord<T>;
    type IntoIter = std::slice::Iter<'a, JobRecord<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
