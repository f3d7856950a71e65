//! Loading, validating, splitting and keying tabular job logs.
//!
//! The CSV layout is `job_id, app_id, start_time, end_time, throughput`
//! followed by one column per schema feature. Extra columns are ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, JobRecord};
use crate::error::{Error, Result, RowIssue};
use crate::scalar::Real;

pub const REQUIRED_COLUMNS: [&str; 5] = ["job_id", "app_id", "start_time", "end_time", "throughput"];

pub fn load_schema(path: impl AsRef<Path>) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)?;
    FeatureSchema::from_toml_str(&text)
}

pub fn write_schema(schema: &FeatureSchema, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, schema.to_toml_string()?)?;
    Ok(())
}

pub fn load_csv<T: Real>(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset<T>> {
    read_csv(File::open(path)?, schema)
}

pub fn read_csv<T: Real, R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let fixed: Vec<usize> = REQUIRED_COLUMNS.iter().map(|c| column(c)).collect::<Result<_>>()?;
    let features: Vec<(String, usize)> = schema
        .column_features()
        .into_iter()
        .map(|name| column(&name).map(|i| (name, i)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        match parse_row(&row, &fixed, &features) {
            Ok(record) => records.push(record),
            Err(message) => issues.push(RowIssue { row: row_no, message }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::InvalidRows(issues));
    }
    Dataset::new(schema.clone(), records)
}

fn parse_row<T: Real>(
    row: &csv::StringRecord,
    fixed: &[usize],
    features: &[(String, usize)],
) -> std::result::Result<JobRecord<T>, String> {
    let cell = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let real = |name: &str, i: usize| -> std::result::Result<T, String> {
        cell(i)
            .parse::<T>()
            .map_err(|_| format!("`{name}` is not numeric: {:?}", cell(i)))
    };
    let time = |name: &str, i: usize| -> std::result::Result<f64, String> {
        cell(i)
            .parse::<f64>()
            .map_err(|_| format!("`{name}` is not numeric: {:?}", cell(i)))
    };
    let mut values = BTreeMap::new();
    for (name, i) in features {
        if cell(*i).is_empty() {
            return Err(format!("missing value for `{name}`"));
        }
        values.insert(name.clone(), real(name, *i)?);
    }
    Ok(JobRecord {
        job_id: cell(fixed[0]).to_string(),
        app_id: cell(fixed[1]).to_string(),
        start_time: time("start_time", fixed[2])?,
        end_time: time("end_time", fixed[3])?,
        throughput: real("throughput", fixed[4])?,
        features: values,
    })
}

/// Writes a dataset in the ingest format. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<T: Real, W: Write>(dataset: &Dataset<T>, writer: W) -> Result<()> {
    let features = dataset.schema().column_features();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.extend(features.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in dataset {
        let mut row = vec![
            r.job_id.clone(),
            r.app_id.clone(),
            r.start_time.to_string(),
            r.end_time.to_string(),
            r.throughput.to_string(),
        ];
        row.extend(features.iter().map(|f| r.features[f].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Real>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}

/// Drops jobs whose I/O volume (read from `volume_feature`) is below `min_bytes`.
pub fn filter_min_volume<T: Real>(
    dataset: &Dataset<T>,
    volume_feature: &str,
    min_bytes: f64,
) -> Result<Dataset<T>> {
    if !dataset.schema().contains(volume_feature) {
        return Err(Error::UnknownFeature(volume_feature.to_string()));
    }
    Ok(dataset.filter(|r| r.features[volume_feature].as_f64() >= min_bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Random,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Ignored in temporal mode, where the cutoff decides the test set.
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_time: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::Random,
            test_fraction: 0.2,
            validation_fraction: 0.1,
            seed: 0,
            cutoff_time: None,
        }
    }
}

impl SplitSpec {
    pub fn random(test_fraction: f64, validation_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::Random,
            test_fraction,
            validation_fraction,
            seed,
            cutoff_time: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} not in (0, 1)", self.test_fraction)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} not in [0, 1)",
                self.validation_fraction
            )));
        }
        if self.test_fraction + self.validation_fraction >= 1.0 {
            return Err(Error::Config("test_fraction + validation_fraction must be < 1".into()));
        }
        if self.mode == SplitMode::Temporal && self.cutoff_time.is_none() {
            return Err(Error::Config("temporal split requires cutoff_time".into()));
        }
        Ok(())
    }
}

/// Train / validation / test partition of one dataset.
#[derive(Debug, Clone)]
pub struct Splits<T> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    pub test: Dataset<T>,
}

/// Partitions a dataset. Within each part records keep their original order.
pub fn split<T: Real>(dataset: &Dataset<T>, spec: &SplitSpec) -> Result<Splits<T>> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut test, mut rest): (Vec<usize>, Vec<usize>) = match spec.mode {
        SplitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let n_test = (spec.test_fraction * n as f64).round() as usize;
            let rest = order.split_off(n_test);
            (order, rest)
        }
        SplitMode::Temporal => {
            let cutoff = spec.cutoff_time.expect("validated");
            (0..n).partition(|&i| dataset.records()[i].start_time > cutoff)
        }
    };
    rest.shuffle(&mut rng);
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).min(rest.len());
    let mut train = rest.split_off(n_val);
    let mut validation = rest;
    if train.is_empty() {
        return Err(Error::InvalidArgument("split leaves the training set empty".into()));
    }
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Splits {
        train: dataset.subset(&train),
        validation: dataset.subset(&validation),
        test: dataset.subset(&test),
    })
}

/// Identity of a job for duplicate matching: the application plus the exact
/// bit patterns of its observable application features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DuplicateKey {
    app_id: String,
    bits: Vec<u64>,
}

impl DuplicateKey {
    /// `bits` are the feature values' bit patterns in schema order.
    pub fn new(app_id: impl Into<String>, bits: Vec<u64>) -> Self {
        DuplicateKey {
            app_id: app_id.into(),
            bits,
        }
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }
}

pub fn duplicate_key<T: Real>(record: &JobRecord<T>, schema: &FeatureSchema) -> DuplicateKey {
    DuplicateKey {
        app_id: record.app_id.clone(),
        bits: schema
            .observable_app_features()
            .iter()
            .map(|f| record.features[f].bits())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::{record, schema};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("job_id,app_id,start_time,end_time,throughput,p0,p1,m0,l0\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn dataset(n: usize) -> Dataset<f64> {
        let records = (0..n)
            .map(|i| {
                let mut r = record(&format!("j{i}"), "a", [i as f64, 0.0, 0.0, 0.0], 1.0 + i as f64);
                r.start_time = i as f64 * 10.0;
                r.end_time = r.start_time + 1.0;
                r
            })
            .collect();
        Dataset::new(schema(), records).unwrap()
    }

    #[test]
    fn loads_well_formed_file() {
        let text = csv_text(&[
            "a,x,0,1,100,1,2,3,4",
            "b,x,0,1,200,1,2,3,4",
            "c,y,5,9,300,0.5,2,3,4",
        ]);
        let ds: Dataset<f64> = read_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records()[2].features["p0"], 0.5);
    }

    #[test]
    fn zero_throughput_names_the_row() {
        let text = csv_text(&["a,x,0,1,100,1,2,3,4", "b,x,0,1,0,1,2,3,4"]);
        let err = read_csv::<f64, _>(text.as_bytes(), &schema()).unwrap_err();
        match &err {
            Error::InvalidRows(issues) => assert_eq!(issues[0].row, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn rejects_missing_column_non_numeric_and_duplicate_ids() {
        let text = "job_id,app_id,start_time,end_time,throughput,p0,p1,m0\na,x,0,1,1,1,1,1\n";
        assert!(matches!(
            read_csv::<f64, _>(text.as_bytes(), &schema()),
            Err(Error::MissingColumn(c)) if c == "l0"
        ));
        let text = csv_text(&["a,x,0,1,100,1,abc,3,4"]);
        assert!(matches!(read_csv::<f64, _>(text.as_bytes(), &schema()), Err(Error::InvalidRows(_))));
        let text = csv_text(&["a,x,0,1,100,1,2,3,4", "a,x,0,1,100,1,2,3,4"]);
        assert!(matches!(read_csv::<f64, _>(text.as_bytes(), &schema()), Err(Error::InvalidRows(_))));
        let text = csv_text(&["a,x,0,1,100,1,,3,4"]);
        assert!(matches!(read_csv::<f64, _>(text.as_bytes(), &schema()), Err(Error::InvalidRows(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut ds = dataset(5);
        let mut records = ds.records().to_vec();
        records[1].throughput = 1.0 / 3.0;
        records[2].features.insert("p1".into(), std::f64::consts::PI * 1e-7);
        ds = Dataset::new(schema(), records).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back: Dataset<f64> = read_csv(buf.as_slice(), &schema()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn random_split_sizes_and_determinism() {
        let ds = dataset(100);
        let spec = SplitSpec::random(0.2, 0.1, 7);
        let a = split(&ds, &spec).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (70, 10, 20));
        let b = split(&ds, &spec).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn different_seeds_change_membership() {
        let ds = dataset(100);
        let a = split(&ds, &SplitSpec::random(0.2, 0.1, 7)).unwrap();
        let b = split(&ds, &SplitSpec::random(0.2, 0.1, 8)).unwrap();
        assert_ne!(a.test, b.test);
    }

    #[test]
    fn temporal_split_respects_cutoff() {
        let ds = dataset(100);
        let spec = SplitSpec {
            mode: SplitMode::Temporal,
            cutoff_time: Some(555.0),
            ..SplitSpec::default()
        };
        let s = split(&ds, &spec).unwrap();
        assert!(s.test.iter().all(|r| r.start_time > 555.0));
        assert!(s.train.iter().all(|r| r.start_time <= 555.0));
        assert_eq!(s.test.len(), 44);
        assert_eq!(s.validation.len(), 10);
    }

    #[test]
    fn split_spec_validation() {
        let ds = dataset(10);
        assert!(split(&ds, &SplitSpec::random(0.6, 0.4, 1)).is_err());
        assert!(split(&ds, &SplitSpec::random(0.0, 0.1, 1)).is_err());
        let spec = SplitSpec { mode: SplitMode::Temporal, ..SplitSpec::default() };
        assert!(matches!(split(&ds, &spec), Err(Error::Config(_))));
        let spec = SplitSpec {
            mode: SplitMode::Temporal,
            cutoff_time: Some(-1.0),
            ..SplitSpec::default()
        };
        assert!(split(&ds, &spec).is_err(), "everything lands in test");
    }

    #[test]
    fn duplicate_key_rules() {
        let s = schema();
        let a = record("a", "app", [1.0, 2.0, 3.0, 4.0], 1.0);
        let mut b = record("b", "app", [1.0, 2.0, 3.0, 9.0], 2.0);
        b.start_time = 9_999.0;
        assert_eq!(duplicate_key(&a, &s), duplicate_key(&b, &s), "lmt and timing excluded");
        let c = record("c", "other", [1.0, 2.0, 3.0, 4.0], 1.0);
        assert_ne!(duplicate_key(&a, &s), duplicate_key(&c, &s));
        let bumped = f64::from_bits(2.0f64.to_bits() + 1);
        let d = record("d", "app", [1.0, bumped, 3.0, 4.0], 1.0);
        assert_ne!(duplicate_key(&a, &s), duplicate_key(&d, &s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn split_is_a_partition(
            n in 1usize..200,
            test in 0.05f64..0.5,
            val in 0.0f64..0.4,
            seed in any::<u64>()
        ) {
            let ds = dataset(n);
            match split(&ds, &SplitSpec::random(test, val, seed)) {
                Ok(s) => {
                    let ids: Vec<&str> = s.train.iter()
                        .chain(s.validation.iter())
                        .chain(s.test.iter())
                        .map(|r| r.job_id.as_str())
                        .collect();
                    let unique: HashSet<&str> = ids.iter().copied().collect();
                    prop_assert_eq!(ids.len(), n);
                    prop_assert_eq!(unique.len(), n);
                }
                Err(_) => {
                    let held = (test * n as f64).round() + (val * n as f64).round();
                    prop_assert!(held >= n as f64, "unexpected failure");
                }
            }
        }

        #[test]
        fn duplicate_key_is_an_equivalence(
            rows in proptest::collection::vec((0u8..2, 0u8..2, 0u8..3), 3)
        ) {
            let s = schema();
            let recs: Vec<_> = rows.iter().enumerate()
                .map(|(i, (app, p0, m0))| record(
                    &format!("r{i}"), &format!("a{app}"), [*p0 as f64, 0.0, *m0 as f64, i as f64], 1.0))
                .collect();
            let k: Vec<_> = recs.iter().map(|r| duplicate_key(r, &s)).collect();
            for a in &k {
                prop_assert_eq!(a, a);
                for b in &k {
                    prop_assert_eq!(a == b, b == a);
                    for c in &k {
                        if a == b && b == c { prop_assert_eq!(a, c); }
                    }
                }
            }
        }
    }
}
