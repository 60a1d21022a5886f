//! CSV ingestion and emission for participant tables and feature sidecars.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Channel, Cohort, DataError, Gender, Manifest, ParticipantRecord, SymptomProfile};

/// Column order of `participants.csv`.
pub const CANONICAL_COLUMNS: [&str; 15] = [
    "id",
    "label",
    "age_years",
    "gender",
    "channel",
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "new_continuous_cough",
    "copd_emphysema",
    "other_respiratory",
    "smoker",
    "score",
];

const REQUIRED: [&str; 5] = ["id", "label", "age_years", "gender", "channel"];
const REPORTED_ANY: &str = "any_symptom";

/// Maps canonical column names to the names used in a particular file.
#[derive(Debug, Clone, Default)]
pub struct ColumnMap {
    renames: BTreeMap<String, String>,
}

impl ColumnMap {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with(mut self, canonical: &str, actual: &str) -> Self {
        self.renames.insert(canonical.to_string(), actual.to_string());
        self
    }

    pub fn resolve<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map_or(canonical, String::as_str)
    }
}

pub fn load_cohort(path: impl AsRef<Path>, map: &ColumnMap) -> Result<Cohort, DataError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_cohort(file, map, &path.display().to_string())
}

pub fn read_cohort<R: Read>(reader: R, map: &ColumnMap, source: &str) -> Result<Cohort, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let col = |canonical: &str| position.get(map.resolve(canonical)).copied();
    for name in REQUIRED {
        if col(name).is_none() {
            return Err(DataError::MissingColumn(name.to_string()));
        }
    }

    let mut notes = Vec::new();
    let flag_cols: Vec<(&str, Option<usize>)> = SymptomProfile::FLAGS
        .iter()
        .map(|&f| {
            let c = col(f);
            if c.is_none() {
                notes.push(format!("column `{f}` absent; defaulted to 0"));
            }
            (f, c)
        })
        .collect();
    let score_col = col("score");
    let any_col = col(REPORTED_ANY);

    let known: BTreeSet<usize> = CANONICAL_COLUMNS
        .iter()
        .chain(std::iter::once(&REPORTED_ANY))
        .filter_map(|c| col(c))
        .collect();
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let get = |c: usize| row.get(c).unwrap_or("");
        let bad = |column: &str, reason: String| DataError::BadValue {
            row: line,
            column: column.to_string(),
            reason,
        };

        let id = get(col("id").unwrap()).to_string();
        if id.is_empty() {
            return Err(bad("id", "empty id".into()));
        }
        let label = parse_bool(get(col("label").unwrap())).ok_or_else(|| bad("label", "expected 0 or 1".into()))?;
        let age_raw = get(col("age_years").unwrap());
        let age_years: u32 = age_raw
            .parse()
            .map_err(|_| bad("age_years", format!("`{age_raw}` is not a non-negative integer")))?;
        let gender = Gender::parse_lenient(get(col("gender").unwrap()));
        let channel: Channel = get(col("channel").unwrap())
            .parse()
            .map_err(|e: String| bad("channel", e))?;

        let mut symptoms = SymptomProfile::default();
        for &(name, c) in &flag_cols {
            if let Some(c) = c {
                let v = parse_bool(get(c)).ok_or_else(|| bad(name, "expected 0 or 1".into()))?;
                symptoms.set(name, v);
            }
        }

        let reported_any_symptom = match any_col.map(get) {
            None | Some("") => None,
            Some(s) => Some(parse_bool(s).ok_or_else(|| bad(REPORTED_ANY, "expected 0 or 1".into()))?),
        };

        let score = match score_col.map(get) {
            None | Some("") => None,
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| bad("score", format!("`{s}` is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(bad("score", format!("{v} outside [0, 1]")));
                }
                Some(v)
            }
        };

        let other_covariates = extra
            .iter()
            .map(|(c, name)| (name.clone(), get(*c).to_string()))
            .collect();

        records.push(ParticipantRecord {
            id,
            label,
            symptoms,
            reported_any_symptom,
            age_years,
            gender,
            channel,
            other_covariates,
            score,
            features: None,
        });
    }

    let mut manifest = Manifest::new(source, None, records.len());
    manifest.notes = notes;
    Cohort::new(records, manifest)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "True" | "TRUE" => Some(true),
        "0" | "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes the canonical participant table. Columns: [`CANONICAL_COLUMNS`],
/// then `any_symptom` if any record carried a stored value, then the extra
/// covariates in name order.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let with_any = cohort.iter().any(|r| r.reported_any_symptom.is_some());
    let extras: BTreeSet<&str> = cohort
        .iter()
        .flat_map(|r| r.other_covariates.keys().map(String::as_str))
        .collect();

    let mut header: Vec<&str> = CANONICAL_COLUMNS.to_vec();
    if with_any {
        header.push(REPORTED_ANY);
    }
    header.extend(extras.iter().copied());
    wtr.write_record(&header)?;

    for r in cohort {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.id.clone());
        row.push(bool_str(r.label).into());
        row.push(r.age_years.to_string());
        row.push(r.gender.as_str().into());
        row.push(r.channel.as_str().into());
        row.extend(r.symptoms.flags().iter().map(|&b| bool_str(b).to_string()));
        row.push(r.score.map(|s| s.to_string()).unwrap_or_default());
        if with_any {
            row.push(r.reported_any_symptom.map(|b| bool_str(b).to_string()).unwrap_or_default());
        }
        for name in &extras {
            row.push(r.other_covariates.get(*name).cloned().unwrap_or_default());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `id,f0,f1,…` rows.
pub fn read_features<R: Read>(reader: R) -> Result<Vec<(String, Vec<f64>)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(DataError::MissingColumn("id".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        let values = row
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, v)| {
                v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| DataError::BadValue {
                    row: i + 1,
                    column: headers.get(c).unwrap_or("?").to_string(),
                    reason: format!("`{v}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push((id, values));
    }
    Ok(out)
}

/// Loads a feature sidecar and attaches it to `cohort` by id.
pub fn load_features(path: impl AsRef<Path>, cohort: &Cohort) -> Result<Cohort, DataError> {
    let rows = read_features(File::open(path.as_ref())?)?;
    attach_features(cohort, rows, &format!("features from {}", path.as_ref().display()))
}

pub(crate) fn attach_features(
    cohort: &Cohort,
    rows: Vec<(String, Vec<f64>)>,
    step: &str,
) -> Result<Cohort, DataError> {
    let index: HashMap<&str, usize> = cohort.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut records = cohort.records().to_vec();
    for (id, values) in rows {
        let i = *index.get(id.as_str()).ok_or_else(|| DataError::UnknownId(id.clone()))?;
        records[i].features = Some(values);
    }
    Cohort::new(records, cohort.manifest().with_step(step))
}

/// Writes `id,f0,…,f{D-1}` for every record carrying features.
pub fn write_features<W: Write>(cohort: &Cohort, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = cohort.feature_dim().unwrap_or(0);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    for r in cohort {
        if let Some(f) = &r.features {
            let mut row = vec![r.id.clone()];
            row.extend(f.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads an `id,score` table and attaches the scores by id. Records not
/// listed keep their existing score.
pub fn attach_scores_csv<R: Read>(cohort: &Cohort, reader: R) -> Result<Cohort, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers.iter().position(|h| h == "id").ok_or_else(|| DataError::MissingColumn("id".into()))?;
    let score_col = headers
        .iter()
        .position(|h| h == "score")
        .ok_or_else(|| DataError::MissingColumn("score".into()))?;
    let index: HashMap<&str, usize> = cohort.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut records = cohort.records().to_vec();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(id_col).unwrap_or("");
        let raw = row.get(score_col).unwrap_or("");
        let s: f64 = raw.parse().map_err(|_| DataError::BadValue {
            row: i + 1,
            column: "score".into(),
            reason: format!("`{raw}` is not a number"),
        })?;
        let k = *index.get(id).ok_or_else(|| DataError::UnknownId(id.to_string()))?;
        records[k].score = Some(s);
    }
    Cohort::new(records, cohort.manifest().with_step("attach scores"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,label,age_years,gender,channel,cough,sore_throat,asthma,shortness_of_breath,runny_blocked_nose,new_continuous_cough,copd_emphysema,other_respiratory,smoker,score";

    fn csv_of(rows: &[&str]) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn three_rows_load_with_ids() {
        let text = csv_of(&[
            "p1,1,34,female,TT,1,0,0,0,0,0,0,0,0,0.9",
            "p2,0,50,male,REACT,0,0,0,0,0,0,0,0,1,0.2",
            "p3,0,19,other,TT,0,1,0,0,0,0,0,0,0,",
        ]);
        let c = read_cohort(text.as_bytes(), &ColumnMap::identity(), "mem").unwrap();
        assert_eq!(c.ids(), vec!["p1", "p2", "p3"]);
        assert_eq!(c.records()[2].score, None);
        assert!(c.records()[0].symptoms.cough);
        assert_eq!(c.manifest().rows_read, 3);
    }

    #[test]
    fn missing_label_column() {
        let text = "id,age_years,gender,channel\np1,30,male,TT\n";
        let err = read_cohort(text.as_bytes(), &ColumnMap::identity(), "mem").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "label"));
    }

    #[test]
    fn out_of_range_score_reports_row_and_column() {
        let mut rows = vec!["p1,1,34,female,TT,1,0,0,0,0,0,0,0,0,0.9".to_string()];
        for i in 2..=4 {
            rows.push(format!("p{i},0,40,male,TT,0,0,0,0,0,0,0,0,0,0.5"));
        }
        rows.push("p5,1,40,male,TT,0,0,0,0,0,0,0,0,0,1.2".to_string());
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let err = read_cohort(csv_of(&refs).as_bytes(), &ColumnMap::identity(), "mem").unwrap_err();
        assert_eq!(err.bad_value_location(), Some((5, "score")));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = csv_of(&[
            "p1,1,34,female,TT,1,0,0,0,0,0,0,0,0,",
            "p1,0,50,male,TT,0,0,0,0,0,0,0,0,0,",
        ]);
        let err = read_cohort(text.as_bytes(), &ColumnMap::identity(), "mem").unwrap_err();
        assert!(matches!(err, DataError::DuplicateId(_)));
    }

    #[test]
    fn renamed_columns_and_extras() {
        let text = "pid,covid,age_years,gender,channel,ethnicity\nx,1,44,F,TT,white\n";
        let map = ColumnMap::identity().with("id", "pid").with("label", "covid");
        let c = read_cohort(text.as_bytes(), &map, "mem").unwrap();
        let r = &c.records()[0];
        assert_eq!(r.id, "x");
        assert!(r.label);
        assert_eq!(r.gender, Gender::Female);
        assert_eq!(r.other_covariates.get("ethnicity").map(String::as_str), Some("white"));
        assert!(!c.manifest().notes.is_empty());
    }

    #[test]
    fn canonical_file_round_trips_bytes() {
        let text = csv_of(&[
            "p1,1,34,female,TT,1,0,0,0,0,0,0,0,0,0.9",
            "p2,0,50,male,REACT,0,0,0,0,0,1,1,0,1,0.123456789",
            "p3,0,19,other,synthetic,0,1,0,0,0,0,0,0,0,",
        ]);
        let c = read_cohort(text.as_bytes(), &ColumnMap::identity(), "mem").unwrap();
        let mut out = Vec::new();
        write_cohort(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn features_attach_by_id() {
        let text = csv_of(&[
            "p1,1,34,female,TT,1,0,0,0,0,0,0,0,0,",
            "p2,0,50,male,TT,0,0,0,0,0,0,0,0,0,",
        ]);
        let c = read_cohort(text.as_bytes(), &ColumnMap::identity(), "mem").unwrap();
        let feats = read_features("id,f0,f1\np2,0.5,-1\np1,2,3\n".as_bytes()).unwrap();
        let c = attach_features(&c, feats, "f").unwrap();
        assert_eq!(c.records()[0].features.as_deref(), Some(&[2.0, 3.0][..]));
        assert_eq!(c.feature_dim(), Some(2));

        let mut out = Vec::new();
        write_features(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "id,f0,f1\np1,2,3\np2,0.5,-1\n");

        let unknown = read_features("id,f0,f1\nzz,1,1\n".as_bytes()).unwrap();
        assert!(matches!(attach_features(&c, unknown, "f"), Err(DataError::UnknownId(_))));
    }
}
