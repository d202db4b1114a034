//! CSV ingestion, report-date derivation, de-duplication of resubmitted
//! records and the release delay window.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, NA};
use crate::error::{Error, Result};
use crate::schema::{Schema, ValueType};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Strict `YYYY-MM-DD`.
pub fn parse_date(value: &str) -> Option<NaiveDate> {
    let b = value.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(value, DATE_FORMAT).ok()
}

fn is_blank(value: &str) -> bool {
    value.is_empty() || value == NA
}

/// One input file and the date it was first submitted.
#[derive(Clone, Debug)]
pub struct RawSubmission {
    pub records: Dataset,
    pub submission_date: Option<NaiveDate>,
    pub source_label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    #[serde(default)]
    pub submission_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Sidecar mapping each input file to its submission date. Paths are
/// relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionManifest {
    pub files: Vec<ManifestEntry>,
    #[serde(skip)]
    base: PathBuf,
}

impl SubmissionManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: SubmissionManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base.join(&entry.path)
    }

    pub fn entry_for(&self, file: &Path) -> Option<&ManifestEntry> {
        let target = std::fs::canonicalize(file).ok();
        self.files.iter().find(|e| {
            let p = self.resolve(e);
            match (&target, std::fs::canonicalize(&p).ok()) {
                (Some(a), Some(b)) => *a == b,
                _ => p == file,
            }
        })
    }
}

/// Read an RFC 4180 CSV whose header names schema fields. Date and numeric
/// columns are checked; empty cells are kept as empty strings.
pub fn read_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(std::io::BufReader::new(file), schema)
        .map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
}

pub fn read_dataset_from<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::csv("<input>", e))?
        .clone();

    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        if schema.field(h).is_none() {
            return Err(Error::UnknownColumn {
                column: h.to_owned(),
            });
        }
        if !seen.insert(h) {
            return Err(Error::DuplicateColumn {
                column: h.to_owned(),
            });
        }
        columns.push(Column::new(h));
    }

    let mut record = csv::StringRecord::new();
    while rdr
        .read_record(&mut record)
        .map_err(|e| Error::csv("<input>", e))?
    {
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            col.push(cell);
        }
    }

    let mut ds = Dataset::default();
    for col in columns {
        check_column_types(&col, schema)?;
        ds.add_column(col)?;
    }
    Ok(ds)
}

fn check_column_types(col: &Column, schema: &Schema) -> Result<()> {
    let field = schema.field(col.name()).expect("checked against schema");
    let bad = |value: &str| -> bool {
        if is_blank(value) {
            return false;
        }
        match field.value_type {
            ValueType::Category => false,
            ValueType::Date => parse_date(value).is_none(),
            ValueType::Numeric => value.trim().parse::<f64>().is_err(),
        }
    };
    let bad_values: HashSet<&str> = col.distinct_values().into_iter().filter(|v| bad(v)).collect();
    if bad_values.is_empty() {
        return Ok(());
    }
    let (row, value) = col
        .iter()
        .enumerate()
        .find(|(_, v)| bad_values.contains(v))
        .expect("bad value occurs in some row");
    let (row, field, value) = (row + 1, col.name().to_owned(), value.to_owned());
    Err(match field_type(schema, &field) {
        ValueType::Numeric => Error::InvalidNumber { row, field, value },
        _ => Error::InvalidDate { row, field, value },
    })
}

fn field_type(schema: &Schema, name: &str) -> ValueType {
    schema.field(name).map_or(ValueType::Category, |f| f.value_type)
}

/// Write with minimal quoting and `\n` line endings.
pub fn write_dataset_to<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let map = |e| Error::csv("<output>", e);
    w.write_record(dataset.column_names()).map_err(map)?;
    for r in 0..dataset.n_rows() {
        w.write_record(dataset.row(r)).map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(std::io::BufWriter::new(file), dataset).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn dataset_to_csv(dataset: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, dataset).expect("in-memory write");
    buf
}

/// First known of: the record's first submission date, the report date on
/// the case form, the date the record was first seen.
pub fn derive_report_date(
    first_submission: Option<NaiveDate>,
    form_report: Option<NaiveDate>,
    first_seen: Option<NaiveDate>,
) -> Option<NaiveDate> {
    first_submission.or(form_report).or(first_seen)
}

/// Concatenate submissions in order. Returns the combined rows and each
/// row's file submission date.
pub fn combine_submissions(subs: &[RawSubmission]) -> Result<(Dataset, Vec<Option<NaiveDate>>)> {
    let mut ds = Dataset::default();
    let mut dates = Vec::new();
    for s in subs {
        ds.append(&s.records)?;
        dates.extend(std::iter::repeat_n(s.submission_date, s.records.n_rows()));
    }
    Ok((ds, dates))
}

/// Key string per row, or `None` for rows whose key cells are all blank
/// (such rows are never merged).
fn row_keys(dataset: &Dataset, key: &[String]) -> Result<Vec<Option<Vec<u32>>>> {
    let cols: Vec<usize> = key
        .iter()
        .map(|k| dataset.require_column(k))
        .collect::<Result<_>>()?;
    Ok((0..dataset.n_rows())
        .map(|r| {
            if cols.iter().all(|&c| dataset.get(r, c).trim().is_empty()) {
                None
            } else {
                Some(cols.iter().map(|&c| dataset.column_at(c).code(r)).collect())
            }
        })
        .collect())
}

/// Fill the report date column. A populated cell is kept as the record's
/// first submission date; otherwise the earliest file submission date among
/// rows sharing the dedup key is used, then the form and first-seen dates.
pub fn assign_report_dates(
    dataset: &Dataset,
    schema: &Schema,
    submission_dates: &[Option<NaiveDate>],
) -> Result<Dataset> {
    let rd = &schema.report_date;
    let n = dataset.n_rows();
    let existing = dataset.column_index(&rd.field);
    let form = rd.form_field.as_deref().and_then(|f| dataset.column_index(f));
    let seen = rd
        .first_seen_field
        .as_deref()
        .and_then(|f| dataset.column_index(f));

    let has_key = schema.dedup_key.iter().all(|k| dataset.has_column(k)) && !schema.dedup_key.is_empty();
    let mut earliest: Vec<Option<NaiveDate>> = submission_dates.to_vec();
    if has_key {
        let keys = row_keys(dataset, &schema.dedup_key)?;
        let mut first: HashMap<&Vec<u32>, NaiveDate> = HashMap::new();
        for (key, date) in keys.iter().zip(submission_dates) {
            if let (Some(k), Some(d)) = (key, date) {
                first.entry(k).and_modify(|e| *e = (*e).min(*d)).or_insert(*d);
            }
        }
        for (r, key) in keys.iter().enumerate() {
            if let Some(k) = key {
                earliest[r] = first.get(k).copied().or(earliest[r]);
            }
        }
    }

    let cell_date = |col: Option<usize>, r: usize| col.and_then(|c| parse_date(dataset.get(r, c)));
    let mut out = Column::new(rd.field.clone());
    for (r, &first) in earliest.iter().enumerate().take(n) {
        let known = cell_date(existing, r).or(first);
        let date = derive_report_date(known, cell_date(form, r), cell_date(seen, r))
            .ok_or(Error::NoReportDate { row: r + 1 })?;
        out.push(&date.format(DATE_FORMAT).to_string());
    }
    let mut ds = dataset.clone();
    ds.put_column(out)?;
    Ok(ds)
}

/// Keep one row per key value: the row with the latest submission date, ties
/// going to the later row. Survivors keep their relative order. Returns the
/// deduplicated dataset and the surviving input row indices.
pub fn deduplicate(
    dataset: &Dataset,
    key: &[String],
    submission_dates: &[Option<NaiveDate>],
) -> Result<(Dataset, Vec<usize>)> {
    let keys = row_keys(dataset, key)?;
    let mut winner: HashMap<&Vec<u32>, usize> = HashMap::new();
    for (r, k) in keys.iter().enumerate() {
        if let Some(k) = k {
            winner
                .entry(k)
                .and_modify(|w| {
                    if submission_dates[r] >= submission_dates[*w] {
                        *w = r;
                    }
                })
                .or_insert(r);
        }
    }
    let kept: Vec<usize> = keys
        .iter()
        .enumerate()
        .filter(|(r, k)| match k {
            Some(k) => winner[k] == *r,
            None => true,
        })
        .map(|(r, _)| r)
        .collect();
    Ok((dataset.select_rows(&kept), kept))
}

/// Keep rows whose report date is on or before `release_date - delay_days`.
pub fn apply_release_window(
    dataset: &Dataset,
    report_field: &str,
    release_date: NaiveDate,
    delay_days: u32,
) -> Result<Dataset> {
    let cutoff = release_date - Duration::days(i64::from(delay_days));
    if dataset.is_empty() {
        return Ok(dataset.clone());
    }
    let col = dataset
        .column(report_field)
        .ok_or_else(|| Error::MissingReportDate {
            row: 1,
            field: report_field.to_owned(),
        })?;
    let mut kept = Vec::new();
    for r in 0..dataset.n_rows() {
        match parse_date(col.get(r)) {
            Some(d) if d <= cutoff => kept.push(r),
            Some(_) => {}
            None => {
                return Err(Error::MissingReportDate {
                    row: r + 1,
                    field: report_field.to_owned(),
                })
            }
        }
    }
    Ok(dataset.select_rows(&kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn read(text: &str) -> Result<Dataset> {
        read_dataset_from(text.as_bytes(), &Schema::public_use())
    }

    #[test]
    fn header_only_file_is_empty() {
        let ds = read("sex,age_group,race_ethnicity_combined\n").unwrap();
        assert_eq!(ds.n_rows(), 0);
        assert_eq!(ds.n_columns(), 3);
    }

    #[test]
    fn invalid_calendar_date_names_row_and_field() {
        let err = read("case_id,onset_dt\na,2020-01-02\nb,2020-13-40\n").unwrap_err();
        match err {
            Error::InvalidDate { row, field, value } => {
                assert_eq!((row, field.as_str(), value.as_str()), (2, "onset_dt", "2020-13-40"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read("onset_dt\n2020-1-2\n").is_err());
    }

    #[test]
    fn unknown_column_rejected() {
        assert!(matches!(
            read("sex,favourite_colour\nMale,blue\n"),
            Err(Error::UnknownColumn { column }) if column == "favourite_colour"
        ));
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(matches!(read("sex,age_group\nMale\n"), Err(Error::Csv { .. })));
    }

    #[test]
    fn empty_cells_preserved() {
        let ds = read("sex,onset_dt,age_years\n,,\nFemale,NA,34\n").unwrap();
        assert_eq!(ds.row(0), vec!["", "", ""]);
        assert_eq!(ds.row(1), vec!["Female", "NA", "34"]);
        assert!(read("age_years\nforty\n").is_err());
    }

    #[test]
    fn normalized_csv_round_trips_bytes() {
        let text = "sex,race_ethnicity_combined,onset_dt\nFemale,\"Asian, Non-Hispanic\",2020-03-01\nMale,Hispanic/Latino,\n";
        let ds = read(text).unwrap();
        assert_eq!(String::from_utf8(dataset_to_csv(&ds)).unwrap(), text);
    }

    #[test]
    fn report_date_fallback_order() {
        assert_eq!(
            derive_report_date(Some(d("2020-06-01")), Some(d("2020-05-20")), Some(d("2020-06-02"))),
            Some(d("2020-06-01"))
        );
        assert_eq!(
            derive_report_date(None, Some(d("2020-05-20")), Some(d("2020-06-02"))),
            Some(d("2020-05-20"))
        );
        assert_eq!(derive_report_date(None, None, Some(d("2020-06-02"))), Some(d("2020-06-02")));
        assert_eq!(derive_report_date(None, None, None), None);
    }

    #[test]
    fn report_date_uses_earliest_submission_of_the_case() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(
            &["case_id", "form_report_dt"],
            &[vec!["a", "2020-05-20"], vec!["b", ""], vec!["a", ""], vec!["c", ""]],
        )
        .unwrap();
        let dates = [Some(d("2020-06-01")), None, Some(d("2020-05-25")), None];
        let err = assign_report_dates(&ds, &s, &dates).unwrap_err();
        assert!(matches!(err, Error::NoReportDate { row: 2 }));

        let dates = [Some(d("2020-06-01")), Some(d("2020-06-03")), Some(d("2020-05-25")), Some(d("2020-06-04"))];
        let out = assign_report_dates(&ds, &s, &dates).unwrap();
        let col: Vec<&str> = out.column("cdc_report_dt").unwrap().iter().collect();
        assert_eq!(col, ["2020-05-25", "2020-06-03", "2020-05-25", "2020-06-04"]);
    }

    #[test]
    fn latest_submission_wins() {
        let key = vec!["case_id".to_owned()];
        let ds = Dataset::from_rows(&["case_id", "sex"], &[vec!["a", "Male"], vec!["a", "Female"]]).unwrap();
        for (dates, survivor) in [
            ([Some(d("2020-05-01")), Some(d("2020-05-10"))], "Female"),
            ([Some(d("2020-05-10")), Some(d("2020-05-01"))], "Male"),
        ] {
            let (out, _) = deduplicate(&ds, &key, &dates).unwrap();
            assert_eq!(out.n_rows(), 1);
            assert_eq!(out.value(0, "sex"), Some(survivor));
        }
        // Equal dates: the later row wins.
        let same = [Some(d("2020-05-01")); 2];
        let (out, kept) = deduplicate(&ds, &key, &same).unwrap();
        assert_eq!(kept, vec![1]);
        assert_eq!(out.value(0, "sex"), Some("Female"));
    }

    #[test]
    fn blank_keys_are_not_merged() {
        let key = vec!["case_id".to_owned()];
        let ds = Dataset::from_rows(&["case_id"], &[vec![""], vec![""], vec!["x"]]).unwrap();
        let (out, _) = deduplicate(&ds, &key, &[None, None, None]).unwrap();
        assert_eq!(out.n_rows(), 3);
    }

    #[test]
    fn window_examples() {
        let ds = Dataset::from_rows(
            &["cdc_report_dt"],
            &[vec!["2020-11-19"], vec!["2020-11-21"], vec!["2020-12-04"], vec!["2020-12-05"]],
        )
        .unwrap();
        let out = apply_release_window(&ds, "cdc_report_dt", d("2020-12-04"), 14).unwrap();
        assert_eq!(out.n_rows(), 1);
        assert_eq!(out.row(0), vec!["2020-11-19"]);
        let out = apply_release_window(&ds, "cdc_report_dt", d("2020-12-04"), 0).unwrap();
        assert_eq!(out.n_rows(), 3);
        let bad = Dataset::from_rows(&["cdc_report_dt"], &[vec![""]]).unwrap();
        assert!(apply_release_window(&bad, "cdc_report_dt", d("2020-12-04"), 14).is_err());
        let none = Dataset::from_rows::<&str>(&["sex"], &[]).unwrap();
        assert_eq!(apply_release_window(&none, "cdc_report_dt", d("2020-12-04"), 14).unwrap().n_rows(), 0);
    }
}
