//! Variable re-coding: missing-value normalization, date logic checks, age
//! binning, race/ethnicity combination and county FIPS derivation.
//!
//! Multi-column derivations are evaluated once per distinct tuple of
//! dictionary codes and then scattered back to rows, so their cost scales
//! with the number of distinct input combinations rather than rows.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dataset::{Column, Dataset, NA};
use crate::error::{Error, Result};
use crate::fips::FipsTable;
use crate::par::{Exec, CHUNK_ROWS};
use crate::schema::{FieldSpec, Schema, ValueType};

pub const HISPANIC_LABEL: &str = "Hispanic/Latino";
pub const MULTIPLE_RACE_LABEL: &str = "Multiple/Other, Non-Hispanic";
pub const NON_HISPANIC_SUFFIX: &str = ", Non-Hispanic";
pub const UNKNOWN_LABEL: &str = "Unknown";
pub const MISSING_LABEL: &str = "Missing";

fn default_separator() -> String {
    ";".to_owned()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecodeRule {
    MissingNormalize,
    DateLogic,
    AgeBin {
        age_field: String,
        dob_field: String,
        onset_field: String,
        bins: AgeBins,
    },
    RaceEthnicityCombine {
        race_field: String,
        ethnicity_field: String,
        #[serde(default = "default_separator")]
        separator: String,
        race_values: Vec<String>,
    },
    FipsDerive {
        state_field: String,
        county_field: String,
    },
    JurisdictionFill {
        jurisdiction_field: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBin {
    pub from: u32,
    pub label: String,
}

/// Labelled age intervals. Each bin covers `[from, next.from)`; the last bin
/// is unbounded above.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBins {
    pub bins: Vec<AgeBin>,
    pub unknown: String,
}

impl AgeBins {
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.bins.first() {
            None => out.push("age bins are empty".to_owned()),
            Some(b) if b.from != 0 => out.push("first age bin must start at 0".to_owned()),
            _ => {}
        }
        if self.bins.windows(2).any(|w| w[0].from >= w[1].from) {
            out.push("age bin edges must be strictly increasing".to_owned());
        }
        if self
            .bins
            .iter()
            .map(|b| b.label.as_str())
            .chain([self.unknown.as_str()])
            .any(|l| l.is_empty() || l == NA)
        {
            out.push("age bin labels must be non-empty and not NA".to_owned());
        }
        out
    }

    pub fn label_for(&self, age: i64) -> &str {
        if age < 0 {
            return &self.unknown;
        }
        self.bins
            .iter()
            .rev()
            .find(|b| age >= i64::from(b.from))
            .map(|b| b.label.as_str())
            .unwrap_or(&self.unknown)
    }
}

impl RecodeRule {
    pub(crate) fn findings(&self, field: &FieldSpec, names: &HashSet<&str>) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |name: &str| {
            if !names.contains(name) {
                out.push(format!("recode rule references undeclared field {name:?}"));
            }
        };
        let expect_type = match self {
            RecodeRule::MissingNormalize => ValueType::Category,
            RecodeRule::DateLogic => ValueType::Date,
            RecodeRule::AgeBin {
                age_field,
                dob_field,
                onset_field,
                ..
            } => {
                need(age_field);
                need(dob_field);
                need(onset_field);
                ValueType::Category
            }
            RecodeRule::RaceEthnicityCombine {
                race_field,
                ethnicity_field,
                ..
            } => {
                need(race_field);
                need(ethnicity_field);
                ValueType::Category
            }
            RecodeRule::FipsDerive {
                state_field,
                county_field,
            } => {
                need(state_field);
                need(county_field);
                ValueType::Category
            }
            RecodeRule::JurisdictionFill { jurisdiction_field } => {
                need(jurisdiction_field);
                ValueType::Category
            }
        };
        if field.value_type != expect_type {
            out.push(format!("recode rule requires a {expect_type:?} field"));
        }
        match self {
            RecodeRule::AgeBin { bins, .. } => out.extend(bins.findings()),
            RecodeRule::RaceEthnicityCombine {
                race_values,
                separator,
                ..
            } => {
                if race_values.is_empty() {
                    out.push("race_values is empty".to_owned());
                }
                if separator.is_empty() {
                    out.push("race separator is empty".to_owned());
                }
            }
            _ => {}
        }
        out
    }
}

/// `None` when the date lies in the future relative to `processing_date` or
/// before `epoch`.
pub fn check_date_logic(
    value: NaiveDate,
    processing_date: NaiveDate,
    epoch: NaiveDate,
) -> Option<NaiveDate> {
    if value > processing_date || value < epoch {
        None
    } else {
        Some(value)
    }
}

/// Completed years from `dob` to `on`.
pub fn whole_years_between(dob: NaiveDate, on: NaiveDate) -> i64 {
    let mut years = i64::from(on.year() - dob.year());
    if (on.month(), on.day()) < (dob.month(), dob.day()) {
        years -= 1;
    }
    years
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinnedAge<'a> {
    pub label: &'a str,
    /// Set when the age (reported or computed) was negative.
    pub negative_age: Option<i64>,
}

pub fn bin_age<'a>(
    age_years: Option<i64>,
    date_of_birth: Option<NaiveDate>,
    onset_date: Option<NaiveDate>,
    bins: &'a AgeBins,
) -> BinnedAge<'a> {
    let age = age_years.or_else(|| match (date_of_birth, onset_date) {
        (Some(dob), Some(onset)) => Some(whole_years_between(dob, onset)),
        _ => None,
    });
    match age {
        Some(a) if a < 0 => BinnedAge {
            label: &bins.unknown,
            negative_age: Some(a),
        },
        Some(a) => BinnedAge {
            label: bins.label_for(a),
            negative_age: None,
        },
        None => BinnedAge {
            label: &bins.unknown,
            negative_age: None,
        },
    }
}

fn is_missing_marker(v: &str) -> bool {
    let v = v.trim();
    v.is_empty() || v == MISSING_LABEL || v == NA
}

/// Combine reported races and ethnicity into one category. The error carries
/// the offending race value.
pub fn combine_race_ethnicity(
    races: &[&str],
    ethnicity: &str,
    race_values: &[String],
) -> std::result::Result<String, String> {
    let mut concrete: Vec<&str> = Vec::new();
    for r in races.iter().map(|r| r.trim()) {
        if is_missing_marker(r) || r == UNKNOWN_LABEL {
            continue;
        }
        if !race_values.iter().any(|v| v == r) {
            return Err(r.to_owned());
        }
        if !concrete.contains(&r) {
            concrete.push(r);
        }
    }
    let ethnicity = ethnicity.trim();
    if ethnicity == HISPANIC_LABEL {
        return Ok(HISPANIC_LABEL.to_owned());
    }
    match concrete.len() {
        0 => {
            let all_missing =
                races.iter().all(|r| is_missing_marker(r)) && is_missing_marker(ethnicity);
            Ok(if all_missing { MISSING_LABEL } else { UNKNOWN_LABEL }.to_owned())
        }
        1 => Ok(format!("{}{NON_HISPANIC_SUFFIX}", concrete[0])),
        _ => Ok(MULTIPLE_RACE_LABEL.to_owned()),
    }
}

/// 5-digit county code, or `None` when either input is missing or the pair
/// is not in the table.
pub fn derive_fips<'t>(res_state: &str, res_county: &str, table: &'t FipsTable) -> Option<&'t str> {
    if is_missing_marker(res_state) || is_missing_marker(res_county) {
        return None;
    }
    table.lookup(res_state, res_county)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DataQualityFinding {
    pub row: usize,
    pub field: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct RecodeOutput {
    pub dataset: Dataset,
    pub findings: Vec<DataQualityFinding>,
}

fn parse_date_cell(v: &str) -> Option<NaiveDate> {
    if v.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(v, "%Y-%m-%d").ok()
}

fn parse_age_cell(v: &str) -> Option<i64> {
    let v = v.trim();
    if v.is_empty() || v == NA {
        return None;
    }
    v.parse::<i64>()
        .ok()
        .or_else(|| v.parse::<f64>().ok().filter(|f| f.is_finite()).map(|f| f.floor() as i64))
}

/// Reason code and detail for a data-quality finding.
type Flag = (&'static str, String);

struct Derived {
    value: String,
    finding: Option<Flag>,
}

type CodeKey = SmallVec<[u32; 4]>;

/// Evaluate `f` once per distinct tuple of source cells and build the target
/// column. Absent source columns read as empty strings.
fn derive_column<F>(
    ds: &Dataset,
    target: &str,
    sources: &[Option<usize>],
    exec: Exec,
    f: F,
) -> Result<(Column, Vec<DataQualityFinding>)>
where
    F: Fn(&[&str]) -> std::result::Result<Derived, Error> + Sync + Send,
{
    let n = ds.n_rows();
    let key_of = |row: usize| -> CodeKey {
        sources
            .iter()
            .map(|s| s.map_or(u32::MAX, |c| ds.column_at(c).code(row)))
            .collect()
    };

    let partials = exec.map_chunks(n, CHUNK_ROWS, |range| {
        let mut seen: HashMap<CodeKey, usize> = HashMap::new();
        for row in range {
            seen.entry(key_of(row)).or_insert(row);
        }
        seen
    });
    let mut first_row: HashMap<CodeKey, usize> = HashMap::new();
    for part in partials {
        for (k, row) in part {
            let e = first_row.entry(k).or_insert(row);
            *e = (*e).min(row);
        }
    }
    let mut keys: Vec<(CodeKey, usize)> = first_row.into_iter().collect();
    keys.sort_unstable_by_key(|(_, row)| *row);

    let results = exec.map_slice(&keys, |(key, row)| {
        let cells: SmallVec<[&str; 4]> = key
            .iter()
            .zip(sources)
            .map(|(&code, s)| s.map_or("", |c| ds.column_at(c).value_of(code)))
            .collect();
        f(&cells).map_err(|e| match e {
            Error::RaceOutOfDomain { value, .. } => Error::RaceOutOfDomain { row: *row, value },
            other => other,
        })
    });

    let mut column = Column::new(target);
    let mut lookup: HashMap<CodeKey, (u32, Option<Flag>)> = HashMap::with_capacity(keys.len());
    for ((key, _), res) in keys.into_iter().zip(results) {
        let d = res?;
        let code = column.intern(&d.value);
        lookup.insert(key, (code, d.finding));
    }

    let chunks = exec.map_chunks(n, CHUNK_ROWS, |range| {
        let mut codes = Vec::with_capacity(range.len());
        let mut findings = Vec::new();
        for row in range {
            let (code, finding) = &lookup[&key_of(row)];
            codes.push(*code);
            if let Some((kind, detail)) = finding {
                findings.push(DataQualityFinding {
                    row,
                    field: target.to_owned(),
                    kind: (*kind).to_owned(),
                    detail: detail.clone(),
                });
            }
        }
        (codes, findings)
    });
    let mut findings = Vec::new();
    let mut all_codes = Vec::with_capacity(n);
    for (codes, f) in chunks {
        all_codes.extend(codes);
        findings.extend(f);
    }
    column.set_codes(all_codes);
    Ok((column, findings))
}

/// Replace unanswered category cells with the field's missing label, with
/// jurisdiction fill for fields that carry that rule. Fields without a
/// missing label are left unchanged.
pub fn recode_missing(dataset: &Dataset, schema: &Schema) -> Dataset {
    recode_missing_with(dataset, schema, Exec::default())
}

pub fn recode_missing_with(dataset: &Dataset, schema: &Schema, exec: Exec) -> Dataset {
    let mut out = dataset.clone();
    for field in schema.released_fields() {
        if field.value_type != ValueType::Category {
            continue;
        }
        let Some(label) = field.missing_label.as_deref() else {
            continue;
        };
        let Some(idx) = out.column_index(&field.name) else {
            continue;
        };
        let jurisdiction = match &field.recode {
            Some(RecodeRule::JurisdictionFill { jurisdiction_field }) => {
                out.column_index(jurisdiction_field)
            }
            _ => None,
        };
        let column = match jurisdiction {
            Some(jcol) => {
                let (col, _) = derive_column(
                    &out,
                    &field.name,
                    &[Some(idx), Some(jcol)],
                    exec,
                    |cells| {
                        let value = if cells[0].trim().is_empty() {
                            let j = cells[1].trim();
                            if j.is_empty() { label } else { j }
                        } else {
                            cells[0]
                        };
                        Ok(Derived {
                            value: value.to_owned(),
                            finding: None,
                        })
                    },
                )
                .expect("jurisdiction fill is infallible");
                col
            }
            None => out.column_at(idx).map_values(exec, |v| {
                if v.trim().is_empty() {
                    Cow::Owned(label.to_owned())
                } else {
                    Cow::Borrowed(v)
                }
            }),
        };
        out.put_column(column).expect("same row count");
    }
    out
}

/// Run every recode rule of `schema` over `dataset`. Derived columns are
/// created when their source columns are present; otherwise any existing
/// values of the target column are kept. Row count and order never change.
pub fn recode_dataset(
    dataset: &Dataset,
    schema: &Schema,
    processing_date: NaiveDate,
    exec: Exec,
) -> Result<RecodeOutput> {
    let mut ds = dataset.clone();
    let mut findings = Vec::new();

    // Date logic first so derivations see cleaned dates.
    for field in &schema.fields {
        if !matches!(field.recode, Some(RecodeRule::DateLogic)) {
            continue;
        }
        let Some(idx) = ds.column_index(&field.name) else {
            continue;
        };
        let col = ds.column_at(idx);
        let mapped = col.map_values(exec, |v| match parse_date_cell(v) {
            Some(d) if check_date_logic(d, processing_date, schema.epidemic_epoch).is_none() => {
                Cow::Borrowed("")
            }
            _ => Cow::Borrowed(v),
        });
        for row in 0..ds.n_rows() {
            let before = col.get(row);
            if !before.is_empty() && mapped.get(row).is_empty() {
                findings.push(DataQualityFinding {
                    row,
                    field: field.name.clone(),
                    kind: "date_out_of_range".to_owned(),
                    detail: before.to_owned(),
                });
            }
        }
        ds.put_column(mapped)?;
    }

    for field in &schema.fields {
        match &field.recode {
            Some(RecodeRule::AgeBin {
                age_field,
                dob_field,
                onset_field,
                bins,
            }) => {
                let age = ds.column_index(age_field);
                let dob = ds.column_index(dob_field);
                if age.is_none() && dob.is_none() {
                    continue;
                }
                let onset = ds.column_index(onset_field);
                let (col, f) = derive_column(&ds, &field.name, &[age, dob, onset], exec, |c| {
                    let binned = bin_age(
                        parse_age_cell(c[0]),
                        parse_date_cell(c[1]),
                        parse_date_cell(c[2]),
                        bins,
                    );
                    Ok(Derived {
                        value: binned.label.to_owned(),
                        finding: binned
                            .negative_age
                            .map(|a| ("negative_age", format!("computed age {a}"))),
                    })
                })?;
                findings.extend(f);
                ds.put_column(col)?;
            }
            Some(RecodeRule::RaceEthnicityCombine {
                race_field,
                ethnicity_field,
                separator,
                race_values,
            }) => {
                let race = ds.column_index(race_field);
                let eth = ds.column_index(ethnicity_field);
                if race.is_none() && eth.is_none() {
                    continue;
                }
                let (col, f) = derive_column(&ds, &field.name, &[race, eth], exec, |c| {
                    let races: Vec<&str> = c[0].split(separator.as_str()).collect();
                    combine_race_ethnicity(&races, c[1], race_values)
                        .map(|value| Derived {
                            value,
                            finding: None,
                        })
                        .map_err(|value| Error::RaceOutOfDomain { row: 0, value })
                })?;
                findings.extend(f);
                ds.put_column(col)?;
            }
            _ => {}
        }
    }

    ds = recode_missing_with(&ds, schema, exec);

    for field in &schema.fields {
        let Some(RecodeRule::FipsDerive {
            state_field,
            county_field,
        }) = &field.recode
        else {
            continue;
        };
        let (Some(state), Some(county)) =
            (ds.column_index(state_field), ds.column_index(county_field))
        else {
            continue;
        };
        let table = schema.fips();
        let (col, f) = derive_column(&ds, &field.name, &[Some(state), Some(county)], exec, |c| {
            Ok(match derive_fips(c[0], c[1], table) {
                Some(code) => Derived {
                    value: code.to_owned(),
                    finding: None,
                },
                None => Derived {
                    value: NA.to_owned(),
                    finding: (!is_missing_marker(c[0]) && !is_missing_marker(c[1]))
                        .then(|| ("fips_unmatched", format!("{}/{}", c[0], c[1]))),
                },
            })
        })?;
        findings.extend(f);
        ds.put_column(col)?;
    }

    findings.sort_by(|a, b| (a.row, &a.field).cmp(&(b.row, &b.field)));
    Ok(RecodeOutput {
        dataset: ds,
        findings,
    })
}

/// Released fields of `schema` present in `dataset`, in schema order.
pub fn project_release(dataset: &Dataset, schema: &Schema) -> Result<Dataset> {
    let names: Vec<&str> = schema
        .released_fields()
        .map(|f| f.name.as_str())
        .filter(|n| dataset.has_column(n))
        .collect();
    dataset.project(&names)
}
