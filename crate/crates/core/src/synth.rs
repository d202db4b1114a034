//! Seeded synthetic raw case records for tests and benchmarks, and the two
//! ten-row worked examples used as fixtures.

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Column, Dataset};
use crate::fips::FipsColumn;
use crate::ingest::{RawSubmission, DATE_FORMAT};
use crate::recode::RecodeRule;
use crate::schema::{Domain, FieldSpec, Schema, ValueType};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub rows: usize,
    pub seed: u64,
    pub first_report: NaiveDate,
    pub last_report: NaiveDate,
    /// Probability a category or date cell is left empty.
    pub missing_rate: f64,
    /// Probability a row resubmits an earlier case id.
    pub duplicate_rate: f64,
    pub states: usize,
    pub counties_per_state: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 1000,
            seed: 7,
            first_report: NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
            last_report: NaiveDate::from_ymd_opt(2020, 12, 1).unwrap(),
            missing_rate: 0.05,
            duplicate_rate: 0.02,
            states: 4,
            counties_per_state: 12,
        }
    }
}

/// Skewed pick: weight of the i-th value is 0.6^i.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let weights: Vec<f64> = (0..n).map(|i| 0.6f64.powi(i as i32)).collect();
    WeightedIndex::new(&weights).expect("positive weights").sample(rng)
}

fn fmt(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

struct Inputs<'a> {
    age: Option<&'a str>,
    dob: Option<&'a str>,
    race: Option<&'a str>,
    ethnicity: Option<&'a str>,
    race_values: Vec<String>,
    jurisdiction: Option<&'a str>,
}

fn inputs(schema: &Schema) -> Inputs<'_> {
    let mut out = Inputs {
        age: None,
        dob: None,
        race: None,
        ethnicity: None,
        race_values: Vec::new(),
        jurisdiction: None,
    };
    for f in &schema.fields {
        match &f.recode {
            Some(RecodeRule::AgeBin {
                age_field, dob_field, ..
            }) => {
                out.age = Some(age_field);
                out.dob = Some(dob_field);
            }
            Some(RecodeRule::RaceEthnicityCombine {
                race_field,
                ethnicity_field,
                race_values,
                ..
            }) => {
                out.race = Some(race_field);
                out.ethnicity = Some(ethnicity_field);
                out.race_values = race_values.clone();
            }
            Some(RecodeRule::JurisdictionFill { jurisdiction_field }) => {
                out.jurisdiction = Some(jurisdiction_field);
            }
            _ => {}
        }
    }
    out
}

fn is_derived(f: &FieldSpec) -> bool {
    matches!(
        f.recode,
        Some(RecodeRule::AgeBin { .. })
            | Some(RecodeRule::RaceEthnicityCombine { .. })
            | Some(RecodeRule::FipsDerive { .. })
    )
}

/// Raw records shaped like jurisdiction submissions for `schema`: derived
/// fields are absent and their inputs present.
pub fn synth_raw(schema: &Schema, cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inp = inputs(schema);
    let report_field = schema.report_date.field.as_str();

    let geo: Vec<(String, Vec<String>)> = {
        let mut states: Vec<&str> = schema.fips().values(FipsColumn::State).collect();
        states.sort_unstable();
        states.dedup();
        states
            .into_iter()
            .filter(|s| schema.fips().counties_of(s).len() >= cfg.counties_per_state)
            .take(cfg.states)
            .map(|s| {
                let counties = schema
                    .fips()
                    .counties_of(s)
                    .into_iter()
                    .take(cfg.counties_per_state)
                    .map(|(county, _)| county.to_owned())
                    .collect();
                (s.to_owned(), counties)
            })
            .collect()
    };

    let mut names: Vec<String> = Vec::new();
    for f in &schema.fields {
        if !is_derived(f) && !names.contains(&f.name) {
            names.push(f.name.clone());
        }
    }
    let span = (cfg.last_report - cfg.first_report).num_days().max(0);
    let mut columns: Vec<Column> = names.iter().map(Column::new).collect();
    let mut cells: Vec<String> = vec![String::new(); names.len()];

    for row in 0..cfg.rows {
        let report = cfg.first_report + Duration::days(rng.random_range(0..=span));
        let (state, counties) = &geo[skewed(&mut rng, geo.len())];
        let county = &counties[skewed(&mut rng, counties.len())];
        let age: u32 = rng.random_range(0..100);
        for (cell, name) in cells.iter_mut().zip(&names) {
            let f = schema.field(name).expect("declared");
            let missing = rng.random_bool(cfg.missing_rate);
            *cell = if schema.dedup_key.first().map(String::as_str) == Some(name) {
                if row > 0 && rng.random_bool(cfg.duplicate_rate) {
                    format!("C{:08}", rng.random_range(0..row))
                } else {
                    format!("C{row:08}")
                }
            } else if name == report_field {
                fmt(report)
            } else if Some(name.as_str()) == inp.age {
                if missing { String::new() } else { age.to_string() }
            } else if Some(name.as_str()) == inp.dob {
                if rng.random_bool(0.5) {
                    String::new()
                } else {
                    fmt(report - Duration::days(i64::from(age) * 365 + rng.random_range(0..365)))
                }
            } else if Some(name.as_str()) == inp.race {
                if missing {
                    String::new()
                } else if rng.random_bool(0.03) && inp.race_values.len() > 1 {
                    format!("{};{}", inp.race_values[0], inp.race_values[1])
                } else {
                    inp.race_values[skewed(&mut rng, inp.race_values.len())].clone()
                }
            } else if Some(name.as_str()) == inp.ethnicity {
                ["Non-Hispanic/Latino", "Hispanic/Latino", "Unknown", ""][skewed(&mut rng, 4)].to_owned()
            } else if Some(name.as_str()) == inp.jurisdiction {
                state.clone()
            } else {
                match (&f.value_type, &f.domain) {
                    (ValueType::Date, _) => {
                        if missing {
                            String::new()
                        } else {
                            fmt(report - Duration::days(rng.random_range(0..10)))
                        }
                    }
                    (ValueType::Numeric, _) => rng.random_range(0..100).to_string(),
                    (ValueType::Category, Some(Domain::Reference { from_fips })) => match from_fips {
                        FipsColumn::State if !missing => state.clone(),
                        FipsColumn::County if !missing => county.clone(),
                        _ => String::new(),
                    },
                    (ValueType::Category, Some(Domain::Values(values))) => {
                        let concrete: Vec<&String> = values
                            .iter()
                            .filter(|v| Some(v.as_str()) != f.missing_label.as_deref())
                            .collect();
                        if missing || concrete.is_empty() {
                            String::new()
                        } else {
                            concrete[skewed(&mut rng, concrete.len())].clone()
                        }
                    }
                    (ValueType::Category, None) => String::new(),
                }
            };
        }
        for (col, cell) in columns.iter_mut().zip(&cells) {
            col.push(cell);
        }
    }
    let mut ds = Dataset::default();
    for col in columns {
        ds.add_column(col).expect("equal lengths");
    }
    ds
}

/// Split synthetic rows into `files` consecutive submissions with increasing
/// submission dates, starting the day after the last report date.
pub fn synth_submissions(schema: &Schema, cfg: &SynthConfig, files: usize) -> Vec<RawSubmission> {
    let ds = synth_raw(schema, cfg);
    let files = files.max(1);
    let per = ds.n_rows().div_ceil(files).max(1);
    (0..files)
        .map(|i| {
            let rows: Vec<usize> = (i * per..((i + 1) * per).min(ds.n_rows())).collect();
            RawSubmission {
                records: ds.select_rows(&rows),
                submission_date: Some(cfg.last_report + Duration::days(i as i64 + 1)),
                source_label: format!("synthetic-{i}"),
            }
        })
        .collect()
}

/// The ten-row worked examples.
pub mod fixtures {
    use crate::dataset::Dataset;

    pub const QI: [&str; 3] = ["sex", "age_group", "race_ethnicity_combined"];

    fn table(columns: &[&str], rows: &[&[&str]]) -> Dataset {
        let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        Dataset::from_rows(columns, &rows).expect("fixture")
    }

    pub fn k_raw() -> Dataset {
        table(
            &QI,
            &[
                &["Male", "0-9", "Hispanic/Latino"],
                &["Female", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Male", "0-9", "Unknown"],
                &["Female", "0-9", "Unknown"],
                &["Unknown", "0-9", "Unknown"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
            ],
        )
    }

    pub fn k_suppressed() -> Dataset {
        table(
            &QI,
            &[
                &["NA", "0-9", "NA"],
                &["NA", "0-9", "NA"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["NA", "0-9", "NA"],
                &["NA", "0-9", "NA"],
                &["NA", "0-9", "NA"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
                &["Unknown", "0-9", "Hispanic/Latino"],
            ],
        )
    }

    pub const K_RAW_FREQUENCY: [usize; 10] = [1, 1, 5, 1, 1, 1, 5, 5, 5, 5];

    const L_COLUMNS: [&str; 4] = ["sex", "age_group", "race_ethnicity_combined", "pos_spec_dt"];

    pub fn l_raw() -> Dataset {
        table(
            &L_COLUMNS,
            &[
                &["Female", "0-9", "Asian, Non-Hispanic", "2020-03-01"],
                &["Female", "0-9", "Asian, Non-Hispanic", "2020-03-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-04-01"],
                &["Female", "0-9", "Asian, Non-Hispanic", "2020-03-01"],
                &["Female", "0-9", "Asian, Non-Hispanic", "2020-03-01"],
                &["Female", "0-9", "Asian, Non-Hispanic", "2020-03-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-05-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-05-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-06-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-07-01"],
            ],
        )
    }

    pub fn l_suppressed() -> Dataset {
        table(
            &L_COLUMNS,
            &[
                &["Female", "0-9", "Asian, Non-Hispanic", "NA"],
                &["Female", "0-9", "Asian, Non-Hispanic", "NA"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-04-01"],
                &["Female", "0-9", "Asian, Non-Hispanic", "NA"],
                &["Female", "0-9", "Asian, Non-Hispanic", "NA"],
                &["Female", "0-9", "Asian, Non-Hispanic", "NA"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-05-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-05-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-06-01"],
                &["Unknown", "0-9", "Hispanic/Latino", "2020-07-01"],
            ],
        )
    }

    pub const L_RAW_DISTINCT: [usize; 10] = [1, 1, 4, 1, 1, 1, 4, 4, 4, 4];
}
