//! County FIPS reference table.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Census 2020 county list (state postal code, county name, 5-digit code).
pub const BUNDLED_FIPS_CSV: &str = include_str!("../../../schemas/fips_counties.csv");

/// Which column of the reference table a category domain is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FipsColumn {
    State,
    County,
    Code,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FipsTable {
    by_name: HashMap<(String, String), String>,
    states: BTreeSet<String>,
    counties: BTreeSet<String>,
    codes: BTreeSet<String>,
}

#[derive(Deserialize)]
struct FipsRow {
    state: String,
    county: String,
    fips: String,
}

/// Upper-case and collapse runs of whitespace.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_uppercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl FipsTable {
    pub fn bundled() -> Arc<FipsTable> {
        static TABLE: OnceLock<Arc<FipsTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| {
                Arc::new(
                    FipsTable::from_csv_str(BUNDLED_FIPS_CSV)
                        .expect("bundled FIPS table is well formed"),
                )
            })
            .clone()
    }

    pub fn load(path: &Path) -> Result<FipsTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FipsTable::from_csv_str(&text).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    pub fn from_csv_str(text: &str) -> Result<FipsTable> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut table = FipsTable::default();
        for row in reader.deserialize::<FipsRow>() {
            let row = row.map_err(|e| Error::csv("<fips table>", e))?;
            if row.fips.len() != 5 || !row.fips.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::SchemaParse(format!(
                    "FIPS code {:?} is not 5 digits",
                    row.fips
                )));
            }
            let state = normalize_name(&row.state);
            let county = normalize_name(&row.county);
            table.states.insert(state.clone());
            table.counties.insert(county.clone());
            table.codes.insert(row.fips.clone());
            table.by_name.insert((state, county), row.fips);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Exact (state, county) match after case and whitespace normalization.
    /// A trailing "County" or "Parish" on the input is ignored.
    pub fn lookup(&self, state: &str, county: &str) -> Option<&str> {
        let state = normalize_name(state);
        let county = normalize_name(county);
        if state.is_empty() || county.is_empty() {
            return None;
        }
        if let Some(code) = self.by_name.get(&(state.clone(), county.clone())) {
            return Some(code);
        }
        for suffix in [" COUNTY", " PARISH"] {
            if let Some(stem) = county.strip_suffix(suffix) {
                if let Some(code) = self.by_name.get(&(state.clone(), stem.to_owned())) {
                    return Some(code);
                }
            }
        }
        None
    }

    pub fn contains(&self, column: FipsColumn, value: &str) -> bool {
        match column {
            FipsColumn::State => self.states.contains(value),
            FipsColumn::County => self.counties.contains(value),
            FipsColumn::Code => self.codes.contains(value),
        }
    }

    pub fn values(&self, column: FipsColumn) -> impl Iterator<Item = &str> {
        match column {
            FipsColumn::State => self.states.iter(),
            FipsColumn::County => self.counties.iter(),
            FipsColumn::Code => self.codes.iter(),
        }
        .map(String::as_str)
    }

    /// Counties of one state, sorted by name.
    pub fn counties_of(&self, state: &str) -> Vec<(&str, &str)> {
        let mut out: Vec<(&str, &str)> = self
            .by_name
            .iter()
            .filter(|((s, _), _)| s == state)
            .map(|((_, c), code)| (c.as_str(), code.as_str()))
            .collect();
        out.sort_unstable();
        out
    }
}
