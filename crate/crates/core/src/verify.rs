//! Release verification, kept separate from the suppression engine.
//!
//! Classes are recounted here by sorting row indices on their
//! quasi-identifier strings and scanning runs of equal rows; the engine
//! groups by hashing dictionary codes. The PII scan checks every released
//! cell against its declared domain and a handful of free-text heuristics.

use std::cmp::Ordering;
use std::ops::Range;

use serde::Serialize;

use crate::dataset::{Dataset, NA};
use crate::error::Result;
use crate::ingest::parse_date;
use crate::par::Exec;
use crate::schema::{FieldClass, FieldSpec, Schema, ValueType};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KViolation {
    pub signature: Vec<String>,
    pub frequency: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LViolation {
    pub signature: Vec<String>,
    pub field: String,
    pub distinct: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiPattern {
    OutOfDomain,
    InvalidDate,
    InvalidNumber,
    LongText,
    MultiWordText,
    DigitRun,
    UndeclaredField,
    DirectIdentifier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PiiFinding {
    pub field: String,
    /// `None` for column-level findings.
    pub row: Option<usize>,
    pub pattern: PiiPattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KCheck {
    pub min_frequency: Option<usize>,
    pub violations: Vec<KViolation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PrivacyReport {
    pub rows: usize,
    pub k: usize,
    pub l: usize,
    pub k_min_frequency: Option<usize>,
    pub k_violations: Vec<KViolation>,
    pub l_violations: Vec<LViolation>,
    pub pii_findings: Vec<PiiFinding>,
    pub verdict: Verdict,
}

impl PrivacyReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PiiConfig {
    pub max_len: usize,
    pub max_digit_run: usize,
}

impl Default for PiiConfig {
    fn default() -> Self {
        PiiConfig {
            max_len: 64,
            max_digit_run: 8,
        }
    }
}

fn compare_rows(ds: &Dataset, cols: &[usize], a: usize, b: usize) -> Ordering {
    for &c in cols {
        match ds.get(a, c).cmp(ds.get(b, c)) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Row indices sorted by quasi-identifier strings, plus the runs of equal rows.
fn sorted_runs(ds: &Dataset, cols: &[usize], exec: Exec) -> (Vec<usize>, Vec<Range<usize>>) {
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();
    exec.sort_by(&mut order, |&a, &b| compare_rows(ds, cols, a, b).then(a.cmp(&b)));
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || compare_rows(ds, cols, order[start], order[i]) != Ordering::Equal {
            runs.push(start..i);
            start = i;
        }
    }
    (order, runs)
}

fn signature(ds: &Dataset, cols: &[usize], row: usize) -> Vec<String> {
    cols.iter().map(|&c| ds.get(row, c).to_owned()).collect()
}

fn qi_columns(ds: &Dataset, qi_order: &[String]) -> Result<Vec<usize>> {
    qi_order.iter().map(|q| ds.require_column(q)).collect()
}

pub fn verify_k_anonymity(ds: &Dataset, qi_order: &[String], k: usize) -> Result<KCheck> {
    verify_k_anonymity_with(ds, qi_order, k, Exec::default())
}

pub fn verify_k_anonymity_with(
    ds: &Dataset,
    qi_order: &[String],
    k: usize,
    exec: Exec,
) -> Result<KCheck> {
    let cols = qi_columns(ds, qi_order)?;
    let (order, runs) = sorted_runs(ds, &cols, exec);
    let min_frequency = runs.iter().map(|r| r.len()).min();
    let violations = runs
        .iter()
        .filter(|r| r.len() < k)
        .map(|r| KViolation {
            signature: signature(ds, &cols, order[r.start]),
            frequency: r.len(),
        })
        .collect();
    Ok(KCheck {
        min_frequency,
        violations,
    })
}

/// Classes whose concrete values of `field` number fewer than `l`, unless
/// every member is missing. `missing_label` also counts as missing.
pub fn verify_l_diversity(
    ds: &Dataset,
    qi_order: &[String],
    field: &str,
    l: usize,
    missing_label: Option<&str>,
) -> Result<Vec<LViolation>> {
    verify_l_diversity_with(ds, qi_order, field, l, missing_label, Exec::default())
}

pub fn verify_l_diversity_with(
    ds: &Dataset,
    qi_order: &[String],
    field: &str,
    l: usize,
    missing_label: Option<&str>,
    exec: Exec,
) -> Result<Vec<LViolation>> {
    let cols = qi_columns(ds, qi_order)?;
    let target = ds.require_column(field)?;
    let (order, runs) = sorted_runs(ds, &cols, exec);
    let mut out = Vec::new();
    for run in runs {
        let mut values: Vec<&str> = order[run.clone()]
            .iter()
            .map(|&r| ds.get(r, target))
            .filter(|v| {
                let v = v.trim();
                !v.is_empty() && v != NA && Some(v) != missing_label
            })
            .collect();
        values.sort_unstable();
        values.dedup();
        if !values.is_empty() && values.len() < l {
            out.push(LViolation {
                signature: signature(ds, &cols, order[run.start]),
                field: field.to_owned(),
                distinct: values.len(),
            });
        }
    }
    Ok(out)
}

fn free_text_patterns(value: &str, config: &PiiConfig) -> Vec<PiiPattern> {
    let mut out = Vec::new();
    if value.chars().count() > config.max_len {
        out.push(PiiPattern::LongText);
    }
    let alpha_tokens = value
        .split_whitespace()
        .filter(|t| t.chars().any(char::is_alphabetic))
        .count();
    if alpha_tokens > 1 {
        out.push(PiiPattern::MultiWordText);
    }
    let mut run = 0;
    let mut longest = 0;
    for ch in value.chars() {
        run = if ch.is_ascii_digit() { run + 1 } else { 0 };
        longest = longest.max(run);
    }
    if longest > config.max_digit_run {
        out.push(PiiPattern::DigitRun);
    }
    out
}

fn is_missing(field: Option<&FieldSpec>, value: &str) -> bool {
    value.is_empty() || value == NA || field.and_then(|f| f.missing_label.as_deref()) == Some(value)
}

/// Patterns matched by one value of `field`. Declared category values are
/// trusted and skip the free-text heuristics.
fn value_patterns(
    schema: &Schema,
    field: Option<&FieldSpec>,
    value: &str,
    config: &PiiConfig,
) -> Vec<PiiPattern> {
    if let Some(spec) = field {
        match spec.value_type {
            ValueType::Category => {
                if schema.category_allows(spec, value) {
                    return Vec::new();
                }
                let mut out = vec![PiiPattern::OutOfDomain];
                out.extend(free_text_patterns(value, config));
                return out;
            }
            ValueType::Date if !is_missing(field, value) && parse_date(value).is_none() => {
                let mut out = vec![PiiPattern::InvalidDate];
                out.extend(free_text_patterns(value, config));
                return out;
            }
            ValueType::Numeric if !is_missing(field, value) && value.trim().parse::<f64>().is_err() => {
                let mut out = vec![PiiPattern::InvalidNumber];
                out.extend(free_text_patterns(value, config));
                return out;
            }
            _ => {}
        }
    }
    if is_missing(field, value) {
        return Vec::new();
    }
    free_text_patterns(value, config)
}

pub fn scan_pii(ds: &Dataset, schema: &Schema, config: &PiiConfig) -> Vec<PiiFinding> {
    scan_pii_with(ds, schema, config, Exec::default())
}

pub fn scan_pii_with(
    ds: &Dataset,
    schema: &Schema,
    config: &PiiConfig,
    exec: Exec,
) -> Vec<PiiFinding> {
    let per_column = exec.map_slice(ds.columns(), |col| {
        let field = schema.field(col.name());
        let mut out = Vec::new();
        match field {
            None => out.push(PiiFinding {
                field: col.name().to_owned(),
                row: None,
                pattern: PiiPattern::UndeclaredField,
            }),
            Some(f) if f.class == FieldClass::DirectIdentifier => {
                out.push(PiiFinding {
                    field: col.name().to_owned(),
                    row: None,
                    pattern: PiiPattern::DirectIdentifier,
                });
                return out;
            }
            _ => {}
        }
        // Values are checked once per dictionary entry.
        let flagged: Vec<Vec<PiiPattern>> = col
            .distinct_values()
            .iter()
            .map(|v| value_patterns(schema, field, v, config))
            .collect();
        let by_code: std::collections::HashMap<u32, &Vec<PiiPattern>> = col
            .distinct_values()
            .into_iter()
            .zip(&flagged)
            .filter(|(_, p)| !p.is_empty())
            .map(|(v, p)| (col.code_of(v).expect("interned"), p))
            .collect();
        if by_code.is_empty() {
            return out;
        }
        for (row, code) in col.codes().iter().enumerate() {
            if let Some(patterns) = by_code.get(code) {
                out.extend(patterns.iter().map(|&pattern| PiiFinding {
                    field: col.name().to_owned(),
                    row: Some(row),
                    pattern,
                }));
            }
        }
        out
    });
    per_column.into_iter().flatten().collect()
}

/// Full release check: k, l over every confidential field present, and PII.
pub fn verify_release(ds: &Dataset, schema: &Schema, exec: Exec) -> Result<PrivacyReport> {
    let k = schema.thresholds.k;
    let l = schema.thresholds.l;
    let kcheck = verify_k_anonymity_with(ds, &schema.qi_order, k, exec)?;
    let mut l_violations = Vec::new();
    for field in schema.fields_of(FieldClass::ConfidentialAttribute) {
        if ds.has_column(&field.name) {
            l_violations.extend(verify_l_diversity_with(
                ds,
                &schema.qi_order,
                &field.name,
                l,
                field.missing_label.as_deref(),
                exec,
            )?);
        }
    }
    let pii_findings = scan_pii_with(ds, schema, &PiiConfig::default(), exec);
    let verdict = if kcheck.violations.is_empty() && l_violations.is_empty() && pii_findings.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(PrivacyReport {
        rows: ds.n_rows(),
        k,
        l,
        k_min_frequency: kcheck.min_frequency,
        k_violations: kcheck.violations,
        l_violations,
        pii_findings,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qi() -> Vec<String> {
        ["sex", "age_group", "race_ethnicity_combined"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn empty_dataset_passes_vacuously() {
        let ds = Dataset::from_rows::<&str>(&["sex", "age_group", "race_ethnicity_combined"], &[]).unwrap();
        let k = verify_k_anonymity(&ds, &qi(), 5).unwrap();
        assert_eq!(k.min_frequency, None);
        assert!(k.violations.is_empty());
    }

    #[test]
    fn all_missing_confidential_passes() {
        let rows = vec![vec!["Male", "0 - 9 Years", "Hispanic/Latino", "NA"]; 5];
        let ds = Dataset::from_rows(&["sex", "age_group", "race_ethnicity_combined", "pos_spec_dt"], &rows).unwrap();
        assert!(verify_l_diversity(&ds, &qi(), "pos_spec_dt", 2, None).unwrap().is_empty());
    }

    #[test]
    fn free_text_in_category_is_flagged() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(&["sex"], &[vec!["John Smith, 404-555-0100"], vec!["Male"]]).unwrap();
        let found = scan_pii(&ds, &s, &PiiConfig::default());
        assert!(found.iter().all(|f| f.row == Some(0)));
        assert!(found.iter().any(|f| f.pattern == PiiPattern::OutOfDomain));
        assert!(found.iter().any(|f| f.pattern == PiiPattern::MultiWordText));
    }

    #[test]
    fn near_miss_category_value() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(&["hosp_yn"], &[vec!["Yes"], vec!["Yess"]]).unwrap();
        let found = scan_pii(&ds, &s, &PiiConfig::default());
        assert_eq!(
            found,
            vec![PiiFinding {
                field: "hosp_yn".into(),
                row: Some(1),
                pattern: PiiPattern::OutOfDomain
            }]
        );
    }

    #[test]
    fn in_domain_release_is_clean() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(
            &["cdc_report_dt", "sex", "race_ethnicity_combined", "medcond_yn"],
            &[
                vec!["2020-11-01", "Female", "Native Hawaiian/Other Pacific Islander, Non-Hispanic", "Missing"],
                vec!["2020-11-02", "NA", "NA", "Yes"],
                vec!["", "Unknown", "Unknown", "No"],
            ],
        )
        .unwrap();
        assert!(scan_pii(&ds, &s, &PiiConfig::default()).is_empty());
    }

    #[test]
    fn column_level_findings() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(&["case_id", "notes"], &[vec!["A1", "x"]]).unwrap();
        let patterns: Vec<PiiPattern> = scan_pii(&ds, &s, &PiiConfig::default())
            .into_iter()
            .map(|f| f.pattern)
            .collect();
        assert_eq!(patterns, vec![PiiPattern::DirectIdentifier, PiiPattern::UndeclaredField]);
    }

    #[test]
    fn identifier_like_digits_and_bad_dates() {
        let s = Schema::public_use();
        let ds = Dataset::from_rows(&["onset_dt"], &[vec!["123456789"], vec!["2020-02-30"]]).unwrap();
        let found: Vec<(Option<usize>, PiiPattern)> = scan_pii(&ds, &s, &PiiConfig::default())
            .into_iter()
            .map(|f| (f.row, f.pattern))
            .collect();
        assert_eq!(
            found,
            vec![
                (Some(0), PiiPattern::InvalidDate),
                (Some(0), PiiPattern::DigitRun),
                (Some(1), PiiPattern::InvalidDate),
            ]
        );
    }
}
