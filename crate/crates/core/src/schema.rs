//! Declarative field catalog: sensitivity classes, value domains, recode
//! rules and privacy thresholds.
//!
//! Schemas are JSON files. Two are bundled under `schemas/`:
//! `public_use.json` (11 released fields) and `scientific_use.json`
//! (31 released fields). Fields classed `direct_identifier` are raw inputs
//! that recoding consumes; they are never written to a release.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::NA;
use crate::error::{Error, Result};
use crate::fips::{FipsColumn, FipsTable};
use crate::recode::RecodeRule;

pub const PUBLIC_USE_JSON: &str = include_str!("../../../schemas/public_use.json");
pub const SCIENTIFIC_USE_JSON: &str = include_str!("../../../schemas/scientific_use.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldClass {
    DirectIdentifier,
    QuasiIdentifier,
    ConfidentialAttribute,
    NonConfidentialAttribute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Category,
    Date,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Values(Vec<String>),
    Reference { from_fips: FipsColumn },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub class: FieldClass,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    /// Label for unanswered values. `None` leaves empty cells empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recode: Option<RecodeRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl FieldSpec {
    pub fn is_released(&self) -> bool {
        self.class != FieldClass::DirectIdentifier
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyThresholds {
    pub k: usize,
    pub l: usize,
}

impl PrivacyThresholds {
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k < 2 {
            out.push("k below minimum 2".to_owned());
        }
        if self.l < 1 {
            out.push("l below minimum 1".to_owned());
        }
        if self.l > self.k {
            out.push(format!("l={} exceeds k={}", self.l, self.k));
        }
        out
    }
}

/// Where the report date comes from when a record does not carry one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDateSpec {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_seen_field: Option<String>,
}

impl Default for ReportDateSpec {
    fn default() -> Self {
        ReportDateSpec {
            field: "cdc_report_dt".to_owned(),
            form_field: None,
            first_seen_field: None,
        }
    }
}

fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 12, 1).unwrap()
}

fn default_dedup_key() -> Vec<String> {
    vec!["case_id".to_owned()]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub thresholds: PrivacyThresholds,
    pub release_delay_days: u32,
    #[serde(default = "default_epoch")]
    pub epidemic_epoch: NaiveDate,
    #[serde(default = "default_dedup_key")]
    pub dedup_key: Vec<String>,
    pub qi_order: Vec<String>,
    /// Row order of the suppression summary; defaults to `qi_order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_order: Option<Vec<String>>,
    #[serde(default)]
    pub report_date: ReportDateSpec,
    /// Reference table path, relative to the schema file. The bundled table
    /// is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fips_table: Option<String>,
    pub fields: Vec<FieldSpec>,
    #[serde(skip, default = "FipsTable::bundled")]
    fips: Arc<FipsTable>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.thresholds == other.thresholds
            && self.release_delay_days == other.release_delay_days
            && self.epidemic_epoch == other.epidemic_epoch
            && self.dedup_key == other.dedup_key
            && self.qi_order == other.qi_order
            && self.summary_order == other.summary_order
            && self.report_date == other.report_date
            && self.fips_table == other.fips_table
            && self.fields == other.fields
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, field: Option<&str>, message: impl Into<String>) {
        self.findings.push(Finding {
            field: field.map(str::to_owned),
            message: message.into(),
        });
    }
}

impl Schema {
    /// Parse without validating.
    pub fn parse(text: &str) -> Result<Schema> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::SchemaParse(e.to_string()))?;
        if raw.get("thresholds").is_none() {
            return Err(Error::SchemaParse("missing thresholds".to_owned()));
        }
        serde_json::from_value(raw).map_err(|e| Error::SchemaParse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Schema> {
        let schema = Schema::parse(text)?;
        schema.ensure_valid()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    pub fn public_use() -> Schema {
        Schema::from_json(PUBLIC_USE_JSON).expect("bundled public-use schema is valid")
    }

    pub fn scientific_use() -> Schema {
        Schema::from_json(SCIENTIFIC_USE_JSON).expect("bundled scientific-use schema is valid")
    }

    pub fn fips(&self) -> &FipsTable {
        &self.fips
    }

    pub fn set_fips(&mut self, table: Arc<FipsTable>) {
        self.fips = table;
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn fields_of(&self, class: FieldClass) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(move |f| f.class == class)
    }

    pub fn released_fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.is_released())
    }

    pub fn confidential_fields(&self) -> Vec<&str> {
        self.fields_of(FieldClass::ConfidentialAttribute)
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn summary_order(&self) -> &[String] {
        self.summary_order.as_deref().unwrap_or(&self.qi_order)
    }

    pub fn with_thresholds(&self, thresholds: PrivacyThresholds) -> Schema {
        Schema {
            thresholds,
            ..self.clone()
        }
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = validate_schema(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidSchema(
                report.findings.iter().map(|f| f.to_string()).collect(),
            ))
        }
    }

    /// True when `value` is an acceptable released value for a category field:
    /// a declared domain value, the field's missing representation, or NA.
    pub fn category_allows(&self, field: &FieldSpec, value: &str) -> bool {
        if value == NA {
            return true;
        }
        match &field.missing_label {
            Some(label) if label == value => return true,
            None if value.is_empty() => return true,
            _ => {}
        }
        match &field.domain {
            Some(Domain::Values(values)) => values.iter().any(|v| v == value),
            Some(Domain::Reference { from_fips }) => self.fips.contains(*from_fips, value),
            None => false,
        }
    }

    pub fn domain_values(&self, field: &FieldSpec) -> Vec<String> {
        match &field.domain {
            Some(Domain::Values(values)) => values.clone(),
            Some(Domain::Reference { from_fips }) => {
                self.fips.values(*from_fips).map(str::to_owned).collect()
            }
            None => Vec::new(),
        }
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let mut schema = read_schema_unvalidated(path.as_ref())?;
    schema.ensure_valid()?;
    if schema.fips.is_empty() {
        schema.fips = FipsTable::bundled();
    }
    Ok(schema)
}

/// Parse a schema file and attach its reference table, without validation.
pub fn read_schema_unvalidated(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut schema = Schema::parse(&text)?;
    if let Some(rel) = &schema.fips_table {
        let base = path.parent().unwrap_or(Path::new("."));
        schema.fips = Arc::new(FipsTable::load(&base.join(rel))?);
    }
    Ok(schema)
}

pub fn write_schema(schema: &Schema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, schema.to_json()).map_err(|e| Error::io(path, e))
}

pub fn validate_schema(schema: &Schema) -> ValidationReport {
    let mut report = ValidationReport::default();

    for msg in schema.thresholds.findings() {
        report.push(None, msg);
    }

    let mut names = HashSet::new();
    for f in &schema.fields {
        if !names.insert(f.name.as_str()) {
            report.push(Some(&f.name), "duplicate field name");
        }
        if f.name.is_empty() {
            report.push(None, "empty field name");
        }
    }

    for f in &schema.fields {
        check_field(schema, f, &names, &mut report);
    }

    let qi_fields: BTreeSet<&str> = schema
        .fields_of(FieldClass::QuasiIdentifier)
        .map(|f| f.name.as_str())
        .collect();
    if qi_fields.is_empty() {
        report.push(None, "no quasi-identifier fields");
    }
    let mut seen = HashSet::new();
    for q in &schema.qi_order {
        if !seen.insert(q.as_str()) {
            report.push(Some(q), "duplicate entry in qi_order");
        }
        if !qi_fields.contains(q.as_str()) {
            report.push(Some(q), "qi_order entry is not a quasi-identifier field");
        }
    }
    for q in &qi_fields {
        if !seen.contains(q) {
            report.push(Some(q), "quasi-identifier missing from qi_order");
        }
    }

    if let Some(order) = &schema.summary_order {
        for s in order {
            if !names.contains(s.as_str()) {
                report.push(Some(s), "summary_order names an unknown field");
            }
        }
    }

    for key in &schema.dedup_key {
        if !names.contains(key.as_str()) {
            report.push(Some(key), "dedup_key field not declared");
        }
    }

    let rd = &schema.report_date;
    match schema.field(&rd.field) {
        Some(f) if f.value_type == ValueType::Date => {}
        Some(_) => report.push(Some(&rd.field), "report date field must have type date"),
        None => report.push(Some(&rd.field), "report date field not declared"),
    }
    for extra in [&rd.form_field, &rd.first_seen_field].into_iter().flatten() {
        match schema.field(extra) {
            Some(f) if f.value_type == ValueType::Date => {}
            Some(_) => report.push(Some(extra), "report date source must have type date"),
            None => report.push(Some(extra), "report date source not declared"),
        }
    }

    report
}

fn check_field(
    schema: &Schema,
    f: &FieldSpec,
    names: &HashSet<&str>,
    report: &mut ValidationReport,
) {
    let name = Some(f.name.as_str());
    if f.missing_label.as_deref() == Some(NA) {
        report.push(name, "reserved sentinel as missing label");
    }
    match &f.domain {
        Some(Domain::Values(values)) => {
            if values.iter().any(|v| v == NA) {
                report.push(name, "reserved sentinel in domain");
            }
            if values.is_empty() && f.value_type == ValueType::Category && f.is_released() {
                report.push(name, "category field declares an empty domain");
            }
            let distinct: HashSet<&String> = values.iter().collect();
            if distinct.len() != values.len() {
                report.push(name, "duplicate domain value");
            }
        }
        Some(Domain::Reference { from_fips }) => {
            if schema.fips.values(*from_fips).next().is_none() {
                report.push(name, "referenced FIPS domain is empty");
            }
        }
        None => {
            if f.value_type == ValueType::Category && f.is_released() {
                report.push(name, "category field declares no domain");
            }
        }
    }
    if f.value_type != ValueType::Category && f.domain.is_some() {
        report.push(name, "domain declared on a non-category field");
    }
    if let Some(rule) = &f.recode {
        for msg in rule.findings(f, names) {
            report.push(name, msg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_public_schema_matches_dictionary() {
        let s = Schema::public_use();
        assert!(validate_schema(&s).is_valid());
        assert_eq!(s.released_fields().count(), 11);
        assert_eq!(s.qi_order, ["sex", "age_group", "race_ethnicity_combined"]);
        assert_eq!(s.confidential_fields(), ["pos_spec_dt"]);
        assert_eq!(s.thresholds, PrivacyThresholds { k: 5, l: 2 });
        assert_eq!(s.release_delay_days, 14);
    }

    #[test]
    fn bundled_scientific_schema_matches_dictionary() {
        let s = Schema::scientific_use();
        assert!(validate_schema(&s).is_valid());
        assert_eq!(s.released_fields().count(), 31);
        let qis: BTreeSet<&str> = s.qi_order.iter().map(String::as_str).collect();
        let expected: BTreeSet<&str> = [
            "sex",
            "age_group",
            "race_ethnicity_combined",
            "res_county",
            "res_state",
            "hc_work_yn",
        ]
        .into_iter()
        .collect();
        assert_eq!(qis, expected);
        assert_eq!(s.confidential_fields(), ["pos_spec_dt"]);
        assert_eq!(s.thresholds, PrivacyThresholds { k: 5, l: 2 });
    }

    #[test]
    fn k_of_one_is_a_finding() {
        let mut s = Schema::public_use();
        s.thresholds = PrivacyThresholds { k: 1, l: 1 };
        let report = validate_schema(&s);
        assert!(report
            .findings
            .iter()
            .any(|f| f.message == "k below minimum 2"));
    }

    #[test]
    fn l_above_k_is_a_finding() {
        let mut s = Schema::public_use();
        s.thresholds = PrivacyThresholds { k: 2, l: 3 };
        assert!(!validate_schema(&s).is_valid());
    }

    #[test]
    fn na_in_domain_is_a_finding() {
        let mut s = Schema::public_use();
        let sex = s.fields.iter_mut().find(|f| f.name == "sex").unwrap();
        sex.domain = Some(Domain::Values(vec!["Male".into(), "NA".into()]));
        let report = validate_schema(&s);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].message, "reserved sentinel in domain");
    }

    #[test]
    fn zero_quasi_identifiers_rejected() {
        let mut s = Schema::public_use();
        for f in &mut s.fields {
            if f.class == FieldClass::QuasiIdentifier {
                f.class = FieldClass::NonConfidentialAttribute;
            }
        }
        s.qi_order.clear();
        let err = Schema::from_json(&s.to_json()).unwrap_err();
        assert!(err.to_string().contains("no quasi-identifier fields"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            Schema::parse("{\"name\":\"x\"}"),
            Err(Error::SchemaParse(m)) if m == "missing thresholds"
        ));
        let mut v: serde_json::Value = serde_json::from_str(PUBLIC_USE_JSON).unwrap();
        v["fields"][0]["class"] = "secret_sauce".into();
        let err = Schema::parse(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("unknown variant"));
        assert!(Schema::parse("not json").is_err());
    }

    #[test]
    fn validation_is_deterministic() {
        let mut s = Schema::public_use();
        s.thresholds = PrivacyThresholds { k: 0, l: 4 };
        s.dedup_key.push("nope".into());
        assert_eq!(validate_schema(&s), validate_schema(&s));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for s in [Schema::public_use(), Schema::scientific_use()] {
            let path = dir.path().join(format!("{}.json", s.name));
            write_schema(&s, &path).unwrap();
            let back = load_schema(&path).unwrap();
            assert_eq!(back, s);
            for (a, b) in back.fields.iter().zip(&s.fields) {
                assert_eq!(a, b);
            }
        }
    }
}
