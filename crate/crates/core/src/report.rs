//! Suppression summaries, the release manifest and the catalog linkage scan.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{FieldClass, PrivacyThresholds, Schema};
use crate::suppress::SuppressionPlan;
use crate::verify::{PrivacyReport, Verdict};

pub const BUNDLED_SYNONYMS_JSON: &str = include_str!("../../../schemas/synonyms.json");

const SUMMARY_HEADER: [&str; 3] = [
    "Field Name",
    "Number of Values per Field Suppressed",
    "Percent of Values per Field Suppressed",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSuppression {
    pub field: String,
    pub suppressed: usize,
    /// Fraction of rows, in `[0, 1]`.
    pub fraction: f64,
}

impl FieldSuppression {
    pub fn percent(&self) -> String {
        format!("{:.2}%", self.fraction * 100.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuppressionSummary {
    pub rows: usize,
    pub fields: Vec<FieldSuppression>,
}

/// Count actions per field. Fields in `order` are always listed; any other
/// field with actions follows in first-seen order.
pub fn suppression_summary(
    plan: &SuppressionPlan,
    row_count: usize,
    order: &[String],
) -> SuppressionSummary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut extra: Vec<&str> = Vec::new();
    for a in plan.actions() {
        let field = a.field.as_str();
        let n = counts.entry(field).or_insert(0);
        if *n == 0 && !order.iter().any(|o| o == field) {
            extra.push(field);
        }
        *n += 1;
    }
    let fields = order
        .iter()
        .map(String::as_str)
        .chain(extra)
        .map(|field| {
            let suppressed = counts.get(field).copied().unwrap_or(0);
            FieldSuppression {
                field: field.to_owned(),
                suppressed,
                fraction: if row_count == 0 {
                    0.0
                } else {
                    suppressed as f64 / row_count as f64
                },
            }
        })
        .collect();
    SuppressionSummary {
        rows: row_count,
        fields,
    }
}

pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl SuppressionSummary {
    pub fn total(&self) -> usize {
        self.fields.iter().map(|f| f.suppressed).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(SUMMARY_HEADER).expect("in-memory");
        for f in &self.fields {
            w.write_record([f.field.clone(), f.suppressed.to_string(), f.percent()])
                .expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 3]> = self
            .fields
            .iter()
            .map(|f| [f.field.clone(), group_thousands(f.suppressed), f.percent()])
            .collect();
        let mut widths = SUMMARY_HEADER.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!("Suppression summary (n={})\n", group_thousands(self.rows));
        let line = |cells: [&str; 3]| {
            format!(
                "{:<w0$}  {:>w1$}  {:>w2$}\n",
                cells[0],
                cells[1],
                cells[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            )
        };
        out.push_str(&line(SUMMARY_HEADER));
        for r in &rows {
            out.push_str(&line([&r[0], &r[1], &r[2]]));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub source_url: String,
}

pub fn parse_catalog(text: &str) -> Result<Vec<CatalogEntry>> {
    let entries: Vec<CatalogEntry> =
        serde_json::from_str(text).map_err(|e| Error::Catalog(e.to_string()))?;
    if let Some(e) = entries.iter().find(|e| e.columns.is_empty()) {
        return Err(Error::Catalog(format!("entry {:?} lists no columns", e.name)));
    }
    Ok(entries)
}

pub fn load_catalog(path: &Path) -> Result<Vec<CatalogEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text)
}

/// Lower-cased external column name to schema field name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymMap(HashMap<String, String>);

impl SynonymMap {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: HashMap<String, String> =
            serde_json::from_str(text).map_err(|e| Error::Catalog(e.to_string()))?;
        Ok(SynonymMap(
            raw.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        ))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYNONYMS_JSON).expect("bundled synonyms parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, column: &str) -> Option<&str> {
        self.0.get(&column.to_lowercase()).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkageEntry {
    pub rank: usize,
    pub name: String,
    pub source_url: String,
    pub shared: Vec<String>,
    pub overlap: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkageReport {
    pub entries: Vec<LinkageEntry>,
}

impl LinkageReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn link_scan(schema: &Schema, catalog: &[CatalogEntry], synonyms: &SynonymMap) -> LinkageReport {
    let qis: Vec<&str> = schema
        .fields_of(FieldClass::QuasiIdentifier)
        .map(|f| f.name.as_str())
        .collect();
    let resolve = |column: &str| -> Option<&str> {
        let lower = column.to_lowercase();
        if let Some(q) = qis.iter().find(|q| q.to_lowercase() == lower) {
            return Some(q);
        }
        let target = synonyms.get(column)?;
        qis.iter().find(|q| **q == target).copied()
    };
    let mut entries: Vec<LinkageEntry> = catalog
        .iter()
        .map(|e| {
            let shared: BTreeSet<&str> = e.columns.iter().filter_map(|c| resolve(c)).collect();
            let mut shared: Vec<String> = shared.into_iter().map(str::to_owned).collect();
            shared.sort_by_key(|s| qis.iter().position(|q| q == s));
            LinkageEntry {
                rank: 0,
                name: e.name.clone(),
                source_url: e.source_url.clone(),
                overlap: shared.len(),
                shared,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.overlap
            .cmp(&a.overlap)
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.source_url.cmp(&b.source_url))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    LinkageReport { entries }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub ingested: usize,
    pub after_dedup: usize,
    pub after_window: usize,
    pub released: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictSummary {
    pub verdict: Verdict,
    pub k_min_frequency: Option<usize>,
    pub k_violations: usize,
    pub l_violations: usize,
    pub pii_findings: usize,
}

impl From<&PrivacyReport> for VerdictSummary {
    fn from(r: &PrivacyReport) -> Self {
        VerdictSummary {
            verdict: r.verdict,
            k_min_frequency: r.k_min_frequency,
            k_violations: r.k_violations.len(),
            l_violations: r.l_violations.len(),
            pii_findings: r.pii_findings.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReleaseManifest {
    pub tool: String,
    pub version: String,
    pub schema_name: String,
    pub schema_sha256: String,
    pub thresholds: PrivacyThresholds,
    pub release_date: NaiveDate,
    pub release_delay_days: u32,
    pub inputs: Vec<String>,
    pub rows: RowCounts,
    pub suppression: SuppressionSummary,
    pub verification: VerdictSummary,
    pub verification_overridden: bool,
    /// Wall-clock time of the run; the only non-deterministic field.
    pub generated_at: Option<String>,
}

pub fn schema_digest(schema: &Schema) -> String {
    hex::encode(Sha256::digest(schema.to_json().as_bytes()))
}

#[allow(clippy::too_many_arguments)]
pub fn release_manifest(
    inputs: &[String],
    schema: &Schema,
    release_date: NaiveDate,
    rows: RowCounts,
    suppression: &SuppressionSummary,
    report: &PrivacyReport,
    overridden: bool,
    generated_at: Option<String>,
) -> ReleaseManifest {
    ReleaseManifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        schema_name: schema.name.clone(),
        schema_sha256: schema_digest(schema),
        thresholds: schema.thresholds,
        release_date,
        release_delay_days: schema.release_delay_days,
        inputs: inputs.to_vec(),
        rows,
        suppression: suppression.clone(),
        verification: report.into(),
        verification_overridden: overridden,
        generated_at,
    }
}

impl ReleaseManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
