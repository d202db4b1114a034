//! End-to-end release: ingest, report dates, de-duplication, release
//! window, recoding, projection, k- and l-suppression and verification.

use chrono::NaiveDate;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::ingest::{
    apply_release_window, assign_report_dates, combine_submissions, deduplicate, RawSubmission,
};
use crate::par::Exec;
use crate::recode::{project_release, recode_dataset, DataQualityFinding};
use crate::report::{suppression_summary, RowCounts, SuppressionSummary};
use crate::schema::Schema;
use crate::suppress::{
    apply_plan, plan_k_suppression_with, plan_l_suppression_with, KOptions, SuppressionPlan,
};
use crate::verify::{verify_release, PrivacyReport};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub schema: Schema,
    pub release_date: NaiveDate,
    /// Upper bound for date logic; defaults to the release date.
    pub processing_date: Option<NaiveDate>,
    pub allow_infeasible: bool,
    pub exec: Exec,
}

impl PipelineConfig {
    pub fn new(schema: Schema, release_date: NaiveDate) -> Self {
        PipelineConfig {
            schema,
            release_date,
            processing_date: None,
            allow_infeasible: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Anonymized {
    pub dataset: Dataset,
    pub k_plan: SuppressionPlan,
    pub l_plan: SuppressionPlan,
    /// Rows that could not reach k (only with `allow_infeasible`).
    pub unresolved: Vec<usize>,
}

impl Anonymized {
    pub fn plan(&self) -> SuppressionPlan {
        self.k_plan.merged(&self.l_plan)
    }
}

/// k-phase then l-phase over an already recoded and projected dataset.
pub fn anonymize(ds: &Dataset, schema: &Schema, opts: KOptions) -> Result<Anonymized> {
    let k = plan_k_suppression_with(ds, schema, opts).map_err(|e| e.in_stage("k-suppress"))?;
    let after_k = apply_plan(ds, &k.plan).map_err(|e| e.in_stage("k-suppress"))?;
    let l_plan =
        plan_l_suppression_with(&after_k, schema, opts.exec).map_err(|e| e.in_stage("l-suppress"))?;
    let dataset = apply_plan(&after_k, &l_plan).map_err(|e| e.in_stage("l-suppress"))?;
    Ok(Anonymized {
        dataset,
        k_plan: k.plan,
        l_plan,
        unresolved: k.unresolved,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub released: Dataset,
    pub k_plan: SuppressionPlan,
    pub l_plan: SuppressionPlan,
    pub summary: SuppressionSummary,
    pub report: PrivacyReport,
    pub rows: RowCounts,
    pub findings: Vec<DataQualityFinding>,
    pub unresolved: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    pub fn plan(&self) -> SuppressionPlan {
        self.k_plan.merged(&self.l_plan)
    }
}

pub fn run_pipeline(submissions: &[RawSubmission], config: &PipelineConfig) -> Result<PipelineOutput> {
    let schema = &config.schema;
    let mut warnings = Vec::new();
    let (combined, dates) = combine_submissions(submissions).map_err(|e| e.in_stage("ingest"))?;
    let ingested = combined.n_rows();

    let dated = assign_report_dates(&combined, schema, &dates).map_err(|e| e.in_stage("report-date"))?;

    let has_key = !schema.dedup_key.is_empty() && schema.dedup_key.iter().all(|k| dated.has_column(k));
    let deduped = if has_key {
        deduplicate(&dated, &schema.dedup_key, &dates)
            .map_err(|e| e.in_stage("dedup"))?
            .0
    } else {
        if !dated.is_empty() {
            warnings.push(format!(
                "dedup key {} not present in input; records not de-duplicated",
                schema.dedup_key.join(",")
            ));
        }
        dated
    };
    let after_dedup = deduped.n_rows();

    let windowed = apply_release_window(
        &deduped,
        &schema.report_date.field,
        config.release_date,
        schema.release_delay_days,
    )
    .map_err(|e| e.in_stage("window"))?;
    if windowed.is_empty() {
        warnings.push("release window excludes every record; release is empty".to_owned());
    }
    let after_window = windowed.n_rows();

    let processing = config.processing_date.unwrap_or(config.release_date);
    let recoded =
        recode_dataset(&windowed, schema, processing, config.exec).map_err(|e| e.in_stage("recode"))?;
    let projected = project_release(&recoded.dataset, schema).map_err(|e| e.in_stage("project"))?;

    let anon = anonymize(
        &projected,
        schema,
        KOptions {
            allow_infeasible: config.allow_infeasible,
            exec: config.exec,
        },
    )?;
    if !anon.unresolved.is_empty() {
        warnings.push(format!(
            "{} row(s) cannot reach k={} even fully suppressed; released under override",
            anon.unresolved.len(),
            schema.thresholds.k
        ));
    }

    let report = verify_release(&anon.dataset, schema, config.exec).map_err(|e| e.in_stage("verify"))?;
    let plan = anon.plan();
    let summary = suppression_summary(&plan, anon.dataset.n_rows(), schema.summary_order());
    Ok(PipelineOutput {
        rows: RowCounts {
            ingested,
            after_dedup,
            after_window,
            released: anon.dataset.n_rows(),
        },
        released: anon.dataset,
        k_plan: anon.k_plan,
        l_plan: anon.l_plan,
        summary,
        report,
        findings: recoded.findings,
        unresolved: anon.unresolved,
        warnings,
    })
}
