//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 privacy verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::error::{Error, Result};
use crate::ingest::{parse_date, read_dataset, write_dataset, RawSubmission, SubmissionManifest};
use crate::par::Exec;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
use crate::report::{link_scan, load_catalog, release_manifest, suppression_summary, SynonymMap};
use crate::schema::{load_schema, read_schema_unvalidated, validate_schema, PrivacyThresholds, Schema};
use crate::suppress::SuppressionPlan;
use crate::verify::{verify_release, PrivacyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PRIVACY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "case-privacy", version, about = "Privacy review pipeline for case surveillance microdata")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a schema file and optional threshold overrides.
    ValidateConfig(ValidateArgs),
    /// Produce a release from raw submissions.
    Run(RunArgs),
    /// Re-verify a released CSV.
    Verify(VerifyArgs),
    /// Rebuild the suppression summary from an audit plan.
    Report(ReportArgs),
    /// Rank catalog datasets by quasi-identifier overlap.
    LinkScan(LinkScanArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long = "delay-days")]
    pub delay_days: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Input CSV; repeat for several submissions.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// JSON sidecar giving each input's submission date.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "release-date", value_parser = date_arg)]
    pub release_date: NaiveDate,
    #[arg(long = "processing-date", value_parser = date_arg)]
    pub processing_date: Option<NaiveDate>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Release rows that cannot reach k with every quasi-identifier suppressed.
    #[arg(long = "allow-infeasible")]
    pub allow_infeasible: bool,
    /// Also write audit_plan.csv.
    #[arg(long = "audit-plan")]
    pub audit_plan: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run every stage on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Directory for privacy_report.json; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Audit plan written by `run --audit-plan`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Released CSV the plan applies to.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LinkScanArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Column synonym map; the bundled map when absent.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn date_arg(s: &str) -> std::result::Result<NaiveDate, String> {
    parse_date(s).ok_or_else(|| format!("expected YYYY-MM-DD, got {s:?}"))
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::SchemaParse(_) | Error::InvalidSchema(_) | Error::InvalidOverride(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn apply_overrides(mut schema: Schema, o: &Overrides) -> Result<Schema> {
    let thresholds = PrivacyThresholds {
        k: o.k.unwrap_or(schema.thresholds.k),
        l: o.l.unwrap_or(schema.thresholds.l),
    };
    let problems = thresholds.findings();
    if !problems.is_empty() {
        return Err(Error::InvalidOverride(problems.join("; ")));
    }
    schema.thresholds = thresholds;
    if let Some(d) = o.delay_days {
        schema.release_delay_days = d;
    }
    Ok(schema)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_submissions(args: &RunArgs, schema: &Schema, exec: Exec) -> Result<Vec<RawSubmission>> {
    let manifest = args.manifest.as_deref().map(SubmissionManifest::load).transpose()?;
    let files: Vec<PathBuf> = match (&manifest, args.inputs.is_empty()) {
        (Some(m), true) => m.files.iter().map(|e| m.resolve(e)).collect(),
        _ => args.inputs.clone(),
    };
    if files.is_empty() {
        return Err(Error::InvalidOverride("no --input files and no manifest".to_owned()));
    }
    let read = exec.map_slice(&files, |p| read_dataset(p, schema));
    files
        .iter()
        .zip(read)
        .map(|(path, records)| {
            let entry = manifest.as_ref().and_then(|m| m.entry_for(path));
            if manifest.is_some() && entry.is_none() {
                warn!("{} is not listed in the manifest", path.display());
            }
            Ok(RawSubmission {
                records: records?,
                submission_date: entry.and_then(|e| e.submission_date),
                source_label: path.display().to_string(),
            })
        })
        .collect()
}

fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not size thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some() {
        warn!("built without the parallel feature; --threads ignored");
    }
}

/// Whether a failed verification may still be released under
/// `--allow-infeasible`: only k-violations from unresolvable rows qualify.
fn overridable(out: &PipelineOutput, allow: bool) -> bool {
    allow && !out.unresolved.is_empty() && out.report.l_violations.is_empty() && out.report.pii_findings.is_empty()
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let schema = apply_overrides(load_schema(&args.schema)?, &args.overrides)?;
    configure_threads(args.threads);
    let exec = if args.sequential { Exec::Sequential } else { Exec::default() };
    let subs = load_submissions(&args, &schema, exec).map_err(|e| e.in_stage("ingest"))?;
    let inputs: Vec<String> = subs.iter().map(|s| s.source_label.clone()).collect();

    let config = PipelineConfig {
        schema,
        release_date: args.release_date,
        processing_date: args.processing_date,
        allow_infeasible: args.allow_infeasible,
        exec,
    };
    let out = run_pipeline(&subs, &config)?;
    for w in &out.warnings {
        warn!("{w}");
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let dir = &args.out;
    write(&dir.join("privacy_report.json"), out.report.to_json())?;

    let overridden = !out.report.passed() && overridable(&out, args.allow_infeasible);
    if !out.report.passed() && !overridden {
        eprintln!(
            "verification failed: {} k-violation(s), {} l-violation(s), {} PII finding(s); no release written",
            out.report.k_violations.len(),
            out.report.l_violations.len(),
            out.report.pii_findings.len()
        );
        return Ok(EXIT_PRIVACY);
    }
    if overridden {
        warn!(
            "RELEASING UNDER --allow-infeasible: {} row(s) remain below k={}",
            out.unresolved.len(),
            config.schema.thresholds.k
        );
    }

    write_dataset(dir.join("released.csv"), &out.released)?;
    write(&dir.join("suppression_summary.csv"), out.summary.to_csv())?;
    write(&dir.join("suppression_summary.txt"), out.summary.to_table())?;
    let mut quality = String::new();
    for f in &out.findings {
        quality.push_str(&serde_json::to_string(f)?);
        quality.push('\n');
    }
    write(&dir.join("data_quality.jsonl"), quality)?;
    if args.audit_plan {
        write(&dir.join("audit_plan.csv"), out.plan().to_audit_csv())?;
    }
    let manifest = release_manifest(
        &inputs,
        &config.schema,
        args.release_date,
        out.rows,
        &out.summary,
        &out.report,
        overridden,
        Some(chrono::Utc::now().to_rfc3339()),
    );
    write(&dir.join("manifest.json"), manifest.to_json())?;
    info!(
        "released {} of {} ingested rows ({} suppressed cells)",
        out.rows.released,
        out.rows.ingested,
        out.summary.total()
    );
    print!("{}", out.summary.to_table());
    Ok(EXIT_OK)
}

fn emit_report(report: &PrivacyReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write(&dir.join("privacy_report.json"), report.to_json())
        }
        None => {
            print!("{}", report.to_json());
            Ok(())
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let schema = apply_overrides(load_schema(&args.schema)?, &args.overrides)?;
    let ds = read_dataset(&args.input, &schema)?;
    let report = verify_release(&ds, &schema, Exec::default())?;
    emit_report(&report, args.out.as_deref())?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_PRIVACY })
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let schema = load_schema(&args.schema)?;
    let text = fs::read_to_string(&args.plan).map_err(|e| Error::io(&args.plan, e))?;
    let plan = SuppressionPlan::from_audit_csv(&text)?;
    let ds = read_dataset(&args.input, &schema)?;
    if let Some(a) = plan.actions().iter().find(|a| a.row >= ds.n_rows()) {
        return Err(Error::RowOutOfRange {
            row: a.row,
            rows: ds.n_rows(),
        });
    }
    let summary = suppression_summary(&plan, ds.n_rows(), schema.summary_order());
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write(&args.out.join("suppression_summary.csv"), summary.to_csv())?;
    write(&args.out.join("suppression_summary.txt"), summary.to_table())?;
    print!("{}", summary.to_table());
    Ok(EXIT_OK)
}

fn cmd_link_scan(args: LinkScanArgs) -> Result<i32> {
    let schema = load_schema(&args.schema)?;
    let catalog = load_catalog(&args.catalog)?;
    let synonyms = match &args.synonyms {
        Some(p) => SynonymMap::load(p)?,
        None => SynonymMap::bundled(),
    };
    let report = link_scan(&schema, &catalog, &synonyms);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write(&dir.join("linkage_report.json"), report.to_json())?;
        }
        None => print!("{}", report.to_json()),
    }
    Ok(EXIT_OK)
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    let schema = read_schema_unvalidated(&args.schema)?;
    let report = validate_schema(&schema);
    for f in &report.findings {
        match &f.field {
            Some(field) => eprintln!("{field}: {}", f.message),
            None => eprintln!("{}", f.message),
        }
    }
    if !report.is_valid() {
        return Ok(EXIT_USAGE);
    }
    let schema = apply_overrides(schema, &args.overrides)?;
    println!(
        "{}: ok (k={}, l={}, delay {} days, {} quasi-identifiers)",
        schema.name,
        schema.thresholds.k,
        schema.thresholds.l,
        schema.release_delay_days,
        schema.qi_order.len()
    );
    Ok(EXIT_OK)
}

pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::ValidateConfig(a) => cmd_validate(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
        Command::LinkScan(a) => cmd_link_scan(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parse `args` (including the program name) and run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
