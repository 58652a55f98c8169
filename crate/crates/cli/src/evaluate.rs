use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use solarload::scene::format::Dataset;
use solarload::scene::Phase;
use solarload::spatial::{correct_frame, CorrectionOptions, Method, RegressorModel};
use solarload::stats::{compare_errors, error_metrics, stratified_bias, ErrorComparison, StratifiedReport, MI_THRESHOLD};

use crate::report::{fmt_opt, write_json, Table};

pub const EVALUATE_SCHEMA: &str = "solarload.evaluate/1";
pub const EQUITY_SCHEMA: &str = "solarload.equity/1";
pub const REPORT_FILE: &str = "report.json";
const CSV_HEADER: &str = "subject_id,mi,error_c,phase";

const STEADY: &str = "steady-state";
const LOADING: &str = "loading";
const COOLING: &str = "cooling";
const SOLAR_LOADED: &str = "solar-loaded";
const PHASES: [&str; 4] = [STEADY, LOADING, COOLING, SOLAR_LOADED];

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset directories, one subject each
    #[arg(long = "dataset", required = true, num_args = 1..)]
    pub datasets: Vec<PathBuf>,
    /// Regressor model file; adds the learned method
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for report.json and errors_<method>.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Score every n-th frame [frames]
    #[arg(long, default_value_t = 10)]
    pub frame_stride_frames: usize,
    /// Incidence bins for the linear solve [bins]
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Melanin index at or above which a subject counts as dark [MI]
    #[arg(long, default_value_t = MI_THRESHOLD)]
    pub threshold_mi: f64,
}

#[derive(Debug, Args)]
pub struct EquityArgs {
    /// Error CSV (subject_id,mi,error_c,phase) before correction
    #[arg(long)]
    pub errors: PathBuf,
    /// Error CSV of the same subjects after correction
    #[arg(long)]
    pub corrected_errors: Option<PathBuf>,
    /// Phase rows to compare
    #[arg(long, default_value = SOLAR_LOADED)]
    pub phase: String,
    /// Melanin index at or above which a subject counts as dark [MI]
    #[arg(long, default_value_t = MI_THRESHOLD)]
    pub threshold_mi: f64,
    /// Also write the comparison as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub phase: String,
    pub frames: usize,
    pub mae_c: f64,
    pub rmse_c: f64,
    pub mape_pct: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquityRow {
    pub method: String,
    pub phase: String,
    pub stratified: StratifiedReport,
    pub comparison: Option<ErrorComparison>,
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    schema: &'static str,
    datasets: Vec<String>,
    frame_stride_frames: usize,
    rows: Vec<MetricRow>,
    equity: Vec<EquityRow>,
}

#[derive(Debug, Serialize)]
struct EquityReport {
    schema: &'static str,
    phase: String,
    rows: Vec<EquityRow>,
}

struct FrameScore {
    subject: usize,
    phase: &'static str,
    method: &'static str,
    pred: f64,
    truth: f64,
}

/// Per-subject mean signed error for one method and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectError {
    pub subject_id: String,
    pub mi: f64,
    pub error_c: f64,
    pub phase: String,
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Rest => STEADY,
        Phase::Load => LOADING,
        Phase::Cool => COOLING,
    }
}

fn in_phase(score_phase: &str, phase: &str) -> bool {
    score_phase == phase || (phase == SOLAR_LOADED && score_phase != STEADY)
}

fn subject_id(dir: &Path, index: usize) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("subject_{index:02}"))
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let datasets: Vec<Dataset> = args.datasets.iter().map(|d| Dataset::open(d)).collect::<Result<_, _>>()?;
    let model = args.model.as_deref().map(RegressorModel::load).transpose()?;
    if args.frame_stride_frames == 0 {
        bail!("--frame-stride-frames must be at least 1");
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut methods = vec![("uncorrected", None), ("linear", Some(Method::Linear))];
    if model.is_some() {
        methods.push(("learned", Some(Method::Learned)));
    }
    let ids: Vec<String> = args.datasets.iter().enumerate().map(|(i, d)| subject_id(d, i)).collect();
    let mis: Vec<f64> = datasets.iter().map(|d| d.meta.melanin_index).collect();
    let options = CorrectionOptions {
        bins: args.bins,
        crop_center: None,
    };

    let mut scores = Vec::new();
    for (s, ds) in datasets.iter().enumerate() {
        let face = ds.face()?;
        let truth = face.facial_mean(&ds.truth_baseline()?);
        for k in (0..ds.frame_count()).step_by(args.frame_stride_frames) {
            let frame = ds.frame(k)?;
            let phase = phase_name(ds.meta.schedule.phase(frame.timestamp));
            for &(name, method) in &methods {
                let pred = match method {
                    None => face.facial_mean(&frame.temps),
                    Some(m) => correct_frame(&frame, Some(&face), model.as_ref(), m, &options)?.facial_mean_after,
                };
                scores.push(FrameScore {
                    subject: s,
                    phase,
                    method: name,
                    pred,
                    truth,
                });
            }
        }
    }

    let truths: Vec<f64> = scores.iter().filter(|f| f.method == "uncorrected").map(|f| f.truth).collect();
    let reference = error_metrics(&truths, &truths)?;
    let mut rows = vec![MetricRow {
        method: "reference".into(),
        phase: "all".into(),
        frames: truths.len(),
        mae_c: reference.mae,
        rmse_c: reference.rmse,
        mape_pct: reference.mape,
    }];
    let mut equity = Vec::new();
    for &(name, _) in &methods {
        for phase in PHASES {
            let sel: Vec<&FrameScore> = scores.iter().filter(|f| f.method == name && in_phase(f.phase, phase)).collect();
            if sel.is_empty() {
                continue;
            }
            let pred: Vec<f64> = sel.iter().map(|f| f.pred).collect();
            let truth: Vec<f64> = sel.iter().map(|f| f.truth).collect();
            let m = error_metrics(&pred, &truth)?;
            rows.push(MetricRow {
                method: name.into(),
                phase: phase.into(),
                frames: sel.len(),
                mae_c: m.mae,
                rmse_c: m.rmse,
                mape_pct: m.mape,
            });
        }
        let per_subject = subject_errors(&scores, name, &ids, &mis);
        write_errors_csv(&args.out.join(format!("errors_{name}.csv")), &per_subject)?;
        equity.push(equity_row(name, &per_subject, SOLAR_LOADED, args.threshold_mi)?);
    }

    let report = EvaluateReport {
        schema: EVALUATE_SCHEMA,
        datasets: args.datasets.iter().map(|d| d.display().to_string()).collect(),
        frame_stride_frames: args.frame_stride_frames,
        rows,
        equity,
    };
    write_json(&args.out.join(REPORT_FILE), &report)?;
    print!("{}", metrics_table(&report.rows));
    println!();
    print!("{}", equity_table(&report.equity));
    Ok(())
}

fn subject_errors(scores: &[FrameScore], method: &str, ids: &[String], mis: &[f64]) -> Vec<SubjectError> {
    let mut out = Vec::new();
    for (s, id) in ids.iter().enumerate() {
        for phase in PHASES {
            let errs: Vec<f64> = scores
                .iter()
                .filter(|f| f.subject == s && f.method == method && in_phase(f.phase, phase))
                .map(|f| f.pred - f.truth)
                .collect();
            if errs.is_empty() {
                continue;
            }
            out.push(SubjectError {
                subject_id: id.clone(),
                mi: mis[s],
                error_c: errs.iter().sum::<f64>() / errs.len() as f64,
                phase: phase.into(),
            });
        }
    }
    out
}

fn equity_row(method: &str, errors: &[SubjectError], phase: &str, threshold: f64) -> Result<EquityRow> {
    let sel: Vec<&SubjectError> = errors.iter().filter(|e| e.phase == phase).collect();
    let errs: Vec<f64> = sel.iter().map(|e| e.error_c).collect();
    let mis: Vec<f64> = sel.iter().map(|e| e.mi).collect();
    let stratified = stratified_bias(&errs, &mis, threshold)?;
    let (dark, light): (Vec<&SubjectError>, Vec<&SubjectError>) = sel.iter().partition(|e| e.mi >= threshold);
    let comparison = if dark.is_empty() || light.is_empty() {
        None
    } else {
        let d: Vec<f64> = dark.iter().map(|e| e.error_c).collect();
        let l: Vec<f64> = light.iter().map(|e| e.error_c).collect();
        Some(compare_errors(&d, &l)?)
    };
    Ok(EquityRow {
        method: method.into(),
        phase: phase.into(),
        stratified,
        comparison,
    })
}

fn write_errors_csv(path: &Path, errors: &[SubjectError]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for e in errors {
        writeln!(text, "{},{},{},{}", e.subject_id, e.mi, e.error_c, e.phase)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<SubjectError>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => bail!("{} line 1: expected header '{CSV_HEADER}'", path.display()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| anyhow::anyhow!("{} line {}: {what}", path.display(), i + 1);
        let [id, mi, err, phase] = fields[..] else {
            return Err(bad("expected 4 fields"));
        };
        out.push(SubjectError {
            subject_id: id.to_string(),
            mi: mi.parse().map_err(|_| bad("invalid mi"))?,
            error_c: err.parse().map_err(|_| bad("invalid error_c"))?,
            phase: phase.to_string(),
        });
    }
    Ok(out)
}

pub fn run_equity(args: &EquityArgs) -> Result<()> {
    let mut inputs = vec![("errors", &args.errors)];
    if let Some(p) = &args.corrected_errors {
        inputs.push(("corrected", p));
    }
    let mut rows = Vec::new();
    for (label, path) in inputs {
        let errors = read_errors_csv(path)?;
        if !errors.iter().any(|e| e.phase == args.phase) {
            bail!("{} has no rows for phase '{}'", path.display(), args.phase);
        }
        rows.push(equity_row(label, &errors, &args.phase, args.threshold_mi)?);
    }
    if let Some(path) = &args.json {
        write_json(
            path,
            &EquityReport {
                schema: EQUITY_SCHEMA,
                phase: args.phase.clone(),
                rows: rows.clone(),
            },
        )?;
    }
    print!("{}", equity_table(&rows));
    Ok(())
}

fn metrics_table(rows: &[MetricRow]) -> String {
    let mut t = Table::new(&["method", "phase", "frames", "mae_c", "rmse_c", "mape_pct"]);
    for r in rows {
        t.row(vec![
            r.method.clone(),
            r.phase.clone(),
            r.frames.to_string(),
            format!("{:.4}", r.mae_c),
            format!("{:.4}", r.rmse_c),
            fmt_opt(r.mape_pct, 4),
        ]);
    }
    t.render()
}

fn equity_table(rows: &[EquityRow]) -> String {
    let mut t = Table::new(&["method", "phase", "n_dark", "n_light", "dark_minus_light_c", "ks_d", "ks_p", "paired_p"]);
    for r in rows {
        let c = r.comparison.as_ref();
        t.row(vec![
            r.method.clone(),
            r.phase.clone(),
            r.stratified.dark.map_or(0, |g| g.count).to_string(),
            r.stratified.light.map_or(0, |g| g.count).to_string(),
            fmt_opt(r.stratified.mean_bias_difference, 4),
            fmt_opt(c.map(|c| c.ks.statistic), 4),
            c.map_or_else(|| "-".to_string(), |c| format!("{:.3e}", c.ks.p_value)),
            fmt_opt(c.and_then(|c| c.paired).map(|p| p.p_value), 4),
        ]);
    }
    let mut out = t.render();
    if rows.iter().any(|r| r.comparison.is_none()) {
        out.push_str("(rows without a comparison have subjects on one side of the threshold only)\n");
    }
    out
}
