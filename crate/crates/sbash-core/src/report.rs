//! Evaluation harness: run a command suite through the pipeline across a
//! set of generation configs, score every output against captured ground
//! truth under three similarity metrics, and render the result as a
//! model-by-mode accuracy grid plus a latency table.
//!
//! Aggregation is the arithmetic mean over suite cases (stated in the
//! report header). Per-case raw rows are kept for audit, and backend
//! failures score 0 with the cause noted instead of aborting the run.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::dispatch::Pipeline;
use crate::genclient::{ChatBackend, GenerationConfig, Mode, Tuning};
use crate::knowledge::{EmbeddingProvider, VectorStore};
use crate::metrics::score_all;
use crate::profile::SystemProfile;
use crate::vfs::VfsState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Reconnaissance,
    PostExploitation,
    Exfiltration,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Reconnaissance => "reconnaissance",
            Category::PostExploitation => "post_exploitation",
            Category::Exfiltration => "exfiltration",
        }
    }
}

/// One suite entry: a command and the output a real reference system gave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub command: String,
    pub ground_truth: String,
    pub category: Category,
    /// Set by the capture tool when the reference command timed out and the
    /// ground truth is therefore empty.
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Levenshtein,
    SentenceCosine,
    TokenF1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::Levenshtein,
        MetricKind::SentenceCosine,
        MetricKind::TokenF1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Levenshtein => "levenshtein",
            MetricKind::SentenceCosine => "sentence_cosine",
            MetricKind::TokenF1 => "token_f1",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            MetricKind::Levenshtein => "Levenshtein",
            MetricKind::SentenceCosine => "SentenceCosine",
            MetricKind::TokenF1 => "TokenF1",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "levenshtein" => MetricKind::Levenshtein,
            "sentence_cosine" => MetricKind::SentenceCosine,
            "token_f1" => MetricKind::TokenF1,
            _ => return None,
        })
    }
}

/// Mean accuracy for one (metric, model, mode, tuning) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub metric: MetricKind,
    pub model: String,
    pub mode: Mode,
    pub tuning: Tuning,
    pub accuracy_percent: f64,
}

/// Latency statistics for one (model, mode) pair, tunings pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub model: String,
    pub mode: Mode,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub n: usize,
}

/// Raw per-case audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub model: String,
    pub mode: Mode,
    pub tuning: Tuning,
    pub command: String,
    pub levenshtein: f64,
    pub sentence_cosine: f64,
    pub token_f1: f64,
    pub latency_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<AccuracyRow>,
    pub latency_rows: Vec<LatencyRow>,
    pub case_rows: Vec<CaseRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("report parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("suite is empty")]
    EmptySuite,
    #[error("no configs to evaluate")]
    NoConfigs,
}

/// Evaluate every config over every case through the full dispatch path.
///
/// Each case runs against a fresh clone of `base_vfs`, so cases are
/// independent and the row set is a deterministic function of its inputs
/// regardless of evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn run_suite(
    cases: &[EvalCase],
    configs: &[GenerationConfig],
    profile: &SystemProfile,
    base_vfs: &VfsState,
    store: Option<&VectorStore>,
    embedder: &dyn EmbeddingProvider,
    backend: &dyn ChatBackend,
    clock: &dyn Clock,
) -> Result<MetricReport, ReportError> {
    if cases.is_empty() {
        return Err(ReportError::EmptySuite);
    }
    if configs.is_empty() {
        return Err(ReportError::NoConfigs);
    }
    let mut case_rows = Vec::with_capacity(cases.len() * configs.len());
    for config in configs {
        for case in cases {
            let mut pipeline = Pipeline::new(
                profile,
                base_vfs.clone(),
                store,
                embedder,
                backend,
                clock,
                config.clone(),
            );
            let response = pipeline.dispatch(&case.command);
            let (scores, error) = match &response.backend_error {
                Some(cause) => (None, Some(cause.clone())),
                None => match score_all(&response.output, &case.ground_truth, embedder) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                },
            };
            let (lev, cos, f1) = match scores {
                Some(s) => (s.levenshtein, s.sentence_cosine, s.token_f1),
                None => (0.0, 0.0, 0.0),
            };
            case_rows.push(CaseRow {
                model: config.model_name.clone(),
                mode: config.mode,
                tuning: config.tuning,
                command: case.command.clone(),
                levenshtein: lev,
                sentence_cosine: cos,
                token_f1: f1,
                latency_ms: response.latency_ms,
                error,
            });
        }
    }
    Ok(MetricReport::from_case_rows(case_rows))
}

impl MetricReport {
    /// Aggregate raw case rows into the accuracy grid and latency table.
    /// Rows are sorted so identical inputs render identical bytes.
    pub fn from_case_rows(mut case_rows: Vec<CaseRow>) -> Self {
        case_rows.sort_by(|a, b| {
            (&a.model, a.mode.as_str(), a.tuning.as_str(), &a.command).cmp(&(
                &b.model,
                b.mode.as_str(),
                b.tuning.as_str(),
                &b.command,
            ))
        });

        let mut groups: Vec<(String, Mode, Tuning)> = Vec::new();
        for row in &case_rows {
            let key = (row.model.clone(), row.mode, row.tuning);
            if !groups.contains(&key) {
                groups.push(key);
            }
        }

        let mut rows = Vec::new();
        for (model, mode, tuning) in &groups {
            let members: Vec<&CaseRow> = case_rows
                .iter()
                .filter(|r| &r.model == model && r.mode == *mode && r.tuning == *tuning)
                .collect();
            let mean = |f: fn(&CaseRow) -> f64| {
                members.iter().map(|r| f(r)).sum::<f64>() / members.len() as f64
            };
            for metric in MetricKind::ALL {
                let accuracy_percent = match metric {
                    MetricKind::Levenshtein => mean(|r| r.levenshtein),
                    MetricKind::SentenceCosine => mean(|r| r.sentence_cosine),
                    MetricKind::TokenF1 => mean(|r| r.token_f1),
                };
                rows.push(AccuracyRow {
                    metric,
                    model: model.clone(),
                    mode: *mode,
                    tuning: *tuning,
                    accuracy_percent,
                });
            }
        }
        rows.sort_by(|a, b| {
            (a.metric, &a.model, a.mode.as_str(), a.tuning.as_str()).cmp(&(
                b.metric,
                &b.model,
                b.mode.as_str(),
                b.tuning.as_str(),
            ))
        });

        let mut latency_groups: Vec<(String, Mode)> = Vec::new();
        for row in &case_rows {
            let key = (row.model.clone(), row.mode);
            if !latency_groups.contains(&key) {
                latency_groups.push(key);
            }
        }
        let mut latency_rows = Vec::new();
        for (model, mode) in &latency_groups {
            let mut samples: Vec<u64> = case_rows
                .iter()
                .filter(|r| &r.model == model && r.mode == *mode)
                .map(|r| r.latency_ms)
                .collect();
            samples.sort_unstable();
            let n = samples.len();
            let mean_ms = samples.iter().sum::<u64>() as f64 / n as f64;
            let median_ms = if n % 2 == 1 {
                samples[n / 2] as f64
            } else {
                (samples[n / 2 - 1] + samples[n / 2]) as f64 / 2.0
            };
            let p95_ms = samples[(n * 95).div_ceil(100).max(1) - 1] as f64;
            latency_rows.push(LatencyRow {
                model: model.clone(),
                mode: *mode,
                mean_ms,
                median_ms,
                p95_ms,
                n,
            });
        }
        latency_rows.sort_by(|a, b| (&a.model, a.mode.as_str()).cmp(&(&b.model, b.mode.as_str())));

        Self {
            rows,
            latency_rows,
            case_rows,
        }
    }

    pub fn accuracy(
        &self,
        metric: MetricKind,
        model: &str,
        mode: Mode,
        tuning: Tuning,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.metric == metric && r.model == model && r.mode == mode && r.tuning == tuning
            })
            .map(|r| r.accuracy_percent)
    }
}

fn parse_mode(s: &str) -> Option<Mode> {
    match s {
        "rag" => Some(Mode::Rag),
        "nonrag" => Some(Mode::NonRag),
        _ => None,
    }
}

fn parse_tuning(s: &str) -> Option<Tuning> {
    match s {
        "tuned" => Some(Tuning::Tuned),
        "untuned" => Some(Tuning::Untuned),
        _ => None,
    }
}

fn csv_quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\"").replace('\n', "\\n"))
}

fn csv_unquote(field: &str) -> String {
    let inner = field
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(field);
    inner.replace("\"\"", "\"").replace("\\n", "\n")
}

/// Split one CSV line honoring double-quoted fields.
fn csv_split(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                if in_quotes && chars.peek() == Some(&'"') {
                    current.push('"');
                    current.push('"');
                    chars.next();
                } else {
                    in_quotes = !in_quotes;
                    current.push('"');
                }
            }
            ',' if !in_quotes => fields.push(core::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    fields.push(current);
    fields
}

pub const CSV_HEADER: &str = "# sbash evaluation report v1";
pub const CSV_AGGREGATION: &str = "# aggregation: mean over suite cases";

/// Render the canonical CSV document. Identical reports render identical
/// bytes; floats carry four decimals.
pub fn render_csv(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    out.push_str(CSV_AGGREGATION);
    out.push('\n');

    out.push_str("[accuracy]\n");
    out.push_str("metric,model,mode,tuning,accuracy_percent\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            r.metric.as_str(),
            r.model,
            r.mode.as_str(),
            r.tuning.as_str(),
            r.accuracy_percent
        ));
    }

    out.push_str("[latency]\n");
    out.push_str("model,mode,mean_ms,median_ms,p95_ms,n\n");
    for r in &report.latency_rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{}\n",
            r.model,
            r.mode.as_str(),
            r.mean_ms,
            r.median_ms,
            r.p95_ms,
            r.n
        ));
    }

    out.push_str("[cases]\n");
    out.push_str(
        "model,mode,tuning,command,levenshtein,sentence_cosine,token_f1,latency_ms,error\n",
    );
    for r in &report.case_rows {
        out.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{},{}\n",
            r.model,
            r.mode.as_str(),
            r.tuning.as_str(),
            csv_quote(&r.command),
            r.levenshtein,
            r.sentence_cosine,
            r.token_f1,
            r.latency_ms,
            csv_quote(r.error.as_deref().unwrap_or(""))
        ));
    }
    out
}

/// Parse a document produced by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<MetricReport, ReportError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Accuracy,
        Latency,
        Cases,
    }
    let mut section = Section::None;
    let mut report = MetricReport::default();
    let mut expect_header = false;

    let err = |line: usize, reason: &str| ReportError::Parse {
        line,
        reason: reason.to_string(),
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[accuracy]" => {
                section = Section::Accuracy;
                expect_header = true;
                continue;
            }
            "[latency]" => {
                section = Section::Latency;
                expect_header = true;
                continue;
            }
            "[cases]" => {
                section = Section::Cases;
                expect_header = true;
                continue;
            }
            _ => {}
        }
        if expect_header {
            expect_header = false;
            continue;
        }
        let fields = csv_split(line);
        match section {
            Section::None => return Err(err(line_no, "data before any section")),
            Section::Accuracy => {
                if fields.len() != 5 {
                    return Err(err(line_no, "accuracy row needs 5 fields"));
                }
                report.rows.push(AccuracyRow {
                    metric: MetricKind::parse(&fields[0])
                        .ok_or_else(|| err(line_no, "unknown metric"))?,
                    model: fields[1].clone(),
                    mode: parse_mode(&fields[2]).ok_or_else(|| err(line_no, "unknown mode"))?,
                    tuning: parse_tuning(&fields[3])
                        .ok_or_else(|| err(line_no, "unknown tuning"))?,
                    accuracy_percent: fields[4]
                        .parse()
                        .map_err(|_| err(line_no, "bad accuracy number"))?,
                });
            }
            Section::Latency => {
                if fields.len() != 6 {
                    return Err(err(line_no, "latency row needs 6 fields"));
                }
                report.latency_rows.push(LatencyRow {
                    model: fields[0].clone(),
                    mode: parse_mode(&fields[1]).ok_or_else(|| err(line_no, "unknown mode"))?,
                    mean_ms: fields[2].parse().map_err(|_| err(line_no, "bad mean"))?,
                    median_ms: fields[3].parse().map_err(|_| err(line_no, "bad median"))?,
                    p95_ms: fields[4].parse().map_err(|_| err(line_no, "bad p95"))?,
                    n: fields[5].parse().map_err(|_| err(line_no, "bad n"))?,
                });
            }
            Section::Cases => {
                if fields.len() != 9 {
                    return Err(err(line_no, "case row needs 9 fields"));
                }
                let error = csv_unquote(&fields[8]);
                report.case_rows.push(CaseRow {
                    model: fields[0].clone(),
                    mode: parse_mode(&fields[1]).ok_or_else(|| err(line_no, "unknown mode"))?,
                    tuning: parse_tuning(&fields[2])
                        .ok_or_else(|| err(line_no, "unknown tuning"))?,
                    command: csv_unquote(&fields[3]),
                    levenshtein: fields[4].parse().map_err(|_| err(line_no, "bad number"))?,
                    sentence_cosine: fields[5].parse().map_err(|_| err(line_no, "bad number"))?,
                    token_f1: fields[6].parse().map_err(|_| err(line_no, "bad number"))?,
                    latency_ms: fields[7].parse().map_err(|_| err(line_no, "bad latency"))?,
                    error: if error.is_empty() { None } else { Some(error) },
                });
            }
        }
    }
    Ok(report)
}

/// The four accuracy grid columns, in presentation order.
const GRID: [(Mode, Tuning, &str); 4] = [
    (Mode::Rag, Tuning::Untuned, "RAG Accuracy (%)"),
    (Mode::NonRag, Tuning::Untuned, "Non-RAG Accuracy (%)"),
    (Mode::Rag, Tuning::Tuned, "RAG Tuned Accuracy (%)"),
    (Mode::NonRag, Tuning::Tuned, "Non-RAG Tuned Accuracy (%)"),
];

/// Render the metric-by-model accuracy grid and the latency table as
/// markdown. Deterministic for identical reports.
pub fn render_markdown(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str("# Honeypot Evaluation Report\n\n");
    out.push_str("Aggregation: mean over suite cases.\n\n");
    out.push_str("## Accuracy\n\n");

    let mut combos: Vec<(MetricKind, String)> = Vec::new();
    for r in &report.rows {
        let key = (r.metric, r.model.clone());
        if !combos.contains(&key) {
            combos.push(key);
        }
    }
    combos.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

    if combos.is_empty() {
        out.push_str("No accuracy rows recorded.\n");
    } else {
        out.push_str("| Metric | Model |");
        for (_, _, title) in GRID {
            out.push_str(&format!(" {title} |"));
        }
        out.push('\n');
        out.push_str("|---|---|---|---|---|---|\n");
        for (metric, model) in &combos {
            out.push_str(&format!("| {} | {} |", metric.display_name(), model));
            for (mode, tuning, _) in GRID {
                match report.accuracy(*metric, model, mode, tuning) {
                    Some(v) => out.push_str(&format!(" {v:.1} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }

    out.push_str("\n## Latency\n\n");
    if report.latency_rows.is_empty() {
        out.push_str("No latency rows recorded.\n");
    } else {
        out.push_str("| Model | Mode | Mean (ms) | Median (ms) | P95 (ms) | N |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for r in &report.latency_rows {
            let mode = match r.mode {
                Mode::Rag => "RAG",
                Mode::NonRag => "Non-RAG",
            };
            out.push_str(&format!(
                "| {} | {} | {:.1} | {:.1} | {:.1} | {} |\n",
                r.model, mode, r.mean_ms, r.median_ms, r.p95_ms, r.n
            ));
        }
    }
    out
}
