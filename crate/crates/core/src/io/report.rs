use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{CategoryRow, MetricReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
    Json,
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
            ReportFormat::Json => "json",
        })
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format '{other}'"))),
        }
    }
}

/// Shortest representation that parses back to the same value ("1.0", "0.25").
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn category_rows(report: &MetricReport, suffix: &str, pick: impl Fn(usize) -> CategoryRow) -> Vec<(String, Vec<String>)> {
    let n = report.rows.len();
    let col = |f: &dyn Fn(&CategoryRow) -> String| (0..n).map(|i| f(&pick(i))).collect::<Vec<_>>();
    vec![
        (format!("IoU_R{suffix}"), col(&|c| num(c.iou_r))),
        (format!("AP{suffix}"), col(&|c| num(c.ap))),
        (format!("TP{suffix}"), col(&|c| c.tp.to_string())),
        (format!("FP{suffix}"), col(&|c| c.fp.to_string())),
        (format!("FN{suffix}"), col(&|c| c.fn_.to_string())),
    ]
}

/// Metric name and one formatted value per tau, in report order.
pub fn report_grid(report: &MetricReport) -> Vec<(String, Vec<String>)> {
    if !report.nested() {
        return category_rows(report, "", |i| report.rows[i].inner);
    }
    let mut rows = category_rows(report, "_inner", |i| report.rows[i].inner);
    rows.extend(category_rows(report, "_outer", |i| {
        report.rows[i].outer.unwrap_or_default()
    }));
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    rows.push(("JTPR_inner".into(), report.rows.iter().map(|r| opt(r.jtpr_inner)).collect()));
    rows.push(("JTPR_outer".into(), report.rows.iter().map(|r| opt(r.jtpr_outer)).collect()));
    rows
}

/// Settings a report is meaningless without.
pub fn config_echo(report: &MetricReport) -> Vec<(&'static str, String)> {
    let l = &report.loss;
    let c = &report.config;
    vec![
        ("lambda1", num(l.lambda1)),
        ("lambda2", num(l.lambda2)),
        ("lambda3", num(l.lambda3)),
        ("epsilon", num(l.epsilon)),
        ("alpha", num(l.alpha)),
        ("reduction", l.reduction.to_string()),
        ("taus", c.taus.iter().map(|&t| num(t)).collect::<Vec<_>>().join(" ")),
        ("nesting", c.nesting.to_string()),
        ("aggregation", c.aggregation.to_string()),
        ("outer_policy", c.outer_policy.to_string()),
        ("images", report.images.to_string()),
    ]
}

fn csv(report: &MetricReport) -> String {
    let mut out = String::new();
    for (k, v) in config_echo(report) {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("# warning: {w}\n"));
    }
    out.push_str("metric");
    for r in &report.rows {
        out.push_str(&format!(",τ_{}", num(r.tau)));
    }
    out.push('\n');
    for (name, values) in report_grid(report) {
        out.push_str(&name);
        for v in values {
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    }
    out
}

fn markdown(report: &MetricReport) -> String {
    let mut out = String::new();
    for (k, v) in config_echo(report) {
        out.push_str(&format!("- {k}: {v}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("- warning: {w}\n"));
    }
    out.push_str("\n| metric |");
    for r in &report.rows {
        out.push_str(&format!(" τ={} |", num(r.tau)));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(report.rows.len()));
    out.push('\n');
    for (name, values) in report_grid(report) {
        out.push_str(&format!("| {name} |"));
        for v in values {
            out.push_str(&format!(" {v} |"));
        }
        out.push('\n');
    }
    out
}

pub fn write_metric_report(report: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv(report),
        ReportFormat::Markdown => markdown(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialise");
            s.push('\n');
            s
        }
    }
}

pub fn parse_json_report(text: &str) -> Result<MetricReport> {
    serde_json::from_str(text).map_err(|e| Error::MalformedPayload(format!("report json: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LabelMask;
    use crate::loss::LossConfig;
    use crate::metrics::{metric_table, EvalImage, MetricConfig};

    fn blobs() -> LabelMask {
        let mut m = LabelMask::zeros(10, 10);
        for r in 1..4 {
            for c in 1..4 {
                m.set(r, c, 1);
                m.set(r + 5, c + 5, 2);
            }
        }
        m
    }

    fn report(nested: bool, pred: LabelMask) -> MetricReport {
        let gt = blobs();
        let outer = nested.then(|| {
            let o = gt.map_ids(|id| if id == 0 { 0 } else { id + 10 });
            (o.clone(), o)
        });
        let img = EvalImage {
            gt_inner: gt,
            pred_inner: pred,
            outer,
        };
        metric_table(&[img], &MetricConfig::default(), &LossConfig::default()).unwrap()
    }

    #[test]
    fn perfect_csv_rows() {
        let text = write_metric_report(&report(false, blobs()), ReportFormat::Csv);
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], "metric,τ_0.1,τ_0.2,τ_0.3,τ_0.4,τ_0.5,τ_0.6,τ_0.7,τ_0.8,τ_0.9");
        assert_eq!(lines[1], "IoU_R,1.0,1.0,1.0,1.0,1.0,1.0,1.0,1.0,1.0");
        assert_eq!(lines[3], "TP,2,2,2,2,2,2,2,2,2");
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
        assert!(text.contains("# lambda3 = 1.0\n"));
        assert!(text.contains("# epsilon = 1e-7\n"));
        assert!(text.contains("# outer_policy = any\n"));
    }

    #[test]
    fn nested_rows_carry_suffixes() {
        let text = write_metric_report(&report(true, blobs()), ReportFormat::Csv);
        let names: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(names.len(), 12);
        assert_eq!(names[0], "IoU_R_inner");
        assert_eq!(names[5], "IoU_R_outer");
        assert_eq!(&names[10..], &["JTPR_inner", "JTPR_outer"]);
    }

    #[test]
    fn markdown_has_same_grid() {
        let r = report(true, blobs());
        let md = write_metric_report(&r, ReportFormat::Markdown);
        assert!(md.contains("| JTPR_outer | 1.0 |"), "{md}");
        assert!(md.contains("- reduction: sum"));
        let table_rows = md.lines().filter(|l| l.starts_with("| ")).count();
        assert_eq!(table_rows, report_grid(&r).len() + 1);
    }

    #[test]
    fn json_round_trip() {
        let mut pred = blobs();
        pred.set(1, 1, 0);
        let r = report(true, pred);
        let back = parse_json_report(&write_metric_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }
}
