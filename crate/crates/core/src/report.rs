//! Report serialization: structured `section.key = value` text, CSV tables,
//! a fixed-width human table and an SVG power-curve plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{FlrtError, Result};
use crate::glrt::{Sided, TestResult, TracePath};
use crate::ingest::{DroppedRow, Provenance};
use crate::lambda_select::LambdaSelection;
use crate::simlab::SizePowerRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Svg,
    Table,
}

impl FromStr for Format {
    type Err = FlrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            "table" => Ok(Format::Table),
            other => Err(FlrtError::UnsupportedFormat {
                format: other.to_string(),
                what: "any output".into(),
            }),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Csv => "csv",
            Format::Svg => "svg",
            Format::Table => "table",
        })
    }
}

/// Everything `flrt test` reports about one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub test: TestResult,
    pub selection: Option<LambdaSelection>,
    pub m: usize,
    pub n: usize,
    /// Grid abscissae and `β̂` on them.
    pub grid: Vec<f64>,
    pub beta: Vec<f64>,
    pub upsilon1: Vec<f64>,
    pub provenance: Provenance,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn nums(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

fn report_pairs(r: &AnalysisReport) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    let t = &r.test;
    put("test.tau", num(t.tau));
    put("test.mu_n", num(t.mu_n));
    put("test.sigma_n", num(t.sigma_n));
    put("test.z", num(t.z));
    put("test.p_value", num(t.p_value));
    put("test.alpha", num(t.alpha));
    put("test.sided", t.sided.to_string());
    put("test.reject", t.reject.to_string());
    put("test.lambda", num(t.lambda));
    put("test.trace_path", t.trace_path.to_string());
    put("test.rss0", num(t.rss0));
    put("test.rss1", num(t.rss1));
    put("test.perfect_fit", t.perfect_fit.to_string());
    match &r.selection {
        None => put("lambda.rule", "fixed".into()),
        Some(s) => {
            put("lambda.rule", "adaptive".into());
            put("lambda.lambda_tilde", num(s.lambda_tilde));
            put("lambda.objective_value", num(s.objective_value));
            put("lambda.stationarity_residual", num(s.stationarity_residual));
            put("lambda.grid_lo", num(s.grid_lo));
            put("lambda.grid_hi", num(s.grid_hi));
            put("lambda.at_boundary", s.at_boundary.to_string());
        }
    }
    put("fit.m", r.m.to_string());
    put("fit.n", r.n.to_string());
    put("fit.upsilon1", nums(&r.upsilon1));
    put("fit.grid", nums(&r.grid));
    put("fit.beta", nums(&r.beta));
    let p = &r.provenance;
    put("data.file", p.file.clone());
    put("data.rows_read", p.rows_read.to_string());
    put("data.scale", num(p.scale));
    put("data.lag", p.lag.to_string());
    put(
        "data.curve_rows",
        p.curve_rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "),
    );
    put(
        "data.dropped_rows",
        p.dropped.iter().map(|d| d.row.to_string()).collect::<Vec<_>>().join(" "),
    );
    for d in &p.dropped {
        put(&format!("data.drop_reason.{}", d.row), d.reason.clone());
    }
    out
}

/// Structured text, one `section.key = value` line per field.
pub fn report_to_text(r: &AnalysisReport) -> String {
    let mut s = String::new();
    for (k, v) in report_pairs(r) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn raw(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| FlrtError::Data(format!("report is missing `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| FlrtError::Data(format!("report field `{key}` has bad value `{v}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)?
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| FlrtError::Data(format!("report field `{key}` has bad entry `{v}`")))
            })
            .collect()
    }
}

/// Inverse of [`report_to_text`].
pub fn parse_report(text: &str) -> Result<AnalysisReport> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .or_else(|| line.strip_suffix(" =").map(|k| (k, "")))
            .ok_or_else(|| FlrtError::Data(format!("report line {} is not `key = value`", i + 1)))?;
        map.insert(k.trim().to_string(), v.to_string());
    }
    let f = Fields(map);
    let test = TestResult {
        tau: f.get("test.tau")?,
        mu_n: f.get("test.mu_n")?,
        sigma_n: f.get("test.sigma_n")?,
        z: f.get("test.z")?,
        p_value: f.get("test.p_value")?,
        alpha: f.get("test.alpha")?,
        sided: f.get::<Sided>("test.sided")?,
        reject: f.get("test.reject")?,
        lambda: f.get("test.lambda")?,
        trace_path: f.get::<TracePath>("test.trace_path")?,
        rss0: f.get("test.rss0")?,
        rss1: f.get("test.rss1")?,
        perfect_fit: f.get("test.perfect_fit")?,
    };
    let selection = match f.raw("lambda.rule")? {
        "fixed" => None,
        "adaptive" => Some(LambdaSelection {
            lambda_tilde: f.get("lambda.lambda_tilde")?,
            objective_value: f.get("lambda.objective_value")?,
            stationarity_residual: f.get("lambda.stationarity_residual")?,
            grid_lo: f.get("lambda.grid_lo")?,
            grid_hi: f.get("lambda.grid_hi")?,
            at_boundary: f.get("lambda.at_boundary")?,
        }),
        other => return Err(FlrtError::Data(format!("unknown lambda rule `{other}`"))),
    };
    let dropped = f
        .list::<usize>("data.dropped_rows")?
        .into_iter()
        .map(|row| {
            Ok(DroppedRow {
                row,
                reason: f.raw(&format!("data.drop_reason.{row}"))?.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport {
        test,
        selection,
        m: f.get("fit.m")?,
        n: f.get("fit.n")?,
        upsilon1: f.list("fit.upsilon1")?,
        grid: f.list("fit.grid")?,
        beta: f.list("fit.beta")?,
        provenance: Provenance {
            file: f.raw("data.file")?.to_string(),
            rows_read: f.get("data.rows_read")?,
            dropped,
            scale: f.get("data.scale")?,
            lag: f.get("data.lag")?,
            curve_rows: f.list("data.curve_rows")?,
        },
    })
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| FlrtError::Io(std::io::Error::other(e.to_string())))
}

/// Serializes an analysis report as structured text or `key,value` CSV.
pub fn emit_report(r: &AnalysisReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Text => Ok(report_to_text(r).into_bytes()),
        Format::Csv => csv_bytes(
            &["key", "value"],
            report_pairs(r).into_iter().map(|(k, v)| vec![k, v]).collect(),
        ),
        other => Err(FlrtError::UnsupportedFormat {
            format: other.to_string(),
            what: "analysis reports".into(),
        }),
    }
}

pub const ROW_COLUMNS: [&str; 9] = [
    "setup",
    "nu",
    "n",
    "B",
    "reps",
    "reject_rate",
    "stderr",
    "rejections",
    "mean_lambda",
];

/// Size/power rows as CSV, a human table, or (for power curves) SVG.
pub fn emit_rows(rows: &[SizePowerRow], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_bytes(
            &ROW_COLUMNS,
            rows.iter()
                .map(|r| {
                    vec![
                        r.config.setup.to_string(),
                        r.config.nu.to_string(),
                        r.config.n.to_string(),
                        r.config.b.to_string(),
                        r.config.reps.to_string(),
                        num(r.reject_rate),
                        num(r.mc_stderr),
                        r.rejections.to_string(),
                        num(r.mean_lambda),
                    ]
                })
                .collect(),
        ),
        Format::Table => Ok(human_table(rows).into_bytes()),
        Format::Svg => Ok(power_svg(rows).into_bytes()),
        Format::Text => Err(FlrtError::UnsupportedFormat {
            format: format.to_string(),
            what: "size/power tables".into(),
        }),
    }
}

/// `x` to four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    if (0..=10).contains(&digits) {
        format!("{x:.*}", digits as usize)
    } else {
        format!("{x:.3e}")
    }
}

fn human_table(rows: &[SizePowerRow]) -> String {
    let header = ["setup", "nu", "n", "B", "reps", "rate", "stderr", "mean_lambda"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.config.setup.to_string(),
                r.config.nu.to_string(),
                r.config.n.to_string(),
                r.config.b.to_string(),
                r.config.reps.to_string(),
                sig4(r.reject_rate),
                sig4(r.mc_stderr),
                sig4(r.mean_lambda),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(s, "{}", line(header.to_vec()));
    for r in &body {
        let _ = writeln!(s, "{}", line(r.iter().map(String::as_str).collect()));
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rejection rate against `B`, one polyline per `(setup, ν, n)` series.
pub fn power_svg(rows: &[SizePowerRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let bmax = rows.iter().map(|r| r.config.b).fold(0.0f64, f64::max).max(1e-12);
    let x = |b: f64| left + pw * b / bmax;
    let y = |r: f64| top + ph * (1.0 - r);

    let mut series: Vec<(String, Vec<&SizePowerRow>)> = Vec::new();
    for r in rows {
        let key = format!("setup {}, ν = {}, n = {}", r.config.setup, r.config.nu, r.config.n);
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => series.push((key, vec![r])),
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>
<g stroke="black" stroke-width="1">
<line x1="{left}" y1="{yb}" x2="{xr}" y2="{yb}"/>
<line x1="{left}" y1="{top}" x2="{left}" y2="{yb}"/>
</g>"#,
        yb = top + ph,
        xr = left + pw,
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.1}</text>"#,
            left - 6.0,
            y(v) + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            x(v * bmax),
            top + ph + 16.0,
            sig4(v * bmax)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">B</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">rejection rate</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.config.b), y(r.reject_rate)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>"#
        );
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}">{}</text>"#,
            left + pw + 10.0,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
