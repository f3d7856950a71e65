use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ErrorBreakdown, ErrorClass};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::InvalidArgument(format!(
                "unsupported report format `{other}` (expected json, csv or svg)"
            ))),
        }
    }
}

pub fn render<T: Real>(report: &ErrorBreakdown<T>, format: Format) -> Result<String> {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => render_csv(report),
        Format::Svg => Ok(render_svg(report)),
    }
}

/// Writes `report.<ext>` into `dir` and returns its path.
pub fn write_artifact<T: Real>(report: &ErrorBreakdown<T>, format: Format, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join(format!("report.{}", format.extension()));
    std::fs::write(&path, render(report, format)?)?;
    Ok(path)
}

fn opt<T: Real>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv<T: Real>(report: &ErrorBreakdown<T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "estimated", "raw_log_error", "log_error", "raw_share", "share", "provenance"])?;
    for s in &report.classes {
        w.write_record([
            s.class.as_str().to_string(),
            s.estimated.to_string(),
            opt(s.raw_log_error),
            s.log_error.to_string(),
            opt(s.raw_share),
            s.share.to_string(),
            s.provenance.clone(),
        ])?;
    }
    w.write_record([
        "unexplained".to_string(),
        "true".to_string(),
        String::new(),
        String::new(),
        report.unexplained.raw_share.to_string(),
        report.unexplained.share.to_string(),
        "1 - sum of class shares".to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const CX: f64 = 260.0;
const CY: f64 = 230.0;
const INNER_R: f64 = 140.0;
const OUTER_R0: f64 = 150.0;
const OUTER_R1: f64 = 185.0;

fn color(class: Option<ErrorClass>) -> &'static str {
    match class {
        Some(ErrorClass::Application) => "#4c78a8",
        Some(ErrorClass::System) => "#54a24b",
        Some(ErrorClass::Ood) => "#e45756",
        Some(ErrorClass::ContentionNoise) => "#eeca3b",
        None => "#bab0ac",
    }
}

fn polar(r: f64, angle: f64) -> (f64, f64) {
    // angle 0 at twelve o'clock, clockwise
    (CX + r * angle.sin(), CY - r * angle.cos())
}

/// Annular sector path; `r0 = 0` gives a pie wedge.
fn sector(r0: f64, r1: f64, a0: f64, a1: f64) -> String {
    let sweep = a1 - a0;
    if sweep >= std::f64::consts::TAU - 1e-9 {
        // full ring: two half arcs per radius
        let mid = a0 + std::f64::consts::PI;
        let (p0, p1) = (polar(r1, a0), polar(r1, mid));
        let mut d = format!(
            "M{:.3},{:.3} A{r1},{r1} 0 1 1 {:.3},{:.3} A{r1},{r1} 0 1 1 {:.3},{:.3} Z",
            p0.0, p0.1, p1.0, p1.1, p0.0, p0.1
        );
        if r0 > 0.0 {
            let (q0, q1) = (polar(r0, a0), polar(r0, mid));
            let _ = write!(
                d,
                " M{:.3},{:.3} A{r0},{r0} 0 1 0 {:.3},{:.3} A{r0},{r0} 0 1 0 {:.3},{:.3} Z",
                q0.0, q0.1, q1.0, q1.1, q0.0, q0.1
            );
        }
        return d;
    }
    let large = if sweep > std::f64::consts::PI { 1 } else { 0 };
    let (o0, o1) = (polar(r1, a0), polar(r1, a1));
    if r0 <= 0.0 {
        return format!(
            "M{CX},{CY} L{:.3},{:.3} A{r1},{r1} 0 {large} 1 {:.3},{:.3} Z",
            o0.0, o0.1, o1.0, o1.1
        );
    }
    let (i0, i1) = (polar(r0, a0), polar(r0, a1));
    format!(
        "M{:.3},{:.3} A{r1},{r1} 0 {large} 1 {:.3},{:.3} L{:.3},{:.3} A{r0},{r0} 0 {large} 0 {:.3},{:.3} Z",
        o0.0, o0.1, o1.0, o1.1, i1.0, i1.1, i0.0, i0.1
    )
}

/// Two-ring pie: the inner ring holds the estimated class shares plus the
/// unexplained remainder, the outer ring the realized improvements from
/// tuning and system enrichment, each aligned with its class.
fn render_svg<T: Real>(report: &ErrorBreakdown<T>) -> String {
    let mut wedges: Vec<(Option<ErrorClass>, &str, f64)> = report
        .classes
        .iter()
        .map(|s| (Some(s.class), s.class.label(), s.share.as_f64()))
        .collect();
    wedges.push((None, "Unexplained", report.unexplained.share.as_f64()));
    let total: f64 = wedges.iter().map(|w| w.2).sum::<f64>().max(1e-12);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="760" height="470" viewBox="0 0 760 470" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{CX}" y="24" text-anchor="middle" font-size="15">Baseline error {:.2}% (median abs log error {:.4})</text>"#,
        report.baseline_error.percent.as_f64(),
        report.baseline_error.log_error.as_f64()
    );
    let mut angle = 0.0;
    let mut starts = Vec::new();
    let _ = writeln!(svg, r#"<g class="inner-ring">"#);
    for (i, &(class, label, share)) in wedges.iter().enumerate() {
        let sweep = share / total * std::f64::consts::TAU;
        starts.push((class, angle));
        let id = class.map_or("unexplained", ErrorClass::as_str);
        let _ = writeln!(
            svg,
            r#"<g class="inner-slice" data-class="{id}"><path d="{}" fill="{}" stroke="white"/><title>{label}: {:.1}%</title></g>"#,
            sector(0.0, INNER_R, angle, angle + sweep),
            color(class),
            share * 100.0
        );
        // legend doubles as the slice label
        let y = 70.0 + 24.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="480" y="{:.1}" width="14" height="14" fill="{}"/><text class="slice-label" data-class="{id}" x="502" y="{:.1}">{label}: {:.1}% of baseline error</text>"#,
            y - 11.0,
            color(class),
            y,
            share * 100.0
        );
        angle += sweep;
    }
    let _ = writeln!(svg, "</g>");

    let outer = [
        (ErrorClass::Application, "Fixed by tuning", Some(report.realized.app_tuning.as_f64())),
        (
            ErrorClass::System,
            "Fixed by system data",
            report.realized.system_enrichment.map(Real::as_f64),
        ),
    ];
    let _ = writeln!(svg, r#"<g class="outer-ring">"#);
    let mut legend_row = wedges.len();
    for (class, label, value) in outer {
        let Some(value) = value else { continue };
        let value = value.max(0.0);
        let a0 = starts.iter().find(|s| s.0 == Some(class)).map_or(0.0, |s| s.1);
        let sweep = (value / total * std::f64::consts::TAU).min(std::f64::consts::TAU);
        let _ = writeln!(
            svg,
            r#"<g class="outer-slice" data-class="{}"><path d="{}" fill="{}" fill-opacity="0.55" stroke="white"/><title>{label}: {:.1}%</title></g>"#,
            class.as_str(),
            sector(OUTER_R0, OUTER_R1, a0, a0 + sweep),
            color(Some(class)),
            value * 100.0
        );
        let y = 70.0 + 24.0 * legend_row as f64 + 12.0;
        let _ = writeln!(
            svg,
            r#"<rect x="480" y="{:.1}" width="14" height="14" fill="{}" fill-opacity="0.55"/><text x="502" y="{:.1}">{label} (outer): {:.1}%</text>"#,
            y - 11.0,
            color(Some(class)),
            y,
            value * 100.0
        );
        legend_row += 1;
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    svg
}
