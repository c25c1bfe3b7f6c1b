//! Scatter export: CSV for downstream tools, SVG for a quick look.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::EarnestnessClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub normalized_text: String,
    pub x: f64,
    pub y: f64,
    pub class_hint: Option<EarnestnessClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterFormat {
    Csv,
    Svg,
}

impl FromStr for ScatterFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(Error::invalid(format!("unknown scatter format `{other}`"))),
        }
    }
}

/// Legend order and colors.
const CLASS_STYLES: [(&str, &str); 4] = [
    ("non_earnest", "#d62728"),
    ("neutral", "#7f7f7f"),
    ("earnest", "#1f77b4"),
    ("unlabeled", "#bcbd22"),
];

fn class_key(class: Option<EarnestnessClass>) -> &'static str {
    match class {
        Some(EarnestnessClass::NonEarnest) => "non_earnest",
        Some(EarnestnessClass::Neutral) => "neutral",
        Some(EarnestnessClass::Earnest) => "earnest",
        None => "unlabeled",
    }
}

fn parse_class(s: &str) -> Result<Option<EarnestnessClass>> {
    Ok(match s {
        "non_earnest" => Some(EarnestnessClass::NonEarnest),
        "neutral" => Some(EarnestnessClass::Neutral),
        "earnest" => Some(EarnestnessClass::Earnest),
        "unlabeled" | "" => None,
        other => return Err(Error::invalid(format!("unknown class `{other}`"))),
    })
}

fn check(points: &[ProjectedPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Writes `text,x,y,class`. Coordinates use 17 significant digits, which
/// round-trip every `f64`.
pub fn write_scatter_csv<W: Write>(points: &[ProjectedPoint], writer: W) -> Result<()> {
    check(points)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["text", "x", "y", "class"])?;
    for p in points {
        w.write_record([
            p.normalized_text.as_str(),
            &format!("{:.16e}", p.x),
            &format!("{:.16e}", p.y),
            class_key(p.class_hint),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scatter csv>", e))?;
    Ok(())
}

pub fn read_scatter_csv<R: Read>(reader: R) -> Result<Vec<ProjectedPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad coordinate `{}`", field(i))))
        };
        out.push(ProjectedPoint {
            normalized_text: field(0).to_string(),
            x: num(1)?,
            y: num(2)?,
            class_hint: parse_class(field(3))?,
        });
    }
    Ok(out)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => {}
            c => out.push(c),
        }
    }
    out
}

/// Renders an SVG with one `<circle>` per point and a legend entry for each
/// class that occurs.
pub fn render_scatter_svg(points: &[ProjectedPoint]) -> Result<String> {
    check(points)?;
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 480.0;
    const MARGIN: f64 = 24.0;
    const LEGEND: f64 = 120.0;

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let span_y = if y1 > y0 { y1 - y0 } else { 1.0 };
    let plot_w = WIDTH - LEGEND - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<g class="points">"#);
    for p in points {
        let key = class_key(p.class_hint);
        let color = CLASS_STYLES.iter().find(|(k, _)| *k == key).map(|(_, c)| *c).unwrap_or("#000");
        let cx = MARGIN + (p.x - x0) / span_x * plot_w;
        let cy = HEIGHT - MARGIN - (p.y - y0) / span_y * plot_h;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{color}" fill-opacity="0.8" data-class="{key}"><title>{}</title></circle>"#,
            escape_xml(&p.normalized_text)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    let lx = WIDTH - LEGEND;
    let mut row = 0;
    for (key, color) in CLASS_STYLES {
        if !points.iter().any(|p| class_key(p.class_hint) == key) {
            continue;
        }
        let ly = MARGIN + 20.0 * row as f64;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{color}"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{key}</text>"#, lx + 16.0, ly + 10.0);
        row += 1;
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn export_scatter(points: &[ProjectedPoint], path: &Path, format: ScatterFormat) -> Result<()> {
    let bytes = match format {
        ScatterFormat::Csv => {
            let mut buf = Vec::new();
            write_scatter_csv(points, &mut buf)?;
            buf
        }
        ScatterFormat::Svg => render_scatter_svg(points)?.into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
