//! Static SVG rendering of result CSVs. No display server, no
//! external renderer: the output is a self-contained vector file.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RmseVsSnr,
    RmseVsSnapshots,
    AccuracyVsSize,
    SelectionHistogram,
    ArrayLayout,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rmse_vs_snr" => Ok(PlotKind::RmseVsSnr),
            "rmse_vs_snapshots" => Ok(PlotKind::RmseVsSnapshots),
            "accuracy_vs_size" => Ok(PlotKind::AccuracyVsSize),
            "selection_histogram" => Ok(PlotKind::SelectionHistogram),
            "array_layout" => Ok(PlotKind::ArrayLayout),
            other => Err(Error::Validation(format!("unknown plot kind {other:?}"))),
        }
    }

    fn expected_header(&self) -> &'static [&'static str] {
        match self {
            PlotKind::RmseVsSnr | PlotKind::RmseVsSnapshots => {
                &["sweep_value", "method", "rmse_deg", "failures", "trials"]
            }
            PlotKind::AccuracyVsSize => &["size", "method", "accuracy_pct"],
            PlotKind::SelectionHistogram => &["index", "percentage"],
            PlotKind::ArrayLayout => &["m", "x", "y", "z"],
        }
    }

    fn x_label(&self) -> &'static str {
        match self {
            PlotKind::RmseVsSnr => "SNR (dB)",
            PlotKind::RmseVsSnapshots => "snapshots",
            PlotKind::AccuracyVsSize => "dataset size",
            PlotKind::SelectionHistogram => "sensor index",
            PlotKind::ArrayLayout => "x (m)",
        }
    }

    fn y_label(&self) -> &'static str {
        match self {
            PlotKind::RmseVsSnr | PlotKind::RmseVsSnapshots => "RMSE (deg)",
            PlotKind::AccuracyVsSize => "accuracy (%)",
            PlotKind::SelectionHistogram => "appearance (%)",
            PlotKind::ArrayLayout => "y (m)",
        }
    }
}

/// Parsed CSV: header plus rows of raw fields.
fn read_csv(path: &Path, kind: PlotKind) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::CsvSchema("empty file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header != kind.expected_header() {
        return Err(Error::CsvSchema(format!(
            "expected columns {:?}, found {header:?}",
            kind.expected_header()
        )));
    }
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(Error::CsvSchema("no data rows".into()));
    }
    for row in &rows {
        if row.len() != header.len() {
            return Err(Error::CsvSchema(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
    }
    Ok(rows)
}

fn num(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::CsvSchema(format!("non-numeric field {field:?}")))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        // Pad degenerate ranges so single points stay visible.
        if f.x_max - f.x_min < 1e-12 {
            f.x_min -= 1.0;
            f.x_max += 1.0;
        }
        if f.y_max - f.y_min < 1e-12 {
            f.y_min -= 1.0;
            f.y_max += 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_open(kind: PlotKind) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}">"#,
            "\n",
            r#"<rect width="{w}" height="{h}" fill="white"/>"#,
            "\n",
            r#"<line x1="{m}" y1="{ym}" x2="{xm}" y2="{ym}" stroke="black"/>"#,
            "\n",
            r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{ym}" stroke="black"/>"#,
            "\n",
            r#"<text x="{cx}" y="{h2}" text-anchor="middle" font-size="14">{xl}</text>"#,
            "\n",
            r#"<text x="16" y="{cy}" text-anchor="middle" font-size="14" "#,
            r#"transform="rotate(-90 16 {cy})">{yl}</text>"#,
            "\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        m = MARGIN,
        xm = WIDTH - MARGIN,
        ym = HEIGHT - MARGIN,
        cx = WIDTH / 2.0,
        h2 = HEIGHT - 16.0,
        cy = HEIGHT / 2.0,
        xl = kind.x_label(),
        yl = kind.y_label(),
    )
}

fn axis_labels(f: &Frame) -> String {
    format!(
        concat!(
            r#"<text x="{x0}" y="{yb}" font-size="11" text-anchor="middle">{xmin:.3}</text>"#,
            "\n",
            r#"<text x="{x1}" y="{yb}" font-size="11" text-anchor="middle">{xmax:.3}</text>"#,
            "\n",
            r#"<text x="{xl}" y="{y1}" font-size="11" text-anchor="end">{ymax:.3}</text>"#,
            "\n",
            r#"<text x="{xl}" y="{y0}" font-size="11" text-anchor="end">{ymin:.3}</text>"#,
            "\n"
        ),
        x0 = f.px(f.x_min),
        x1 = f.px(f.x_max),
        yb = HEIGHT - MARGIN + 18.0,
        xl = MARGIN - 6.0,
        y0 = f.py(f.y_min) + 4.0,
        y1 = f.py(f.y_max) + 4.0,
        xmin = f.x_min,
        xmax = f.x_max,
        ymin = f.y_min,
        ymax = f.y_max,
    )
}

/// Render `csv_path` to an SVG at `out_path`.
pub fn emit_plot(csv_path: &Path, kind: PlotKind, out_path: &Path) -> Result<()> {
    let rows = read_csv(csv_path, kind)?;
    let svg = match kind {
        PlotKind::RmseVsSnr | PlotKind::RmseVsSnapshots => {
            // Series keyed by method; skip NaN rows (all-failure points).
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for row in &rows {
                let x = num(&row[0])?;
                let y = num(&row[2])?;
                if !y.is_finite() {
                    continue;
                }
                match series.iter_mut().find(|(name, _)| *name == row[1]) {
                    Some((_, pts)) => pts.push((x, y)),
                    None => series.push((row[1].clone(), vec![(x, y)])),
                }
            }
            if series.is_empty() {
                return Err(Error::CsvSchema("no finite data points".into()));
            }
            let frame = Frame::of(series.iter().flat_map(|(_, p)| p.iter().copied()));
            let mut svg = svg_open(kind);
            svg.push_str(&axis_labels(&frame));
            for (si, (name, pts)) in series.iter().enumerate() {
                let color = PALETTE[si % PALETTE.len()];
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                    .collect();
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    path.join(" ")
                ));
                for &(x, y) in pts {
                    svg.push_str(&format!(
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                        frame.px(x),
                        frame.py(y)
                    ));
                }
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
                    WIDTH - MARGIN + 4.0,
                    MARGIN + 16.0 * si as f64
                ));
            }
            svg.push_str("</svg>\n");
            svg
        }
        PlotKind::AccuracyVsSize => {
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for row in &rows {
                let x = num(&row[0])?;
                let y = num(&row[2])?;
                match series.iter_mut().find(|(name, _)| *name == row[1]) {
                    Some((_, pts)) => pts.push((x, y)),
                    None => series.push((row[1].clone(), vec![(x, y)])),
                }
            }
            let frame = Frame::of(series.iter().flat_map(|(_, p)| p.iter().copied()));
            let mut svg = svg_open(kind);
            svg.push_str(&axis_labels(&frame));
            for (si, (name, pts)) in series.iter().enumerate() {
                let color = PALETTE[si % PALETTE.len()];
                for &(x, y) in pts {
                    svg.push_str(&format!(
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
                        frame.px(x),
                        frame.py(y)
                    ));
                }
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
                    WIDTH - MARGIN + 4.0,
                    MARGIN + 16.0 * si as f64
                ));
            }
            svg.push_str("</svg>\n");
            svg
        }
        PlotKind::SelectionHistogram => {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|row| Ok((num(&row[0])?, num(&row[1])?)))
                .collect::<Result<_>>()?;
            let frame = Frame::of(pts.iter().copied().chain([(0.0, 0.0)]));
            let mut svg = svg_open(kind);
            svg.push_str(&axis_labels(&frame));
            let bar_w = ((WIDTH - 2.0 * MARGIN) / pts.len() as f64 * 0.8).max(1.0);
            for &(x, y) in &pts {
                let px = frame.px(x) - bar_w / 2.0;
                let py = frame.py(y);
                let base = frame.py(0.0);
                svg.push_str(&format!(
                    "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                    (base - py).max(0.0),
                    PALETTE[0]
                ));
            }
            svg.push_str("</svg>\n");
            svg
        }
        PlotKind::ArrayLayout => {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|row| Ok((num(&row[1])?, num(&row[2])?)))
                .collect::<Result<_>>()?;
            let frame = Frame::of(pts.iter().copied());
            let mut svg = svg_open(kind);
            svg.push_str(&axis_labels(&frame));
            for (i, &(x, y)) in pts.iter().enumerate() {
                svg.push_str(&format!(
                    "<circle cx=\"{:.4}\" cy=\"{:.4}\" r=\"5\" fill=\"{}\"/>\n",
                    frame.px(x),
                    frame.py(y),
                    PALETTE[0]
                ));
                svg.push_str(&format!(
                    "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{i}</text>\n",
                    frame.px(x) + 6.0,
                    frame.py(y) - 6.0
                ));
            }
            svg.push_str("</svg>\n");
            svg
        }
    };
    crate::runner::write_atomic(out_path, svg.as_bytes())
}
