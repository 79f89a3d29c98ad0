//! Static SVG line charts of discretized traces.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A trace CSV: a `t` column followed by one column per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// `columns[k][i]` is coordinate `k` at `times[i]`.
    pub columns: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let err = |line: usize, msg: String| TraceError::Parse { line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if names.first().map(String::as_str) != Some("t") {
            return Err(err(1, format!("header must start with `t`, got `{header}`")));
        }
        if names.len() < 2 {
            return Err(err(1, "header needs at least one coordinate column".into()));
        }
        let names = names[1..].to_vec();
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, row) in lines {
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != names.len() + 1 {
                return Err(err(line, format!("expected {} fields, got {}", names.len() + 1, fields.len())));
            }
            let mut values = fields.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line, format!("`{f}` is not a finite number")))
            });
            times.push(values.next().unwrap()?);
            for (col, value) in columns.iter_mut().zip(values) {
                col.push(value?);
            }
        }
        if times.is_empty() {
            return Err(err(2, "no data rows".into()));
        }
        Ok(Self { names, times, columns })
    }

    /// Drop rows before `fraction` of the time span.
    pub fn skip_fraction(&self, fraction: f64) -> Self {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let cut = t0 + fraction * (t1 - t0);
        let start = self.times.iter().position(|&t| t >= cut).unwrap_or(self.times.len() - 1);
        Self {
            names: self.names.clone(),
            times: self.times[start..].to_vec(),
            columns: self.columns.iter().map(|c| c[start..].to_vec()).collect(),
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Render one polyline per coordinate with labelled axes.
pub fn render(table: &TraceTable, title: &str) -> String {
    let (t0, t1) = span(table.times.iter().copied());
    let (y0, y1) = span(table.columns.iter().flatten().copied());
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
    // Axes.
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">time</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 15 {})">coordinate value</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (t, anchor) in [(t0, "start"), (t1, "end")] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}" font-size="11">{}</text>"#, sx(t), bottom + 16.0, tick(t));
    }
    for y in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#, left - 6.0, sy(y) + 4.0, tick(y));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{0:.2}" x2="{right}" y2="{0:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
            sy(0.0)
        );
    }
    for (k, (name, col)) in table.names.iter().zip(&table.columns).enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let mut points = String::with_capacity(16 * col.len());
        for (i, (&t, &y)) in table.times.iter().zip(col).enumerate() {
            if i > 0 {
                points.push(' ');
            }
            let _ = write!(points, "{:.2},{:.2}", sx(t), sy(y));
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{points}"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            right + 6.0,
            top + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        format!("{x:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
