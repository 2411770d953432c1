//! Versioned CSV tables and self-contained SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_SCHEMA: &str = "# schema=v1";

/// A CSV cell; floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as i64)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format!("{x:?}"),
            Cell::I(x) => x.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension(format!("row has {} cells, table has {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv output is utf-8");
        Ok(format!("{CSV_SCHEMA}\n{body}"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Parses text produced by [`Table::to_csv`]; every cell comes back as a string.
    pub fn parse(text: &str) -> Result<Table> {
        let body = text
            .strip_prefix(CSV_SCHEMA)
            .and_then(|s| s.strip_prefix('\n'))
            .ok_or_else(|| Error::InvalidModel(format!("CSV does not start with '{CSV_SCHEMA}'")))?;
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = vec![];
        for rec in r.records() {
            rows.push(rec.map_err(csv_err)?.iter().map(|s| Cell::S(s.into())).collect());
        }
        Ok(Table { columns, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidModel(format!("csv: {e}"))
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    /// Joined by a polyline instead of drawn as dots.
    pub line: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Scatter/line plot as a standalone SVG document.
///
/// `timestamp` goes into a `<metadata>` element; pass `None` for
/// byte-reproducible output.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], timestamp: Option<&str>) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p[0].is_finite() && p[1].is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let grow = |a: f64, b: f64| if b - a < 1e-12 { (a - 0.5, b + 0.5) } else { (a - 0.05 * (b - a), b + 0.05 * (b - a)) };
    let ((x0, x1), (y0, y1)) = (grow(x0, x1), grow(y0, y1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    if let Some(t) = timestamp {
        let _ = writeln!(s, "<metadata>generated {}</metadata>", escape(t));
    }
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, anchor, x, y) in [(x0, "start", PAD, H - PAD + 14.0), (x1, "end", W - PAD, H - PAD + 14.0)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.3e}</text>"#);
    }
    for (v, y) in [(y0, H - PAD), (y1, PAD + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3e}</text>"#, PAD - 4.0);
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let finite: Vec<&[f64; 2]> = ser.points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
        if ser.line {
            let path: Vec<String> = finite.iter().map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        } else {
            let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.6">"#);
            for p in finite {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, sx(p[0]), sy(p[1]));
            }
            let _ = writeln!(s, "</g>");
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            PAD + 6.0,
            PAD + 14.0 + 13.0 * k as f64,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_floats_exact() {
        let mut t = Table::new(["a", "b", "name"]);
        t.push(vec![0.1.into(), (1.0 / 3.0).into(), "x,y".into()]).unwrap();
        t.push(vec![f64::INFINITY.into(), 3usize.into(), "z".into()]).unwrap();
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("# schema=v1\na,b,name\n"));
        let back = Table::parse(&text).unwrap();
        assert_eq!(back.columns, t.columns);
        let Cell::S(s) = &back.rows[0][1] else { unreachable!() };
        assert_eq!(s.parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(back.rows[0][2], Cell::S("x,y".into()));
        assert!(t.push(vec![1.0.into()]).is_err());
    }

    #[test]
    fn svg_is_standalone_and_reproducible() {
        let ser = [Series { label: "a<b".into(), points: vec![[0.0, 1.0], [1.0, 2.0]], line: false }];
        let a = svg_plot("t", "x", "y", &ser, None);
        assert_eq!(a, svg_plot("t", "x", "y", &ser, None));
        assert!(a.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(!a.contains("href") && !a.contains("<metadata>"));
        assert!(a.contains("a&lt;b"));
        assert!(svg_plot("t", "x", "y", &ser, Some("1")).contains("<metadata>generated 1</metadata>"));
    }
}
