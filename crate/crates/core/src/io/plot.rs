//! Minimal deterministic SVG line plots.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sweep::{SweepRow, SweepTable};

/// Column-oriented numeric table; missing values are `NaN`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Wide form of a sweep: `param`, then for every tracked cell
    /// `S_ode@c`, `S_rtm@c`, `B_<name>_ode@c`, `B_<name>_rtm@c`, `delta@c`,
    /// where `c` is `in` for the first tracked cell, `out` for the last and
    /// the 1-based index otherwise.
    pub fn from_sweep(table: &SweepTable) -> Self {
        let width = table.rows.iter().map(|r| r.tracked.len()).max().unwrap_or(0);
        let labels: Vec<String> = (0..width)
            .map(|p| match p {
                0 => "in".to_string(),
                p if p + 1 == width => "out".to_string(),
                p => table
                    .rows
                    .iter()
                    .find_map(|r| r.tracked.get(p))
                    .map_or(p + 1, |c| c + 1)
                    .to_string(),
            })
            .collect();
        let fields = cell_fields(&table.species_names);
        let mut columns = vec![table.parameter.clone()];
        for l in &labels {
            columns.extend(fields.iter().map(|f| format!("{f}@{l}")));
        }
        let mut frame = Frame::new(columns);
        for row in &table.rows {
            let mut values = vec![row.param];
            for p in 0..width {
                // the output cell moves with n in a cell-count sweep
                let cell = if p + 1 == width { row.tracked.last() } else { row.tracked.get(p) };
                values.extend(cell_values(row, cell.copied(), table.species_names.len()));
            }
            frame.push(values);
        }
        frame
    }

    /// Spatial profile of a single comparison: `cell` (1-based) then the
    /// per-cell fields as in [`Frame::from_sweep`] without suffix.
    pub fn profile(row: &SweepRow, species_names: &[String]) -> Self {
        let mut columns = vec!["cell".to_string()];
        columns.extend(cell_fields(species_names));
        let mut frame = Frame::new(columns);
        for &c in &row.tracked {
            let mut values = vec![(c + 1) as f64];
            values.extend(cell_values(row, Some(c), species_names.len()));
            frame.push(values);
        }
        frame
    }
}

fn cell_fields(species: &[String]) -> Vec<String> {
    let mut f = vec!["S_ode".to_string(), "S_rtm".to_string()];
    for n in species {
        f.push(format!("B_{n}_ode"));
        f.push(format!("B_{n}_rtm"));
    }
    f.push("delta".into());
    f
}

fn cell_values(row: &SweepRow, cell: Option<usize>, m: usize) -> Vec<f64> {
    match cell.and_then(|c| row.cell(c)) {
        Some(c) => {
            let mut v = vec![c.ode.s, c.rtm.s];
            for j in 0..m {
                v.push(c.ode.b[j]);
                v.push(c.rtm.b[j]);
            }
            v.push(c.delta);
            v
        }
        None => vec![f64::NAN; 2 * m + 3],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
}

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Maps data to pixel coordinates along one axis.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, p0: f64, p1: f64) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| usable(*v, log)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            let pad = if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
            lo -= pad;
            hi += pad;
        }
        Some(Self { lo, hi, log, p0, p1 })
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 8 + 1).max(1);
            return (a..=b).step_by(step as usize).map(|k| 10f64.powi(k)).collect();
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        return format!("1e{}", v.log10().round() as i32);
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        let s = format!("{v:.3e}");
        let (mant, exp) = s.split_once('e').unwrap();
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        return format!("{mant}e{exp}");
    }
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `spec` over `frame` as a standalone SVG document. Points that are
/// not finite, or not positive on a log axis, are left out.
pub fn render_plot(frame: &Frame, spec: &PlotSpec) -> Result<String> {
    if frame.rows.is_empty() {
        return Err(Error::Plot("no data rows".into()));
    }
    if spec.ys.is_empty() {
        return Err(Error::Plot("no y columns requested".into()));
    }
    let col = |name: &str| {
        frame
            .column(name)
            .ok_or_else(|| Error::Plot(format!("unknown column {name:?}")))
    };
    let xs = col(&spec.x)?;
    let ys = spec.ys.iter().map(|y| col(y)).collect::<Result<Vec<_>>>()?;

    let pairs = |y: &Vec<f64>| -> Vec<(f64, f64)> {
        xs.iter()
            .zip(y)
            .filter(|(x, y)| usable(**x, spec.log_x) && usable(**y, spec.log_y))
            .map(|(x, y)| (*x, *y))
            .collect()
    };
    let series: Vec<Vec<(f64, f64)>> = ys.iter().map(pairs).collect();
    let all = || series.iter().flatten();
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let ax = Axis::fit(all().map(|p| p.0), spec.log_x, x0, x1)
        .ok_or_else(|| Error::Plot("no plottable points".into()))?;
    let ay = Axis::fit(all().map(|p| p.1), spec.log_y, y0, y1)
        .ok_or_else(|| Error::Plot("no plottable points".into()))?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (x0 + x1) / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in ax.ticks() {
        let px = ax.map(t);
        let _ = writeln!(
            s,
            r#"<line class="xtick" x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            tick_label(t, spec.log_x)
        );
    }
    for t in ay.ticks() {
        let py = ay.map(t);
        let _ = writeln!(
            s,
            r#"<line class="ytick" x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            py + 4.0,
            tick_label(t, spec.log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x)
    );
    for (k, (name, pts)) in spec.ys.iter().zip(&series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", ax.map(*x), ay.map(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = y1 + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 12.0,
            x1 + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 + 38.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
