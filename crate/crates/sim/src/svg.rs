//! Plain SVG plots of CSV columns. Output depends only on the input values,
//! so identical data renders to identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use selda_core::gait::Summary;

use crate::csvio::Table;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Lines of each `y` column against `x`.
    Timeseries,
    /// One box per distinct value of `x`, summarizing the single `y` column.
    Boxplot,
    /// Markers of each `y` column against `x`.
    Scatter,
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "timeseries" => Ok(PlotKind::Timeseries),
            "boxplot" => Ok(PlotKind::Boxplot),
            "scatter" => Ok(PlotKind::Scatter),
            _ => Err(format!("unknown plot kind `{s}` (timeseries, boxplot, scatter)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub x: String,
    pub y: Vec<String>,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub output: PathBuf,
}

impl PlotSpec {
    /// Checks that every selector names a column of `table`.
    pub fn validate(&self, table: &Table) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::Usage("at least one y column is required".into()));
        }
        if self.kind == PlotKind::Boxplot && self.y.len() != 1 {
            return Err(Error::Usage("a boxplot takes exactly one y column".into()));
        }
        table.column_index(&self.x)?;
        for y in &self.y {
            table.column_index(y)?;
        }
        Ok(())
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Axis {
        let (mut lo, mut hi) =
            values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Canvas {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Canvas { out }
    }

    fn frame(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            self.out,
            r#"<rect class="frame" x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(
            self.out,
            r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 18.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.out,
            r#"<text class="ylabel" transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn x_ticks(&mut self, axis: &Axis) {
        for v in ticks(axis.lo, axis.hi) {
            let px = axis.map(v);
            let y = HEIGHT - BOTTOM;
            let _ = writeln!(
                self.out,
                r#"<line x1="{px:.2}" y1="{y:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
                y + 5.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y + 18.0,
                tick_label(v)
            );
        }
    }

    fn y_ticks(&mut self, axis: &Axis) {
        for v in ticks(axis.lo, axis.hi) {
            let py = axis.map(v);
            let _ = writeln!(
                self.out,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##,
                LEFT,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py + 4.0,
                tick_label(v)
            );
        }
    }

    fn legend(&mut self, names: &[String]) {
        if names.len() < 2 {
            return;
        }
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = WIDTH - RIGHT - 150.0;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                self.out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                y - 4.0,
                x + 20.0,
                y - 4.0
            );
            let _ = writeln!(self.out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 26.0, escape(name));
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn xy_plot(spec: &PlotSpec, table: &Table) -> Result<String> {
    let x = table.numbers(&spec.x)?;
    let ys: Vec<Vec<f64>> = spec.y.iter().map(|c| table.numbers(c)).collect::<Result<_>>()?;
    let xa = Axis::fit(x.iter().copied(), LEFT, WIDTH - RIGHT);
    let ya = Axis::fit(ys.iter().flatten().copied(), HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(&spec.title);
    c.y_ticks(&ya);
    c.frame(&spec.x_label, &spec.y_label);
    c.x_ticks(&xa);
    for (i, y) in ys.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite());
        match spec.kind {
            PlotKind::Timeseries => {
                let mut path = String::new();
                for (a, b) in points {
                    let _ = write!(path, "{:.2},{:.2} ", xa.map(*a), ya.map(*b));
                }
                let _ = writeln!(
                    c.out,
                    r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    path.trim_end()
                );
            }
            _ => {
                for (a, b) in points {
                    let _ = writeln!(
                        c.out,
                        r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        xa.map(*a),
                        ya.map(*b)
                    );
                }
            }
        }
    }
    c.legend(&spec.y);
    Ok(c.finish())
}

/// Distinct values of `keys` in order of first appearance, with the values
/// belonging to each.
fn groups<'a>(keys: &[&'a str], values: &[f64]) -> Vec<(&'a str, Vec<f64>)> {
    let mut out: Vec<(&str, Vec<f64>)> = Vec::new();
    for (k, v) in keys.iter().zip(values) {
        match out.iter_mut().find(|g| g.0 == *k) {
            Some(g) => g.1.push(*v),
            None => out.push((k, vec![*v])),
        }
    }
    out
}

fn box_plot(spec: &PlotSpec, table: &Table) -> Result<String> {
    let keys = table.strings(&spec.x)?;
    let values = table.numbers(&spec.y[0])?;
    let groups = groups(&keys, &values);
    let stats: Vec<Summary> = groups.iter().map(|g| Summary::of(&g.1)).collect();
    let ya = Axis::fit(stats.iter().flat_map(|s| [s.min, s.max]), HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(&spec.title);
    c.y_ticks(&ya);
    c.frame(&spec.x_label, &spec.y_label);
    let slot = (WIDTH - LEFT - RIGHT) / groups.len().max(1) as f64;
    let half = (slot * 0.3).min(30.0);
    for (i, ((name, _), s)) in groups.iter().zip(&stats).enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let (top, bottom) = (ya.map(s.q3), ya.map(s.q1));
        let _ = writeln!(c.out, r#"<g class="group">"#);
        let _ = writeln!(
            c.out,
            r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            ya.map(s.max),
            ya.map(s.min)
        );
        for v in [s.min, s.max] {
            let _ = writeln!(
                c.out,
                r#"<line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                ya.map(v),
                cx + half / 2.0,
                ya.map(v)
            );
        }
        let _ = writeln!(
            c.out,
            r#"<rect class="box" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
            cx - half,
            2.0 * half,
            (bottom - top).max(0.5)
        );
        let _ = writeln!(
            c.out,
            r#"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            ya.map(s.median),
            cx + half,
            ya.map(s.median)
        );
        let _ = writeln!(
            c.out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            escape(name)
        );
        let _ = writeln!(c.out, "</g>");
    }
    Ok(c.finish())
}

/// Renders the plot as SVG text.
pub fn render_svg(spec: &PlotSpec, table: &Table) -> Result<String> {
    spec.validate(table)?;
    match spec.kind {
        PlotKind::Boxplot => box_plot(spec, table),
        PlotKind::Timeseries | PlotKind::Scatter => xy_plot(spec, table),
    }
}

/// Renders and writes to `spec.output`.
pub fn save_svg(spec: &PlotSpec, table: &Table) -> Result<()> {
    let svg = render_svg(spec, table)?;
    if let Some(dir) = spec.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&spec.output, svg).map_err(|e| Error::io(&spec.output, e))
}

pub fn plot_file(spec: &PlotSpec, input: &Path) -> Result<()> {
    save_svg(spec, &Table::read(input)?)
}
