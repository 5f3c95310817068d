use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{collect_records, find_files, RecordStatus};
use crate::env::{read_trace, TraceRecord};
use crate::error::{Error, Result};
use crate::masac::read_metrics_file;

type Rgb = [u8; 3];

const WHITE: Rgb = [255, 255, 255];
const BLACK: Rgb = [0, 0, 0];
const GREY: Rgb = [200, 200, 200];
const PALETTE: [Rgb; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

/// RGB raster with the origin at the top-left corner.
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![WHITE; width * height] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Rgb) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, c);
            }
        }
    }

    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (r, bits) in rows.iter().enumerate() {
                    for col in 0..3 {
                        if bits & (0b100 >> col) != 0 {
                            self.fill_rect(cx + 2 * col, y + 2 * r as i64, 2, 2, c);
                        }
                    }
                }
            }
            cx += 8;
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
            let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&flat).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_png()?)?;
        Ok(())
    }
}

/// 3×5 bitmaps for numeric tick labels.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        'e' => [0b000, 0b111, 0b111, 0b100, 0b111],
        ' ' => [0; 5],
        _ => return None,
    })
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

const W: usize = 640;
const H: usize = 420;
const LEFT: i64 = 80;
const RIGHT: i64 = 20;
const TOP: i64 = 20;
const BOTTOM: i64 = 40;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in it.filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> i64 {
        let w = (W as i64 - LEFT - RIGHT) as f64;
        LEFT + ((x - self.x0) / (self.x1 - self.x0) * w).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let h = (H as i64 - TOP - BOTTOM) as f64;
        H as i64 - BOTTOM - ((y - self.y0) / (self.y1 - self.y0) * h).round() as i64
    }

    fn axes(&self, c: &mut Canvas) {
        let (xl, xr, yb, yt) = (LEFT, W as i64 - RIGHT, H as i64 - BOTTOM, TOP);
        for k in 1..4 {
            let y = yb + (yt - yb) * k / 4;
            c.line(xl, y, xr, y, GREY);
        }
        c.line(xl, yb, xr, yb, BLACK);
        c.line(xl, yb, xl, yt, BLACK);
        c.text(xl, yb + 8, &label(self.x0), BLACK);
        let xs = label(self.x1);
        c.text(xr - 8 * xs.len() as i64, yb + 8, &xs, BLACK);
        c.text(4, yb - 10, &label(self.y0), BLACK);
        c.text(4, yt, &label(self.y1), BLACK);
    }
}

/// One point of a named series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// Long-format series `series,x,y`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineData {
    pub rows: Vec<LineRow>,
}

impl LineData {
    pub fn push(&mut self, series: &str, x: f64, y: f64) {
        self.rows.push(LineRow { series: series.to_string(), x, y });
    }

    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Ok(Self { rows: from_csv(text)? })
    }

    fn series(&self) -> BTreeMap<&str, Vec<(f64, f64)>> {
        let mut m: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            m.entry(r.series.as_str()).or_default().push((r.x, r.y));
        }
        m
    }

    pub fn render(&self) -> Canvas {
        let mut c = Canvas::new(W, H);
        let f = Frame::new(self.rows.iter().map(|r| r.x), self.rows.iter().map(|r| r.y));
        f.axes(&mut c);
        for (k, (_, pts)) in self.series().into_iter().enumerate() {
            let col = PALETTE[k % PALETTE.len()];
            for w in pts.windows(2) {
                c.line(f.px(w[0].0), f.py(w[0].1), f.px(w[1].0), f.py(w[1].1), col);
            }
            if pts.len() == 1 {
                c.fill_rect(f.px(pts[0].0) - 2, f.py(pts[0].1) - 2, 5, 5, col);
            }
        }
        c
    }
}

/// Outage of one seed at one sweep point, with its confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub series: String,
    pub x: f64,
    pub seed: u64,
    pub y: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Outage against a sweep variable: `series,x,seed,y,ci_low,ci_high`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepData {
    pub rows: Vec<SweepRow>,
}

impl SweepData {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Ok(Self { rows: from_csv(text)? })
    }

    /// Per-seed markers with interval bars and a line through the per-point seed means.
    pub fn render(&self) -> Canvas {
        let mut c = Canvas::new(W, H);
        let f = Frame::new(
            self.rows.iter().map(|r| r.x),
            self.rows.iter().flat_map(|r| [r.ci_low, r.ci_high, r.y]),
        );
        f.axes(&mut c);
        let mut series: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
        for r in &self.rows {
            series.entry(r.series.as_str()).or_default().entry(r.x.to_bits()).or_default().push(r.y);
        }
        for (k, (name, points)) in series.iter().enumerate() {
            let col = PALETTE[k % PALETTE.len()];
            let mut means: Vec<(f64, f64)> = points
                .iter()
                .map(|(xb, ys)| (f64::from_bits(*xb), ys.iter().sum::<f64>() / ys.len() as f64))
                .collect();
            means.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in means.windows(2) {
                c.line(f.px(w[0].0), f.py(w[0].1), f.px(w[1].0), f.py(w[1].1), col);
            }
            for r in self.rows.iter().filter(|r| r.series == *name) {
                let x = f.px(r.x);
                c.line(x, f.py(r.ci_low), x, f.py(r.ci_high), col);
                c.fill_rect(x - 2, f.py(r.y) - 2, 5, 5, col);
            }
        }
        c
    }
}

/// Channel and transmit power of one agent in one TTI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub agent: usize,
    pub tti: u64,
    pub channel: usize,
    pub power_dbm: f64,
}

/// Per-TTI channel and power of every agent: `agent,tti,channel,power_dbm`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimelineData {
    pub rows: Vec<TimelineRow>,
}

/// Powers at or below this level are drawn as silence.
const OFF_DBM: f64 = -100.0;
const CELL_W: usize = 6;
const CELL_H: usize = 24;

impl TimelineData {
    pub fn from_trace(trace: &[TraceRecord]) -> Self {
        Self {
            rows: trace
                .iter()
                .map(|r| TimelineRow { agent: r.agent, tti: r.tti, channel: r.channel, power_dbm: r.power_dbm })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Ok(Self { rows: from_csv(text)? })
    }

    /// `(agents, ttis)` of the grid.
    pub fn dims(&self) -> (usize, usize) {
        let n = self.rows.iter().map(|r| r.agent + 1).max().unwrap_or(0);
        let t0 = self.rows.iter().map(|r| r.tti).min().unwrap_or(0);
        let t1 = self.rows.iter().map(|r| r.tti + 1).max().unwrap_or(0);
        (n, (t1 - t0) as usize)
    }

    /// `grid[agent][tti]` = `(channel, power_dbm)`.
    pub fn grid(&self) -> Vec<Vec<Option<(usize, f64)>>> {
        let (n, t) = self.dims();
        let t0 = self.rows.iter().map(|r| r.tti).min().unwrap_or(0);
        let mut g = vec![vec![None; t]; n];
        for r in &self.rows {
            g[r.agent][(r.tti - t0) as usize] = Some((r.channel, r.power_dbm));
        }
        g
    }

    /// One `CELL_W × CELL_H` cell per (TTI, agent): hue by channel, shade by
    /// power, black when silent.
    pub fn render(&self) -> Canvas {
        let grid = self.grid();
        let (n, t) = self.dims();
        let on = || self.rows.iter().map(|r| r.power_dbm).filter(|p| *p > OFF_DBM);
        let p_max = on().fold(f64::NEG_INFINITY, f64::max);
        let p_min = on().fold(f64::INFINITY, f64::min);
        let mut c = Canvas::new((t * CELL_W).max(1), (n * CELL_H).max(1));
        for (a, row) in grid.iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                let col = match cell {
                    Some((ch, p)) if *p > OFF_DBM => {
                        let frac = if p_max > p_min { (p - p_min) / (p_max - p_min) } else { 1.0 };
                        let base = PALETTE[ch % PALETTE.len()];
                        let s = 0.45 + 0.55 * frac;
                        base.map(|v| (255.0 - (255.0 - v as f64) * s).round() as u8)
                    }
                    Some(_) => BLACK,
                    None => GREY,
                };
                c.fill_rect((k * CELL_W) as i64, (a * CELL_H) as i64, CELL_W as i64, CELL_H as i64 - 2, col);
            }
        }
        c
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("data file: {e}"))
}

/// Kinds of figure produced from persisted data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    RewardCurve,
    OutageSweep,
    Timeline,
    Payload,
}

/// Renders a figure from its data file alone.
pub fn plot_from_csv(kind: PlotKind, csv: &Path, png: &Path) -> Result<()> {
    let text = fs::read_to_string(csv)?;
    let canvas = match kind {
        PlotKind::RewardCurve | PlotKind::Payload => LineData::from_csv(&text)?.render(),
        PlotKind::OutageSweep => SweepData::from_csv(&text)?.render(),
        PlotKind::Timeline => TimelineData::from_csv(&text)?.render(),
    };
    canvas.save(png)
}

fn emit(out: &Path, stem: &str, kind: PlotKind, csv: Result<String>, written: &mut Vec<PathBuf>) -> Result<()> {
    let csv = csv?;
    let csv_path = out.join(format!("{stem}.csv"));
    let mut f = BufWriter::new(File::create(&csv_path)?);
    f.write_all(csv.as_bytes())?;
    f.flush()?;
    let png_path = out.join(format!("{stem}.png"));
    plot_from_csv(kind, &csv_path, &png_path)?;
    written.push(csv_path);
    written.push(png_path);
    Ok(())
}

fn rel_name(root: &Path, file: &Path) -> String {
    let parent = file.parent().unwrap_or(root);
    let rel = parent.strip_prefix(root).unwrap_or(parent);
    let s = rel.to_string_lossy().replace(['/', '\\'], "_");
    if s.is_empty() {
        "run".to_string()
    } else {
        s
    }
}

/// Reads metrics, records and traces below `run_dir` and writes every figure
/// with its data file into `out_dir`. Nothing below `run_dir` is modified.
/// Returns the files written; empty input writes nothing.
pub fn render_run_dir(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut metrics = Vec::new();
    find_files(run_dir, "metrics.jsonl", &mut metrics)?;
    let mut traces = Vec::new();
    find_files(run_dir, "trace.jsonl", &mut traces)?;
    let records: Vec<_> = collect_records(run_dir)?.into_iter().filter(|r| r.status == RecordStatus::Ok).collect();
    if metrics.is_empty() && traces.is_empty() && records.is_empty() {
        log::warn!("nothing to plot under {}", run_dir.display());
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if !metrics.is_empty() {
        let mut data = LineData::default();
        for m in &metrics {
            let name = rel_name(run_dir, m);
            for row in read_metrics_file(m)? {
                data.push(&name, row.episode as f64, row.mean_reward);
            }
        }
        emit(out_dir, "reward_curve", PlotKind::RewardCurve, data.to_csv(), &mut written)?;
    }
    if !records.is_empty() {
        let data = SweepData {
            rows: records
                .iter()
                .map(|r| SweepRow {
                    series: r.variant.clone(),
                    x: r.sweep_value.unwrap_or(0.0),
                    seed: r.seed,
                    y: r.outage,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                })
                .collect(),
        };
        emit(out_dir, "outage_sweep", PlotKind::OutageSweep, data.to_csv(), &mut written)?;
    }
    for t in &traces {
        let name = rel_name(run_dir, t);
        let trace = read_trace(std::io::BufReader::new(File::open(t)?))?;
        emit(out_dir, &format!("timeline_{name}"), PlotKind::Timeline, TimelineData::from_trace(&trace).to_csv(), &mut written)?;
        let mut payload = LineData::default();
        for r in &trace {
            payload.push(&format!("agent{}", r.agent), r.tti as f64, r.remaining_bits);
        }
        emit(out_dir, &format!("payload_{name}"), PlotKind::Payload, payload.to_csv(), &mut written)?;
    }
    Ok(written)
}
