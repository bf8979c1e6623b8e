//! CSV and SVG output for traces and static sweeps.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::blocks::SweepResult;
use crate::error::{Error, Result};
use crate::trace::{Polarity, Trace};

pub const SWEEP_HEADER: [&str; 4] = ["vy", "vx", "branch", "stability"];

/// Decimal notation with 9 significant digits.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), reason: e.to_string() }
}

/// Short column names used in trace files.
fn column_name(label: &str) -> String {
    label.replace('_', "")
}

pub fn trace_to_csv<W: Write>(tr: &Trace, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(tr.labels.iter().map(|l| column_name(l)));
    w.write_record(&header)?;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let mut row = vec![format_number(*t)];
        row.extend(s.iter().map(|v| format_number(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(tr: &Trace, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    trace_to_csv(tr, f).map_err(|e| io_err(path, e))
}

pub fn sweep_to_csv<W: Write>(sw: &SweepResult, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for p in &sw.points {
        w.write_record([
            format_number(p.input),
            format_number(p.output),
            p.branch.to_string(),
            p.stability.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(sw: &SweepResult, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    sweep_to_csv(sw, f).map_err(|e| io_err(path, e))
}

/// Reads a trace file. Circuit traces (`t,vx,...`) spike downward, normal
/// form traces (`t,x,...`) upward.
pub fn trace_from_csv<R: Read>(input: R) -> Result<Trace> {
    let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(parse_err(1, format!("header must start with t and a spiking column, got {cols:?}")));
    }
    let polarity = match cols[1] {
        "vx" => Polarity::Down,
        "x" => Polarity::Up,
        other => return Err(parse_err(1, format!("unknown spiking column '{other}'"))),
    };
    let labels: Vec<&str> = cols[1..].to_vec();
    let mut tr = Trace::new(&labels, polarity);
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| parse_err(line, format!("invalid number '{s}'"))))
            .collect::<Result<_>>()?;
        tr.push(vals[0], vals[1..].to_vec()).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(tr)
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    trace_from_csv(f).map_err(|e| match e {
        Error::Parse { line, reason } => io_err(path, format!("line {line}: {reason}")),
        e => e,
    })
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 300.0;
const MARGIN: f64 = 50.0;

/// Line plot of one trace column against time.
pub fn trace_to_svg(tr: &Trace, column: usize, time_unit: &str, value_unit: &str) -> String {
    let ys: Vec<f64> = tr.states.iter().map(|s| s[column]).collect();
    let (t0, t1) = (tr.times.first().copied().unwrap_or(0.0), tr.times.last().copied().unwrap_or(1.0));
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0) };
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let px = |t: f64| MARGIN + (t - t0) / span_t * (SVG_W - 2.0 * MARGIN);
    let py = |v: f64| SVG_H - MARGIN - (v - lo) / (hi - lo) * (SVG_H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, SVG_H - MARGIN, SVG_W - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    let label = tr.labels.get(column).map(String::as_str).unwrap_or("");
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t ({time_unit})</text>"#, SVG_W / 2.0, SVG_H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{label} ({value_unit})</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    for (v, y) in [(lo, y0), (hi, y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#, x0 - 4.0, y + 4.0, format_number(v));
    }
    for (t, x) in [(t0, x0), (t1, x1)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, y0 + 14.0, format_number(t));
    }
    let mut d = String::new();
    for (i, (t, v)) in tr.times.iter().zip(&ys).enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { 'M' } else { 'L' }, px(*t), py(*v));
    }
    let _ = writeln!(s, r#"<path d="{}" stroke="steelblue" stroke-width="1" fill="none"/>"#, d.trim_end());
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(tr: &Trace, column: usize, time_unit: &str, value_unit: &str, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_svg(tr, column, time_unit, value_unit)).map_err(|e| io_err(path, e))
}
