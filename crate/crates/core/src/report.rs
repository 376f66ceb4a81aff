//! Aggregation of per-record metric values and CSV/SVG emission.
//!
//! Rows are keyed by (metric, model, k); `k = None` marks human text and is
//! written as `human` in the CSV. Each row carries the fingerprint of the
//! configuration that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const CSV_HEADER: &str = "metric,model,k,mean,stderr,n,fingerprint";
const HUMAN_K: &str = "human";

/// One metric value of one record. `value = None` means the metric was
/// undefined for that record (an empty story, a missing lexicon).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub metric: String,
    pub model: String,
    pub k: Option<usize>,
    pub value: Option<f64>,
}

impl Observation {
    pub fn new(metric: impl Into<String>, model: impl Into<String>, k: Option<usize>, value: Option<f64>) -> Self {
        Observation {
            metric: metric.into(),
            model: model.into(),
            k,
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub metric: String,
    pub model: String,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub metric: String,
    pub model: String,
    pub k: Option<usize>,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<Row>,
    pub fingerprint: String,
}

/// Counts of values left out during aggregation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Exclusions {
    /// Absent values per group that still produced a row.
    pub absent: BTreeMap<GroupKey, usize>,
    /// Groups whose values were all absent; they have no row.
    pub dropped_groups: Vec<GroupKey>,
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`; zero for a single value).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    Some((mean, sd / (n as f64).sqrt()))
}

pub fn aggregate(observations: impl IntoIterator<Item = Observation>, fingerprint: &str) -> (MetricReport, Exclusions) {
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, usize)> = BTreeMap::new();
    for obs in observations {
        let key = GroupKey {
            metric: obs.metric,
            model: obs.model,
            k: obs.k,
        };
        let entry = groups.entry(key).or_default();
        match obs.value {
            Some(v) => entry.0.push(v),
            None => entry.1 += 1,
        }
    }
    let mut rows = Vec::new();
    let mut excl = Exclusions::default();
    for (key, (values, absent)) in groups {
        match mean_stderr(&values) {
            None => {
                log::warn!(
                    "{} for {} (k={}): all {} values absent, no row",
                    key.metric,
                    key.model,
                    k_label(key.k),
                    absent
                );
                excl.dropped_groups.push(key);
            }
            Some((mean, stderr)) => {
                if absent > 0 {
                    excl.absent.insert(key.clone(), absent);
                }
                rows.push(Row {
                    metric: key.metric,
                    model: key.model,
                    k: key.k,
                    mean,
                    stderr,
                    n: values.len(),
                });
            }
        }
    }
    (
        MetricReport {
            rows,
            fingerprint: fingerprint.to_owned(),
        },
        excl,
    )
}

fn k_label(k: Option<usize>) -> String {
    k.map_or_else(|| HUMAN_K.to_owned(), |k| k.to_string())
}

/// SHA-256 over the canonical (key-sorted, compact) JSON form of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let bytes = serde_json::to_vec(&value)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl MetricReport {
    pub fn metrics(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        names.dedup();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn get(&self, metric: &str, model: &str, k: Option<usize>) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.model == model && r.k == k)
    }

    /// Human-text rows for `metric`.
    pub fn baselines<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric && r.k.is_none())
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::EmptyReport);
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                r.model.clone(),
                k_label(r.k),
                r.mean.to_string(),
                r.stderr.to_string(),
                r.n.to_string(),
                self.fingerprint.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv of strings is UTF-8"))
    }

    pub fn emit_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::ModelFormat(format!("unexpected CSV header `{}`", header.join(","))));
        }
        let bad = |line: u64, what: &str| Error::ModelFormat(format!("CSV line {line}: bad {what}"));
        let mut rows = Vec::new();
        let mut fp: Option<String> = None;
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let k = match &rec[2] {
                HUMAN_K => None,
                s => Some(s.parse().map_err(|_| bad(line, "k"))?),
            };
            match &fp {
                None => fp = Some(rec[6].to_owned()),
                Some(f) if f != &rec[6] => return Err(bad(line, "fingerprint (mixed runs)")),
                Some(_) => {}
            }
            rows.push(Row {
                metric: rec[0].to_owned(),
                model: rec[1].to_owned(),
                k,
                mean: rec[3].parse().map_err(|_| bad(line, "mean"))?,
                stderr: rec[4].parse().map_err(|_| bad(line, "stderr"))?,
                n: rec[5].parse().map_err(|_| bad(line, "n"))?,
            });
        }
        let fingerprint = fp.ok_or(Error::EmptyReport)?;
        Ok(MetricReport { rows, fingerprint })
    }

    pub fn emit_svg(&self, metric: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_svg(metric)?).map_err(|e| Error::io(path, e))
    }

    /// Line chart of `metric` against k on a log axis: one series per model,
    /// one dashed horizontal line per human baseline row. Each point carries
    /// `data-model`, `data-k` and `data-mean` attributes with the exact row
    /// values.
    pub fn to_svg(&self, metric: &str) -> Result<String> {
        let rows: Vec<&Row> = self.rows.iter().filter(|r| r.metric == metric).collect();
        if rows.is_empty() {
            return Err(Error::UnknownMetric(metric.to_owned()));
        }
        let mut series: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.k.is_some()) {
            series.entry(&r.model).or_default().push(r);
        }
        for pts in series.values_mut() {
            pts.sort_by_key(|r| r.k);
        }
        let baselines: Vec<&Row> = rows.iter().copied().filter(|r| r.k.is_none()).collect();

        let (kmin, kmax) = rows
            .iter()
            .filter_map(|r| r.k)
            .fold((usize::MAX, 0), |(lo, hi), k| (lo.min(k), hi.max(k)));
        let (mut x0, mut x1) = if kmax == 0 {
            (0.0, 1.0)
        } else {
            ((kmin as f64).log10().floor(), (kmax as f64).log10().ceil())
        };
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        let (mut y0, mut y1) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.mean), hi.max(r.mean)));
        let pad = if y1 > y0 { (y1 - y0) * 0.05 } else { y0.abs().max(1.0) * 0.05 };
        y0 -= pad;
        y1 += pad;

        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const L: f64 = 70.0;
        const R: f64 = 150.0;
        const T: f64 = 40.0;
        const B: f64 = 50.0;
        let px = |k: usize| L + ((k as f64).log10() - x0) / (x1 - x0) * (W - L - R);
        let py = |v: f64| T + (y1 - v) / (y1 - y0) * (H - T - B);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, "<desc>fingerprint {}</desc>", self.fingerprint);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            L + (W - L - R) / 2.0,
            escape(metric)
        );
        // axes
        let _ = writeln!(
            s,
            r#"<path d="M{L:.2} {T:.2} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
            H - B,
            W - R
        );
        let mut e = x0 as i32;
        while e as f64 <= x1 {
            let x = L + (e as f64 - x0) / (x1 - x0) * (W - L - R);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                H - B,
                H - B + 5.0,
                H - B + 18.0,
                tick_label(e)
            );
            e += 1;
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">k</text>"#,
            L + (W - L - R) / 2.0,
            H - 12.0
        );
        for i in 0..=4 {
            let v = y0 + (y1 - y0) * f64::from(i) / 4.0;
            let y = py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{L:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                L - 5.0,
                L - 8.0,
                y + 4.0,
                format_tick(v)
            );
        }

        const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut legend_y = T + 10.0;
        for (i, b) in baselines.iter().enumerate() {
            let y = py(b.mean);
            let colour = if i == 0 { "#555555" } else { PALETTE[(i + 3) % PALETTE.len()] };
            let _ = writeln!(
                s,
                r#"<line class="baseline" data-model="{}" data-mean="{}" x1="{L:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-dasharray="6 4"/>"#,
                escape(&b.model),
                b.mean,
                W - R
            );
            legend_y = legend(&mut s, W - R + 10.0, legend_y, colour, &b.model, true);
        }
        for (i, (model, pts)) in series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = pts
                .iter()
                .map(|r| format!("{:.2},{:.2}", px(r.k.unwrap_or(1)), py(r.mean)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-model="{}" points="{}" stroke="{colour}" fill="none" stroke-width="2"/>"#,
                escape(model),
                coords.join(" ")
            );
            for r in pts {
                let k = r.k.unwrap_or(1);
                let _ = writeln!(
                    s,
                    r#"<circle class="point" data-model="{}" data-k="{k}" data-mean="{}" cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                    escape(model),
                    r.mean,
                    px(k),
                    py(r.mean)
                );
            }
            legend_y = legend(&mut s, W - R + 10.0, legend_y, colour, model, false);
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn legend(s: &mut String, x: f64, y: f64, colour: &str, label: &str, dashed: bool) -> f64 {
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        s,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
        x + 20.0,
        x + 25.0,
        y + 4.0,
        escape(label)
    );
    y + 18.0
}

fn tick_label(exp: i32) -> String {
    if (0..=6).contains(&exp) {
        10u64.pow(exp as u32).to_string()
    } else {
        format!("1e{exp}")
    }
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Run manifest: the configuration, its fingerprint and the SHA-256 of every
/// file the run wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub config: serde_json::Value,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<T: Serialize>(config: &T) -> Result<Self> {
        Ok(Manifest {
            fingerprint: fingerprint(config)?,
            config: serde_json::to_value(config)?,
            outputs: BTreeMap::new(),
        })
    }

    /// Hashes `path` and records it under its file name.
    pub fn record_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.insert(name, hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
