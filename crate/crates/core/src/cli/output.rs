//! Plain-text tables: CSV with a leading `#` provenance line, or JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{CoincidenceHistogram, TimeTagStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Column-oriented numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, provenance: &str) -> String {
        let mut s = String::new();
        for line in provenance.lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn to_json(&self, provenance: &str) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            provenance: &'a str,
            columns: &'a [String],
            rows: &'a [Vec<f64>],
        }
        let mut s = serde_json::to_string_pretty(&Doc {
            provenance,
            columns: &self.columns,
            rows: &self.rows,
        })
        .expect("table is serialisable");
        s.push('\n');
        s
    }
}

pub struct Writer {
    pub dir: PathBuf,
    pub format: Format,
    pub provenance: String,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, format: Format, provenance: String) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            provenance,
            written: Vec::new(),
        })
    }

    pub fn table(&mut self, stem: &str, t: &Table) -> Result<PathBuf> {
        let (ext, body) = match self.format {
            Format::Csv => ("csv", t.to_csv(&self.provenance)),
            Format::Json => ("json", t.to_json(&self.provenance)),
        };
        self.write(&format!("{stem}.{ext}"), &body)
    }

    /// Always JSON, for summaries and fit results.
    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Validation(format!("serialising {stem}: {e}")))?;
        body.push('\n');
        self.write(&format!("{stem}.json"), &body)
    }

    pub fn write(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

pub fn histogram_table(h: &CoincidenceHistogram) -> Table {
    let mut t = Table::new(&["bin_start_ns", "counts"]);
    for (k, c) in h.counts.iter().enumerate() {
        t.push(vec![h.bin_start(k), *c]);
    }
    t
}

pub fn timetags_csv(streams: &[&TimeTagStream], provenance: &str) -> String {
    let mut rows: Vec<(i64, u32)> = streams
        .iter()
        .flat_map(|s| s.tags.iter().map(move |&t| (t, s.channel)))
        .collect();
    rows.sort_unstable();
    let mut out = String::new();
    for line in provenance.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("channel,timestamp_ps\n");
    for (t, c) in rows {
        let _ = writeln!(out, "{c},{t}");
    }
    out
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header: &str,
    path: &Path,
) -> Result<()> {
    match lines.next() {
        Some((_, h)) if h.replace(' ', "") == header => Ok(()),
        Some((n, h)) => Err(Error::Config(format!(
            "{}:{n}: expected header `{header}`, found `{h}`",
            path.display()
        ))),
        None => Err(Error::Config(format!("{}: empty file", path.display()))),
    }
}

/// Reads a `bin_start_ns,counts` table; bins must be uniform and contiguous.
pub fn read_histogram(path: &Path) -> Result<CoincidenceHistogram> {
    let text = std::fs::read_to_string(path)?;
    parse_histogram(&text, path)
}

pub fn parse_histogram(text: &str, path: &Path) -> Result<CoincidenceHistogram> {
    let mut lines = data_lines(text);
    expect_header(&mut lines, "bin_start_ns,counts", path)?;
    let mut starts = Vec::new();
    let mut counts = Vec::new();
    for (n, l) in lines {
        let bad = || Error::Config(format!("{}:{n}: cannot parse `{l}`", path.display()));
        let (a, b) = l.split_once(',').ok_or_else(bad)?;
        let s: f64 = a.trim().parse().map_err(|_| bad())?;
        let c: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "{}:{n}: counts must be >= 0",
                path.display()
            )));
        }
        starts.push(s);
        counts.push(c);
    }
    if starts.len() < 2 {
        return Err(Error::Config(format!(
            "{}: need at least two bins",
            path.display()
        )));
    }
    let w = starts[1] - starts[0];
    if w.is_nan() || w <= 0.0 {
        return Err(Error::Config(format!(
            "{}: bin starts must increase",
            path.display()
        )));
    }
    for (k, s) in starts.iter().enumerate() {
        if (s - (starts[0] + k as f64 * w)).abs() > 1e-6 * w.max(1.0) {
            return Err(Error::Config(format!(
                "{}: bin {k} breaks the uniform {w} ns spacing",
                path.display()
            )));
        }
    }
    let total = counts.iter().sum::<f64>().round() as u64;
    Ok(CoincidenceHistogram {
        bin_width: w,
        t_min: starts[0],
        counts,
        total_pairs: total,
    })
}

/// Reads a `channel,timestamp_ps` table into per-channel streams.
pub fn read_timetags(path: &Path) -> Result<Vec<TimeTagStream>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    expect_header(&mut lines, "channel,timestamp_ps", path)?;
    let mut by_channel: std::collections::BTreeMap<u32, Vec<i64>> = Default::default();
    for (n, l) in lines {
        let bad = || Error::Config(format!("{}:{n}: cannot parse `{l}`", path.display()));
        let (a, b) = l.split_once(',').ok_or_else(bad)?;
        let ch: u32 = a.trim().parse().map_err(|_| bad())?;
        let t: i64 = b.trim().parse().map_err(|_| bad())?;
        by_channel.entry(ch).or_default().push(t);
    }
    by_channel
        .into_iter()
        .map(|(ch, tags)| TimeTagStream::new(ch, tags))
        .collect()
}
