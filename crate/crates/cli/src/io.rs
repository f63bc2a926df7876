//! File formats: aggregator grids, heatmaps, nature's mixture, certificates
//! and run reports. Every write goes to a temporary file in the destination
//! directory and is renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use robust_agg::learning::RoundRecord;
use robust_agg::{AggregatorGrid, Error, InformationStructure, Result};

/// Weights below this are omitted from weights files.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Floor applied before taking `log10` of a mass map.
pub const LOG_FLOOR: f64 = 1e-12;

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Writes `bytes` to `path` via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// `N=<n>` followed by `N+1` rows; row `k1` holds `f(k1/N, k2/N)` for `k2 = 0..=N`.
pub fn aggregator_csv(grid: &AggregatorGrid) -> String {
    let side = grid.side();
    let mut out = format!("N={}\n", grid.n());
    for row in grid.values().chunks(side) {
        let cells: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses [`aggregator_csv`] output. `label` names the source in errors.
pub fn parse_aggregator_csv(text: &str, label: &str) -> Result<AggregatorGrid> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(label, 1, "empty file, expected `N=<int>`"))?;
    let n: u32 = header
        .strip_prefix("N=")
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            format_err(
                label,
                1,
                format!("expected `N=<positive int>`, found {header:?}"),
            )
        })?;
    let side = n as usize + 1;
    let mut values = Vec::with_capacity(side * side);
    let mut rows = 0;
    let mut last_line = 1;
    for (no, line) in lines {
        last_line = no;
        if line.is_empty() {
            continue;
        }
        if rows == side {
            return Err(format_err(label, no, format!("more than {side} rows")));
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != side {
            return Err(format_err(
                label,
                no,
                format!("expected {side} values, found {}", cells.len()),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                format_err(
                    label,
                    no,
                    format!("column {}: {cell:?} is not a number", col + 1),
                )
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format_err(
                    label,
                    no,
                    format!("column {}: {v} outside [0, 1]", col + 1),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != side {
        return Err(format_err(
            label,
            last_line,
            format!("expected {side} rows, found {rows}"),
        ));
    }
    AggregatorGrid::new(n, values)
}

pub fn write_aggregator(path: &Path, grid: &AggregatorGrid) -> Result<()> {
    write_atomic(path, aggregator_csv(grid).as_bytes())
}

pub fn read_aggregator(path: &Path) -> Result<AggregatorGrid> {
    parse_aggregator_csv(&read_text(path)?, &path.display().to_string())
}

/// A matrix rendered as CSV and PGM. Row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapFile {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height * width`.
    pub values: Vec<f64>,
}

impl HeatmapFile {
    /// Image of a report-grid map (`values[k1 * side + k2]`): `x1` grows to the
    /// right, `x2` grows upward.
    pub fn from_report_grid(side: usize, grid_values: &[f64]) -> Self {
        let mut values = Vec::with_capacity(side * side);
        for row in 0..side {
            let k2 = side - 1 - row;
            for k1 in 0..side {
                values.push(grid_values[k1 * side + k2]);
            }
        }
        Self {
            width: side,
            height: side,
            values,
        }
    }

    /// `log10(max(v, floor))` of every entry.
    pub fn log10(&self, floor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v.max(floor).log10()).collect(),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn parse_csv(text: &str, label: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(c, s)| {
                    s.trim().parse::<f64>().map_err(|_| {
                        format_err(
                            label,
                            i + 1,
                            format!("column {}: {s:?} is not a number", c + 1),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(format_err(
                        label,
                        i + 1,
                        format!("expected {w} values, found {}", row.len()),
                    ))
                }
                _ => {}
            }
            values.extend(row);
            height += 1;
        }
        Ok(Self {
            width: width.unwrap_or(0),
            height,
            values,
        })
    }

    /// Binary 8-bit greyscale; the smallest value is black, the largest white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let finite = self.values.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if !v.is_finite() || !(span > 0.0) {
                0u8
            } else {
                (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8
            }
        }));
        out
    }

    /// Writes `<stem>.csv` and `<stem>.pgm` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        write_atomic(&dir.join(format!("{stem}.pgm")), &self.to_pgm())
    }
}

/// Header and pixels of a binary PGM.
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let pixels = bytes.get(pos + 1..)?.to_vec();
    (pixels.len() == w * h).then_some((w, h, pixels))
}

/// Nature's mixture over a family, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub n: u32,
    pub m: u32,
    /// Each structure stands for its orbit under agent swap and complement.
    pub symmetric: bool,
    pub structures: Vec<InformationStructure>,
    pub multiplicity: Vec<u32>,
    pub weights: Vec<f64>,
}

const WEIGHTS_COLUMNS: &str = "mu,a0,a1,b0,b1,multiplicity,weight";

impl WeightsFile {
    /// Text form; entries with weight below [`WEIGHT_FLOOR`] are dropped.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "n={},m={},symmetric={}\n{WEIGHTS_COLUMNS}\n",
            self.n, self.m, self.symmetric
        );
        for ((s, k), &w) in self
            .structures
            .iter()
            .zip(&self.multiplicity)
            .zip(&self.weights)
        {
            if w < WEIGHT_FLOOR {
                continue;
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{},{k},{}",
                fmt17(s.mu),
                fmt17(s.a0),
                fmt17(s.a1),
                fmt17(s.b0),
                fmt17(s.b1),
                fmt17(w)
            );
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output and renormalizes the weights.
    pub fn parse(text: &str, label: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines
            .next()
            .ok_or_else(|| format_err(label, 1, "empty weights file"))?;
        let mut n = None;
        let mut m = None;
        let mut symmetric = None;
        for part in header.split(',') {
            match part.split_once('=') {
                Some(("n", v)) => n = v.parse::<u32>().ok(),
                Some(("m", v)) => m = v.parse::<u32>().ok(),
                Some(("symmetric", v)) => symmetric = v.parse::<bool>().ok(),
                _ => {
                    return Err(format_err(
                        label,
                        1,
                        format!("unrecognized header field {part:?}"),
                    ))
                }
            }
        }
        let (Some(n), Some(m), Some(symmetric)) = (n, m, symmetric) else {
            return Err(format_err(
                label,
                1,
                "header must be `n=<int>,m=<int>,symmetric=<bool>`",
            ));
        };
        match lines.next() {
            Some((_, cols)) if cols == WEIGHTS_COLUMNS => {}
            Some((no, cols)) => {
                return Err(format_err(
                    label,
                    no,
                    format!("expected columns {WEIGHTS_COLUMNS:?}, found {cols:?}"),
                ))
            }
            None => return Err(format_err(label, 2, "missing column header")),
        }
        let mut out = Self {
            n,
            m,
            symmetric,
            structures: Vec::new(),
            multiplicity: Vec::new(),
            weights: Vec::new(),
        };
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 7 {
                return Err(format_err(
                    label,
                    no,
                    format!("expected 7 values, found {}", cells.len()),
                ));
            }
            let num = |k: usize| -> Result<f64> {
                cells[k].parse::<f64>().map_err(|_| {
                    format_err(
                        label,
                        no,
                        format!("column {}: {:?} is not a number", k + 1, cells[k]),
                    )
                })
            };
            let s = InformationStructure::new(num(0)?, num(1)?, num(2)?, num(3)?, num(4)?)
                .map_err(|e| format_err(label, no, e.to_string()))?;
            let k: u32 = cells[5].parse().map_err(|_| {
                format_err(
                    label,
                    no,
                    format!("column 6: {:?} is not an integer", cells[5]),
                )
            })?;
            let w = num(6)?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format_err(
                    label,
                    no,
                    format!("weight {w} is not a finite nonnegative number"),
                ));
            }
            if w < WEIGHT_FLOOR {
                continue;
            }
            out.structures.push(s);
            out.multiplicity.push(k);
            out.weights.push(w);
        }
        let total: f64 = out.weights.iter().sum();
        if !(total > 0.0) {
            return Err(format_err(label, 2, "no structure carries weight"));
        }
        out.weights.iter_mut().for_each(|w| *w /= total);
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Reads `key=value` lines up to the first blank or `[`-prefixed line.
    pub fn parse(text: &str) -> Self {
        let mut out = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('[') {
                break;
            }
            if let Some((k, v)) = line.split_once('=') {
                out.push(k, v);
            }
        }
        out
    }
}

/// Per-round CSV block appended to run reports.
pub fn rounds_csv(history: &[RoundRecord<f64>]) -> String {
    let mut out = String::from("[rounds]\nround,max_utility,expected_utility,lower,upper\n");
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.round,
            fmt17(r.max_utility),
            fmt17(r.expected_utility),
            opt(r.lower),
            opt(r.upper)
        );
    }
    out
}

/// Row-major report-grid maps written by `map` and `solve`.
pub fn write_grid_map(
    dir: &Path,
    stem: &str,
    side: usize,
    values: &[f64],
    log: bool,
) -> Result<HeatmapFile> {
    let mut heat = HeatmapFile::from_report_grid(side, values);
    if log {
        heat = heat.log10(LOG_FLOOR);
    }
    heat.write(dir, stem)?;
    Ok(heat)
}

/// Formats a structure as `(mu,a0,a1,b0,b1)`.
pub fn fmt_structure(s: &InformationStructure) -> String {
    format!(
        "({},{},{},{},{})",
        fmt17(s.mu),
        fmt17(s.a0),
        fmt17(s.a1),
        fmt17(s.b0),
        fmt17(s.b1)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregator_round_trip_is_lossless() {
        let vals: Vec<f64> = (0..16)
            .map(|i| ((i as f64) * 0.1234567890123).fract())
            .collect();
        let g = AggregatorGrid::new(3, vals).unwrap();
        let back = parse_aggregator_csv(&aggregator_csv(&g), "mem").unwrap();
        assert_eq!(back, g);
        assert!(aggregator_csv(&g).starts_with("N=3\n"));
    }

    #[test]
    fn aggregator_errors_carry_line_numbers() {
        let bad_header = parse_aggregator_csv("M=2\n", "x.csv").unwrap_err();
        assert!(
            matches!(bad_header, Error::Format { line: 1, .. }),
            "{bad_header}"
        );
        let text = "N=1\n0.1,0.2\n0.3,abc\n";
        let err = parse_aggregator_csv(text, "x.csv").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("x.csv:3:"));
        let short = parse_aggregator_csv("N=1\n0.1,0.2\n", "x.csv").unwrap_err();
        assert!(matches!(short, Error::Format { .. }), "{short}");
        let wide = parse_aggregator_csv("N=1\n0.1,0.2,0.3\n0.1,0.2\n", "x.csv").unwrap_err();
        assert!(matches!(wide, Error::Format { line: 2, .. }));
        let range = parse_aggregator_csv("N=1\n0.1,0.2\n0.1,1.5\n", "x.csv").unwrap_err();
        assert!(matches!(range, Error::Format { line: 3, .. }));
    }

    #[test]
    fn heatmap_csv_and_pgm_agree() {
        let side = 3;
        let grid: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let heat = HeatmapFile::from_report_grid(side, &grid);
        // Top-left pixel is x1 = 0, x2 = 1.
        assert_eq!(heat.values[0], grid[2]);
        let back = HeatmapFile::parse_csv(&heat.to_csv(), "mem").unwrap();
        assert_eq!(back, heat);
        let (w, h, px) = parse_pgm(&heat.to_pgm()).unwrap();
        assert_eq!((w, h), (3, 3));
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            idx
        };
        let as_f: Vec<f64> = px.iter().map(|&b| b as f64).collect();
        assert_eq!(order(&as_f), order(&heat.values));
        assert_eq!(*px.iter().min().unwrap(), 0);
        assert_eq!(*px.iter().max().unwrap(), 255);
    }

    #[test]
    fn constant_heatmap_is_black() {
        let heat = HeatmapFile::from_report_grid(2, &[0.3; 4]);
        let (_, _, px) = parse_pgm(&heat.to_pgm()).unwrap();
        assert!(px.iter().all(|&b| b == 0));
    }

    #[test]
    fn weights_drop_small_and_renormalize() {
        let s = InformationStructure::new(0.5, 0.25, 0.75, 0.5, 0.5).unwrap();
        let t = InformationStructure::new(0.5, 0.0, 1.0, 0.25, 0.75).unwrap();
        let file = WeightsFile {
            n: 4,
            m: 2,
            symmetric: true,
            structures: vec![s, t, s],
            multiplicity: vec![2, 4, 2],
            weights: vec![0.3, 0.6, 1e-15],
        };
        let back = WeightsFile::parse(&file.to_text(), "mem").unwrap();
        assert_eq!(back.structures, vec![s, t]);
        assert_eq!(back.multiplicity, vec![2, 4]);
        assert!((back.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((back.weights[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(back.symmetric);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn key_values_round_trip() {
        let mut kv = KeyValues::default();
        kv.push("a", 1);
        kv.push("b", "x=y");
        let text = format!("{}[rounds]\nround\n", kv.render());
        assert_eq!(KeyValues::parse(&text), kv);
    }
}
