//! CSV ingestion and output.
//!
//! Input files have the header `x1,..,xJ,y1,..,yJ` and one row per unit.
//! Lines starting with `#` are ignored. Output values are written with 17
//! significant digits so they parse back to the same `f64`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use addfit_core::PanelData;

/// Input problem with the 1-based line it was found on.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub line: Option<u64>,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for InputError {}

fn input_error(line: Option<u64>, message: impl Into<String>) -> InputError {
    InputError {
        line,
        message: message.into(),
    }
}

/// Replicate count implied by a header, or an error naming the problem.
fn parse_header(header: &csv::StringRecord) -> Result<usize, String> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.is_empty() || !names.len().is_multiple_of(2) {
        return Err(format!("expected header x1..xJ,y1..yJ, found {} columns", names.len()));
    }
    let j = names.len() / 2;
    for (i, name) in names.iter().enumerate() {
        let expected = if i < j {
            format!("x{}", i + 1)
        } else {
            format!("y{}", i - j + 1)
        };
        if *name != expected {
            return Err(format!("expected column '{expected}' but found '{name}'"));
        }
    }
    Ok(j)
}

pub fn read_panel(reader: impl Read) -> Result<PanelData, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| input_error(e.position().map(|p| p.line()), e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(input_error(None, "input is empty"));
    }
    let j = parse_header(&header).map_err(|m| input_error(Some(1), m))?;
    let mut x = vec![Vec::new(); j];
    let mut y = vec![Vec::new(); j];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input_error(e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        if rec.len() != 2 * j {
            return Err(input_error(
                line,
                format!("expected {} fields, found {}", 2 * j, rec.len()),
            ));
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| input_error(line, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(input_error(line, format!("'{field}' is not finite")));
            }
            if i < j {
                x[i].push(v);
            } else {
                y[i - j].push(v);
            }
        }
    }
    if x[0].is_empty() {
        return Err(input_error(None, "input has a header but no data rows"));
    }
    PanelData::new(x, y).map_err(|e| input_error(None, e.to_string()))
}

pub fn read_panel_file(path: &Path) -> Result<PanelData, InputError> {
    let file = File::open(path).map_err(|e| input_error(None, format!("{}: {e}", path.display())))?;
    read_panel(file)
}

/// Full-precision decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV whose first line is `# manifest=<hash>`.
pub fn write_table<S: AsRef<str>>(
    path: &Path,
    manifest_hash: &str,
    header: &[S],
    rows: &[Vec<f64>],
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest={manifest_hash}")?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    drop(w);
    out.flush()
}

pub fn write_panel(path: &Path, panel: &PanelData, manifest_hash: &str) -> std::io::Result<()> {
    let j = panel.replicates();
    let header: Vec<String> = (1..=j)
        .map(|i| format!("x{i}"))
        .chain((1..=j).map(|i| format!("y{i}")))
        .collect();
    let rows: Vec<Vec<f64>> = (0..panel.units())
        .map(|g| {
            (0..j)
                .map(|k| panel.x(k)[g])
                .chain((0..j).map(|k| panel.y(k)[g]))
                .collect()
        })
        .collect();
    write_table(path, manifest_hash, &header, &rows)
}
