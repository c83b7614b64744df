//! File formats: scan CSV with a JSON sidecar, joint spectral amplitude
//! text matrices, and atomic report writers.
//!
//! A scan `name.csv` has the header `delay_fs,counts`; its sidecar
//! `name.json` records the step, baseline and provenance. A stage-position
//! scan has the header `position_um,counts` and is converted with
//! `τ = 2Δx/c`.
//!
//! The JSA format is plain text:
//!
//! ```text
//! # jsa v1
//! omega1 <start> <step> <len>
//! omega2 <start> <step> <len>
//! <re> <im> <re> <im> ...      one row per ω₁ sample, len(ω₂) pairs
//! ```
//!
//! Lines starting with `#` are comments. Numbers are written in Rust's
//! shortest round-trip form, so a write/read cycle is lossless.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dip_model::{C0Source, CoincidenceScan, Provenance};
use crate::error::{HomError, Result};
use crate::numeric::UniformGrid;
use crate::spdc_model::{JsaGrid, SPEED_OF_LIGHT_NM_PER_FS};

/// Version tag of every file this crate writes.
pub const FORMAT_VERSION: &str = "v1";
/// Version of this library, embedded in outputs.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| HomError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HomError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HomError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HomError::io(path, e))?;
    tmp.persist(path).map_err(|e| HomError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HomError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HomError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        reason: e.to_string(),
    })
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| HomError::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn csv_error(path: &Path, e: csv::Error) -> HomError {
    let line = e.position().map_or(0, |p| p.line());
    HomError::Parse {
        path: path.display().to_string(),
        line,
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSidecar {
    pub format_version: String,
    pub step_fs: f64,
    pub c0: f64,
    pub c0_source: C0Source,
    pub provenance: Provenance,
    pub tool_version: String,
}

/// `name.csv` → `name.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct ScanRow {
    delay_fs: f64,
    counts: f64,
}

#[derive(Deserialize)]
struct StageRow {
    position_um: f64,
    counts: f64,
}

/// Writes the scan CSV and its sidecar.
pub fn write_scan(path: &Path, scan: &CoincidenceScan) -> Result<()> {
    let rows: Vec<ScanRow> = scan
        .delays()
        .into_iter()
        .zip(scan.counts())
        .map(|(delay_fs, &counts)| ScanRow { delay_fs, counts })
        .collect();
    write_csv(path, &rows)?;
    let sidecar = ScanSidecar {
        format_version: FORMAT_VERSION.into(),
        step_fs: scan.step_fs(),
        c0: scan.c0(),
        c0_source: scan.c0_source(),
        provenance: scan.provenance().clone(),
        tool_version: TOOL_VERSION.into(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

fn read_rows<R: DeserializeOwned>(path: &Path, expected_header: &[&str]) -> Result<Vec<R>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => HomError::io(path, io),
            other => HomError::Parse {
                path: path.display().to_string(),
                line: 1,
                reason: format!("{other:?}"),
            },
        })?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(expected_header.iter().copied()) {
        return Err(HomError::Parse {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header `{}`, found `{}`", expected_header.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> HomError {
    HomError::Parse {
        path: path.display().to_string(),
        line: line as u64,
        reason: reason.into(),
    }
}

fn check_counts(path: &Path, counts: &[f64]) -> Result<()> {
    match counts.iter().position(|c| !(*c >= 0.0) || !c.is_finite()) {
        // Line 1 is the header.
        Some(i) => Err(parse_error(path, i + 2, format!("counts must be finite and non-negative, got {}", counts[i]))),
        None => Ok(()),
    }
}

/// Reads a `delay_fs,counts` scan. The sidecar next to the file is used
/// when present; its step must agree with the grid.
pub fn read_scan(path: &Path) -> Result<CoincidenceScan> {
    let rows: Vec<ScanRow> = read_rows(path, &["delay_fs", "counts"])?;
    let delays: Vec<f64> = rows.iter().map(|r| r.delay_fs).collect();
    let counts: Vec<f64> = rows.iter().map(|r| r.counts).collect();
    check_counts(path, &counts)?;
    let sc = sidecar_path(path);
    if sc.exists() {
        let sidecar: ScanSidecar = read_json(&sc)?;
        if sidecar.format_version != FORMAT_VERSION {
            return Err(parse_error(&sc, 1, format!("unsupported format version {}", sidecar.format_version)));
        }
        let grid = UniformGrid::from_points(&delays)?;
        if (grid.step - sidecar.step_fs).abs() > 1e-9 * sidecar.step_fs {
            return Err(HomError::Mismatch(format!(
                "sidecar step {} fs but the grid in {} has step {} fs",
                sidecar.step_fs,
                path.display(),
                grid.step
            )));
        }
        CoincidenceScan::on_grid(grid, counts, Some((sidecar.c0, C0Source::Recorded)), sidecar.provenance)
    } else {
        let provenance = Provenance::Ingested {
            source: path.display().to_string(),
        };
        CoincidenceScan::new(&delays, counts, None, provenance)
    }
}

/// Delay in fs of a double-pass stage moved by `displacement_um`.
pub fn stage_to_delay_fs(displacement_um: f64) -> f64 {
    2.0 * displacement_um * 1e3 / SPEED_OF_LIGHT_NM_PER_FS
}

/// Reads a `position_um,counts` scan; delays are measured from `zero_um`.
/// Positions are rounded onto a uniform grid only within the grid tolerance.
pub fn read_stage_scan(path: &Path, zero_um: f64) -> Result<CoincidenceScan> {
    let rows: Vec<StageRow> = read_rows(path, &["position_um", "counts"])?;
    let delays: Vec<f64> = rows.iter().map(|r| stage_to_delay_fs(r.position_um - zero_um)).collect();
    let counts: Vec<f64> = rows.iter().map(|r| r.counts).collect();
    check_counts(path, &counts)?;
    let provenance = Provenance::Ingested {
        source: path.display().to_string(),
    };
    CoincidenceScan::new(&delays, counts, None, provenance)
}

fn write_grid_line(out: &mut String, name: &str, g: &UniformGrid) {
    out.push_str(&format!("{name} {} {} {}\n", g.start, g.step, g.len));
}

pub fn format_jsa(jsa: &JsaGrid) -> String {
    let mut out = String::from("# jsa v1\n");
    write_grid_line(&mut out, "omega1", &jsa.omega1);
    write_grid_line(&mut out, "omega2", &jsa.omega2);
    for i in 0..jsa.omega1.len {
        let row: Vec<String> = (0..jsa.omega2.len)
            .map(|j| {
                let v = jsa.at(i, j);
                format!("{} {}", v.re, v.im)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_jsa(path: &Path, jsa: &JsaGrid) -> Result<()> {
    write_atomic(path, format_jsa(jsa).as_bytes())
}

fn parse_grid_line(path: &Path, line_no: usize, line: &str, name: &str) -> Result<UniformGrid> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(name) {
        return Err(parse_error(path, line_no, format!("expected `{name} <start> <step> <len>`")));
    }
    let fields: Vec<&str> = parts.collect();
    if fields.len() != 3 {
        return Err(parse_error(path, line_no, format!("expected `{name} <start> <step> <len>`")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| parse_error(path, line_no, format!("`{s}`: {e}")));
    let len = fields[2]
        .parse::<usize>()
        .map_err(|e| parse_error(path, line_no, format!("`{}`: {e}", fields[2])))?;
    UniformGrid::new(num(fields[0])?, num(fields[1])?, len).map_err(|e| parse_error(path, line_no, e.to_string()))
}

pub fn parse_jsa(path: &Path, text: &str) -> Result<JsaGrid> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_error(path, text.lines().count(), format!("missing {what}")));
    let (n1, l1) = next("omega1 line")?;
    let omega1 = parse_grid_line(path, n1, l1, "omega1")?;
    let (n2, l2) = next("omega2 line")?;
    let omega2 = parse_grid_line(path, n2, l2, "omega2")?;
    let mut values = Vec::with_capacity(omega1.len * omega2.len);
    for _ in 0..omega1.len {
        let (n, line) = next("amplitude row")?;
        let nums = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| parse_error(path, n, format!("`{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != 2 * omega2.len {
            return Err(parse_error(
                path,
                n,
                format!("expected {} numbers, found {}", 2 * omega2.len, nums.len()),
            ));
        }
        values.extend(nums.chunks(2).map(|c| Complex64::new(c[0], c[1])));
    }
    if let Ok((n, _)) = next("") {
        return Err(parse_error(path, n, "unexpected extra row"));
    }
    JsaGrid::new(omega1, omega2, values)
}

pub fn read_jsa(path: &Path) -> Result<JsaGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| HomError::io(path, e))?;
    parse_jsa(path, &text)
}
