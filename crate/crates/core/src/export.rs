//! CSV and JSON writers for the command line front end.
//!
//! CSV files open with `#`-prefixed metadata lines followed by a header row.
//! Floats are written as `{:.16e}` (17 significant digits), so identical runs
//! produce identical bytes. JSON documents wrap the data in an envelope that
//! carries the same metadata.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::field::FieldGrid;
use crate::resonance::Trajectory;
use crate::scattering::ScatteringData;
use crate::spectrum::{SpectralPoint, SweepRecord};

/// Key/value pairs echoed into every output file.
pub type Metadata = BTreeMap<String, String>;

/// Fixed scientific formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON envelope: metadata plus a payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub metadata: Metadata,
    pub data: T,
}

pub fn write_json<T: Serialize, W: Write>(w: W, metadata: &Metadata, data: &T) -> io::Result<()> {
    let doc = Document {
        metadata: metadata.clone(),
        data,
    };
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)
}

pub fn read_json<T: DeserializeOwned, R: io::Read>(r: R) -> io::Result<Document<T>> {
    serde_json::from_reader(r).map_err(io::Error::from)
}

fn write_metadata<W: Write>(w: &mut W, metadata: &Metadata) -> io::Result<()> {
    for (k, v) in metadata {
        let v = v.replace(['\n', '\r'], " ");
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn into_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_table<W: Write>(
    mut w: W,
    metadata: &Metadata,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    write_metadata(&mut w, metadata)?;
    let mut out = csv_writer(w);
    out.write_record(header).map_err(into_io)?;
    for row in rows {
        out.write_record(&row).map_err(into_io)?;
    }
    out.flush()
}

/// One row per eigenvalue; the coefficient vectors go to the JSON form.
pub fn write_spectrum_csv<W: Write>(
    w: W,
    metadata: &Metadata,
    points: &[SpectralPoint],
) -> io::Result<()> {
    write_table(
        w,
        metadata,
        &[
            "index",
            "lambda",
            "energy",
            "gap",
            "truncation_used",
            "tolerance_achieved",
            "coefficients",
        ],
        points.iter().enumerate().map(|(k, p)| {
            vec![
                (k + 1).to_string(),
                fmt_f64(p.lambda),
                fmt_f64(p.energy),
                fmt_f64(p.gap),
                p.truncation_used.to_string(),
                fmt_f64(p.tolerance_achieved),
                p.coefficients.len().to_string(),
            ]
        }),
    )
}

/// One row per coupling; energies are `;`-separated in ascending order.
pub fn write_sweep_csv<W: Write>(
    w: W,
    metadata: &Metadata,
    records: &[SweepRecord],
) -> io::Result<()> {
    write_table(
        w,
        metadata,
        &[
            "lambda",
            "count",
            "truncation_used",
            "tolerance_achieved",
            "energies",
            "error",
        ],
        records.iter().map(|r| {
            let energies: Vec<String> = r.energies.iter().map(|&e| fmt_f64(e)).collect();
            vec![
                fmt_f64(r.lambda),
                r.energies.len().to_string(),
                r.truncation_used.to_string(),
                r.tolerance_achieved.map(fmt_f64).unwrap_or_default(),
                energies.join(";"),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Appearance threshold of the `k`-th eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub k: usize,
    pub lambda: f64,
}

pub fn write_thresholds_csv<W: Write>(
    w: W,
    metadata: &Metadata,
    rows: &[ThresholdRow],
) -> io::Result<()> {
    write_table(
        w,
        metadata,
        &["k", "lambda"],
        rows.iter()
            .map(|r| vec![r.k.to_string(), fmt_f64(r.lambda)]),
    )
}

/// `(x, y, value)` triples, `x` fastest.
pub fn write_field_csv<W: Write>(w: W, metadata: &Metadata, grid: &FieldGrid) -> io::Result<()> {
    let xs = grid.x.coordinates();
    let ys = grid.y.coordinates();
    write_table(
        w,
        metadata,
        &["x", "y", "value"],
        ys.iter().enumerate().flat_map(|(iy, &y)| {
            let xs = &xs;
            xs.iter()
                .enumerate()
                .map(move |(ix, &x)| vec![fmt_f64(x), fmt_f64(y), fmt_f64(grid.value(ix, iy))])
        }),
    )
}

/// Header of the JSON-plus-matrix field format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub metadata: Metadata,
    pub lambda: f64,
    pub mode_index: usize,
    pub energy: f64,
    pub x: crate::field::AxisRange,
    pub y: crate::field::AxisRange,
    pub nodal_domains: Option<usize>,
    pub zero_band: f64,
    /// `(y, f(0, y))` pairs.
    pub axis_restriction: Vec<(f64, f64)>,
}

/// One line of compact JSON header, then one text row of values per `y`.
pub fn write_field_matrix<W: Write>(
    mut w: W,
    header: &FieldHeader,
    grid: &FieldGrid,
) -> io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for iy in 0..grid.y.points {
        let row: Vec<String> = (0..grid.x.points)
            .map(|ix| fmt_f64(grid.value(ix, iy)))
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads back a file written by [`write_field_matrix`].
pub fn read_field_matrix<R: io::BufRead>(r: R) -> io::Result<(FieldHeader, FieldGrid)> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| io::Error::other("empty field file"))??;
    let header: FieldHeader = serde_json::from_str(&first)?;
    let mut values = Vec::with_capacity(header.x.points * header.y.points);
    for line in lines {
        for tok in line?.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(io::Error::other)?);
        }
    }
    let grid = FieldGrid::from_values(header.x, header.y, values).map_err(io::Error::other)?;
    Ok((header, grid))
}

/// Rows `(lambda, Re, Im, sheet, origin, residual, truncation_used)` for
/// every point of every trajectory, trajectories in the given order.
pub fn write_trajectory_csv<W: Write>(
    w: W,
    metadata: &Metadata,
    trajectories: &[Trajectory],
) -> io::Result<()> {
    write_table(
        w,
        metadata,
        &[
            "lambda",
            "re_energy",
            "im_energy",
            "sheet",
            "origin",
            "residual",
            "truncation_used",
        ],
        trajectories.iter().flat_map(|t| {
            t.points.iter().map(|p| {
                vec![
                    fmt_f64(p.lambda),
                    fmt_f64(p.energy.re),
                    fmt_f64(p.energy.im),
                    p.sheet.to_string(),
                    p.origin.to_string(),
                    fmt_f64(p.residual),
                    p.truncation_used.to_string(),
                ]
            })
        }),
    )
}

/// Rows `(lambda, k², m, n, Re r, Im r, Re t, Im t, open)` for every
/// incident open channel `m` and retained channel `n`.
pub fn write_scattering_csv<W: Write>(
    w: W,
    metadata: &Metadata,
    data: &ScatteringData,
) -> io::Result<()> {
    write_table(
        w,
        metadata,
        &[
            "lambda",
            "k_squared",
            "m",
            "n",
            "re_r",
            "im_r",
            "re_t",
            "im_t",
            "open",
        ],
        data.reflection.iter().enumerate().flat_map(|(m, row)| {
            row.iter().enumerate().map(move |(n, r)| {
                let t = data.transmission[m][n];
                vec![
                    fmt_f64(data.lambda),
                    fmt_f64(data.k_squared),
                    m.to_string(),
                    n.to_string(),
                    fmt_f64(r.re),
                    fmt_f64(r.im),
                    fmt_f64(t.re),
                    fmt_f64(t.im),
                    u8::from(n < data.open_channels).to_string(),
                ]
            })
        }),
    )
}
