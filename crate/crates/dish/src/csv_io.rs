//! Wide CSV series files: a header row of series names, one row per time step.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use dish_core::data::FrameMeta;
use dish_core::{SeriesFrame, Tensor};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvConfig {
    /// Drop the first column (e.g. an ISO-8601 timestamp).
    pub drop_timestamp: bool,
}

pub fn load_csv(path: &Path, config: &CsvConfig) -> Result<SeriesFrame> {
    let file = File::open(path).map_err(|e| CliError::read(path, e))?;
    read_csv(file, path, config)
}

/// Parses CSV from any reader; `path` is used only in error messages.
pub fn read_csv(reader: impl std::io::Read, path: &Path, config: &CsvConfig) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let skip = usize::from(config.drop_timestamp);
    let header = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect::<Vec<_>>();
    if header.len() <= skip || header.iter().all(|h| h.is_empty()) {
        return Err(CliError::parse(path, 1, 1, "header row has no series columns"));
    }
    let names = header[skip..].to_vec();
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != width {
            return Err(CliError::parse(
                path,
                line,
                record.len().min(width) + 1,
                format!("ragged row: {} fields, header has {width}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate().skip(skip) {
            let cell = cell.trim();
            let name = &header[col];
            if cell.is_empty() {
                return Err(CliError::parse(
                    path,
                    line,
                    col + 1,
                    format!("empty cell in column `{name}`"),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::parse(
                    path,
                    line,
                    col + 1,
                    format!("cannot parse `{cell}` in column `{name}` as a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(
                    path,
                    line,
                    col + 1,
                    format!("non-finite value in column `{name}`"),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    let n = names.len();
    let frame = SeriesFrame::new(names, Tensor::new(vec![rows, n], values)?)?;
    Ok(frame.with_meta(FrameMeta {
        source: Some(path.display().to_string()),
        ..FrameMeta::default()
    }))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::read(path, io),
        kind => CliError::parse(path, line, 0, format!("{kind:?}")),
    }
}

pub fn write_frame(path: &Path, frame: &SeriesFrame) -> Result<()> {
    let mut out = Vec::new();
    write_frame_to(&mut out, frame).map_err(|e| CliError::write(path, e))?;
    write_file(path, &out)
}

pub fn write_frame_to(out: &mut impl Write, frame: &SeriesFrame) -> std::io::Result<()> {
    writeln!(out, "{}", frame.names().join(","))?;
    let v = frame.values();
    for r in 0..v.rows() {
        let row: Vec<String> = v.row(r).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, drop_timestamp: bool) -> Result<SeriesFrame> {
        read_csv(text.as_bytes(), Path::new("t.csv"), &CsvConfig { drop_timestamp })
    }

    #[test]
    fn shape_and_order() {
        let mut text = String::from("a,b,c\n");
        for k in 0..100 {
            text.push_str(&format!("{k},{}.5,-{k}\n", k * 2));
        }
        let f = parse(&text, false).unwrap();
        assert_eq!((f.len(), f.width()), (100, 3));
        assert_eq!(f.names(), ["a", "b", "c"]);
        assert_eq!(f.values().row(3), [3.0, 6.5, -3.0]);
    }

    #[test]
    fn empty_cell_is_named() {
        let err = parse("a,b\n1,2\n3,\n", false).unwrap_err().to_string();
        assert!(err.contains("t.csv:3:2"), "{err}");
        assert!(err.contains("`b`"), "{err}");
    }

    #[test]
    fn ragged_and_garbage_rows_are_rejected() {
        assert!(parse("a,b\n1,2\n3\n", false)
            .unwrap_err()
            .to_string()
            .contains("ragged"));
        assert!(parse("a,b\n1,x\n", false).unwrap_err().to_string().contains("`x`"));
        assert!(parse("a,b\n1,inf\n", false).is_err());
    }

    #[test]
    fn timestamp_column_is_dropped() {
        let f = parse("date,x,y\n2020-01-01T00:00:00,1,2\n2020-01-01T01:00:00,3,4\n", true).unwrap();
        assert_eq!(f.names(), ["x", "y"]);
        assert_eq!(f.values().data(), [1.0, 2.0, 3.0, 4.0]);
        assert!(parse("date,x\n2020-01-01,1\n", false).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let f = parse("p,q\n0.1,1e-300\n-2.5,3\n", false).unwrap();
        let mut buf = Vec::new();
        write_frame_to(&mut buf, &f).unwrap();
        let g = parse(std::str::from_utf8(&buf).unwrap(), false).unwrap();
        assert_eq!(f.values(), g.values());
    }
}
