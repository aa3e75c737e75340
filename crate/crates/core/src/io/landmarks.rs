use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::landmarks::LandmarkSet;

/// Parses CSV with a `x,y` header. Errors carry the 1-based line number.
pub fn read_landmarks(input: impl Read) -> Result<LandmarkSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("landmark header: {e}")))?
        .clone();
    if headers.len() != 2 || headers[0].trim() != "x" || headers[1].trim() != "y" {
        return Err(Error::Format(format!(
            "line 1: expected header `x,y`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Format(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        match (
            record.len(),
            record.get(0).and_then(parse),
            record.get(1).and_then(parse),
        ) {
            (2, Some(x), Some(y)) => points.push(Point::new(x, y)),
            _ => {
                return Err(Error::Format(format!(
                    "line {line}: malformed landmark row `{}`",
                    record.iter().collect::<Vec<_>>().join(",")
                )))
            }
        }
    }
    Ok(LandmarkSet::from_points(points))
}

pub fn write_landmarks(set: &LandmarkSet, out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(format!("writing landmarks: {e}"));
    writer.write_record(["x", "y"]).map_err(io)?;
    for p in set.positions() {
        writer.write_record([p.x.to_string(), p.y.to_string()]).map_err(io)?;
    }
    writer
        .flush()
        .map_err(|e| Error::Format(format!("writing landmarks: {e}")))
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_landmarks(file).map_err(|e| Error::file(path, e))
}

pub fn save_landmarks(set: &LandmarkSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_landmarks(set, file).map_err(|e| Error::file(path, e))
}
