//! Single-column CSV signals.

use std::io::Read;

use crate::error::{Error, Result};
use crate::spectral::TimeSeries;

/// Reads one real sample per row. A non-numeric first row is taken as a header;
/// blank rows are skipped.
pub fn read_signal<R: Read>(input: R, sampling_rate: f64) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        let fields: Vec<&str> = rec.iter().map(str::trim).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if fields.len() != 1 {
            return Err(Error::Parse { line, message: format!("expected one column, found {}", fields.len()) });
        }
        match fields[0].parse::<f64>() {
            Ok(v) if v.is_finite() => samples.push(v),
            Ok(v) => return Err(Error::Parse { line, message: format!("non-finite sample {v}") }),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse { line, message: format!("invalid sample {:?}: {e}", fields[0]) }),
        }
    }
    TimeSeries::with_rate(samples, sampling_rate)
}

pub fn read_signal_file(path: &std::path::Path, sampling_rate: f64) -> Result<TimeSeries> {
    read_signal(std::fs::File::open(path)?, sampling_rate)
}

/// Writes one sample per line under a `x` header.
pub fn write_signal<W: std::io::Write>(out: W, x: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["x"]).map_err(map)?;
    for v in x.samples() {
        w.write_record([format!("{v:?}")]).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_blank_lines() {
        let x = read_signal("value\n1.5\n\n-2\n3e-1\n".as_bytes(), 1.0).unwrap();
        assert_eq!(x.samples(), &[1.5, -2.0, 0.3]);
        let y = read_signal("1\n2\n".as_bytes(), 100.0).unwrap();
        assert_eq!(y.samples(), &[1.0, 2.0]);
        assert_eq!(y.sampling_rate, 100.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match read_signal("x\n1\n2\nabc\n".as_bytes(), 1.0) {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_signal("1\n2,3\n".as_bytes(), 1.0) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("one column")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_signal("1\n1,000\n".as_bytes(), 1.0), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn round_trip() {
        let x = TimeSeries::new(vec![0.1, -1.0 / 3.0, 1e-300]).unwrap();
        let mut buf = Vec::new();
        write_signal(&mut buf, &x).unwrap();
        assert_eq!(read_signal(buf.as_slice(), 1.0).unwrap().samples(), x.samples());
    }
}
