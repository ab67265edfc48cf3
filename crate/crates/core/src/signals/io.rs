use std::io::Write;
use std::path::Path;

use super::Signal;
use crate::error::{Error, Result};

/// Relative tolerance on time-column spacing.
const SPACING_TOLERANCE: f64 = 1e-6;

/// Reads a signal from CSV.
///
/// Accepts a single `value` column (then `rate` is required) or two
/// columns `t,value`, in which case the rate comes from the time column and
/// the spacing must be uniform. A first row that does not parse as numbers
/// is treated as a header. If both a time column and `rate` are given they
/// must agree.
pub fn load_csv(path: &Path, rate: Option<f64>) -> Result<Signal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.into(),
                line: 0,
                msg: format!("{other:?}"),
            },
        })?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line()) as usize;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let fields = match parsed {
            Ok(f) => f,
            Err(_) if width.is_none() && values.is_empty() => {
                // header row
                width = Some(record.len());
                continue;
            }
            Err(e) => return Err(parse_err(line, format!("non-numeric field: {e}"))),
        };
        let w = *width.get_or_insert(fields.len());
        if fields.len() != w {
            return Err(parse_err(line, format!("expected {w} fields, found {}", fields.len())));
        }
        if let Some(x) = fields.iter().find(|x| !x.is_finite()) {
            return Err(parse_err(line, format!("non-finite value {x}")));
        }
        match w {
            1 => values.push(fields[0]),
            2 => {
                times.push((fields[0], line));
                values.push(fields[1]);
            }
            _ => return Err(parse_err(line, format!("expected 1 or 2 columns, found {w}"))),
        }
    }
    if values.is_empty() {
        return Err(parse_err(0, "no samples".into()));
    }
    let rate = if times.is_empty() {
        rate.ok_or_else(|| Error::invalid("single-column signal needs a sample rate"))?
    } else {
        let from_time = rate_from_times(&times)?;
        if let Some(r) = rate {
            if (r - from_time).abs() > SPACING_TOLERANCE * from_time {
                return Err(Error::invalid(format!(
                    "given rate {r} disagrees with time column ({from_time})"
                )));
            }
        }
        from_time
    };
    Signal::new(rate, values)
}

fn rate_from_times(times: &[(f64, usize)]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::invalid("a time column needs at least two rows"));
    }
    let span = times[times.len() - 1].0 - times[0].0;
    let mean = span / (times.len() - 1) as f64;
    if !(mean > 0.0) {
        return Err(Error::NonUniformSpacing { line: times[1].1 });
    }
    for w in times.windows(2) {
        let step = w[1].0 - w[0].0;
        if (step - mean).abs() > SPACING_TOLERANCE * mean {
            return Err(Error::NonUniformSpacing { line: w[1].1 });
        }
    }
    Ok(1.0 / mean)
}

/// Writes the samples as a single `value` column.
pub fn write_csv<W: Write>(sig: &Signal, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value"])?;
    for x in sig.samples() {
        w.write_record([x.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_column_rate() {
        let dir = tempfile::tempdir().unwrap();
        let text: String = std::iter::once("t,value\n".to_string())
            .chain((0..1000).map(|k| format!("{},{}\n", k as f64 / 1000.0, k)))
            .collect();
        let s = load_csv(&write(&dir, "a.csv", &text), None).unwrap();
        assert!((s.rate() - 1000.0).abs() < 1e-9);
        assert_eq!(s.len(), 1000);
        assert_eq!(s.samples()[7], 7.0);
    }

    #[test]
    fn jittered_time_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "j.csv", "t,v\n0,1\n0.001,2\n0.0021,3\n0.003,4\n");
        assert!(matches!(load_csv(&p, None), Err(Error::NonUniformSpacing { line: 4 })));
    }

    #[test]
    fn single_column_with_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "value\n1\n2\n3\n");
        assert_eq!(load_csv(&p, Some(5000.0)).unwrap().rate(), 5000.0);
        assert!(load_csv(&p, None).is_err());
    }

    #[test]
    fn bad_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "b.csv", "value\n1\n2\nabc\n");
        match load_csv(&p, Some(10.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal::new(250.0, vec![0.1, -2.5e-7, 3.0]).unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&s, std::fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(load_csv(&p, Some(250.0)).unwrap(), s);
    }
}
