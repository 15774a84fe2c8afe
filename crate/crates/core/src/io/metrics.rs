//! Metrics trace as CSV.

use crate::error::{Error, Result};
use crate::optim::MetricsRow;

pub const METRICS_HEADER: &str = "step,loss,l1,ssim,psnr,active_rank,wall_ms";

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        path: String::new(),
        message: e.to_string(),
    }
}

/// Writes the header and one line per row. Floats use shortest round-trip
/// formatting, so equal traces give equal bytes.
pub fn write_metrics_csv<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(METRICS_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.loss.to_string(),
            r.l1.to_string(),
            r.ssim.to_string(),
            r.psnr.to_string(),
            r.active_rank.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn metrics_csv_string(rows: &[MetricsRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != METRICS_HEADER {
        return Err(Error::Parse {
            path: String::new(),
            message: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |col: usize| Error::Parse {
            path: String::new(),
            message: format!(
                "row {}: invalid {}",
                i + 2,
                METRICS_HEADER.split(',').nth(col).unwrap_or("?")
            ),
        };
        let f = |col: usize| {
            rec.get(col)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(col))
        };
        let u = |col: usize| {
            rec.get(col)
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| bad(col))
        };
        rows.push(MetricsRow {
            step: u(0)? as usize,
            loss: f(1)?,
            l1: f(2)?,
            ssim: f(3)?,
            psnr: f(4)?,
            active_rank: u(5)? as usize,
            wall_ms: u(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_header_and_round_trip() {
        let rows = vec![
            MetricsRow {
                step: 0,
                loss: 0.1 + 0.2,
                l1: 1.0 / 3.0,
                ssim: 0.5,
                psnr: 99.0,
                active_rank: 0,
                wall_ms: 0,
            },
            MetricsRow {
                step: 1,
                loss: 1e-300,
                l1: 2.0,
                ssim: -0.25,
                psnr: 12.5,
                active_rank: 9,
                wall_ms: 17,
            },
        ];
        let text = metrics_csv_string(&rows).unwrap();
        assert!(
            text.starts_with("step,loss,l1,ssim,psnr,active_rank,wall_ms\n0,0.30000000000000004,")
        );
        assert_eq!(read_metrics_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_metrics_csv("step,loss\n".as_bytes()).is_err());
    }
}
