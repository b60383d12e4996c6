//! Diagnostics CSV: one header row, one row per record, every float
//! printed with 17 significant digits so parsing recovers the exact `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{CvefError, Result};
use crate::picard::DiagnosticsSink;

pub const HEADER: &str = "t,mass,e_kin,e_elastic_E,e_elastic_F,e_press,diss_rate,diss_cum,\
balance_res,curl_linf,curl_l2,piola_l2,trace_int,rho_min,rho_max,sigma_lq,gradE_lq,E_w1q,Z_l2,\
picard_iters,picard_ratio_max";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn record_to_row(r: &DiagnosticsRecord) -> String {
    let cols = [
        r.t,
        r.mass,
        r.e_kin,
        r.e_elastic_e,
        r.e_elastic_f,
        r.e_press,
        r.diss_rate,
        r.diss_cum,
        r.balance_res,
        r.curl_linf,
        r.curl_l2,
        r.piola_l2,
        r.trace_int,
        r.rho_min,
        r.rho_max,
        r.sigma_lq,
        r.grad_e_lq,
        r.e_w1q,
        r.z_l2,
    ];
    let mut row: Vec<String> = cols.iter().map(|&v| fmt(v)).collect();
    row.push(r.picard_iters.to_string());
    row.push(fmt(r.picard_ratio_max));
    row.join(",")
}

/// Write a complete file: header then one row per record.
pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let io = |e: std::io::Error| CvefError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    (|| -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in records {
            writeln!(w, "{}", record_to_row(r))?;
        }
        w.flush()
    })()
    .map_err(io)
}

/// Parse a diagnostics file back into records (value-exact for `f64`).
pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| CvefError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        other => {
            return Err(CvefError::Config(format!(
                "diagnostics csv: bad header {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 21 {
            return Err(CvefError::Config(format!(
                "diagnostics csv row {}: expected 21 columns, got {}",
                i + 2,
                cols.len()
            )));
        }
        let f = |j: usize| -> Result<f64> {
            cols[j].parse().map_err(|_| {
                CvefError::Config(format!(
                    "diagnostics csv row {}: column {} is not a number",
                    i + 2,
                    j + 1
                ))
            })
        };
        out.push(DiagnosticsRecord {
            t: f(0)?,
            mass: f(1)?,
            e_kin: f(2)?,
            e_elastic_e: f(3)?,
            e_elastic_f: f(4)?,
            e_press: f(5)?,
            diss_rate: f(6)?,
            diss_cum: f(7)?,
            balance_res: f(8)?,
            curl_linf: f(9)?,
            curl_l2: f(10)?,
            piola_l2: f(11)?,
            trace_int: f(12)?,
            rho_min: f(13)?,
            rho_max: f(14)?,
            sigma_lq: f(15)?,
            grad_e_lq: f(16)?,
            e_w1q: f(17)?,
            z_l2: f(18)?,
            picard_iters: cols[19].parse().map_err(|_| {
                CvefError::Config(format!(
                    "diagnostics csv row {}: picard_iters is not an integer",
                    i + 2
                ))
            })?,
            picard_ratio_max: f(20)?,
        });
    }
    Ok(out)
}

/// Incremental sink writing rows as the run emits them.
pub struct CsvSink {
    path: std::path::PathBuf,
    writer: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let io = |e: std::io::Error| CvefError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut writer = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(writer, "{HEADER}").map_err(io)?;
        Ok(CsvSink {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CvefError::Io {
            path: self.path.display().to_string(),
            source: e,
        })
    }
}

impl DiagnosticsSink for CsvSink {
    fn emit(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.writer, "{}", record_to_row(rec)).map_err(|e| CvefError::Io {
            path: self.path.display().to_string(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(k: u64) -> DiagnosticsRecord {
        let x = k as f64;
        DiagnosticsRecord {
            t: 0.1 * x,
            mass: 248.0502134423986 + x,
            e_kin: 1.2345678901234567e-4 * x,
            e_elastic_e: x / 3.0,
            e_elastic_f: 372.07532016359795,
            e_press: 1e-30 * x,
            diss_rate: x.sin().abs(),
            diss_cum: x * 1e-6,
            balance_res: 2.220446049250313e-16 * x,
            curl_linf: 1e-9 / (x + 1.0),
            curl_l2: 1e-10,
            piola_l2: 3.33e-14,
            trace_int: -4.9e-15 * x,
            rho_min: 0.95,
            rho_max: 1.05,
            sigma_lq: 0.01,
            grad_e_lq: 0.02,
            e_w1q: 0.03,
            z_l2: 0.004,
            picard_iters: k as usize,
            picard_ratio_max: 0.1 * x,
        }
    }

    #[test]
    fn empty_list_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_diagnostics_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{HEADER}\n"));
    }

    #[test]
    fn parse_of_write_is_value_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let recs: Vec<_> = (0..5).map(sample_record).collect();
        write_diagnostics_csv(&path, &recs).unwrap();
        let back = read_diagnostics_csv(&path).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            assert_eq!(a.balance_res.to_bits(), b.balance_res.to_bits());
        }
    }

    #[test]
    fn sink_writes_incrementally() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut sink = CsvSink::create(&path).unwrap();
        use crate::picard::DiagnosticsSink as _;
        sink.emit(&sample_record(1)).unwrap();
        sink.emit(&sample_record(2)).unwrap();
        sink.finish().unwrap();
        let back = read_diagnostics_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn malformed_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, format!("{HEADER}\n1,2,3\n")).unwrap();
        assert!(read_diagnostics_csv(&path).is_err());
        std::fs::write(&path, "wrong header\n").unwrap();
        assert!(read_diagnostics_csv(&path).is_err());
    }
}
