//! CSV interchange. Floats are written with 17 significant digits so that
//! every value parses back bit-exact.

use std::io::{Read, Write};

use thiserror::Error;

use crate::experiment::{subtract_dark, BinRecord, NetSample};

pub const RUN_HEADER: [&str; 7] = [
    "record_id",
    "omega_mean_rad_s",
    "omega_spread_rad_s",
    "counts_port1",
    "counts_port2",
    "net_port1",
    "net_port2",
];

pub const FRINGE_HEADER: [&str; 3] = ["omega_rad_s", "p_port1", "p_port2"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header {
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row of a run CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub record_id: u32,
    pub omega_mean: f64,
    pub omega_spread: f64,
    pub counts_port1: u64,
    pub counts_port2: u64,
    pub net_port1: f64,
    pub net_port2: f64,
}

impl From<&BinRecord> for RunRow {
    fn from(rec: &BinRecord) -> Self {
        let (net_port1, net_port2) = subtract_dark(rec);
        Self {
            record_id: rec.record_id,
            omega_mean: rec.omega_mean,
            omega_spread: rec.omega_spread,
            counts_port1: rec.counts_port1,
            counts_port2: rec.counts_port2,
            net_port1,
            net_port2,
        }
    }
}

impl RunRow {
    pub fn net_sample(&self) -> NetSample {
        NetSample {
            omega: self.omega_mean,
            net1: self.net_port1,
            net2: self.net_port2,
        }
    }
}

/// Fringe row `(omega, p_port1, p_port2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeRow {
    pub omega: f64,
    pub p_port1: f64,
    pub p_port2: f64,
}

pub fn write_run_csv<W: Write>(out: W, records: &[BinRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for rec in records {
        let row = RunRow::from(rec);
        w.write_record([
            row.record_id.to_string(),
            format_float(row.omega_mean),
            format_float(row.omega_spread),
            row.counts_port1.to_string(),
            row.counts_port2.to_string(),
            format_float(row.net_port1),
            format_float(row.net_port2),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_fringe_csv<W: Write>(out: W, rows: &[FringeRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRINGE_HEADER)?;
    for row in rows {
        w.write_record([
            format_float(row.omega),
            format_float(row.p_port1),
            format_float(row.p_port2),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), CsvError> {
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(CsvError::Header {
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    row: usize,
    idx: usize,
    column: &'static str,
) -> Result<T, CsvError> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| CsvError::Field {
        row,
        column,
        value: raw.to_string(),
    })
}

pub fn read_run_csv<R: Read>(input: R) -> Result<Vec<RunRow>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &RUN_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        rows.push(RunRow {
            record_id: field(&rec, row, 0, RUN_HEADER[0])?,
            omega_mean: field(&rec, row, 1, RUN_HEADER[1])?,
            omega_spread: field(&rec, row, 2, RUN_HEADER[2])?,
            counts_port1: field(&rec, row, 3, RUN_HEADER[3])?,
            counts_port2: field(&rec, row, 4, RUN_HEADER[4])?,
            net_port1: field(&rec, row, 5, RUN_HEADER[5])?,
            net_port2: field(&rec, row, 6, RUN_HEADER[6])?,
        });
    }
    Ok(rows)
}

pub fn read_fringe_csv<R: Read>(input: R) -> Result<Vec<FringeRow>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &FRINGE_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        rows.push(FringeRow {
            omega: field(&rec, row, 0, FRINGE_HEADER[0])?,
            p_port1: field(&rec, row, 1, FRINGE_HEADER[1])?,
            p_port2: field(&rec, row, 2, FRINGE_HEADER[2])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(0.0), "0.0000000000000000e0");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "omega,p1,p2\n1,0,1\n";
        assert!(matches!(read_fringe_csv(text.as_bytes()), Err(CsvError::Header { .. })));
    }

    #[test]
    fn rejects_bad_field() {
        let text = format!("{}\n0,x,0,1,2,0,0\n", RUN_HEADER.join(","));
        let err = read_run_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CsvError::Field { row: 1, column: "omega_mean_rad_s", .. }), "{err}");
    }

    fn arb_record() -> impl Strategy<Value = BinRecord> {
        (
            0u32..10,
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            0.0f64..1.0,
            0u64..1_000_000,
            0u64..1_000_000,
            0.0f64..100.0,
        )
            .prop_map(|(id, omega, spread, c1, c2, dark)| BinRecord {
                record_id: id,
                bin_index: 0,
                omega_mean: omega,
                omega_spread: spread,
                counts_port1: c1,
                counts_port2: c2,
                expected_dark_port1: dark,
                expected_dark_port2: dark,
                gates: 0,
                occupied_gates: 0,
                split_gates: 0,
            })
    }

    proptest! {
        #[test]
        fn run_csv_round_trips(records in proptest::collection::vec(arb_record(), 0..20)) {
            let mut buf = Vec::new();
            write_run_csv(&mut buf, &records).unwrap();
            let rows = read_run_csv(buf.as_slice()).unwrap();
            let expected: Vec<RunRow> = records.iter().map(RunRow::from).collect();
            prop_assert_eq!(rows, expected);
        }

        #[test]
        fn fringe_csv_round_trips(vals in proptest::collection::vec((-1e3f64..1e3, 0.0f64..1.0), 1..30)) {
            let rows: Vec<FringeRow> = vals
                .iter()
                .map(|&(omega, p)| FringeRow { omega, p_port1: p, p_port2: 1.0 - p })
                .collect();
            let mut buf = Vec::new();
            write_fringe_csv(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_fringe_csv(buf.as_slice()).unwrap(), rows);
        }
    }
}
