//! Plot-data tables: a header naming the nine columns, then one row per sweep
//! point. Values carry six significant digits in plain decimal notation, so a
//! written table parses and re-writes to the same bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::pipeline::ExperimentReport;

pub const VALUE_COLUMNS: [&str; 8] = [
    "trainavg", "trainstd", "testavg", "teststd", "slowavg", "slowstd", "fastavg", "faststd",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Space,
    Comma,
}

impl Delimiter {
    fn char(self) -> char {
        match self {
            Delimiter::Space => ' ',
            Delimiter::Comma => ',',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub key: usize,
    /// In [`VALUE_COLUMNS`] order.
    pub values: [f64; 8],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    /// `E` or `n`.
    pub key_column: String,
    pub rows: Vec<TableRow>,
}

/// Six significant digits without an exponent.
pub fn format_value(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(invalid(format!("table values must be finite, got {x}")));
    }
    // exponential formatting rounds correctly, including carries into a new decade
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp >= 5 {
        format!("{digits}{}", "0".repeat((exp - 5) as usize))
    } else if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    Ok(format!("{sign}{body}"))
}

impl ResultTable {
    pub fn new(key_column: &str) -> Result<Self> {
        if key_column != "E" && key_column != "n" {
            return Err(invalid(format!("key column must be E or n, got '{key_column}'")));
        }
        Ok(Self {
            key_column: key_column.to_string(),
            rows: Vec::new(),
        })
    }

    /// One row per sweep point from the replica aggregates.
    pub fn from_reports(key_column: &str, points: &[(usize, ExperimentReport)]) -> Result<Self> {
        let mut table = Self::new(key_column)?;
        for (key, report) in points {
            let a = &report.aggregate;
            table.rows.push(TableRow {
                key: *key,
                values: [
                    a.train.mean,
                    a.train.std,
                    a.test.mean,
                    a.test.std,
                    a.slow.mean,
                    a.slow.std,
                    a.fast.mean,
                    a.fast.std,
                ],
            });
        }
        Ok(table)
    }

    pub fn header(&self, delimiter: Delimiter) -> String {
        let sep = delimiter.char().to_string();
        std::iter::once(self.key_column.as_str())
            .chain(VALUE_COLUMNS)
            .collect::<Vec<_>>()
            .join(&sep)
    }

    pub fn render(&self, delimiter: Delimiter) -> Result<String> {
        let sep = delimiter.char();
        let mut out = self.header(delimiter);
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}", row.key).expect("string write");
            for v in row.values {
                out.push(sep);
                out.push_str(&format_value(v)?);
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Accepts either delimiter, detected from the header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::TableParse {
            line: 1,
            message: "empty table".into(),
        })?;
        let delimiter = if header.contains(',') {
            Delimiter::Comma
        } else {
            Delimiter::Space
        };
        let key = header.split(delimiter.char()).next().unwrap_or_default();
        let table = Self::new(key).map_err(|e| Error::TableParse {
            line: 1,
            message: e.to_string(),
        })?;
        if header != table.header(delimiter) {
            return Err(Error::TableParse {
                line: 1,
                message: format!("unexpected header '{header}'"),
            });
        }
        let mut table = table;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let err = |message: String| Error::TableParse { line: line_no, message };
            let fields: Vec<&str> = line.split(delimiter.char()).collect();
            if fields.len() != 9 {
                return Err(err(format!("expected 9 fields, found {}", fields.len())));
            }
            let key = fields[0]
                .parse()
                .map_err(|_| err(format!("key '{}' is not a nonnegative integer", fields[0])))?;
            let mut values = [0.0; 8];
            for (slot, field) in values.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("'{field}' is not a finite number")))?;
            }
            table.rows.push(TableRow { key, values });
        }
        Ok(table)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formatting_examples() {
        assert_eq!(format_value(0.5).unwrap(), "0.500000");
        assert_eq!(format_value(0.123456789).unwrap(), "0.123457");
        assert_eq!(format_value(0.0009999996).unwrap(), "0.00100000");
        assert_eq!(format_value(9.999996).unwrap(), "10.0000");
        assert_eq!(format_value(44.52).unwrap(), "44.5200");
        assert_eq!(format_value(1234567.0).unwrap(), "1234570");
        assert_eq!(format_value(0.0).unwrap(), "0.00000");
        assert_eq!(format_value(-0.25).unwrap(), "-0.250000");
        assert!(format_value(f64::NAN).is_err());
    }

    #[test]
    fn header_and_empty_table() {
        let t = ResultTable::new("E").unwrap();
        assert_eq!(
            t.render(Delimiter::Space).unwrap(),
            "E trainavg trainstd testavg teststd slowavg slowstd fastavg faststd\n"
        );
        assert_eq!(ResultTable::parse(&t.render(Delimiter::Space).unwrap()).unwrap(), t);
        assert!(t.render(Delimiter::Comma).unwrap().starts_with("E,trainavg,"));
        assert!(ResultTable::new("x").is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "n trainavg trainstd testavg teststd slowavg slowstd fastavg faststd\n1 0 0 0 0 0 0 0\n";
        assert!(matches!(ResultTable::parse(bad), Err(Error::TableParse { line: 2, .. })));
        assert!(matches!(ResultTable::parse("n a b\n"), Err(Error::TableParse { line: 1, .. })));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.dat");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_identical(
            rows in proptest::collection::vec((0usize..100_000, proptest::array::uniform8(-1e7f64..1e7)), 0..8),
            csv in any::<bool>(),
            key_n in any::<bool>(),
        ) {
            let mut t = ResultTable::new(if key_n { "n" } else { "E" }).unwrap();
            t.rows = rows.into_iter().map(|(key, values)| TableRow { key, values }).collect();
            let d = if csv { Delimiter::Comma } else { Delimiter::Space };
            let first = t.render(d).unwrap();
            let second = ResultTable::parse(&first).unwrap().render(d).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn six_significant_digits(x in 1e-12f64..1e12) {
            let s = format_value(x).unwrap();
            prop_assert!(!s.contains('e'));
            let sig: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
            let sig = sig.trim_start_matches('0');
            // integers past six digits carry zero padding
            prop_assert!(sig.len() >= 6);
            prop_assert!(sig[6..].chars().all(|c| c == '0'));
            let y: f64 = s.parse().unwrap();
            prop_assert!((y - x).abs() <= 5e-6 * x);
        }
    }
}
