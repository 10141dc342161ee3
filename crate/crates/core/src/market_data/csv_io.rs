use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Bar, BarSeries, Timestamp};
use crate::error::{Error, Result};

const COLUMNS: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

/// Loads one ticker from a `date,open,high,low,close,volume` CSV.
///
/// Header names are matched case-insensitively and may appear in any order.
/// Rows are sorted by timestamp after parsing. Line numbers in errors count
/// the header as line 1.
pub fn load_ohlcv_csv(path: impl AsRef<Path>, ticker: &str) -> Result<BarSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);

    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = [usize::MAX; 6];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                message: format!("missing column {name:?} in header"),
            })?;
    }

    let mut rows: Vec<(usize, Bar)> = Vec::new();
    let mut offending = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(csv_err)?;
        let field = |k: usize| record.get(index[k]).unwrap_or("");
        let timestamp = Timestamp::parse(field(0)).ok_or_else(|| Error::Row {
            path: path.to_path_buf(),
            row: line,
            message: format!("unparsable date {:?}", field(0)),
        })?;
        let mut nums = [0.0f64; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let raw = field(k + 1);
            *slot = raw.parse::<f64>().map_err(|_| Error::Row {
                path: path.to_path_buf(),
                row: line,
                message: format!("unparsable {} {raw:?}", COLUMNS[k + 1]),
            })?;
        }
        let bar = Bar {
            timestamp,
            open: nums[0],
            high: nums[1],
            low: nums[2],
            close: nums[3],
            volume: nums[4],
        };
        if let Some(msg) = bar.check() {
            offending.push(format!("line {line}: {msg}"));
        }
        rows.push((line, bar));
    }
    if !offending.is_empty() {
        return Err(Error::InvalidBars {
            ticker: ticker.to_string(),
            offending,
        });
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }

    rows.sort_by_key(|(_, b)| b.timestamp);
    let dupes: Vec<String> = rows
        .windows(2)
        .filter(|w| w[0].1.timestamp == w[1].1.timestamp)
        .map(|w| {
            format!(
                "lines {} and {}: duplicate timestamp {}",
                w[0].0, w[1].0, w[1].1.timestamp
            )
        })
        .collect();
    if !dupes.is_empty() {
        return Err(Error::InvalidBars {
            ticker: ticker.to_string(),
            offending: dupes,
        });
    }
    BarSeries::new(ticker, rows.into_iter().map(|(_, b)| b).collect())
}

/// Writes the canonical CSV. Floats use the shortest round-trip form, so a
/// reload reproduces the series exactly.
pub fn write_ohlcv_csv(series: &BarSeries, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for b in series.bars() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            b.timestamp, b.open, b.high, b.low, b.close, b.volume
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp(
            "date,open,high,low,close,volume\n\
             2024-01-02,10,11,9,10.5,100\n\
             2024-01-03,10.5,12,10,11,200\n\
             2024-01-04,11,11.5,10.5,11.2,150\n",
        );
        let s = load_ohlcv_csv(f.path(), "ABC").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.ticker(), "ABC");
        assert_eq!(s.closes(), vec![10.5, 11.0, 11.2]);
    }

    #[test]
    fn sorts_rows_and_matches_headers_case_insensitively() {
        let f = write_tmp(
            "Date,Volume,Open,High,Low,Close\n\
             2024-01-04,150,11,11.5,10.5,11.2\n\
             2024-01-02,100,10,11,9,10.5\n\
             2024-01-03,200,10.5,12,10,11\n",
        );
        let s = load_ohlcv_csv(f.path(), "ABC").unwrap();
        assert_eq!(s.closes(), vec![10.5, 11.0, 11.2]);
        assert_eq!(s.volumes(), vec![100.0, 200.0, 150.0]);
    }

    #[test]
    fn negative_volume_names_the_row() {
        let f = write_tmp(
            "date,open,high,low,close,volume\n\
             2024-01-02,10,11,9,10.5,100\n\
             2024-01-03,10.5,12,10,11,-5\n",
        );
        let err = load_ohlcv_csv(f.path(), "ABC").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("volume -5"), "{err}");
    }

    #[test]
    fn lists_every_offending_row() {
        let f = write_tmp(
            "date,open,high,low,close,volume\n\
             2024-01-02,10,9,11,10,100\n\
             2024-01-03,10.5,12,10,11,1\n\
             2024-01-04,10,9,11,10,100\n",
        );
        let err = load_ohlcv_csv(f.path(), "ABC").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("line 4"), "{err}");
    }

    #[test]
    fn unparsable_row_and_missing_file() {
        let f = write_tmp("date,open,high,low,close,volume\n2024-01-02,ten,11,9,10,1\n");
        let err = load_ohlcv_csv(f.path(), "A").unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("open"), "{err}");
        assert!(matches!(
            load_ohlcv_csv("/nonexistent/x.csv", "A"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn duplicate_dates_are_an_error() {
        let f = write_tmp(
            "date,open,high,low,close,volume\n\
             2024-01-02,10,11,9,10.5,100\n\
             2024-01-02,10,11,9,10.5,100\n",
        );
        let err = load_ohlcv_csv(f.path(), "A").unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }
}
