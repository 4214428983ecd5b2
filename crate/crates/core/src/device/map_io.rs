use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Renders `v` with 9 significant digits in plain decimal notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-6..=15).contains(&magnitude) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Writes a numeric grid as headerless CSV with 9 significant digits.
pub fn write_grid_csv<W: Write>(out: W, grid: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in grid {
        w.write_record(row.iter().map(|&v| format_sig9(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless rectangular numeric CSV grid.
pub fn read_grid_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut grid: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|e| Error::Ingestion {
                    row,
                    column: col.to_string(),
                    detail: format!("{field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = grid.first() {
            if first.len() != values.len() {
                return Err(Error::Ingestion {
                    row,
                    column: values.len().to_string(),
                    detail: format!("expected {} columns", first.len()),
                });
            }
        }
        grid.push(values);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(0.00123456789123), "0.00123456789");
    }

    #[test]
    fn grid_round_trip_within_precision() {
        let grid = vec![vec![0.1, 0.987654321987], vec![1.0, 0.0]];
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &grid).unwrap();
        let back = read_grid_csv(buf.as_slice()).unwrap();
        for (a, b) in grid.iter().flatten().zip(back.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn ragged_or_non_numeric_grids_are_rejected() {
        assert!(read_grid_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(matches!(
            read_grid_csv("1,abc\n".as_bytes()),
            Err(Error::Ingestion { row: 0, .. })
        ));
    }
}
