use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{line_of, open_csv, Columns};
use crate::domain::TruePm25Field;
use crate::error::{Error, Result};

/// Leading bytes of the dense binary field format.
///
/// Layout: `AQF1`, u32 LE grid count, u32 LE day count, then
/// `n_grids * n_days` f32 LE values, row-major by grid.
pub const FIELD_MAGIC: &[u8; 4] = b"AQF1";

/// Loads either the binary `AQF1` format or the long CSV `grid_id,day,pm25`,
/// chosen by sniffing the first four bytes.
pub fn load_field(path: impl AsRef<Path>) -> Result<TruePm25Field> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == FIELD_MAGIC {
        load_binary(path)
    } else {
        load_csv(path)
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_binary(path: &Path) -> Result<TruePm25Field> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut buf4)
            .map_err(|_| format_err(path, "truncated header"))?;
        Ok(u32::from_le_bytes(buf4))
    };
    let n_grids = read_u32(&mut r)? as usize;
    let n_days = read_u32(&mut r)? as usize;
    let count = n_grids
        .checked_mul(n_days)
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    let mut bytes = Vec::with_capacity(count * 4);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(format_err(
            path,
            format!(
                "expected {} value bytes for {n_grids} x {n_days}, found {}",
                count * 4,
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    TruePm25Field::new(n_grids, n_days, values).map_err(|e| format_err(path, e.to_string()))
}

fn load_csv(path: &Path) -> Result<TruePm25Field> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(path, &headers, &["grid_id", "day", "pm25"])?;
    let mut rows: Vec<(usize, usize, f32)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: f32 = cols.parse(&rec, "pm25")?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::parse(
                path,
                line_of(&rec),
                format!("pm25 = {v} must be a finite nonnegative concentration"),
            ));
        }
        rows.push((cols.parse(&rec, "grid_id")?, cols.parse(&rec, "day")?, v));
    }
    let n_grids = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n_days = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let count = n_grids * n_days;
    let mut values = vec![f32::NAN; count];
    let mut seen = vec![false; count];
    for &(g, d, v) in &rows {
        let i = g * n_days + d;
        if seen[i] {
            return Err(format_err(path, format!("duplicate entry for grid {g} day {d}")));
        }
        seen[i] = true;
        values[i] = v;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::IncompleteField(format!(
            "{}: no value for grid {} day {} ({} of {} grid-days present)",
            path.display(),
            i / n_days,
            i % n_days,
            rows.len(),
            count
        )));
    }
    TruePm25Field::new(n_grids, n_days, values)
}

pub fn save_field_binary(path: impl AsRef<Path>, field: &TruePm25Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.n_grids() as u32).to_le_bytes())?;
    w.write_all(&(field.n_days() as u32).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_field_csv(path: impl AsRef<Path>, field: &TruePm25Field) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["grid_id", "day", "pm25"])?;
    for g in 0..field.n_grids() {
        for (d, v) in field.row(g).iter().enumerate() {
            w.write_record([g.to_string(), d.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, body).unwrap();
        (dir, p)
    }

    #[test]
    fn two_by_two_csv() {
        let (_d, p) = tmp("grid_id,day,pm25\n1,1,4\n0,0,1\n0,1,2\n1,0,3\n");
        let f = load_field(&p).unwrap();
        assert_eq!((f.n_grids(), f.n_days()), (2, 2));
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn incomplete_csv() {
        let (_d, p) = tmp("grid_id,day,pm25\n0,0,1\n0,1,2\n1,0,3\n");
        let err = load_field(&p).unwrap_err();
        assert!(matches!(err, Error::IncompleteField(_)), "{err}");
        assert!(err.to_string().contains("incomplete field"));
    }

    #[test]
    fn rejects_nan_and_negative() {
        let (_d, p) = tmp("grid_id,day,pm25\n0,0,NaN\n");
        assert!(load_field(&p).is_err());
        let (_d, p) = tmp("grid_id,day,pm25\n0,0,-1\n");
        assert!(load_field(&p).is_err());
    }

    #[test]
    fn truncated_binary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.aqf");
        let mut bytes = FIELD_MAGIC.to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(load_field(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn binary_and_csv_round_trip(
            n_grids in 1usize..6,
            n_days in 1usize..6,
            seed in prop::collection::vec(0.0f32..200.0, 36),
        ) {
            let values: Vec<f32> = seed.into_iter().take(n_grids * n_days).collect();
            let field = TruePm25Field::new(n_grids, n_days, values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let b = dir.path().join("f.aqf");
            let c = dir.path().join("f.csv");
            save_field_binary(&b, &field).unwrap();
            save_field_csv(&c, &field).unwrap();
            let fb = load_field(&b).unwrap();
            let fc = load_field(&c).unwrap();
            let bits = |f: &TruePm25Field| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&fb), bits(&field));
            prop_assert_eq!(bits(&fc), bits(&field));
        }
    }
}
