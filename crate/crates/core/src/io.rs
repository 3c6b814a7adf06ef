//! Field persistence.
//!
//! Binary container layout, all little-endian:
//!
//! | offset | type  | content             |
//! |--------|-------|---------------------|
//! | 0      | u64   | sample count `n`    |
//! | 8      | f64   | `x_min`             |
//! | 16     | f64   | `x_max`             |
//! | 24     | f64[] | `re_0, im_0, re_1, ...` (`2n` doubles) |

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub fn write_field_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let grid = field.grid();
    out.write_all(&(grid.len() as u64).to_le_bytes())?;
    out.write_all(&grid.x_min().to_le_bytes())?;
    out.write_all(&grid.x_max().to_le_bytes())?;
    for z in field.values() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_field_binary<R: Read>(mut input: R) -> Result<Field> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    let n = u64::from_le_bytes(buf);
    let n = usize::try_from(n)
        .map_err(|_| Error::InvalidParameter(format!("sample count {n} too large")))?;
    let x_min = read_f64(&mut input)?;
    let x_max = read_f64(&mut input)?;
    let grid = Grid::new(x_min, x_max, n)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(&mut input)?;
        let im = read_f64(&mut input)?;
        values.push(Complex64::new(re, im));
    }
    Field::new(grid, values)
}

/// CSV with header `x,re,im`, one row per sample.
pub fn write_field_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    writeln!(out, "x,re,im")?;
    for (x, z) in field.grid().points().zip(field.values()) {
        writeln!(out, "{x},{},{}", z.re, z.im)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(
            x_min in -100.0f64..0.0,
            width in 0.5f64..200.0,
            log_n in 4u32..9,
            seed in any::<u64>(),
        ) {
            let grid = Grid::new(x_min, x_min + width, 1 << log_n).unwrap();
            let mut state = seed;
            let field = Field::from_fn(grid, |_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                let b = (state.rotate_left(17) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                Complex64::new(a, b)
            });
            let mut bytes = Vec::new();
            write_field_binary(&field, &mut bytes).unwrap();
            prop_assert_eq!(bytes.len(), 24 + 16 * grid.len());
            let back = read_field_binary(bytes.as_slice()).unwrap();
            prop_assert_eq!(back, field);
        }
    }

    #[test]
    fn csv_layout() {
        let grid = Grid::new(0.0, 16.0, 16).unwrap();
        let field = Field::from_fn(grid, |x| Complex64::new(x, -x));
        let mut out = Vec::new();
        write_field_csv(&field, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,re,im");
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[3], "2,2,-2");
    }

    #[test]
    fn truncated_container_is_an_error() {
        let grid = Grid::new(0.0, 1.0, 16).unwrap();
        let mut bytes = Vec::new();
        write_field_binary(&Field::zeros(grid), &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_field_binary(bytes.as_slice()).is_err());
    }
}
