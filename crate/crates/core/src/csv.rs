//! Minimal CSV emission with round-trippable floats.

use std::io::{self, Write};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_header<W: Write>(w: &mut W, columns: &[String]) -> io::Result<()> {
    writeln!(w, "{}", columns.join(","))
}

pub fn write_row<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        w.write_all(fmt_f64(*v).as_bytes())?;
    }
    w.write_all(b"\n")
}
