//! Columnar text format for measures.
//!
//! ```text
//! # n=2 d=1 h=0.05 mass=200.05 label=flat(...)
//! # window radius=100 center=0,0
//! x1 x2 weight
//! ...
//! ```
//! The window line is optional; other `#` lines are ignored.

use super::{MeasureError, PointMeasure, Window};
use std::io::{BufRead, Write};

pub fn write_measure<W: Write>(m: &PointMeasure, mut out: W) -> Result<(), MeasureError> {
    writeln!(
        out,
        "# n={} d={} h={:.16e} mass={:.16e} label={}",
        m.ambient_dim(),
        m.hausdorff_dim(),
        m.spacing(),
        m.total_mass(),
        m.label()
    )?;
    if let Some(w) = m.window() {
        let c: Vec<String> = w.center.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "# window radius={:.16e} center={}", w.radius, c.join(","))?;
    }
    let mut line = String::new();
    for (p, w) in m.points().zip(m.weights()) {
        line.clear();
        for x in p {
            line.push_str(&format!("{x:.16e} "));
        }
        line.push_str(&format!("{w:.16e}"));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeasureError {
    MeasureError::Parse { line, msg: msg.into() }
}

fn field<'a>(tokens: &[&'a str], key: &str, line: usize) -> Result<&'a str, MeasureError> {
    tokens
        .iter()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| parse_err(line, format!("missing `{key}=`")))
}

fn number<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, MeasureError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number `{s}`")))
}

pub fn read_measure<R: BufRead>(input: R) -> Result<PointMeasure, MeasureError> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = header?;
    let body = header.strip_prefix('#').ok_or_else(|| parse_err(1, "header must start with `#`"))?;
    let (meta, label) = match body.find("label=") {
        Some(pos) => (&body[..pos], body[pos + 6..].to_string()),
        None => (body, String::new()),
    };
    let tokens: Vec<&str> = meta.split_whitespace().collect();
    let n: usize = number(field(&tokens, "n", 1)?, 1)?;
    let d: f64 = number(field(&tokens, "d", 1)?, 1)?;
    let h: f64 = number(field(&tokens, "h", 1)?, 1)?;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut window = None;
    for (k, line) in lines {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.first() == Some(&"window") {
                let radius: f64 = number(field(&toks, "radius", lineno)?, lineno)?;
                let center = field(&toks, "center", lineno)?
                    .split(',')
                    .map(|s| number(s, lineno))
                    .collect::<Result<Vec<f64>, _>>()?;
                if center.len() != n {
                    return Err(parse_err(lineno, "window centre has the wrong dimension"));
                }
                window = Some(Window { center, radius });
            }
            continue;
        }
        let vals = t.split_whitespace().map(|s| number::<f64>(s, lineno)).collect::<Result<Vec<_>, _>>()?;
        if vals.len() != n + 1 {
            return Err(parse_err(lineno, format!("expected {} columns, found {}", n + 1, vals.len())));
        }
        coords.extend_from_slice(&vals[..n]);
        weights.push(vals[n]);
    }
    let m = PointMeasure::new(n, d, coords, weights, h, label)?;
    Ok(match window {
        Some(w) => m.with_window(w),
        None => m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gen_flat_plane, gen_four_corner_cantor, FlatPlaneSpec};

    #[test]
    fn round_trip_is_exact() {
        for m in [
            gen_four_corner_cantor(3, 0.7, 3, 1 << 20).unwrap(),
            gen_flat_plane(&FlatPlaneSpec::new(2, 1.0, 1.3, 2.0, 0.1).graded(1.0)).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_measure(&m, &mut buf).unwrap();
            let back = read_measure(buf.as_slice()).unwrap();
            assert_eq!(back.coords(), m.coords());
            assert_eq!(back.weights(), m.weights());
            assert_eq!(back.spacing(), m.spacing());
            assert_eq!(back.label(), m.label());
            assert_eq!(back.window(), m.window());
        }
    }

    #[test]
    fn malformed_rows() {
        let bad = "# n=2 d=1 h=0.1 mass=1 label=x\n0 0 1\n0.5 1\n";
        assert!(matches!(read_measure(bad.as_bytes()), Err(MeasureError::Parse { line: 3, .. })));
        assert!(read_measure("n=2".as_bytes()).is_err());
    }
}
