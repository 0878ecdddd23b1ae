//! Plain-text data files: `#`-prefixed comment lines, one column-name line,
//! comma-separated values in full double precision.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hierarchy::{Mat2, Trajectory};
use crate::observables::{sigma_x, sigma_z, CorrelationResult};
use crate::polefit::{ExponentialDecomposition, PoleSet};
use crate::spectrum::TabulatedSpectrum;

pub const POLE_COLUMNS: &str = "index,re_eta,im_eta,re_xi,im_xi";
pub const DECOMPOSITION_COLUMNS: &str = "index,re_d,im_d,gamma,omega";
pub const TRAJECTORY_COLUMNS: &str =
    "time,re_rho00,im_rho00,re_rho01,im_rho01,re_rho10,im_rho10,re_rho11,im_rho11,sigma_z,sigma_x,trace_residual";
pub const CORRELATION_COLUMNS: &str = "time,re_szz,im_szz,prediction,residual";

/// Shortest-round-trip-safe formatting with 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_comments(w: &mut impl Write, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    Ok(())
}

/// Parsed table: comment lines (without `#`), column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Value of a `key: value` or `key = value` comment.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once(':').or_else(|| c.split_once('='))?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

/// Reads a table, checking the column line against `expected` when given.
pub fn read_table(r: impl BufRead, name: &str, expected: Option<&str>) -> Result<Table> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut comments = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        match &columns {
            None => {
                let cols: Vec<String> = trimmed.split(',').map(|c| c.trim().to_string()).collect();
                if let Some(exp) = expected {
                    if cols.join(",") != exp {
                        return Err(parse_err(lineno, format!("expected columns `{exp}`, found `{trimmed}`")));
                    }
                }
                columns = Some(cols);
            }
            Some(cols) => {
                let vals: std::result::Result<Vec<f64>, _> = trimmed.split(',').map(|v| v.trim().parse::<f64>()).collect();
                let vals = vals.map_err(|e| parse_err(lineno, format!("invalid number: {e}")))?;
                if vals.len() != cols.len() {
                    return Err(parse_err(lineno, format!("expected {} fields, found {}", cols.len(), vals.len())));
                }
                rows.push(vals);
            }
        }
    }
    let columns = columns.ok_or_else(|| parse_err(0, "missing column line".into()))?;
    Ok(Table { comments, columns, rows })
}

/// Pole set in descending order of `−Im ξ`; the constant term is kept in a
/// comment.
pub fn write_poles(mut w: impl Write, poles: &PoleSet, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "# constant: {}", fmt(poles.constant))?;
    writeln!(w, "{POLE_COLUMNS}")?;
    let mut order: Vec<usize> = (0..poles.len()).collect();
    order.sort_by(|&a, &b| poles.poles[a].im.total_cmp(&poles.poles[b].im).then(poles.poles[a].re.total_cmp(&poles.poles[b].re)));
    for (k, &i) in order.iter().enumerate() {
        let (eta, xi) = (poles.residues[i], poles.poles[i]);
        writeln!(w, "{},{},{},{},{}", k + 1, fmt(eta.re), fmt(eta.im), fmt(xi.re), fmt(xi.im))?;
    }
    Ok(())
}

/// Reads `(ξ, η)` pairs and the constant term (zero when absent).
pub fn read_poles(r: impl BufRead, name: &str) -> Result<PoleSet> {
    let table = read_table(r, name, Some(POLE_COLUMNS))?;
    let constant = match table.comment_value("constant") {
        Some(v) => v.parse().map_err(|e| Error::Parse {
            path: name.to_string(),
            line: 0,
            message: format!("invalid constant: {e}"),
        })?,
        None => 0.0,
    };
    Ok(PoleSet {
        residues: table.rows.iter().map(|r| Complex64::new(r[1], r[2])).collect(),
        poles: table.rows.iter().map(|r| Complex64::new(r[3], r[4])).collect(),
        constant,
        fit_error: f64::NAN,
        tolerance: f64::NAN,
        dropped_froissart: 0,
        regularized_real: 0,
        conjugate_mismatch: 0.0,
    })
}

pub fn write_decomposition(mut w: impl Write, dec: &ExponentialDecomposition, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{DECOMPOSITION_COLUMNS}")?;
    for (k, (d, z)) in dec.amplitudes().iter().zip(dec.exponents()).enumerate() {
        writeln!(w, "{},{},{},{},{}", k + 1, fmt(d.re), fmt(d.im), fmt(z.re), fmt(z.im))?;
    }
    Ok(())
}

pub fn read_decomposition(r: impl BufRead, name: &str) -> Result<ExponentialDecomposition> {
    let table = read_table(r, name, Some(DECOMPOSITION_COLUMNS))?;
    ExponentialDecomposition::new(
        table.rows.iter().map(|r| Complex64::new(r[1], r[2])).collect(),
        table.rows.iter().map(|r| Complex64::new(r[3], r[4])).collect(),
    )
}

pub fn write_trajectory(mut w: impl Write, traj: &Trajectory, comments: &[String]) -> Result<()> {
    write_trajectory_rows(&mut w, &traj.times, &traj.states, comments)
}

pub fn write_trajectory_rows(mut w: impl Write, times: &[f64], states: &[Mat2], comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{TRAJECTORY_COLUMNS}")?;
    for (t, rho) in times.iter().zip(states) {
        let mut fields = vec![fmt(*t)];
        for c in rho.0 {
            fields.push(fmt(c.re));
            fields.push(fmt(c.im));
        }
        fields.push(fmt(sigma_z(rho)));
        fields.push(fmt(sigma_x(rho)));
        fields.push(fmt((rho.trace() - 1.0).norm()));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Times and physical density matrices of a trajectory file.
pub fn read_trajectory(r: impl BufRead, name: &str) -> Result<(Vec<f64>, Vec<Mat2>)> {
    let table = read_table(r, name, Some(TRAJECTORY_COLUMNS))?;
    let times = table.rows.iter().map(|r| r[0]).collect();
    let states = table
        .rows
        .iter()
        .map(|r| {
            Mat2::new(
                Complex64::new(r[1], r[2]),
                Complex64::new(r[3], r[4]),
                Complex64::new(r[5], r[6]),
                Complex64::new(r[7], r[8]),
            )
        })
        .collect();
    Ok((times, states))
}

/// Correlation series with an optional prediction column (`NaN` if absent).
pub fn write_correlation(
    mut w: impl Write,
    result: &CorrelationResult,
    prediction: Option<&dyn Fn(f64) -> f64>,
    comments: &[String],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{CORRELATION_COLUMNS}")?;
    for (t, v) in result.times.iter().zip(&result.values) {
        let p = prediction.map_or(f64::NAN, |f| if *t > 0.0 { f(*t) } else { f64::NAN });
        writeln!(w, "{},{},{},{},{}", fmt(*t), fmt(v.re), fmt(v.im), fmt(p), fmt(v.re - p))?;
    }
    Ok(())
}

pub fn read_correlation(r: impl BufRead, name: &str) -> Result<CorrelationResult> {
    let table = read_table(r, name, Some(CORRELATION_COLUMNS))?;
    let values: Vec<Complex64> = table.rows.iter().map(|r| Complex64::new(r[1], r[2])).collect();
    Ok(CorrelationResult {
        times: table.rows.iter().map(|r| r[0]).collect(),
        symmetrized: values.iter().map(|v| v.re).collect(),
        values,
    })
}

/// Two-column `omega,noise_power` file.
pub fn read_tabulated(r: impl BufRead, name: &str) -> Result<TabulatedSpectrum> {
    let table = read_table(r, name, None)?;
    if table.columns.len() != 2 {
        return Err(Error::Parse {
            path: name.to_string(),
            line: 0,
            message: format!("tabulated spectrum needs two columns, found {}", table.columns.len()),
        });
    }
    let samples: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[1])).collect();
    TabulatedSpectrum::new(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [std::f64::consts::PI, 1e-300, -2.5e17, 0.1 + 0.2] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn pole_file_round_trip() {
        let ps = PoleSet {
            poles: vec![Complex64::new(1.0, -0.5), Complex64::new(-2.0, -3.0)],
            residues: vec![Complex64::new(0.1, 0.2), Complex64::new(0.3, -0.4)],
            constant: 1e-9,
            fit_error: 0.0,
            tolerance: 0.0,
            dropped_froissart: 0,
            regularized_real: 0,
            conjugate_mismatch: 0.0,
        };
        let mut buf = Vec::new();
        write_poles(&mut buf, &ps, &["model: test".into()]).unwrap();
        let back = read_poles(buf.as_slice(), "mem").unwrap();
        // descending decay rate: the Im ξ = −3 pole comes first
        assert_eq!(back.poles[0], ps.poles[1]);
        assert_eq!(back.residues[1], ps.residues[0]);
        assert_eq!(back.constant, 1e-9);
    }

    #[test]
    fn decomposition_round_trip_is_exact() {
        let dec = ExponentialDecomposition::new(
            vec![Complex64::new(0.1, 1.0 / 3.0), Complex64::new(0.7, 0.0)],
            vec![Complex64::new(2.0, 1.0 / 7.0), Complex64::new(0.5, -3.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_decomposition(&mut buf, &dec, &[]).unwrap();
        assert_eq!(read_decomposition(buf.as_slice(), "mem").unwrap(), dec);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# comment\nindex,re_d,im_d,gamma,omega\n1,0.5,0,1,0\n2,abc,0,1,0\n";
        match read_decomposition(text.as_bytes(), "bad.csv") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "bad.csv");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_decomposition("a,b\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn tabulated_reader() {
        let text = "omega,s\n0.1,1.0\n1.0,2.0\n";
        let tab = read_tabulated(text.as_bytes(), "tab").unwrap();
        let (lo, hi) = tab.positive_range().unwrap();
        assert!((lo - 0.1).abs() < 1e-16 && (hi - 1.0).abs() < 1e-16);
    }
}
