//! Line-oriented pulse files, CSV tables and key=value summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::discrete::DiscretePulse;
use crate::error::{Error, Result};
use crate::spin::PhasePulse;

const PHASE_MAGIC: &str = "phase-pulse";
const DISCRETE_MAGIC: &str = "discrete-pulse";

/// Shortest scientific form with 17 significant digits; parses back exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::File {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        },
        other => other,
    }
}

/// Parse `# pulseforge <kind> v1 k1=v1 k2=v2` and return the values of `keys`.
fn parse_header<'a>(text: Option<&'a str>, kind: &str, keys: &[&str]) -> Result<Vec<&'a str>> {
    let header = text.ok_or_else(|| parse_err(1, "empty file"))?;
    let mut tokens = header.split_whitespace();
    let prefix: Vec<&str> = tokens.by_ref().take(4).collect();
    if prefix != ["#", "pulseforge", kind, "v1"] {
        return Err(parse_err(1, format!("expected header `# pulseforge {kind} v1 ...`")));
    }
    let fields: Vec<&str> = tokens.collect();
    if fields.len() != keys.len() {
        return Err(parse_err(1, format!("header must carry exactly {}", keys.join(", "))));
    }
    fields
        .iter()
        .zip(keys)
        .map(|(field, key)| {
            field
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| parse_err(1, format!("expected {key}=..., found {field:?}")))
        })
        .collect()
}

fn header_count(line: usize, key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("{key}={value:?} is not a count")))
}

fn finite_float(line: usize, token: &str) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(parse_err(line, format!("{token:?} is not a finite number"))),
    }
}

pub fn render_phase_pulse(pulse: &PhasePulse, dt: f64) -> String {
    let mut out = format!(
        "# pulseforge {PHASE_MAGIC} v1 N={} dt_s={}\n",
        pulse.len(),
        format_float(dt)
    );
    for &theta in pulse.phases() {
        out.push_str(&format_float(theta));
        out.push('\n');
    }
    out
}

/// Returns the pulse and its slice duration.
pub fn parse_phase_pulse(text: &str) -> Result<(PhasePulse, f64)> {
    let mut lines = text.lines();
    let fields = parse_header(lines.next(), PHASE_MAGIC, &["N", "dt_s"])?;
    let n = header_count(1, "N", fields[0])?;
    let dt = finite_float(1, fields[1])?;
    if !(dt > 0.0) {
        return Err(parse_err(1, "dt_s must be positive"));
    }
    let mut phases = Vec::with_capacity(n);
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let token = raw.trim();
        if token.is_empty() {
            continue;
        }
        if phases.len() == n {
            return Err(parse_err(line, format!("more than N = {n} phases")));
        }
        phases.push(finite_float(line, token)?);
    }
    if phases.len() != n {
        return Err(parse_err(1, format!("header says N = {n} but file holds {} phases", phases.len())));
    }
    Ok((PhasePulse::new(phases), dt))
}

pub fn render_discrete_pulse(dp: &DiscretePulse) -> String {
    let mut out = format!("# pulseforge {DISCRETE_MAGIC} v1 N={} M={}\n", dp.n_steps(), dp.m());
    for (k, &v) in dp.values().iter().enumerate() {
        let _ = writeln!(out, "v {} {}", k + 1, format_float(v));
    }
    for &k in dp.mapping() {
        let _ = writeln!(out, "p {}", k + 1);
    }
    out
}

/// Codebook and mapping indices are 1-based in the file.
pub fn parse_discrete_pulse(text: &str) -> Result<DiscretePulse> {
    let mut lines = text.lines();
    let fields = parse_header(lines.next(), DISCRETE_MAGIC, &["N", "M"])?;
    let n = header_count(1, "N", fields[0])?;
    let m = header_count(1, "M", fields[1])?;
    let mut values = Vec::with_capacity(m);
    let mut mapping = Vec::with_capacity(n);
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["v", index, value] => {
                if !mapping.is_empty() {
                    return Err(parse_err(line, "codebook line after mapping lines"));
                }
                if *index != (values.len() + 1).to_string() {
                    return Err(parse_err(line, format!("expected codebook index {}", values.len() + 1)));
                }
                if values.len() == m {
                    return Err(parse_err(line, format!("more than M = {m} codebook values")));
                }
                values.push(finite_float(line, value)?);
            }
            ["p", index] => {
                if values.len() != m {
                    return Err(parse_err(line, format!("mapping before all M = {m} codebook values")));
                }
                let k: usize = index
                    .parse()
                    .ok()
                    .filter(|k| (1..=m).contains(k))
                    .ok_or_else(|| parse_err(line, format!("mapping index {index:?} outside 1..={m}")))?;
                if mapping.len() == n {
                    return Err(parse_err(line, format!("more than N = {n} mapping entries")));
                }
                mapping.push(k - 1);
            }
            _ => return Err(parse_err(line, format!("unrecognized line {raw:?}"))),
        }
    }
    if values.len() != m || mapping.len() != n {
        return Err(parse_err(
            1,
            format!("header says N = {n}, M = {m} but file holds {} mapping entries and {} values", mapping.len(), values.len()),
        ));
    }
    DiscretePulse::new(values, mapping)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_phase_pulse(path: &Path, pulse: &PhasePulse, dt: f64) -> Result<()> {
    write_text(path, &render_phase_pulse(pulse, dt))
}

pub fn read_phase_pulse(path: &Path) -> Result<(PhasePulse, f64)> {
    parse_phase_pulse(&read_text(path)?).map_err(|e| with_path(path, e))
}

pub fn write_discrete_pulse(path: &Path, dp: &DiscretePulse) -> Result<()> {
    write_text(path, &render_discrete_pulse(dp))
}

pub fn read_discrete_pulse(path: &Path) -> Result<DiscretePulse> {
    parse_discrete_pulse(&read_text(path)?).map_err(|e| with_path(path, e))
}

/// Comma-separated table with a header row. Cells must not contain commas.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &render_csv(header, rows))
}

/// Flat `key=value` lines in the given order.
pub fn render_summary(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    write_text(path, &render_summary(entries))
}

/// Read back a summary written by [`write_summary`].
pub fn parse_summary(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(i + 1, format!("expected key=value, found {l:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.0, std::f64::consts::PI, 5e-7, 6.283185307179585, 1e-300, -0.1] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn phase_pulse_round_trip() {
        let pulse = PhasePulse::new(vec![0.0, 1.0e-3, 3.0, 6.2]);
        let text = render_phase_pulse(&pulse, 5e-7);
        assert!(text.starts_with("# pulseforge phase-pulse v1 N=4 dt_s=4.9999999999999998e-7\n"));
        let (back, dt) = parse_phase_pulse(&text).unwrap();
        assert_eq!(back, pulse);
        assert_eq!(dt, 5e-7);
    }

    #[test]
    fn phase_pulse_errors() {
        let line_of = |text: &str| match parse_phase_pulse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("# pulseforge phase-pulse v2 N=1 dt_s=1\n0\n"), 1);
        assert_eq!(line_of("# pulseforge phase-pulse v1 N=2 dt_s=1\n0\nx\n"), 3);
        assert_eq!(line_of("# pulseforge phase-pulse v1 N=2 dt_s=1\n0\n"), 1);
        assert_eq!(line_of("# pulseforge phase-pulse v1 N=1 dt_s=1\n0\n1\n"), 3);
        assert_eq!(line_of("# pulseforge phase-pulse v1 N=1 dt=1\n0\n"), 1);
    }

    #[test]
    fn discrete_pulse_round_trip() {
        let dp = DiscretePulse::new(vec![0.5, 2.0, 4.0], vec![2, 0, 0, 1, 2]).unwrap();
        let text = render_discrete_pulse(&dp);
        assert_eq!(text.lines().nth(1), Some("v 1 5.0000000000000000e-1"));
        assert_eq!(text.lines().nth(4), Some("p 3"));
        assert_eq!(parse_discrete_pulse(&text).unwrap(), dp);
    }

    #[test]
    fn discrete_pulse_errors() {
        let head = "# pulseforge discrete-pulse v1 N=2 M=2\n";
        for body in [
            "v 1 0\np 1\np 1\n",
            "v 1 0\nv 2 1\np 3\np 1\n",
            "v 1 0\nv 3 1\np 1\np 1\n",
            "v 1 0\nv 2 1\np 1\n",
            "v 1 0\nv 2 1\np 1\np 2\np 1\n",
            "v 1 0\nv 2 nan\np 1\np 2\n",
            "v 1 0\nv 2 1\nq 1\np 2\n",
        ] {
            assert!(parse_discrete_pulse(&format!("{head}{body}")).is_err(), "{body:?}");
        }
        assert!(parse_discrete_pulse(&format!("{head}v 1 0\nv 2 1\np 1\np 2\n")).is_ok());
    }

    #[test]
    fn summary_round_trip() {
        let entries = [("m", "4".to_string()), ("phi", format_float(0.25))];
        let parsed = parse_summary(&render_summary(&entries)).unwrap();
        assert_eq!(parsed[1], ("phi".to_string(), "2.5000000000000000e-1".to_string()));
    }
}
