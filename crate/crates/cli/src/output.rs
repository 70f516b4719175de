//! Report writers: JSON with 17 significant digits, and CSV artifacts.

use std::io::{self, Write};
use std::path::Path;

use elig_core::simlab::IterationRecord;
use elig_core::{MomentTable, ScoredRecord};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{CliError, Result};

/// Formats like C's `%.17g`: enough digits to round-trip any `f64`.
pub fn fmt_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.16e}", v.abs());
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    let body = if !(-4..17).contains(&exp) {
        let m = trim(format!("{}.{}", &digits[..1], &digits[1..]));
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else if exp >= 0 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        trim(format!("{int}.{frac}"))
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        trim(format!("0.{zeros}{digits}"))
    };
    if v < 0.0 {
        format!("-{body}")
    } else {
        body
    }
}

/// Pretty-printed JSON whose floats go through [`fmt_g17`].
struct G17Formatter<'a>(PrettyFormatter<'a>);

impl Formatter for G17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn flush(w: &mut csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_scores(path: &Path, scores: &[ScoredRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["gamma_star", "r_star", "income", "group"]).map_err(csv_err(path))?;
    for s in scores {
        w.write_record([
            fmt_g17(s.gamma_star),
            fmt_g17(s.r_star),
            fmt_g17(s.x.income),
            s.x.group.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    flush(&mut w, path)
}

fn threshold_headers(groups: usize) -> impl Iterator<Item = String> {
    (0..groups).map(|j| format!("t_{j}"))
}

/// One row per grid policy: thresholds, `w_hat`, `b_hat`, `sigma_b`.
pub fn write_curves(path: &Path, table: &MomentTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let groups = table.policies.first().map_or(0, |p| p.groups());
    let header: Vec<String> = threshold_headers(groups)
        .chain(["w_hat", "b_hat", "sigma_b"].map(String::from))
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, p) in table.policies.iter().enumerate() {
        let row: Vec<String> = p
            .thresholds()
            .iter()
            .chain([&table.w_hat[i], &table.b_hat[i], &table.sigma_b[i]])
            .map(|v| fmt_g17(*v))
            .collect();
        w.write_record(&row).map_err(csv_err(path))?;
    }
    flush(&mut w, path)
}

pub fn write_iterations(path: &Path, groups: usize, rows: &[IterationRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<String> = ["iteration", "seed", "rule"]
        .map(String::from)
        .into_iter()
        .chain(threshold_headers(groups))
        .chain(["welfare", "budget", "feasible", "fell_back_to_null", "c_alpha"].map(String::from))
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut row = vec![r.iteration.to_string(), r.seed.to_string(), r.rule.to_string()];
        row.extend(r.policy.thresholds().iter().map(|t| fmt_g17(*t)));
        row.extend([
            fmt_g17(r.welfare),
            fmt_g17(r.budget),
            u8::from(r.feasible).to_string(),
            u8::from(r.fell_back_to_null).to_string(),
            r.c_alpha.map(fmt_g17).unwrap_or_default(),
        ]);
        w.write_record(&row).map_err(csv_err(path))?;
    }
    flush(&mut w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (1.5e-4, "0.00014999999999999999"),
            (123456.0, "123456"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (1.0 / 3.0, "0.33333333333333331"),
            (-1.645, "-1.645"),
            (0.0, "0"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_g17(v), want, "{v}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for v in [std::f64::consts::PI, 1e-300, -7.123456789012345e200, 5e-324, f64::MAX, 0.3] {
            assert_eq!(fmt_g17(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn json_keeps_field_order() {
        #[derive(Serialize)]
        struct S {
            z: f64,
            a: Vec<f64>,
            m: Option<f64>,
        }
        let out = to_json(&S { z: 0.1, a: vec![1.0, 2.5], m: None });
        assert_eq!(out, "{\n  \"z\": 0.10000000000000001,\n  \"a\": [\n    1,\n    2.5\n  ],\n  \"m\": null\n}\n");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["z"].as_f64(), Some(0.1));
    }
}
