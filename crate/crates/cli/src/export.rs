//! CSV and JSON writers with fixed 17-significant-digit floats.

use std::io::{self, Write};
use std::path::Path;

use rclqr_core::microgrid::ScenarioTrace;
use rclqr_core::optimize::RunRecord;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::CliError;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

struct Sig17(PrettyFormatter<'static>);

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
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

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn iterates_csv(run: &RunRecord) -> String {
    let constraints = run.history.first().map_or(0, |h| h.lambda.len());
    let mut header = vec!["iteration".to_string(), "cost".into(), "lagrangian".into(), "phi".into(), "grad_norm".into()];
    header.extend((1..=constraints).map(|i| format!("lambda_{i}")));
    header.extend((1..=constraints).map(|i| format!("residual_{i}")));
    header.extend(["spectral_radius".to_string(), "step".into(), "failures".into()]);
    let mut out = header.join(",");
    out.push('\n');
    for h in &run.history {
        let mut row = vec![h.iteration.to_string(), fmt_f64(h.cost), fmt_f64(h.lagrangian), fmt_f64(h.phi), fmt_f64(h.grad_norm)];
        row.extend(h.lambda.iter().map(|&v| fmt_f64(v)));
        row.extend(h.residuals.iter().map(|&v| fmt_f64(v)));
        row.extend([fmt_f64(h.spectral_radius), fmt_f64(h.step), h.failures.to_string()]);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn scenario_csv(trace: &ScenarioTrace, mg: usize) -> String {
    let mut out = String::from("t,delta_f,delta_p_tie\n");
    for (k, t) in trace.times.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(*t),
            fmt_f64(trace.frequency[(k, mg)]),
            fmt_f64(trace.tie_flow[(k, mg)])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-13, 1e300, 5e-324] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17, "{s}");
        }
    }

    #[test]
    fn json_floats_use_fixed_precision() {
        let text = to_json(&serde_json::json!({"a": 0.1, "b": [1.0, f64::NAN], "c": 3}));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
        assert!(v["b"][1].is_null());
        assert!(text.contains("1.0000000000000001e-1"));
        assert_eq!(v["c"].as_u64(), Some(3));
    }
}
