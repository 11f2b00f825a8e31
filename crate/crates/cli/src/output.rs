//! CSV number formatting and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Seventeen significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Formats `10^{log10}` without overflowing, e.g. `1.2345e400`.
pub fn num_from_log10(log10: f64) -> String {
    if !log10.is_finite() {
        return num(10f64.powf(log10));
    }
    if log10.abs() < 300.0 {
        return num(10f64.powf(log10));
    }
    let mut exponent = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exponent);
    if format!("{mantissa:.16}").starts_with("10") {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    format!("{mantissa:.16}e{}", exponent as i64)
}

/// Formats `e^{ln}`, exact through `exp` while it stays in range.
pub fn num_from_ln(ln: f64) -> String {
    if ln.abs() < 700.0 {
        num(ln.exp())
    } else {
        num_from_log10(ln / std::f64::consts::LN_10)
    }
}

pub fn optional(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Collects artifacts under one output directory.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.text(name, &text)
    }
}

/// A gnuplot script reading one CSV by column name.
pub fn gnuplot_script(csv: &str, title: &str, x: &str, ys: &[&str], log_x: bool, log_y: bool) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot script; run from the output directory\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{x}'\n"));
    if log_x {
        s.push_str("set logscale x\n");
    }
    if log_y {
        s.push_str("set logscale y\n");
    }
    let png = csv.trim_end_matches(".csv");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{png}.png'\n"));
    let plots: Vec<String> = ys
        .iter()
        .map(|y| format!("'{csv}' using (column('{x}')):(column('{y}')) with linespoints title '{y}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}
