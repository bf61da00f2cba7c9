//! Text and CSV tables in the "estimand | point | bias | PI" layout.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::intervals::{IntervalResult, PointSummary};

/// Presentation scale; values are stored as raw proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Raw,
    Percent,
    PerThousand,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Raw => 1.0,
            Scale::Percent => 100.0,
            Scale::PerThousand => 1000.0,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Scale::Percent => "%",
            _ => "",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Raw => "raw",
            Scale::Percent => "percent",
            Scale::PerThousand => "per-thousand",
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(Scale::Raw),
            "percent" => Ok(Scale::Percent),
            "per-thousand" => Ok(Scale::PerThousand),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

fn num(v: f64, scale: Scale, digits: usize) -> String {
    let s = format!("{:.*}", digits, v * scale.factor());
    // Avoid "-0.0".
    let s = if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    };
    format!("{s}{}", scale.suffix())
}

fn bias_cell(bias: (f64, f64), scale: Scale, digits: usize) -> String {
    let b = bias.0.abs().max(bias.1.abs());
    let shown = num(b, scale, digits);
    if shown.trim_end_matches('%').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        format!("± {shown}")
    }
}

/// Aligned text table. `coverage` adds a Coverage column per row.
pub fn render_text(results: &[IntervalResult], scale: Scale, digits: usize, coverage: Option<&[f64]>) -> String {
    let level = results.first().map_or(0.95, |r| r.level);
    let mut header = vec![
        String::new(),
        "Point Est.".to_string(),
        "Bias".to_string(),
        format!("{}% PI", (level * 100.0).round()),
    ];
    if coverage.is_some() {
        header.push("Coverage".into());
    }
    let mut rows = vec![header];
    for (k, r) in results.iter().enumerate() {
        let mut row = vec![
            r.estimand.clone(),
            num(r.point_estimate, scale, digits),
            bias_cell(r.bias_bound, scale, digits),
            format!("[{}, {}]", num(r.interval.0, scale, digits), num(r.interval.1, scale, digits)),
        ];
        if let Some(c) = coverage {
            row.push(format!("{:.1}%", 100.0 * c[k]));
        }
        rows.push(row);
    }
    align(&rows)
}

/// CSV with one row per estimand; numbers scaled but not rounded.
pub fn render_csv(results: &[IntervalResult], scale: Scale) -> String {
    let mut out = String::from(
        "estimand,point_estimate,bias_lo,bias_hi,pi_lo,pi_hi,level,upper_status,lower_status,scale\n",
    );
    let f = scale.factor();
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.estimand,
            r.point_estimate * f,
            r.bias_bound.0 * f,
            r.bias_bound.1 * f,
            r.interval.0 * f,
            r.interval.1 * f,
            r.level,
            r.upper.status.name(),
            r.lower.status.name(),
            scale.name()
        )
        .expect("write to string");
    }
    out
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "{}", cells.join(" | ").trim_end()).expect("write to string");
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            writeln!(out, "{}", rule.join("-+-")).expect("write to string");
        }
    }
    out
}

/// Point estimates with their bias column.
pub fn render_estimates_text(rows: &[PointSummary], scale: Scale, digits: usize) -> String {
    let mut table = vec![vec![String::new(), "Point Est.".to_string(), "Bias".to_string()]];
    for r in rows {
        table.push(vec![
            r.estimand.clone(),
            num(r.point_estimate, scale, digits),
            bias_cell(r.bias_bound, scale, digits),
        ]);
    }
    align(&table)
}

pub fn render_estimates_csv(rows: &[PointSummary], scale: Scale) -> String {
    let mut out = String::from("estimand,point_estimate,bias_lo,bias_hi,scale\n");
    let f = scale.factor();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.estimand,
            r.point_estimate * f,
            r.bias_bound.0 * f,
            r.bias_bound.1 * f,
            scale.name()
        )
        .expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(num(-0.0013, Scale::PerThousand, 1), "-1.3");
        assert_eq!(num(-0.00001, Scale::PerThousand, 1), "0.0");
        assert_eq!(num(0.08, Scale::Percent, 0), "8%");
        assert_eq!(bias_cell((-1e-17, 0.0), Scale::PerThousand, 1), "0");
        assert_eq!(bias_cell((-0.004, 0.005), Scale::Percent, 1), "± 0.5%");
    }
}
