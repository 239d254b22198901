//! Rate-distortion report: rows, versioned CSV, SVG plot and the ordering
//! checks run over a sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First line of every report CSV.
pub const CSV_VERSION_LINE: &str = "# cpri-rd-report v1";

/// Condition of rows evaluated on the training distribution.
pub const MATCHED: &str = "matched";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub scheme: String,
    /// Q for classical and fixed-rate latent schemes, λ for transform
    /// coding, decoded layers for refinement, `a` for variable rate.
    pub rate_param: f64,
    pub bits_per_element: f64,
    pub cr: f64,
    pub evm_pct: f64,
    pub evm_db: f64,
    pub evm_p5_db: f64,
    pub evm_p95_db: f64,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub wall_s: f64,
    /// `matched`, or `mismatched:<what>` for off-distribution test sets.
    pub condition: String,
    pub config_digest: String,
}

pub fn write_csv(path: &Path, rows: &[RdRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(|e| Error::Format(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let mut out = format!("{CSV_VERSION_LINE}\n").into_bytes();
    out.extend(body);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const CSV_COLUMNS: [&str; 13] = [
    "scheme",
    "rate_param",
    "bits_per_element",
    "cr",
    "evm_pct",
    "evm_db",
    "evm_p5_db",
    "evm_p95_db",
    "alpha",
    "seed",
    "wall_s",
    "condition",
    "config_digest",
];

pub fn read_csv(path: &Path) -> Result<Vec<RdRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim_end() != CSV_VERSION_LINE {
        return Err(Error::Format(format!("{}: unsupported report version line {first:?}", path.display())));
    }
    csv::Reader::from_reader(rest.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<RdRow>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Outcome of one ordering check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type Series<'a> = BTreeMap<(String, String, u64), Vec<&'a RdRow>>;

fn series(rows: &[RdRow]) -> Series<'_> {
    let mut m: Series<'_> = BTreeMap::new();
    for r in rows {
        m.entry((r.scheme.clone(), r.condition.clone(), r.seed)).or_default().push(r);
    }
    for v in m.values_mut() {
        v.sort_by(|a, b| a.rate_param.total_cmp(&b.rate_param));
    }
    m
}

fn check_series(name: String, s: &[&RdRow], ok: impl Fn(&RdRow, &RdRow) -> bool) -> Check {
    let bad: Vec<String> = s
        .windows(2)
        .filter(|w| !ok(w[0], w[1]))
        .map(|w| {
            format!(
                "{}→{}: {:.3}→{:.3} bits, {:.2}→{:.2} dB",
                w[0].rate_param, w[1].rate_param, w[0].bits_per_element, w[1].bits_per_element, w[0].evm_db, w[1].evm_db
            )
        })
        .collect();
    Check {
        name,
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} points", s.len())
        } else {
            bad.join("; ")
        },
    }
}

/// Monotonicity checks per (scheme, condition, seed) series.
pub fn ordering_checks(rows: &[RdRow]) -> Vec<Check> {
    let mut out = Vec::new();
    for ((scheme, condition, seed), s) in series(rows) {
        if s.len() < 2 {
            continue;
        }
        let name = |what: &str| format!("{scheme} [{condition}, seed {seed}]: {what}");
        match scheme.as_str() {
            "classical-scalar" | "classical-vector" | "classical-vector-fixed" => {
                out.push(check_series(name("EVM dB strictly increasing in Q"), &s, |a, b| b.evm_db > a.evm_db));
            }
            "neural" => {
                out.push(check_series(name("rate and EVM dB non-decreasing in λ"), &s, |a, b| {
                    b.bits_per_element >= a.bits_per_element && b.evm_db >= a.evm_db
                }));
            }
            "refinement" => {
                out.push(check_series(name("EVM dB strictly increasing per layer"), &s, |a, b| b.evm_db > a.evm_db));
            }
            "variable-rate" => {
                out.push(check_series(name("rate non-decreasing in a"), &s, |a, b| b.bits_per_element >= a.bits_per_element));
            }
            _ => {}
        }
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Static EVM-versus-rate plot, one polyline per series.
pub fn render_svg(rows: &[RdRow], title: &str) -> String {
    let (w, h, m) = (720.0, 480.0, 60.0);
    let finite: Vec<&RdRow> = rows.iter().filter(|r| r.evm_db.is_finite() && r.bits_per_element.is_finite()).collect();
    let span = |f: &dyn Fn(&RdRow) -> f64| {
        let lo = finite.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
        let hi = finite.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = span(&|r| r.bits_per_element);
    let (y0, y1) = span(&|r| r.evm_db);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.2}</text>"#, px(fx), h - m + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{fy:.1}</text>"#, m - 6.0, py(fy) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">bits per element</text>"#, w / 2.0, h - 16.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">EVM (dB)</text>"#, h / 2.0, h / 2.0);
    for (k, ((scheme, condition, seed), pts)) in series(rows).into_iter().enumerate() {
        let pts: Vec<&&RdRow> = pts.iter().filter(|r| r.evm_db.is_finite()).collect();
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|r| format!("{:.1},{:.1}", px(r.bits_per_element), py(r.evm_db))).collect();
        let dash = if condition == MATCHED { "" } else { r#" stroke-dasharray="5 3""# };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}"{dash}/>"#, path.join(" "));
        for r in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#, px(r.bits_per_element), py(r.evm_db));
        }
        let ly = m + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{colour}">{}</text>"#, m + 10.0, escape(&format!("{scheme} {condition} s{seed}")));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, p: f64, bits: f64, db: f64) -> RdRow {
        RdRow {
            scheme: scheme.into(),
            rate_param: p,
            bits_per_element: bits,
            cr: 0.5,
            evm_pct: 100.0 * 10f64.powf(-db / 20.0),
            evm_db: db,
            evm_p5_db: db - 1.0,
            evm_p95_db: db + 1.0,
            alpha: None,
            seed: 0,
            wall_s: 0.1,
            condition: MATCHED.into(),
            config_digest: "abc".into(),
        }
    }

    #[test]
    fn csv_round_trip_with_version_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rows = vec![row("classical-scalar", 4.0, 4.0, 20.5), row("neural", 500.0, 4.2, 27.0)];
        rows[0].alpha = Some(1.0);
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CSV_VERSION_LINE));
        assert!(text.lines().nth(1).unwrap().starts_with("scheme,rate_param,bits_per_element,cr,evm_pct,evm_db"));
        assert_eq!(read_csv(&path).unwrap(), rows);
        std::fs::write(&path, text.replacen("v1", "v0", 1)).unwrap();
        assert!(read_csv(&path).is_err());
    }

    #[test]
    fn checks_flag_violations() {
        let good = vec![row("classical-scalar", 4.0, 4.0, 20.0), row("classical-scalar", 5.0, 5.0, 26.0)];
        assert!(ordering_checks(&good).iter().all(|c| c.passed));
        let bad = vec![row("neural", 100.0, 3.0, 25.0), row("neural", 500.0, 2.9, 26.0)];
        let c = ordering_checks(&bad);
        assert_eq!(c.len(), 1);
        assert!(!c[0].passed);
        let mut mixed = good.clone();
        mixed[1].seed = 1;
        assert!(ordering_checks(&mixed).is_empty());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let rows = vec![row("classical-scalar", 4.0, 4.0, 20.0), row("classical-scalar", 5.0, 5.0, 26.0), row("neural", 500.0, 4.5, 27.0)];
        let svg = render_svg(&rows, "downlink <test>");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("&lt;test&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
