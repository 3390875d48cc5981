//! CSV, JSON and SVG emission.
//!
//! Time series share one fixed column layout. Time is in units of `1/omega`,
//! positions in `z_g`, momenta in `p_g`, angular momenta in `hbar`, and the
//! covariances use the matching products (`C_zz / z_g^2`, `C_zJz / (hbar
//! z_g)`, ...). Columns a mode does not produce hold `NaN`. Values are
//! written with 17 significant digits so that parsing returns the same bits.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::classical::ClassicalRecord;
use crate::cumulant::CumulantSeries;
use crate::ensemble::Aggregates;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::sse::TrajectoryRecord;

pub const COLUMNS: [&str; 20] = [
    "t",
    "dy_dt",
    "z_mean",
    "p_mean",
    "jx_mean",
    "jy_mean",
    "jz_mean",
    "Czz",
    "Czp",
    "Cpp",
    "CzJz",
    "CpJz",
    "CJzJz",
    "entropy",
    "norm_residual",
    "z_classical",
    "p_classical",
    "Sx",
    "Sy",
    "Sz",
];

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns: Vec<String> =
            rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let row = rec
                .iter()
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Csv(format!("row {}: bad number '{cell}'", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Seventeen significant digits, enough to recover every `f64` exactly.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn blank_row() -> [f64; 20] {
    [f64::NAN; 20]
}

/// Time series table for a quantum trajectory, optionally with the
/// classical reference on the same grid.
pub fn trajectory_table(
    rec: &TrajectoryRecord,
    params: &ModelParams,
    classical: Option<&ClassicalRecord>,
) -> Result<Table> {
    if let Some(cl) = classical {
        check_grid(&rec.times, &cl.times)?;
    }
    let (zg, pg, h) = (params.z_g(), params.p_g(), params.hbar);
    let mut table = Table::new(&COLUMNS);
    for i in 0..rec.len() {
        let o = &rec.obs[i];
        let mut r = blank_row();
        r[0] = rec.times[i] * params.omega;
        if i > 0 {
            r[1] = rec.dy[i] / (rec.times[i] - rec.times[i - 1]) / zg;
        }
        r[2] = o.z / zg;
        r[3] = o.p / pg;
        r[4] = o.jx / h;
        r[5] = o.jy / h;
        r[6] = o.jz / h;
        r[7] = o.czz / (zg * zg);
        r[8] = o.czp / (zg * pg);
        r[9] = o.cpp / (pg * pg);
        r[10] = o.czjz / (h * zg);
        r[11] = o.cpjz / (h * pg);
        r[12] = o.cjzjz / (h * h);
        r[13] = rec.entropy[i];
        r[14] = rec.norm_residual[i];
        if let Some(cl) = classical {
            fill_classical(&mut r, cl, i, params);
        }
        table.rows.push(r.to_vec());
    }
    Ok(table)
}

fn fill_classical(r: &mut [f64; 20], cl: &ClassicalRecord, i: usize, params: &ModelParams) {
    let (zg, pg, h) = (params.z_g(), params.p_g(), params.hbar);
    r[15] = cl.z[i] / zg;
    r[16] = cl.p[i] / pg;
    r[17] = cl.s[i][0] / h;
    r[18] = cl.s[i][1] / h;
    r[19] = cl.s[i][2] / h;
}

pub fn classical_table(cl: &ClassicalRecord, params: &ModelParams) -> Table {
    let mut table = Table::new(&COLUMNS);
    for i in 0..cl.len() {
        let mut r = blank_row();
        r[0] = cl.times[i] * params.omega;
        fill_classical(&mut r, cl, i, params);
        table.rows.push(r.to_vec());
    }
    table
}

/// Moment-closure series: means, the six normalized covariances and the
/// record, optionally with the classical reference.
pub fn cumulant_table(series: &CumulantSeries, classical: Option<&ClassicalRecord>) -> Result<Table> {
    if let Some(cl) = classical {
        check_grid(&series.times, &cl.times)?;
    }
    let params = &series.params;
    let (zg, pg, h) = (params.z_g(), params.p_g(), params.hbar);
    let norm = series.normalized();
    let mut table = Table::new(&COLUMNS);
    for i in 0..series.len() {
        let m = &series.mean[i];
        let c = &norm[i];
        let mut r = blank_row();
        r[0] = series.times[i] * params.omega;
        if i > 0 {
            r[1] = series.dy[i] / (series.times[i] - series.times[i - 1]) / zg;
        }
        r[2] = m[0] / zg;
        r[3] = m[1] / pg;
        r[6] = m[2] / h;
        r[7] = c.czz;
        r[8] = c.czp;
        r[9] = c.cpp;
        r[10] = c.czjz;
        r[11] = c.cpjz;
        r[12] = c.cjzjz;
        if let Some(cl) = classical {
            fill_classical(&mut r, cl, i, params);
        }
        table.rows.push(r.to_vec());
    }
    Ok(table)
}

fn check_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9 * y.abs().max(1.0)) {
        return Err(Error::GridMismatch(format!("{} samples against {}", a.len(), b.len())));
    }
    Ok(())
}

/// `J_z` populations per sample, one column per `M` ascending.
pub fn histogram_table(rec: &TrajectoryRecord, params: &ModelParams) -> Table {
    let mut columns = vec!["t".to_string()];
    columns.extend(params.spin.m_values().map(|m| format!("M={m}")));
    let rows = rec
        .times
        .iter()
        .zip(&rec.jz_histogram)
        .map(|(t, h)| std::iter::once(t * params.omega).chain(h.iter().copied()).collect())
        .collect();
    Table { columns, rows }
}

/// Pointwise ensemble statistics in the same units as the time series.
pub fn aggregate_table(agg: &Aggregates, params: &ModelParams) -> Table {
    let (zg, pg, h) = (params.z_g(), params.p_g(), params.hbar);
    let mut table =
        Table::new(&["t", "z_mean", "z_var", "p_mean", "p_var", "jz_mean", "jz_var", "entropy_mean", "entropy_var"]);
    for i in 0..agg.times.len() {
        table.rows.push(vec![
            agg.times[i] * params.omega,
            agg.z.mean[i] / zg,
            agg.z.variance[i] / (zg * zg),
            agg.p.mean[i] / pg,
            agg.p.variance[i] / (pg * pg),
            agg.jz.mean[i] / h,
            agg.jz.variance[i] / (h * h),
            agg.entropy.mean[i],
            agg.entropy.variance[i],
        ]);
    }
    table
}

/// One line of the ensemble summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinSummary {
    pub j: f64,
    pub n_max: usize,
    pub n_traj: u64,
    pub n_complete: u64,
    pub failed: Vec<u64>,
    pub up_fraction: f64,
    /// Fraction of complete trajectories with final `|<J_z>| > 0.98 J hbar`.
    pub collapsed_fraction: f64,
    /// Mean peak entropy over `ln(2J + 1)`.
    pub mean_max_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub config: String,
    pub spins: Vec<SpinSummary>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Csv(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Line plot of selected table columns against the first column.
pub fn svg_plot(table: &Table, columns: &[&str], title: &str) -> Result<String> {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];
    let x = table.rows.iter().map(|r| r[0]).collect::<Vec<_>>();
    let series: Vec<(&str, Vec<f64>)> = columns
        .iter()
        .map(|c| table.column(c).map(|v| (*c, v)).ok_or_else(|| Error::Csv(format!("no column '{c}'"))))
        .collect::<Result<_>>()?;
    let finite = |v: &f64| v.is_finite();
    let (x0, x1) = bounds(x.iter().copied().filter(finite));
    let (y0, y1) = bounds(series.iter().flat_map(|(_, v)| v.iter().copied().filter(finite)));
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" text-anchor="middle">{x0:.3}</text>"#, H - PAD + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x1:.3}</text>"#, W - PAD, H - PAD + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#, PAD - 4.0, PAD + 4.0);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD + 4.0,
            PAD + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `<dir>/<stem>_J<j>.<ext>` with `j` written without a trailing `.0`.
pub fn spin_path(dir: &Path, stem: &str, j: f64, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_J{j}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_fixed() {
        let t = Table::new(&COLUMNS);
        assert_eq!(t.to_csv().lines().next().unwrap(), COLUMNS.join(","));
    }

    #[test]
    fn special_values_round_trip() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.rows.push(vec![f64::NAN, f64::INFINITY, -0.0]);
        let back = Table::parse_csv(&t.to_csv()).unwrap();
        assert!(back.rows[0][0].is_nan());
        assert_eq!(back.rows[0][1], f64::INFINITY);
        assert_eq!(back.rows[0][2].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Table::parse_csv("a,b\n1,2\n3\n").is_err());
        assert!(Table::parse_csv("a\nx\n").is_err());
    }

    #[test]
    fn svg_contains_one_polyline_per_column() {
        let mut t = Table::new(&["t", "u", "v"]);
        for i in 0..10 {
            let x = i as f64;
            t.rows.push(vec![x, x.sin(), f64::NAN]);
        }
        let s = svg_plot(&t, &["u", "v"], "a < b").unwrap();
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a &lt; b"));
        assert!(svg_plot(&t, &["w"], "").is_err());
    }

    proptest! {
        #[test]
        fn finite_values_round_trip_bit_for_bit(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 20), 1..20)) {
            let mut t = Table::new(&COLUMNS);
            t.rows = rows;
            let back = Table::parse_csv(&t.to_csv()).unwrap();
            prop_assert_eq!(back.columns, t.columns);
            for (a, b) in back.rows.iter().zip(&t.rows) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
