//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::path::Path;

use crate::continuation::{Branch, BranchPoint};
use crate::error::{Error, Result};
use crate::geometry::QuadratureGrid;

pub const BRANCH_HEADER: [&str; 7] = [
    "lambda",
    "sup_norm",
    "p_norm",
    "min_u",
    "gamma_phi_sup",
    "lemma10_margin",
    "newton_iters",
];

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row of the branch table.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub lambda: f64,
    pub sup_norm: f64,
    pub p_norm: f64,
    pub min_u: f64,
    pub gamma_phi_sup: f64,
    pub lemma10_margin: f64,
    pub newton_iters: usize,
}

impl From<&BranchPoint> for BranchRow {
    fn from(p: &BranchPoint) -> Self {
        BranchRow {
            lambda: p.lambda,
            sup_norm: p.sup_norm,
            p_norm: p.p_norm,
            min_u: p.diagnostics.min_u,
            gamma_phi_sup: p.diagnostics.gamma_phi_sup,
            lemma10_margin: p.diagnostics.lemma10_margin,
            newton_iters: p.diagnostics.newton_iters,
        }
    }
}

/// Rows of a branch: the bifurcation point `(λ₁, 0)` first, then the
/// λ-increasing points.
pub fn branch_rows(branch: &Branch, seed_lemma10_margin: f64) -> Vec<BranchRow> {
    let mut rows = vec![BranchRow {
        lambda: branch.lambda1,
        sup_norm: 0.0,
        p_norm: 0.0,
        min_u: 0.0,
        gamma_phi_sup: 0.0,
        lemma10_margin: seed_lemma10_margin,
        newton_iters: 0,
    }];
    rows.extend(branch.monotone_points().into_iter().map(BranchRow::from));
    rows
}

fn create_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_branch_csv(path: &Path, rows: &[BranchRow]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(BRANCH_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.sup_norm),
            fmt_f64(r.p_norm),
            fmt_f64(r.min_u),
            fmt_f64(r.gamma_phi_sup),
            fmt_f64(r.lemma10_margin),
            r.newton_iters.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_branch_csv(path: &Path) -> Result<Vec<BranchRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv(format!("cannot read {}: {e}", path.display())),
        _ => Error::from(e),
    })?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != BRANCH_HEADER {
        return Err(Error::Csv(format!(
            "{}: expected header {}",
            path.display(),
            BRANCH_HEADER.join(",")
        )));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Csv(format!("not a number: '{s}'"))) };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(BranchRow {
            lambda: num(&rec[0])?,
            sup_norm: num(&rec[1])?,
            p_norm: num(&rec[2])?,
            min_u: num(&rec[3])?,
            gamma_phi_sup: num(&rec[4])?,
            lemma10_margin: num(&rec[5])?,
            newton_iters: rec[6]
                .parse()
                .map_err(|_| Error::Csv(format!("not an integer: '{}'", &rec[6])))?,
        });
    }
    Ok(rows)
}

/// `node, x1[, x2], value` per grid node.
pub fn write_node_csv(path: &Path, grid: &QuadratureGrid, values: &[f64]) -> Result<()> {
    let mut w = create_writer(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((1..=grid.dim).map(|k| format!("x{k}")));
    header.push("value".into());
    w.write_record(&header)?;
    for (i, (x, v)) in grid.nodes.iter().zip(values).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(x.iter().map(|c| fmt_f64(*c)));
        rec.push(fmt_f64(*v));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-point state snapshots: `lambda, u_0, …, u_{n−1}`.
pub fn write_snapshots_csv(path: &Path, points: &[&BranchPoint]) -> Result<()> {
    let mut w = create_writer(path)?;
    let n = points.first().map_or(0, |p| p.u.len());
    let mut header = vec!["lambda".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for p in points {
        let mut rec = vec![fmt_f64(p.lambda)];
        rec.extend(p.u.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Generic table with a header and float columns.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Branch diagram: `λ` against `‖u‖∞`, with the first row taken as the
/// bifurcation point.
pub fn branch_svg(rows: &[BranchRow]) -> Result<String> {
    if rows.len() < 2 {
        return Err(Error::Csv(format!(
            "a branch plot needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let (lmin, lmax) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        (a.min(r.lambda), b.max(r.lambda))
    });
    let smax = rows.iter().fold(0.0f64, |m, r| m.max(r.sup_norm));
    let lspan = if lmax > lmin { lmax - lmin } else { 1.0 };
    let sspan = if smax > 0.0 { smax } else { 1.0 };
    let px = |l: f64| MARGIN + (l - lmin) / lspan * (WIDTH - 2.0 * MARGIN);
    let py = |s: f64| HEIGHT - MARGIN - s / sspan * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">lambda</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">sup |u|</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" text-anchor="middle">{lmin:.4}</text>"#,
        y0 + 18.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{}" text-anchor="middle">{lmax:.4}</text>"#,
        y0 + 18.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{y1}" text-anchor="end">{smax:.4}</text>"#,
        x0 - 6.0
    );

    let pts: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.3},{:.3}", px(r.lambda), py(r.sup_norm)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="branch" fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        pts.join(" ")
    );
    for r in &rows[1..] {
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="2.5" fill="steelblue" data-lambda="{}" data-sup="{}"/>"#,
            px(r.lambda),
            py(r.sup_norm),
            fmt_f64(r.lambda),
            fmt_f64(r.sup_norm)
        );
    }
    let b = &rows[0];
    let _ = writeln!(
        out,
        r#"<circle class="bifurcation" cx="{:.3}" cy="{:.3}" r="5" fill="none" stroke="crimson" stroke-width="2" data-lambda="{}" data-sup="{}"/>"#,
        px(b.lambda),
        py(b.sup_norm),
        fmt_f64(b.lambda),
        fmt_f64(b.sup_norm)
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn export_plot(branch_csv: &Path, out_svg: &Path) -> Result<()> {
    let rows = read_branch_csv(branch_csv)?;
    let svg = branch_svg(&rows)?;
    std::fs::write(out_svg, svg).map_err(|e| Error::io(out_svg, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(l: f64, s: f64) -> BranchRow {
        BranchRow {
            lambda: l,
            sup_norm: s,
            p_norm: s,
            min_u: s,
            gamma_phi_sup: 0.1,
            lemma10_margin: f64::NAN,
            newton_iters: 3,
        }
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let rows = vec![row(1.0, 0.0), row(1.0 + 1.0 / 3.0, std::f64::consts::E)];
        write_branch_csv(&p, &rows).unwrap();
        let back = read_branch_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].lambda, rows[1].lambda);
        assert_eq!(back[1].sup_norm, rows[1].sup_norm);
        assert!(back[0].lemma10_margin.is_nan());
    }

    #[test]
    fn two_rows_make_one_segment() {
        let svg = branch_svg(&[row(1.0, 0.0), row(2.0, 1.0)]).unwrap();
        let poly = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        let pts = poly.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(pts.split(' ').count(), 2);
        assert!(svg.contains(r#"class="bifurcation""#));
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(branch_svg(&[]).is_err());
        assert!(branch_svg(&[row(1.0, 0.0)]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        assert!(export_plot(&p, &dir.path().join("o.svg")).is_err());
        assert!(export_plot(&dir.path().join("missing.csv"), &dir.path().join("o.svg")).is_err());
    }

    #[test]
    fn svg_is_deterministic() {
        let rows = vec![row(1.0, 0.0), row(1.5, 0.7), row(2.0, 1.0)];
        assert_eq!(branch_svg(&rows).unwrap(), branch_svg(&rows).unwrap());
    }
}
