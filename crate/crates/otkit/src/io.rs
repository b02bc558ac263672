//! JSON document schemas and CSV trace output for the CLI and FFI surfaces.
//!
//! Formats are documented in docs/formats.md. JSON parse failures carry the
//! offending file plus serde's line/column context.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PolygonalDensity, SiteSet, Vec2};
use crate::mat::Mat;
use crate::measures::{CostMatrix, DiscreteMeasure, Potential};

#[derive(Debug, Serialize, Deserialize)]
pub struct CostDoc {
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DensityDoc {
    pub polygon: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub densities: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SitesDoc {
    pub sites: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PsiDoc {
    pub psi: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct AssignOutput {
    pub sigma: Vec<usize>,
    pub psi: Vec<f64>,
    /// Mean assignment cost (1/N) sum_x c(x, sigma(x)).
    pub cost: f64,
}

#[derive(Debug, Serialize)]
pub struct PlanOutput {
    pub plan: Vec<Vec<f64>>,
    pub row_residual: f64,
    pub col_residual: f64,
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        source,
        context: Some(path.display().to_string()),
    })
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    let doc: DiscreteMeasure = parse_json(path)?;
    match doc.points {
        Some(points) => DiscreteMeasure::with_points(points, doc.weights),
        None => DiscreteMeasure::new(doc.weights),
    }
}

pub fn load_cost(path: &Path) -> Result<CostMatrix> {
    let doc: CostDoc = parse_json(path)?;
    CostMatrix::new(Mat::from_rows(doc.matrix)?)
}

pub fn load_density(path: &Path) -> Result<PolygonalDensity> {
    let doc: DensityDoc = parse_json(path)?;
    PolygonalDensity::new(
        doc.polygon.into_iter().map(Vec2::from).collect(),
        doc.triangles,
        doc.densities,
    )
}

pub fn load_sites(path: &Path) -> Result<SiteSet> {
    let doc: SitesDoc = parse_json(path)?;
    SiteSet::new(doc.sites.into_iter().map(Vec2::from).collect())
}

pub fn load_psi(path: &Path) -> Result<Potential> {
    let doc: PsiDoc = parse_json(path)?;
    Potential::new(doc.psi)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One row of the uniform trace schema shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub residual_inf: f64,
    pub step_or_eps: f64,
}

/// Render trace rows as CSV. The wall_ns column is pinned to zero so that
/// identical inputs produce byte-identical files; pass timings out of band.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iter,residual_inf,step_or_eps,wall_ns\n");
    for row in rows {
        out.push_str(&format!("{},{},{},0\n", row.iter, row.residual_inf, row.step_or_eps));
    }
    out
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    fs::write(path, trace_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn measure_roundtrip() {
        let f = tmp(r#"{"points": [[0.0, 0.0], [1.0, 0.5]], "weights": [0.5, 0.5]}"#);
        let m = load_measure(f.path()).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.points.is_some());
        let g = tmp(r#"{"weights": [0.25, 0.25, 0.5]}"#);
        assert_eq!(load_measure(g.path()).unwrap().len(), 3);
    }

    #[test]
    fn malformed_json_reports_location_and_file() {
        let f = tmp(r#"{"matrix": [[0, 1], [1,]]}"#);
        let err = load_cost(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "missing location: {msg}");
        assert!(msg.contains(&f.path().display().to_string()), "missing file: {msg}");
    }

    #[test]
    fn density_doc_loads() {
        let f = tmp(
            r#"{"polygon": [[0,0],[1,0],[1,1],[0,1]],
                "triangles": [[0,1,2],[0,2,3]],
                "densities": [1.0, 1.0]}"#,
        );
        let d = load_density(f.path()).unwrap();
        assert_eq!(d.num_triangles(), 2);
    }

    #[test]
    fn trace_csv_is_stable() {
        let rows = vec![
            TraceRow { iter: 0, residual_inf: 0.5, step_or_eps: 1.0 },
            TraceRow { iter: 1, residual_inf: 0.25, step_or_eps: 0.5 },
        ];
        assert_eq!(
            trace_csv(&rows),
            "iter,residual_inf,step_or_eps,wall_ns\n0,0.5,1,0\n1,0.25,0.5,0\n"
        );
    }
}
