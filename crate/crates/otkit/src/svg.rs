//! SVG rendering of Laguerre diagrams: cells filled by mass, shared edges
//! stroked, sites marked. The domain bounding box maps onto a 1000 x 1000
//! viewport with the y axis flipped.

use crate::geometry::{LaguerreDiagram, PolygonalDensity, SiteSet, Vec2};

const VIEW: f64 = 1000.0;

struct Frame {
    min: Vec2,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(boundary: &[Vec2]) -> Frame {
        let min = Vec2::new(
            boundary.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            boundary.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        );
        let max = Vec2::new(
            boundary.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            boundary.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        let span = (max.x - min.x).max(max.y - min.y).max(1e-12);
        Frame { min, scale: VIEW / span, height: (max.y - min.y) * (VIEW / span) }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, self.height - (p.y - self.min.y) * self.scale)
    }
}

fn path_of(frame: &Frame, polygon: &[Vec2]) -> String {
    let mut d = String::new();
    for (k, v) in polygon.iter().enumerate() {
        let (x, y) = frame.map(*v);
        d.push_str(if k == 0 { "M" } else { "L" });
        d.push_str(&format!("{x:.3},{y:.3}"));
    }
    d.push('Z');
    d
}

fn fill_of(mass: f64, max_mass: f64) -> String {
    // White for empty cells up to a saturated blue at the largest mass.
    let t = if max_mass > 0.0 { (mass / max_mass).clamp(0.0, 1.0) } else { 0.0 };
    let r = (255.0 - t * (255.0 - 70.0)).round() as u8;
    let g = (255.0 - t * (255.0 - 130.0)).round() as u8;
    let b = (255.0 - t * (255.0 - 180.0)).round() as u8;
    format!("rgb({r},{g},{b})")
}

/// Render a diagram with per-cell masses as a standalone SVG document.
pub fn render_diagram(
    diag: &LaguerreDiagram,
    sites: &SiteSet,
    rho: &PolygonalDensity,
    masses: &[f64],
) -> String {
    let frame = Frame::fit(rho.boundary());
    let max_mass = masses.iter().copied().fold(0.0, f64::max);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {VIEW} {:.3}\">\n",
        frame.height
    ));
    for i in 0..diag.num_cells() {
        let cell = diag.cell(i);
        if cell.len() < 3 {
            continue;
        }
        svg.push_str(&format!(
            "  <path d=\"{}\" fill=\"{}\" stroke=\"none\"/>\n",
            path_of(&frame, cell),
            fill_of(masses.get(i).copied().unwrap_or(0.0), max_mass),
        ));
    }
    for edge in diag.edges() {
        let (x1, y1) = frame.map(edge.from);
        let (x2, y2) = frame.map(edge.to);
        svg.push_str(&format!(
            "  <line x1=\"{x1:.3}\" y1=\"{y1:.3}\" x2=\"{x2:.3}\" y2=\"{y2:.3}\" \
             stroke=\"black\" stroke-width=\"2\"/>\n"
        ));
    }
    svg.push_str(&format!(
        "  <path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"3\"/>\n",
        path_of(&frame, rho.boundary())
    ));
    for site in sites.points() {
        let (cx, cy) = frame.map(*site);
        svg.push_str(&format!(
            "  <circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"6\" fill=\"crimson\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_diagram, cell_masses};
    use crate::measures::Potential;

    #[test]
    fn render_contains_one_polygon_per_nonempty_cell() {
        let rho = PolygonalDensity::unit_square();
        let sites = SiteSet::new(vec![
            Vec2::new(0.25, 0.5),
            Vec2::new(0.75, 0.5),
            Vec2::new(0.5, 0.9),
        ])
        .unwrap();
        let diag = build_diagram(&sites, &Potential::zeros(3), &rho).unwrap();
        let masses = cell_masses(&diag, &rho);
        let svg = render_diagram(&diag, &sites, &rho, &masses);
        let cells = svg.matches("<path d=\"M").count() - 1; // minus the boundary outline
        assert_eq!(cells, 3);
        assert!(svg.contains("<circle"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn render_is_deterministic() {
        let rho = PolygonalDensity::unit_square();
        let sites = SiteSet::new(vec![Vec2::new(0.3, 0.3), Vec2::new(0.7, 0.6)]).unwrap();
        let diag = build_diagram(&sites, &Potential::zeros(2), &rho).unwrap();
        let masses = cell_masses(&diag, &rho);
        let a = render_diagram(&diag, &sites, &rho, &masses);
        let b = render_diagram(&diag, &sites, &rho, &masses);
        assert_eq!(a, b);
    }
}
