//! Entropic semi-discrete transport: smoothed Laguerre cells over a
//! continuous density, mass vector and Jacobian by triangle quadrature, and
//! a Newton ascent on the smooth regularized dual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{PolygonalDensity, SiteSet, Vec2};
use crate::mat::Mat;
use crate::measures::Potential;
use crate::semidiscrete::{newton_driver, MassMap, NewtonConfig, NewtonResult};

/// Below this regularization the softmax boundary layer is thinner than any
/// reasonable refinement; the exact geometry module covers that regime.
pub const MIN_ETA: f64 = 1e-4;

/// Degree-5 Gauss rule on triangles (7 points), optionally applied on a
/// uniform 4^level subdivision of every triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuadratureRule {
    pub level: u32,
}

/// Barycentric abscissae and weights of the 7-point rule; weights sum to 1
/// and scale with the triangle area.
const RULE_DEGREE_5: [([f64; 3], f64); 7] = {
    // sqrt(15) to full f64 precision.
    const S: f64 = 3.872_983_346_207_417;
    const A: f64 = (6.0 + S) / 21.0;
    const B: f64 = (6.0 - S) / 21.0;
    const WA: f64 = (155.0 + S) / 1200.0;
    const WB: f64 = (155.0 - S) / 1200.0;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

impl QuadratureRule {
    pub fn new(level: u32) -> Self {
        QuadratureRule { level }
    }

    pub fn refined(&self) -> Self {
        QuadratureRule { level: self.level + 1 }
    }

    /// Visit every node as (position, area weight, local density).
    pub fn for_each_node(&self, rho: &PolygonalDensity, mut f: impl FnMut(Vec2, f64, f64)) {
        for t in 0..rho.num_triangles() {
            let density = rho.density(t);
            let tri = rho.triangle(t);
            subdivided(&tri, self.level, &mut |sub| {
                let area = 0.5 * (sub[1] - sub[0]).cross(sub[2] - sub[0]).abs();
                for (bary, w) in RULE_DEGREE_5 {
                    let p = sub[0] * bary[0] + sub[1] * bary[1] + sub[2] * bary[2];
                    f(p, w * area, density);
                }
            });
        }
    }
}

fn subdivided(tri: &[Vec2; 3], level: u32, f: &mut impl FnMut(&[Vec2; 3])) {
    if level == 0 {
        f(tri);
        return;
    }
    let [a, b, c] = *tri;
    let ab = (a + b) * 0.5;
    let bc = (b + c) * 0.5;
    let ca = (c + a) * 0.5;
    subdivided(&[a, ab, ca], level - 1, f);
    subdivided(&[ab, b, bc], level - 1, f);
    subdivided(&[ca, bc, c], level - 1, f);
    subdivided(&[ab, bc, ca], level - 1, f);
}

/// Smoothed cell weights at a point: the softmax of -(c(x, y) + psi(y)) / eta
/// over sites, evaluated with max subtraction. Always sums to one.
pub fn smoothed_weights(x: Vec2, sites: &SiteSet, psi: &Potential, eta: f64) -> Vec<f64> {
    assert!(eta > 0.0, "eta must be positive");
    assert_eq!(psi.len(), sites.len());
    let mut logits: Vec<f64> = sites
        .points()
        .iter()
        .zip(psi.as_slice())
        .map(|(y, p)| -(0.5 * (x - *y).norm_sq() + p) / eta)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    logits.iter_mut().for_each(|l| *l /= sum);
    logits
}

/// Pointwise evaluator of the smoothed cell weights for a fixed instance:
/// a partition of unity over the sites at every point of the plane.
pub struct SmoothedCellField<'a> {
    sites: &'a SiteSet,
    psi: Potential,
    eta: f64,
}

impl<'a> SmoothedCellField<'a> {
    pub fn new(sites: &'a SiteSet, psi: Potential, eta: f64) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::Parameter("eta must be > 0".into()));
        }
        if psi.len() != sites.len() {
            return Err(Error::Dimension("psi and sites disagree".into()));
        }
        Ok(SmoothedCellField { sites, psi, eta })
    }

    pub fn eval(&self, x: Vec2) -> Vec<f64> {
        smoothed_weights(x, self.sites, &self.psi, self.eta)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta < MIN_ETA {
        return Err(Error::Parameter(format!(
            "eta = {eta} below the quadrature floor {MIN_ETA}; use the exact geometry instead"
        )));
    }
    Ok(())
}

/// Smoothed cell masses G^eta(psi) by quadrature.
pub fn g_eta(
    sites: &SiteSet,
    psi: &Potential,
    eta: f64,
    rho: &PolygonalDensity,
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    check_eta(eta)?;
    if psi.len() != sites.len() {
        return Err(Error::Dimension("psi and sites disagree".into()));
    }
    let mut g = vec![0.0; sites.len()];
    quad.for_each_node(rho, |x, w, d| {
        if d == 0.0 {
            return;
        }
        let weights = smoothed_weights(x, sites, psi, eta);
        for (gi, wi) in g.iter_mut().zip(&weights) {
            *gi += w * d * wi;
        }
    });
    Ok(g)
}

/// G^eta together with a refinement-based error estimate:
/// the componentwise gap to one more uniform subdivision.
pub fn g_eta_with_estimate(
    sites: &SiteSet,
    psi: &Potential,
    eta: f64,
    rho: &PolygonalDensity,
    quad: &QuadratureRule,
) -> Result<(Vec<f64>, f64)> {
    let coarse = g_eta(sites, psi, eta, rho, quad)?;
    let fine = g_eta(sites, psi, eta, rho, &quad.refined())?;
    let est = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((fine, est))
}

/// Refine until consecutive levels agree within `target` componentwise (or
/// the level cap is hit); returns the chosen rule and the final estimate.
pub fn choose_quadrature(
    sites: &SiteSet,
    psi: &Potential,
    eta: f64,
    rho: &PolygonalDensity,
    start: QuadratureRule,
    target: f64,
    max_level: u32,
) -> Result<(QuadratureRule, f64)> {
    let mut quad = start;
    loop {
        let (_, est) = g_eta_with_estimate(sites, psi, eta, rho, &quad)?;
        if est <= target || quad.level >= max_level {
            return Ok((quad, est));
        }
        quad = quad.refined();
    }
}

/// Jacobian of the smoothed mass map: off-diagonal entries are
/// (1/eta) <w_y w_z, rho>, the diagonal is minus the row sum.
pub fn dg_eta(
    sites: &SiteSet,
    psi: &Potential,
    eta: f64,
    rho: &PolygonalDensity,
    quad: &QuadratureRule,
) -> Result<Mat> {
    check_eta(eta)?;
    let n = sites.len();
    if psi.len() != n {
        return Err(Error::Dimension("psi and sites disagree".into()));
    }
    let mut h = Mat::zeros(n, n);
    quad.for_each_node(rho, |x, w, d| {
        if d == 0.0 {
            return;
        }
        let weights = smoothed_weights(x, sites, psi, eta);
        for y in 0..n {
            for z in y + 1..n {
                let v = w * d * weights[y] * weights[z] / eta;
                h[(y, z)] += v;
                h[(z, y)] += v;
            }
        }
    });
    for y in 0..n {
        let off: f64 = (0..n).filter(|z| *z != y).map(|z| h[(y, z)]).sum();
        h[(y, y)] = -off;
    }
    Ok(h)
}

/// Regularized semi-discrete dual value
/// -eta int log(sum_y exp(-(c + psi)/eta)) rho - <psi, nu> + eta Ent(rho),
/// with the entropy of the piecewise-constant density in closed form.
pub fn dual_value(
    sites: &SiteSet,
    psi: &Potential,
    eta: f64,
    rho: &PolygonalDensity,
    nu: &[f64],
    quad: &QuadratureRule,
) -> Result<f64> {
    check_eta(eta)?;
    let mut integral = 0.0;
    quad.for_each_node(rho, |x, w, d| {
        if d == 0.0 {
            return;
        }
        let mut max = f64::NEG_INFINITY;
        let logits: Vec<f64> = sites
            .points()
            .iter()
            .zip(psi.as_slice())
            .map(|(y, p)| {
                let l = -(0.5 * (x - *y).norm_sq() + p) / eta;
                max = max.max(l);
                l
            })
            .collect();
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        integral += w * d * lse;
    });
    let linear: f64 = psi.as_slice().iter().zip(nu).map(|(p, v)| p * v).sum();
    Ok(-eta * integral - linear + eta * rho.entropy())
}

struct EntropicMassMap<'a> {
    sites: &'a SiteSet,
    rho: &'a PolygonalDensity,
    eta: f64,
    quad: QuadratureRule,
}

impl MassMap for EntropicMassMap<'_> {
    fn len(&self) -> usize {
        self.sites.len()
    }

    fn masses(&self, psi: &Potential) -> Result<Vec<f64>> {
        g_eta(self.sites, psi, self.eta, self.rho, &self.quad)
    }

    fn jacobian(&self, psi: &Potential) -> Result<Mat> {
        dg_eta(self.sites, psi, self.eta, self.rho, &self.quad)
    }
}

#[derive(Debug, Clone)]
pub struct SdEntropicResult {
    /// Mean-zero normalized prices.
    pub psi: Potential,
    pub masses: Vec<f64>,
    pub newton: NewtonResult,
    /// Dual value along the accepted iterates (start included).
    pub dual_values: Vec<f64>,
    /// Componentwise quadrature estimate at the solution.
    pub quad_estimate: f64,
    pub converged: bool,
}

/// Newton ascent on the smooth strictly concave regularized dual. The mass
/// map is positive everywhere, so no mass floor is needed.
pub fn sd_entropic_solve(
    sites: &SiteSet,
    rho: &PolygonalDensity,
    nu: &[f64],
    eta: f64,
    tol: f64,
    quad: QuadratureRule,
) -> Result<SdEntropicResult> {
    check_eta(eta)?;
    if tol <= 0.0 {
        return Err(Error::Parameter("tol must be > 0".into()));
    }
    let map = EntropicMassMap { sites, rho, eta, quad };
    let cfg = NewtonConfig { eta_tol: tol, eps_floor: Some(0.0), max_backtracks: 40, max_iters: 200 };
    let psi0 = Potential::zeros(sites.len());
    let newton = newton_driver(&map, nu, &psi0, 0.0, &cfg)?;

    let mut dual_values = vec![dual_value(sites, &psi0, eta, rho, nu, &quad)?];
    for step in &newton.trace.steps {
        let p = Potential(step.psi_after.clone());
        dual_values.push(dual_value(sites, &p, eta, rho, nu, &quad)?);
    }
    let (_, quad_estimate) = g_eta_with_estimate(sites, &newton.psi, eta, rho, &quad)?;
    Ok(SdEntropicResult {
        psi: newton.psi.clone(),
        masses: newton.masses.clone(),
        converged: newton.converged,
        newton,
        dual_values,
        quad_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_diagram, cell_masses, edge_integrals};
    use crate::oracles::finite_diff_gradient;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_sites() -> SiteSet {
        SiteSet::new(vec![Vec2::new(0.25, 0.5), Vec2::new(0.75, 0.5)]).unwrap()
    }

    fn random_sites(rng: &mut ChaCha8Rng, n: usize) -> SiteSet {
        SiteSet::new(
            (0..n)
                .map(|_| Vec2::new(0.1 + 0.8 * rng.gen::<f64>(), 0.1 + 0.8 * rng.gen::<f64>()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn quadrature_weights_sum_to_area_and_integrate_degree_5() {
        let rho = PolygonalDensity::unit_square();
        for level in 0..3 {
            let quad = QuadratureRule::new(level);
            let mut total = 0.0;
            quad.for_each_node(&rho, |_, w, _| total += w);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
            // Exact through degree 5 on the square: int x^p y^q = 1/((p+1)(q+1)).
            for (p, q) in [(1, 0), (2, 1), (3, 2), (5, 0), (2, 3), (4, 1)] {
                let mut val = 0.0;
                quad.for_each_node(&rho, |x, w, _| {
                    val += w * x.x.powi(p) * x.y.powi(q);
                });
                let exact = 1.0 / ((p + 1) as f64 * (q + 1) as f64);
                assert_abs_diff_eq!(val, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn weights_partition_of_unity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sites = two_sites();
        // Equidistant point: both sites get 1/2 at any eta.
        let w = smoothed_weights(Vec2::new(0.5, 0.8), &sites, &Potential::zeros(2), 0.05);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-14);
        // Random points: the weights always sum to one.
        let many = random_sites(&mut rng, 7);
        let psi = Potential((0..7).map(|_| rng.gen::<f64>() - 0.5).collect());
        for _ in 0..50 {
            let x = Vec2::new(rng.gen(), rng.gen());
            let w = smoothed_weights(x, &many, &psi, 0.07);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(w.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn weights_sharpen_to_indicator_deep_inside_a_cell() {
        let sites = two_sites();
        let x = Vec2::new(0.1, 0.5); // well inside the first cell
        let mut last = 0.0;
        for &eta in &[0.2, 0.1, 0.05, 0.01, 0.001] {
            let w = smoothed_weights(x, &sites, &Potential::zeros(2), eta);
            assert!(w[0] >= last);
            last = w[0];
        }
        assert!(last > 1.0 - 1e-10);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]

        /// The weights are a partition of unity anywhere in the plane. Strict
        /// interior membership additionally needs the logit gaps below the
        /// exp underflow threshold, which eta >= 0.05 guarantees on this
        /// bounded configuration.
        #[test]
        fn weights_partition_of_unity_everywhere(
            x in -2.0f64..3.0,
            y in -2.0f64..3.0,
            psi in proptest::collection::vec(-1.0f64..1.0, 3),
            eta in 1e-3f64..0.5,
        ) {
            use proptest::prelude::prop_assert;
            let sites = SiteSet::new(vec![
                Vec2::new(0.2, 0.25),
                Vec2::new(0.8, 0.25),
                Vec2::new(0.5, 0.8),
            ]).unwrap();
            let w = smoothed_weights(Vec2::new(x, y), &sites, &Potential(psi), eta);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
            prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
            if eta >= 0.05 {
                prop_assert!(w.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
        }
    }

    #[test]
    fn field_is_a_partition_of_unity_at_every_quadrature_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 6);
        let psi = Potential((0..6).map(|_| rng.gen::<f64>() - 0.5).collect());
        let field = SmoothedCellField::new(&sites, psi, 0.05).unwrap();
        QuadratureRule::new(2).for_each_node(&rho, |x, _, _| {
            let w = field.eval(x);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        });
    }

    #[test]
    fn g_eta_total_mass_is_one_for_piecewise_constant_density() {
        // The partition of unity makes the quadrature of sum_y G_y the
        // quadrature of rho itself, which is exact here.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 5);
        let psi = Potential((0..5).map(|_| 0.1 * rng.gen::<f64>()).collect());
        for level in 0..3 {
            let g = g_eta(&sites, &psi, 0.1, &rho, &QuadratureRule::new(level)).unwrap();
            assert_abs_diff_eq!(g.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn choose_quadrature_refines_until_target() {
        let rho = PolygonalDensity::unit_square();
        let sites = two_sites();
        let psi = Potential(vec![0.01, -0.01]);
        let (quad, est) =
            choose_quadrature(&sites, &psi, 0.1, &rho, QuadratureRule::new(0), 1e-6, 8)
                .unwrap();
        assert!(est <= 1e-6, "estimate {est} at level {}", quad.level);
        assert!(quad.level <= 8);
    }

    #[test]
    fn g_eta_symmetric_split_is_exact_at_any_eta() {
        let rho = PolygonalDensity::unit_square();
        let sites = two_sites();
        for &eta in &[0.2, 0.05, 0.01] {
            let g = g_eta(&sites, &Potential::zeros(2), eta, &rho, &QuadratureRule::new(2))
                .unwrap();
            assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(g[0] + g[1], 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn g_eta_approaches_exact_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 5);
        let psi = Potential((0..5).map(|_| 0.05 * rng.gen::<f64>()).collect());
        let exact = cell_masses(&build_diagram(&sites, &psi, &rho).unwrap(), &rho);
        let quad = QuadratureRule::new(5);
        let mut gaps = Vec::new();
        for &eta in &[0.2, 0.1, 0.05] {
            let g = g_eta(&sites, &psi, eta, &rho, &quad).unwrap();
            let gap = g
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps not decreasing: {gaps:?}");
    }

    #[test]
    fn g_eta_uniformly_lipschitz_across_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 4);
        let quad = QuadratureRule::new(4);
        // Calibrated constant for the unit square; independent of eta.
        let lip = 4.0 * sites.len() as f64 * rho.diameter() / sites.min_pairwise_distance();
        for &eta in &[0.2, 0.1, 0.05] {
            for _ in 0..10 {
                let a = Potential((0..4).map(|_| 0.2 * rng.gen::<f64>()).collect());
                let b = Potential((0..4).map(|_| 0.2 * rng.gen::<f64>()).collect());
                let ga = g_eta(&sites, &a, eta, &rho, &quad).unwrap();
                let gb = g_eta(&sites, &b, eta, &rho, &quad).unwrap();
                let dg = ga
                    .iter()
                    .zip(&gb)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                let dp = a
                    .as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(dg <= lip * dp + 1e-12, "ratio {}", dg / dp);
            }
        }
    }

    #[test]
    fn g_eta_rejects_tiny_eta() {
        let rho = PolygonalDensity::unit_square();
        let sites = two_sites();
        assert!(g_eta(&sites, &Potential::zeros(2), 1e-5, &rho, &QuadratureRule::new(1)).is_err());
    }

    #[test]
    fn dg_eta_annihilates_constants_and_is_negative_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 5);
        let psi = Potential((0..5).map(|_| 0.1 * rng.gen::<f64>()).collect());
        let h = dg_eta(&sites, &psi, 0.1, &rho, &QuadratureRule::new(3)).unwrap();
        for s in h.row_sums() {
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-13);
        }
        for y in 0..5 {
            for z in 0..5 {
                assert_abs_diff_eq!(h[(y, z)], h[(z, y)], epsilon = 1e-15);
                if y != z {
                    assert!(h[(y, z)] >= 0.0);
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
        for ev in eig.eigenvalues.iter() {
            assert!(*ev <= 1e-12);
        }
    }

    #[test]
    fn dg_eta_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 5);
        let eta = 0.1;
        let quad = QuadratureRule::new(4);
        let psi = Potential((0..5).map(|_| 0.1 * rng.gen::<f64>()).collect());
        let h = dg_eta(&sites, &psi, eta, &rho, &quad).unwrap();
        for y in 0..5 {
            let fd = finite_diff_gradient(
                |p| g_eta(&sites, p, eta, &rho, &quad).unwrap()[y],
                &psi,
                1e-6,
            );
            let scale = fd.iter().map(|v| v.abs()).fold(1e-12, f64::max);
            for z in 0..5 {
                assert!(
                    (h[(y, z)] - fd[z]).abs() / scale <= 1e-5,
                    "H[{y},{z}] = {} vs fd {}",
                    h[(y, z)],
                    fd[z]
                );
            }
        }
    }

    #[test]
    fn dg_eta_converges_to_exact_edge_integrals() {
        // The smoothing width transverse to an edge is eta / |y - z|, so the
        // limit is only visible once sites are well separated relative to eta.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rho = PolygonalDensity::unit_square();
        let sites = SiteSet::new(vec![
            Vec2::new(0.2, 0.25),
            Vec2::new(0.8, 0.25),
            Vec2::new(0.5, 0.8),
        ])
        .unwrap();
        let psi = Potential((0..3).map(|_| 0.04 * rng.gen::<f64>() - 0.02).collect());
        let diag = build_diagram(&sites, &psi, &rho).unwrap();
        let exact = edge_integrals(&diag, &sites, &rho).unwrap();
        let mut last = f64::INFINITY;
        for (eta, level) in [(0.2, 5), (0.1, 5), (0.05, 6)] {
            let h = dg_eta(&sites, &psi, eta, &rho, &QuadratureRule::new(level)).unwrap();
            let gap = (0..3)
                .flat_map(|y| (0..3).map(move |z| (y, z)))
                .map(|(y, z)| (h[(y, z)] - exact[(y, z)]).abs())
                .fold(0.0, f64::max);
            assert!(gap < last, "gap {gap} did not shrink (prev {last})");
            last = gap;
        }
        assert!(last <= 5e-2, "final gap {last}");
    }

    #[test]
    fn solve_symmetric_instance_returns_zero_potential() {
        let rho = PolygonalDensity::unit_square();
        let sites = two_sites();
        let out = sd_entropic_solve(&sites, &rho, &[0.5, 0.5], 0.1, 1e-10, QuadratureRule::new(4))
            .unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.psi[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.psi[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn solve_dual_value_is_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let rho = PolygonalDensity::unit_square();
        let sites = random_sites(&mut rng, 5);
        let nu = vec![0.2; 5];
        let out =
            sd_entropic_solve(&sites, &rho, &nu, 0.1, 1e-9, QuadratureRule::new(4)).unwrap();
        assert!(out.converged);
        for pair in out.dual_values.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "dual value dropped: {pair:?}");
        }
    }

    #[test]
    fn small_eta_solution_approaches_unregularized_limit() {
        // nu = (1/4, 3/4): the exact solution is (1/16, -1/16) mean-zero.
        let rho = PolygonalDensity::unit_square();
        let sites = two_sites();
        let nu = [0.25, 0.75];
        let out = sd_entropic_solve(&sites, &rho, &nu, 1e-3, 1e-10, QuadratureRule::new(7))
            .unwrap();
        assert!(out.converged);
        assert!((out.psi[0] - 1.0 / 16.0).abs() <= 1e-2, "psi0 = {}", out.psi[0]);
        assert!((out.psi[1] + 1.0 / 16.0).abs() <= 1e-2, "psi1 = {}", out.psi[1]);
    }
}
