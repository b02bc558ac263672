//! Solvers for the semi-discrete mass balance G(psi) = nu: the
//! Oliker-Prussner coordinate-decrement scheme and a damped Newton method.
//!
//! Both drive the exact Laguerre geometry of [`crate::geometry`]; the Newton
//! driver is generic over the mass map so the entropic variant can reuse it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    build_diagram, cell_masses, cost_oscillation, edge_integrals, single_cell_mass,
    PolygonalDensity, SiteSet,
};
use crate::mat::Mat;
use crate::measures::Potential;

/// Configuration of the Oliker-Prussner run.
#[derive(Debug, Clone)]
pub struct OPConfig {
    /// Mass tolerance delta; the final masses satisfy |G - nu|_inf <= delta.
    pub delta: f64,
    /// Anchor site whose price is pinned to zero.
    pub anchor: usize,
    /// Cost oscillation R over domain x sites; initial price of non-anchor
    /// sites and the decrement bracket radius.
    pub r: f64,
    /// Step budget; exhausting it yields a non-converged result.
    pub max_steps: usize,
}

impl OPConfig {
    pub fn new(delta: f64, anchor: usize, r: f64) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::Parameter("delta must be > 0".into()));
        }
        if r < 0.0 {
            return Err(Error::Parameter("R must be >= 0".into()));
        }
        Ok(OPConfig { delta, anchor, r, max_steps: 0 })
    }

    /// Convenience constructor computing R from the instance.
    pub fn for_instance(
        delta: f64,
        anchor: usize,
        rho: &PolygonalDensity,
        sites: &SiteSet,
    ) -> Result<Self> {
        Self::new(delta, anchor, cost_oscillation(rho, sites))
    }

    fn budget(&self, n: usize) -> usize {
        if self.max_steps > 0 {
            self.max_steps
        } else {
            // Generous multiple of the N^3 / delta convergence bound.
            let bound = 10.0 * (n as f64).powi(3) / self.delta;
            (bound.ceil() as usize).max(1_000)
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OpStep {
    pub site: usize,
    pub decrement: f64,
    /// Mass of the decremented cell after the step.
    pub mass_after: f64,
    /// Residual |G - nu|_inf after the step.
    pub residual_inf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpTrace {
    pub initial_psi: Vec<f64>,
    pub steps: Vec<OpStep>,
}

#[derive(Debug, Clone)]
pub struct OpResult {
    pub psi: Potential,
    pub masses: Vec<f64>,
    pub trace: OpTrace,
    pub converged: bool,
}

fn validate_nu(nu: &[f64], n: usize) -> Result<()> {
    if nu.len() != n {
        return Err(Error::Dimension(format!("{} targets for {} sites", nu.len(), n)));
    }
    if nu.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Parameter("all target masses must be > 0".into()));
    }
    let total: f64 = nu.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Parameter(format!("target masses sum to {total}, expected 1")));
    }
    Ok(())
}

/// Smallest decrement t of coordinate `y` that lifts its cell mass to the
/// target: t_y ~ min { t >= 0 | G_y(psi - t 1_y) >= nu_y }.
///
/// The mass is nondecreasing in t, so a bracket on [0, 2R] followed by
/// bisection applies. The returned decrement lands the mass in
/// [nu_y, nu_y + tol] with tol = min(delta/4, delta/(4N)): one-sided, so a
/// decremented coordinate never remains in violation, and tight enough that
/// overshoots accumulated over all coordinates stay below delta at the
/// anchor.
pub fn find_decrement(
    sites: &SiteSet,
    rho: &PolygonalDensity,
    psi: &Potential,
    y: usize,
    nu_y: f64,
    cfg: &OPConfig,
) -> Result<f64> {
    let n = sites.len();
    let tol = (cfg.delta / 4.0).min(cfg.delta / (4.0 * n as f64));
    let mass_at = |t: f64| -> Result<f64> {
        let mut shifted = psi.clone();
        shifted[y] -= t;
        single_cell_mass(sites, &shifted, rho, y)
    };
    if mass_at(0.0)? >= nu_y {
        return Ok(0.0);
    }
    let hi0 = 2.0 * cfg.r;
    let mass_hi = mass_at(hi0)?;
    if mass_hi < nu_y {
        return Err(Error::Infeasible(format!(
            "G_{y} reaches only {mass_hi} at decrement 2R = {hi0}, target {nu_y}"
        )));
    }
    let (mut lo, mut hi) = (0.0, hi0);
    let mut mass_hi = mass_hi;
    for _ in 0..300 {
        if mass_hi - nu_y <= tol {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        let m = mass_at(mid)?;
        if m >= nu_y {
            hi = mid;
            mass_hi = m;
        } else {
            lo = mid;
        }
    }
    Err(Error::NotConverged(format!(
        "decrement bisection stalled for site {y}: mass {mass_hi}, target {nu_y}"
    )))
}

/// Oliker-Prussner coordinate decrements.
///
/// Prices start at 0 on the anchor and R elsewhere, so the anchor initially
/// holds all the mass; each step picks the lowest-index starved coordinate
/// (G_y <= nu_y - delta/N) and lowers its price until its cell mass reaches
/// the target. Prices only ever decrease after initialization and stay in
/// [-R, R].
pub fn oliker_prussner(
    sites: &SiteSet,
    rho: &PolygonalDensity,
    nu: &[f64],
    cfg: &OPConfig,
) -> Result<OpResult> {
    let n = sites.len();
    validate_nu(nu, n)?;
    if cfg.anchor >= n {
        return Err(Error::Parameter(format!("anchor {} out of range", cfg.anchor)));
    }
    let min_nu = nu.iter().copied().fold(f64::INFINITY, f64::min);
    if cfg.delta >= min_nu {
        return Err(Error::Parameter(format!(
            "delta {} must be below the smallest target mass {min_nu}",
            cfg.delta
        )));
    }

    let mut psi = Potential(vec![cfg.r; n]);
    psi[cfg.anchor] = 0.0;
    let mut trace = OpTrace { initial_psi: psi.as_slice().to_vec(), steps: Vec::new() };

    let threshold = cfg.delta / n as f64;
    let budget = cfg.budget(n);
    let mut converged = false;
    let mut masses = current_masses(sites, &psi, rho)?;
    for _ in 0..budget {
        let starved = (0..n)
            .find(|&y| y != cfg.anchor && masses[y] <= nu[y] - threshold);
        let Some(y) = starved else {
            converged = true;
            break;
        };
        let t = find_decrement(sites, rho, &psi, y, nu[y], cfg)?;
        psi[y] -= t;
        masses = current_masses(sites, &psi, rho)?;
        let residual_inf = masses
            .iter()
            .zip(nu)
            .map(|(g, v)| (g - v).abs())
            .fold(0.0, f64::max);
        trace.steps.push(OpStep { site: y, decrement: t, mass_after: masses[y], residual_inf });
    }
    Ok(OpResult { psi, masses, trace, converged })
}

fn current_masses(
    sites: &SiteSet,
    psi: &Potential,
    rho: &PolygonalDensity,
) -> Result<Vec<f64>> {
    let diag = build_diagram(sites, psi, rho)?;
    Ok(cell_masses(&diag, rho))
}

/// Configuration of the damped Newton run.
#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Infinity-norm residual target.
    pub eta_tol: f64,
    /// Mass floor eps. `None` computes 1/2 min(min_y G_y(psi0), min_y nu_y)
    /// at the start; `Some(0.0)` disables the floor (entropic mass maps are
    /// strictly positive everywhere).
    pub eps_floor: Option<f64>,
    pub max_backtracks: u32,
    pub max_iters: usize,
}

impl NewtonConfig {
    pub fn new(eta_tol: f64) -> Result<Self> {
        if eta_tol <= 0.0 {
            return Err(Error::Parameter("eta_tol must be > 0".into()));
        }
        Ok(NewtonConfig { eta_tol, eps_floor: None, max_backtracks: 40, max_iters: 100 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonStep {
    /// Number of halvings l; the accepted step is 2^-l v.
    pub backtracks: u32,
    pub step_scale: f64,
    pub residual_before_l2: f64,
    pub residual_after_l2: f64,
    pub residual_after_inf: f64,
    /// Iterate after the step, for post-hoc diagnostics.
    pub psi_after: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonTrace {
    pub eps_floor: f64,
    pub steps: Vec<NewtonStep>,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    /// Mean-zero normalized prices.
    pub psi: Potential,
    pub masses: Vec<f64>,
    pub trace: NewtonTrace,
    pub converged: bool,
}

/// A differentiable mass map psi -> G(psi) with Jacobian; the Newton driver
/// is generic over this.
#[allow(clippy::len_without_is_empty)]
pub trait MassMap {
    /// Number of sites, i.e. the dimension of the price vector.
    fn len(&self) -> usize;
    fn masses(&self, psi: &Potential) -> Result<Vec<f64>>;
    fn jacobian(&self, psi: &Potential) -> Result<Mat>;
}

/// Exact Laguerre mass map.
pub struct ExactMassMap<'a> {
    pub sites: &'a SiteSet,
    pub rho: &'a PolygonalDensity,
}

impl MassMap for ExactMassMap<'_> {
    fn len(&self) -> usize {
        self.sites.len()
    }

    fn masses(&self, psi: &Potential) -> Result<Vec<f64>> {
        current_masses(self.sites, psi, self.rho)
    }

    fn jacobian(&self, psi: &Potential) -> Result<Mat> {
        let diag = build_diagram(self.sites, psi, self.rho)?;
        edge_integrals(&diag, self.sites, self.rho)
    }
}

/// Solve H v = r with sum v = 0, for a symmetric H with zero row sums and
/// rank N-1. The anchor coordinate is pinned to zero, the reduced
/// negative-definite system is factored directly (Cholesky of -H), and the
/// solution is shifted to mean zero. The right-hand side is projected onto
/// mean zero first; a consistent r lies there up to rounding.
pub fn solve_linear_system(h: &Mat, r: &[f64], anchor: usize) -> Result<Vec<f64>> {
    let n = h.nrows();
    if h.ncols() != n || r.len() != n {
        return Err(Error::Dimension("Hessian and residual shapes disagree".into()));
    }
    let r_mean = r.iter().sum::<f64>() / n as f64;
    let r0: Vec<f64> = r.iter().map(|v| v - r_mean).collect();

    let keep: Vec<usize> = (0..n).filter(|&i| i != anchor).collect();
    let m = keep.len();
    if m == 0 {
        return Ok(vec![0.0]);
    }
    let mut reduced = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            reduced[(a, b)] = -h[(i, j)];
        }
    }
    let rhs = nalgebra::DVector::<f64>::from_iterator(m, keep.iter().map(|&i| -r0[i]));
    let chol = nalgebra::Cholesky::new(reduced.clone()).ok_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(reduced);
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Error::Singular(format!(
            "reduced system not positive definite; eigenvalue range [{min:e}, {max:e}]"
        ))
    })?;
    let sol = chol.solve(&rhs);

    let mut v = vec![0.0; n];
    for (a, &i) in keep.iter().enumerate() {
        v[i] = sol[a];
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);

    // Shifting by the kernel direction leaves H v unchanged.
    let mut err = 0.0;
    let mut rnorm = 0.0;
    for i in 0..n {
        let hv: f64 = (0..n).map(|j| h[(i, j)] * v[j]).sum();
        err += (hv - r0[i]).powi(2);
        rnorm += r0[i].powi(2);
    }
    if err.sqrt() > 1e-9 * rnorm.sqrt() {
        return Err(Error::Singular(format!(
            "linear solve residual {:e} exceeds 1e-9 of |r| = {:e}",
            err.sqrt(),
            rnorm.sqrt()
        )));
    }
    Ok(v)
}

/// Damped Newton iteration on G(psi) = nu for any mass map.
///
/// Each step solves the reduced Newton system and halves the step until the
/// mass floor is kept and the residual shrinks by at least 1 - 2^-(l+1).
pub fn newton_driver(
    map: &impl MassMap,
    nu: &[f64],
    psi0: &Potential,
    eps_floor: f64,
    cfg: &NewtonConfig,
) -> Result<NewtonResult> {
    let n = map.len();
    validate_nu(nu, n)?;
    if psi0.len() != n {
        return Err(Error::Dimension("psi0 has wrong length".into()));
    }
    let mut psi = psi0.clone();
    let mut masses = map.masses(&psi)?;
    let mut trace = NewtonTrace { eps_floor, steps: Vec::new() };
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let res: Vec<f64> = nu.iter().zip(&masses).map(|(v, g)| v - g).collect();
        let res_inf = res.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if res_inf < cfg.eta_tol {
            converged = true;
            break;
        }
        let res_l2 = res.iter().map(|x| x * x).sum::<f64>().sqrt();
        let h = map.jacobian(&psi)?;
        let v = solve_linear_system(&h, &res, 0)?;

        let mut accepted = None;
        for l in 0..=cfg.max_backtracks {
            let scale = 0.5f64.powi(l as i32);
            let trial = Potential(
                psi.as_slice().iter().zip(&v).map(|(p, d)| p + scale * d).collect(),
            );
            let trial_masses = map.masses(&trial)?;
            let min_mass = trial_masses.iter().copied().fold(f64::INFINITY, f64::min);
            if min_mass < eps_floor {
                continue;
            }
            let trial_l2 = trial_masses
                .iter()
                .zip(nu)
                .map(|(g, v)| (g - v).powi(2))
                .sum::<f64>()
                .sqrt();
            if trial_l2 <= (1.0 - 0.5 * scale) * res_l2 {
                accepted = Some((l, scale, trial, trial_masses, trial_l2));
                break;
            }
        }
        let Some((l, scale, trial, trial_masses, trial_l2)) = accepted else {
            return Err(Error::NotConverged(format!(
                "backtracking exhausted after {} halvings at residual {res_l2:e}",
                cfg.max_backtracks
            )));
        };
        psi = trial;
        masses = trial_masses;
        let residual_after_inf = masses
            .iter()
            .zip(nu)
            .map(|(g, v)| (g - v).abs())
            .fold(0.0, f64::max);
        trace.steps.push(NewtonStep {
            backtracks: l,
            step_scale: scale,
            residual_before_l2: res_l2,
            residual_after_l2: trial_l2,
            residual_after_inf,
            psi_after: psi.as_slice().to_vec(),
        });
    }
    if !converged {
        // Final residual may have crossed the threshold on the last step.
        let res_inf = masses
            .iter()
            .zip(nu)
            .map(|(g, v)| (g - v).abs())
            .fold(0.0, f64::max);
        converged = res_inf < cfg.eta_tol;
    }
    Ok(NewtonResult { psi: psi.mean_zeroed(), masses, trace, converged })
}

/// Damped Newton on the exact Laguerre geometry.
///
/// The start must leave every cell non-empty. When it does not (the all-zero
/// start often has empty cells), a single coarse Oliker-Prussner pass at
/// delta = min(nu)/2 produces a valid start cheaply.
pub fn damped_newton(
    sites: &SiteSet,
    rho: &PolygonalDensity,
    nu: &[f64],
    psi0: &Potential,
    cfg: &NewtonConfig,
) -> Result<NewtonResult> {
    let n = sites.len();
    validate_nu(nu, n)?;
    let map = ExactMassMap { sites, rho };
    let mut psi0 = psi0.clone();
    let mut masses = map.masses(&psi0)?;
    let min_nu = nu.iter().copied().fold(f64::INFINITY, f64::min);
    if masses.iter().copied().fold(f64::INFINITY, f64::min) <= 0.0 {
        let seed_cfg = OPConfig::for_instance(0.5 * min_nu, 0, rho, sites)?;
        let seeded = oliker_prussner(sites, rho, nu, &seed_cfg)?;
        psi0 = seeded.psi;
        masses = seeded.masses;
    }
    let eps_floor = match cfg.eps_floor {
        Some(e) => e,
        None => {
            let min_mass = masses.iter().copied().fold(f64::INFINITY, f64::min);
            let eps = 0.5 * min_mass.min(min_nu);
            if eps <= 0.0 {
                return Err(Error::Parameter(
                    "initial prices leave an empty cell; mass floor would be zero".into(),
                ));
            }
            eps
        }
    };
    newton_driver(&map, nu, &psi0, eps_floor, cfg)
}
