//! Entropic regularization of discrete optimal transport: regularized
//! c-transforms, the regularized Kantorovich functional with its derivatives,
//! and Sinkhorn-Knopp block coordinate ascent.
//!
//! Every exponential goes through log-sum-exp with per-row max subtraction,
//! so unnormalized kernels are never formed and eta down to 1e-6 with costs
//! up to 1e6 stays in range.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::measures::{osc_norm, CostMatrix, DiscreteMeasure, Potential, TransportPlan};

#[derive(Debug, Clone)]
pub struct SinkhornConfig {
    /// Regularization strength (cost units).
    pub eta: f64,
    /// Stopping threshold on the oscillation norm of successive psi updates.
    pub tol: f64,
    pub max_iter: usize,
    /// Warm-started halving schedule on eta. Off by default; the plain
    /// iteration is what the convergence guarantees cover.
    pub eta_scaling: bool,
}

impl SinkhornConfig {
    pub fn new(eta: f64, tol: f64, max_iter: usize) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::Parameter("eta must be > 0".into()));
        }
        if tol <= 0.0 {
            return Err(Error::Parameter("tol must be > 0".into()));
        }
        Ok(SinkhornConfig { eta, tol, max_iter, eta_scaling: false })
    }
}

/// Per-iteration record of a Sinkhorn run.
#[derive(Debug, Clone, Serialize)]
pub struct SinkhornIteration {
    /// Oscillation norm of the psi update.
    pub update_osc: f64,
    /// Regularized dual value at the current psi.
    pub dual_value: f64,
    /// Marginal residuals of the plan recovered from the current pair.
    pub row_residual: f64,
    pub col_residual: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SinkhornLog {
    pub iterations: Vec<SinkhornIteration>,
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub phi: Potential,
    pub psi: Potential,
    pub plan: TransportPlan,
    pub log: SinkhornLog,
    pub converged: bool,
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<()> {
    if mu.len() != c.nrows() || nu.len() != c.ncols() {
        return Err(Error::Dimension(format!(
            "measures {}x{} vs cost {}x{}",
            mu.len(),
            nu.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Regularized c-transform:
/// psi^{c,eta}(x) = eta log mu_x - eta log sum_y exp((-c(x,y) - psi(y)) / eta).
pub fn smoothed_c_transform(
    psi: &Potential,
    mu: &DiscreteMeasure,
    c: &CostMatrix,
    eta: f64,
) -> Result<Potential> {
    if eta <= 0.0 {
        return Err(Error::Parameter("eta must be > 0".into()));
    }
    mu.require_positive()?;
    if psi.len() != c.ncols() || mu.len() != c.nrows() {
        return Err(Error::Dimension("smoothed c-transform: shapes disagree".into()));
    }
    let phi = (0..c.nrows())
        .map(|x| {
            let row = c.row(x);
            let lse =
                log_sum_exp(row.iter().zip(psi.as_slice()).map(|(cv, pv)| (-cv - pv) / eta));
            eta * mu.weights[x].ln() - eta * lse
        })
        .collect();
    Ok(Potential(phi))
}

/// Regularized c-bar-transform, the partner update over Y:
/// phi^{cbar,eta}(y) = -eta log nu_y + eta log sum_x exp((-c(x,y) + phi(x)) / eta).
pub fn smoothed_cbar_transform(
    phi: &Potential,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    eta: f64,
) -> Result<Potential> {
    if eta <= 0.0 {
        return Err(Error::Parameter("eta must be > 0".into()));
    }
    nu.require_positive()?;
    if phi.len() != c.nrows() || nu.len() != c.ncols() {
        return Err(Error::Dimension("smoothed cbar-transform: shapes disagree".into()));
    }
    let psi = (0..c.ncols())
        .map(|y| {
            let lse = log_sum_exp(
                (0..c.nrows()).map(|x| (-c.at(x, y) + phi[x]) / eta),
            );
            -eta * nu.weights[y].ln() + eta * lse
        })
        .collect();
    Ok(Potential(psi))
}

/// Row-stochastic matrix of smoothed cell weights: row x holds the softmax
/// of -(c(x, .) + psi) / eta. Shared normalization per row.
pub fn smoothed_cell_rows(psi: &Potential, c: &CostMatrix, eta: f64) -> Mat {
    let mut rows = Mat::zeros(c.nrows(), c.ncols());
    for x in 0..c.nrows() {
        let row = c.row(x);
        let mut max = f64::NEG_INFINITY;
        for (cv, pv) in row.iter().zip(psi.as_slice()) {
            max = max.max((-cv - pv) / eta);
        }
        let mut sum = 0.0;
        for (y, (cv, pv)) in row.iter().zip(psi.as_slice()).enumerate() {
            let e = ((-cv - pv) / eta - max).exp();
            rows[(x, y)] = e;
            sum += e;
        }
        for y in 0..c.ncols() {
            rows[(x, y)] /= sum;
        }
    }
    rows
}

/// Plan recovered from a dual pair: gamma_xy = exp((phi_x - psi_y - c_xy) / eta).
pub fn recover_plan(
    phi: &Potential,
    psi: &Potential,
    c: &CostMatrix,
    eta: f64,
    marginal_tol: f64,
) -> TransportPlan {
    let entries = Mat::from_fn(c.nrows(), c.ncols(), |x, y| {
        ((phi[x] - psi[y] - c.at(x, y)) / eta).exp()
    });
    TransportPlan { entries, marginal_tol }
}

/// Regularized Kantorovich value, gradient and Hessian at psi.
///
/// The value includes the eta H(mu) constant so values are comparable
/// across psi. The gradient is G^eta(psi) - nu; the Hessian has
/// (1/eta) <RLag_y RLag_z, mu> off the diagonal and minus the row sum on it.
pub fn reg_kant(
    psi: &Potential,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    eta: f64,
) -> Result<(f64, Vec<f64>, Mat)> {
    if eta <= 0.0 {
        return Err(Error::Parameter("eta must be > 0".into()));
    }
    check_dims(mu, nu, c)?;
    mu.require_positive()?;
    let n = c.nrows();
    let m = c.ncols();

    let mut value = 0.0;
    for x in 0..n {
        let row = c.row(x);
        let lse = log_sum_exp(row.iter().zip(psi.as_slice()).map(|(cv, pv)| (-cv - pv) / eta));
        value -= eta * mu.weights[x] * lse;
    }
    let h_mu: f64 = mu.weights.iter().map(|w| w * w.ln()).sum();
    value += eta * h_mu;
    value -= psi.as_slice().iter().zip(&nu.weights).map(|(p, w)| p * w).sum::<f64>();

    let rows = smoothed_cell_rows(psi, c, eta);
    let mut gradient = vec![0.0; m];
    for x in 0..n {
        for (y, g) in gradient.iter_mut().enumerate() {
            *g += mu.weights[x] * rows[(x, y)];
        }
    }
    for (g, w) in gradient.iter_mut().zip(&nu.weights) {
        *g -= w;
    }

    let mut hessian = Mat::zeros(m, m);
    for y in 0..m {
        for z in y + 1..m {
            let mut s = 0.0;
            for x in 0..n {
                s += mu.weights[x] * rows[(x, y)] * rows[(x, z)];
            }
            let v = s / eta;
            hessian[(y, z)] = v;
            hessian[(z, y)] = v;
        }
    }
    for y in 0..m {
        let off: f64 = (0..m).filter(|z| *z != y).map(|z| hessian[(y, z)]).sum();
        hessian[(y, y)] = -off;
    }
    Ok((value, gradient, hessian))
}

/// Sinkhorn-Knopp: alternate the two regularized transforms until the
/// oscillation norm of the psi update drops below `cfg.tol`.
///
/// On hitting `max_iter` the partial state is returned with
/// `converged = false` rather than an error.
pub fn sinkhorn_solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    if cfg.eta <= 0.0 || cfg.tol <= 0.0 {
        return Err(Error::Parameter("eta and tol must be > 0".into()));
    }
    check_dims(mu, nu, c)?;
    mu.require_positive()?;
    nu.require_positive()?;

    let mut psi = Potential::zeros(nu.len());
    if cfg.eta_scaling {
        // Warm start through a halving schedule down to the target eta.
        let mut stage = c.oscillation().max(cfg.eta);
        while stage > cfg.eta {
            let (next, _, _) = iterate(mu, nu, c, stage, psi, cfg.tol.max(1e-6), cfg.max_iter)?;
            psi = next;
            stage *= 0.5;
        }
    }
    let (psi, log, converged) = iterate(mu, nu, c, cfg.eta, psi, cfg.tol, cfg.max_iter)?;
    let phi = smoothed_c_transform(&psi, mu, c, cfg.eta)?;
    let plan = recover_plan(&phi, &psi, c, cfg.eta, 10.0 * cfg.tol);
    Ok(SinkhornSolution { phi, psi, plan, log, converged })
}

fn iterate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    eta: f64,
    mut psi: Potential,
    tol: f64,
    max_iter: usize,
) -> Result<(Potential, SinkhornLog, bool)> {
    let mut log = SinkhornLog::default();
    let mut converged = false;
    for _ in 0..max_iter {
        let phi = smoothed_c_transform(&psi, mu, c, eta)?;
        let next = smoothed_cbar_transform(&phi, nu, c, eta)?;
        let update_osc = osc_norm(next.sub(&psi).as_slice());
        psi = next;

        let (dual_value, _, _) = reg_kant(&psi, mu, nu, c, eta)?;
        let plan = recover_plan(&phi, &psi, c, eta, 10.0 * tol);
        let report = crate::measures::plan_diagnostics(&plan, mu, nu, c)?;
        log.iterations.push(SinkhornIteration {
            update_osc,
            dual_value,
            row_residual: report.row_residual,
            col_residual: report.col_residual,
        });
        if update_osc <= tol {
            converged = true;
            break;
        }
    }
    Ok((psi, log, converged))
}
