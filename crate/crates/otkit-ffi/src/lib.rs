//! C ABI for the otkit solvers.
//!
//! Conventions:
//! - heap objects (cost matrices, densities, site sets) are opaque handles
//!   created by `otk_*_new` and released by the matching `otk_*_free`;
//! - solver entry points fill caller-allocated buffers and return an
//!   [`OtkStatus`] code;
//! - on any non-`Ok` status, `otk_last_error_message` returns a thread-local
//!   NUL-terminated description, valid until the next failing call on the
//!   same thread.
//!
//! The generated header lives at `include/otkit.h`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::CString;
use std::os::raw::c_char;

use otkit::geometry::{build_diagram, cell_masses, PolygonalDensity, SiteSet, Vec2};
use otkit::measures::{CostMatrix, DiscreteMeasure, Potential};
use otkit::sd_entropic::{sd_entropic_solve, QuadratureRule};
use otkit::semidiscrete::{damped_newton, oliker_prussner, NewtonConfig, OPConfig};
use otkit::sinkhorn::{sinkhorn_solve, SinkhornConfig};
use otkit::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtkStatus {
    Ok = 0,
    InvalidInput = 1,
    NotConverged = 2,
    NullPointer = 3,
    Singular = 4,
    Infeasible = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn fail(status: OtkStatus, msg: &str) -> OtkStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> OtkStatus {
    match err {
        Error::NotConverged(_) => OtkStatus::NotConverged,
        Error::Singular(_) => OtkStatus::Singular,
        Error::Infeasible(_) => OtkStatus::Infeasible,
        _ => OtkStatus::InvalidInput,
    }
}

/// Message for the most recent failure on this thread. Never null; empty
/// string when no failure occurred yet.
#[no_mangle]
pub extern "C" fn otk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque dense cost matrix.
pub struct OtkCost(CostMatrix);

/// Opaque convex polygonal density.
pub struct OtkDensity(PolygonalDensity);

/// Opaque site set.
pub struct OtkSites(SiteSet);

/// Build a cost matrix from a row-major `rows x cols` array.
/// Returns null on invalid input (see `otk_last_error_message`).
#[no_mangle]
pub unsafe extern "C" fn otk_cost_new(
    values: *const f64,
    rows: usize,
    cols: usize,
) -> *mut OtkCost {
    if values.is_null() || rows == 0 || cols == 0 {
        set_error("otk_cost_new: null values or zero dimension");
        return std::ptr::null_mut();
    }
    let data = std::slice::from_raw_parts(values, rows * cols);
    let mat = otkit::Mat::from_fn(rows, cols, |i, j| data[i * cols + j]);
    match CostMatrix::new(mat) {
        Ok(c) => Box::into_raw(Box::new(OtkCost(c))),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn otk_cost_free(cost: *mut OtkCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// Solve the assignment problem at a fixed eps > 0 from zero prices.
/// `out_sigma` and `out_psi` must hold N entries each.
#[no_mangle]
pub unsafe extern "C" fn otk_assign(
    cost: *const OtkCost,
    epsilon: f64,
    out_sigma: *mut usize,
    out_psi: *mut f64,
) -> OtkStatus {
    let Some(cost) = cost.as_ref() else {
        return fail(OtkStatus::NullPointer, "otk_assign: null cost");
    };
    if out_sigma.is_null() || out_psi.is_null() {
        return fail(OtkStatus::NullPointer, "otk_assign: null output buffer");
    }
    let n = cost.0.nrows();
    match otkit::auction::auction(&cost.0, epsilon, &Potential::zeros(cost.0.ncols())) {
        Ok(r) => {
            std::slice::from_raw_parts_mut(out_sigma, n).copy_from_slice(&r.assignment);
            std::slice::from_raw_parts_mut(out_psi, n).copy_from_slice(r.prices.as_slice());
            OtkStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Solve the assignment problem to eta-optimality with eps-scaling.
#[no_mangle]
pub unsafe extern "C" fn otk_assign_scaled(
    cost: *const OtkCost,
    eta: f64,
    out_sigma: *mut usize,
    out_psi: *mut f64,
) -> OtkStatus {
    let Some(cost) = cost.as_ref() else {
        return fail(OtkStatus::NullPointer, "otk_assign_scaled: null cost");
    };
    if out_sigma.is_null() || out_psi.is_null() {
        return fail(OtkStatus::NullPointer, "otk_assign_scaled: null output buffer");
    }
    let n = cost.0.nrows();
    match otkit::auction::auction_scaled(&cost.0, eta) {
        Ok(r) => {
            std::slice::from_raw_parts_mut(out_sigma, n).copy_from_slice(&r.assignment);
            std::slice::from_raw_parts_mut(out_psi, n).copy_from_slice(r.prices.as_slice());
            OtkStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Entropic discrete transport. `mu` has N entries, `nu` has M entries,
/// `out_plan` holds N*M row-major entries; `out_phi` (N) and `out_psi` (M)
/// may be null when not wanted. Returns `NotConverged` with the partial
/// plan written when the iteration cap is hit.
#[no_mangle]
pub unsafe extern "C" fn otk_sinkhorn(
    cost: *const OtkCost,
    mu: *const f64,
    nu: *const f64,
    eta: f64,
    tol: f64,
    max_iter: usize,
    out_plan: *mut f64,
    out_phi: *mut f64,
    out_psi: *mut f64,
) -> OtkStatus {
    let Some(cost) = cost.as_ref() else {
        return fail(OtkStatus::NullPointer, "otk_sinkhorn: null cost");
    };
    if mu.is_null() || nu.is_null() || out_plan.is_null() {
        return fail(OtkStatus::NullPointer, "otk_sinkhorn: null buffer");
    }
    let n = cost.0.nrows();
    let m = cost.0.ncols();
    let mu = match DiscreteMeasure::new(std::slice::from_raw_parts(mu, n).to_vec()) {
        Ok(v) => v,
        Err(e) => return fail(OtkStatus::InvalidInput, &e.to_string()),
    };
    let nu = match DiscreteMeasure::new(std::slice::from_raw_parts(nu, m).to_vec()) {
        Ok(v) => v,
        Err(e) => return fail(OtkStatus::InvalidInput, &e.to_string()),
    };
    let cfg = match SinkhornConfig::new(eta, tol, max_iter) {
        Ok(c) => c,
        Err(e) => return fail(OtkStatus::InvalidInput, &e.to_string()),
    };
    match sinkhorn_solve(&mu, &nu, &cost.0, &cfg) {
        Ok(sol) => {
            std::slice::from_raw_parts_mut(out_plan, n * m)
                .copy_from_slice(sol.plan.entries.as_slice());
            if !out_phi.is_null() {
                std::slice::from_raw_parts_mut(out_phi, n).copy_from_slice(sol.phi.as_slice());
            }
            if !out_psi.is_null() {
                std::slice::from_raw_parts_mut(out_psi, m).copy_from_slice(sol.psi.as_slice());
            }
            if sol.converged {
                OtkStatus::Ok
            } else {
                fail(OtkStatus::NotConverged, "sinkhorn hit the iteration cap")
            }
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Build a polygonal density. `polygon` holds `n_vertices` interleaved x,y
/// pairs (counterclockwise convex), `triangles` holds `n_triangles` index
/// triples into the polygon, `densities` one value per triangle.
#[no_mangle]
pub unsafe extern "C" fn otk_density_new(
    polygon: *const f64,
    n_vertices: usize,
    triangles: *const usize,
    n_triangles: usize,
    densities: *const f64,
) -> *mut OtkDensity {
    if polygon.is_null() || triangles.is_null() || densities.is_null() {
        set_error("otk_density_new: null input");
        return std::ptr::null_mut();
    }
    let verts: Vec<Vec2> = std::slice::from_raw_parts(polygon, 2 * n_vertices)
        .chunks_exact(2)
        .map(|c| Vec2::new(c[0], c[1]))
        .collect();
    let tris: Vec<[usize; 3]> = std::slice::from_raw_parts(triangles, 3 * n_triangles)
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let dens = std::slice::from_raw_parts(densities, n_triangles).to_vec();
    match PolygonalDensity::new(verts, tris, dens) {
        Ok(d) => Box::into_raw(Box::new(OtkDensity(d))),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Uniform density on the unit square.
#[no_mangle]
pub extern "C" fn otk_density_unit_square() -> *mut OtkDensity {
    Box::into_raw(Box::new(OtkDensity(PolygonalDensity::unit_square())))
}

#[no_mangle]
pub unsafe extern "C" fn otk_density_free(density: *mut OtkDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Build a site set from `n` interleaved x,y pairs.
#[no_mangle]
pub unsafe extern "C" fn otk_sites_new(coords: *const f64, n: usize) -> *mut OtkSites {
    if coords.is_null() {
        set_error("otk_sites_new: null coords");
        return std::ptr::null_mut();
    }
    let pts: Vec<Vec2> = std::slice::from_raw_parts(coords, 2 * n)
        .chunks_exact(2)
        .map(|c| Vec2::new(c[0], c[1]))
        .collect();
    match SiteSet::new(pts) {
        Ok(s) => Box::into_raw(Box::new(OtkSites(s))),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn otk_sites_free(sites: *mut OtkSites) {
    if !sites.is_null() {
        drop(Box::from_raw(sites));
    }
}

/// Laguerre cell masses at prices `psi` (N entries); fills `out_masses` (N).
#[no_mangle]
pub unsafe extern "C" fn otk_laguerre_masses(
    sites: *const OtkSites,
    density: *const OtkDensity,
    psi: *const f64,
    out_masses: *mut f64,
) -> OtkStatus {
    let (Some(sites), Some(density)) = (sites.as_ref(), density.as_ref()) else {
        return fail(OtkStatus::NullPointer, "otk_laguerre_masses: null handle");
    };
    if psi.is_null() || out_masses.is_null() {
        return fail(OtkStatus::NullPointer, "otk_laguerre_masses: null buffer");
    }
    let n = sites.0.len();
    let psi = Potential(std::slice::from_raw_parts(psi, n).to_vec());
    match build_diagram(&sites.0, &psi, &density.0) {
        Ok(diag) => {
            let masses = cell_masses(&diag, &density.0);
            std::slice::from_raw_parts_mut(out_masses, n).copy_from_slice(&masses);
            OtkStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Damped Newton for G(psi) = nu on the exact geometry; writes the
/// mean-zero prices into `out_psi` (N entries).
#[no_mangle]
pub unsafe extern "C" fn otk_semidiscrete_newton(
    sites: *const OtkSites,
    density: *const OtkDensity,
    nu: *const f64,
    eta_tol: f64,
    out_psi: *mut f64,
) -> OtkStatus {
    let (Some(sites), Some(density)) = (sites.as_ref(), density.as_ref()) else {
        return fail(OtkStatus::NullPointer, "otk_semidiscrete_newton: null handle");
    };
    if nu.is_null() || out_psi.is_null() {
        return fail(OtkStatus::NullPointer, "otk_semidiscrete_newton: null buffer");
    }
    let n = sites.0.len();
    let nu = std::slice::from_raw_parts(nu, n);
    let cfg = match NewtonConfig::new(eta_tol) {
        Ok(c) => c,
        Err(e) => return fail(OtkStatus::InvalidInput, &e.to_string()),
    };
    match damped_newton(&sites.0, &density.0, nu, &Potential::zeros(n), &cfg) {
        Ok(out) => {
            std::slice::from_raw_parts_mut(out_psi, n).copy_from_slice(out.psi.as_slice());
            if out.converged {
                OtkStatus::Ok
            } else {
                fail(OtkStatus::NotConverged, "newton hit the iteration cap")
            }
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Oliker-Prussner coordinate decrements down to mass tolerance `delta`;
/// writes the anchored prices (psi[0] = 0) into `out_psi`.
#[no_mangle]
pub unsafe extern "C" fn otk_semidiscrete_op(
    sites: *const OtkSites,
    density: *const OtkDensity,
    nu: *const f64,
    delta: f64,
    out_psi: *mut f64,
) -> OtkStatus {
    let (Some(sites), Some(density)) = (sites.as_ref(), density.as_ref()) else {
        return fail(OtkStatus::NullPointer, "otk_semidiscrete_op: null handle");
    };
    if nu.is_null() || out_psi.is_null() {
        return fail(OtkStatus::NullPointer, "otk_semidiscrete_op: null buffer");
    }
    let n = sites.0.len();
    let nu = std::slice::from_raw_parts(nu, n);
    let cfg = match OPConfig::for_instance(delta, 0, &density.0, &sites.0) {
        Ok(c) => c,
        Err(e) => return fail(OtkStatus::InvalidInput, &e.to_string()),
    };
    match oliker_prussner(&sites.0, &density.0, nu, &cfg) {
        Ok(out) => {
            std::slice::from_raw_parts_mut(out_psi, n).copy_from_slice(out.psi.as_slice());
            if out.converged {
                OtkStatus::Ok
            } else {
                fail(OtkStatus::NotConverged, "coordinate decrements hit the step budget")
            }
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Entropic semi-discrete solve at regularization `eta` with a degree-5
/// triangle rule refined `quad_level` times; writes mean-zero prices.
#[no_mangle]
pub unsafe extern "C" fn otk_sd_entropic(
    sites: *const OtkSites,
    density: *const OtkDensity,
    nu: *const f64,
    eta: f64,
    tol: f64,
    quad_level: u32,
    out_psi: *mut f64,
) -> OtkStatus {
    let (Some(sites), Some(density)) = (sites.as_ref(), density.as_ref()) else {
        return fail(OtkStatus::NullPointer, "otk_sd_entropic: null handle");
    };
    if nu.is_null() || out_psi.is_null() {
        return fail(OtkStatus::NullPointer, "otk_sd_entropic: null buffer");
    }
    let n = sites.0.len();
    let nu = std::slice::from_raw_parts(nu, n);
    match sd_entropic_solve(&sites.0, &density.0, nu, eta, tol, QuadratureRule::new(quad_level))
    {
        Ok(out) => {
            std::slice::from_raw_parts_mut(out_psi, n).copy_from_slice(out.psi.as_slice());
            if out.converged {
                OtkStatus::Ok
            } else {
                fail(OtkStatus::NotConverged, "entropic newton hit the iteration cap")
            }
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}
