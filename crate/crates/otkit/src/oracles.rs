//! Independent ground-truth generators used by tests: exhaustive assignment
//! enumeration, finite differences and grid scans.
//!
//! Nothing here shares a code path with the solvers being checked; that is
//! the point of this module.

use crate::error::{Error, Result};
use crate::geometry::{build_diagram, cell_masses, PolygonalDensity, SiteSet};
use crate::measures::{CostMatrix, Potential};

/// Largest instance the factorial enumeration will accept.
pub const MAX_EXHAUSTIVE_N: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveAssignment {
    /// Lexicographically smallest optimal permutation.
    pub permutation: Vec<usize>,
    /// Total cost sum_x c(x, sigma(x)).
    pub total_cost: f64,
    /// Mean cost, the assignment-problem value for uniform measures.
    pub mean_cost: f64,
}

/// Global minimum over all N! assignments. Permutations are visited in
/// lexicographic order and only strict improvements are kept, so ties
/// resolve to the lexicographically smallest optimum.
pub fn exhaustive_assignment(c: &CostMatrix) -> Result<ExhaustiveAssignment> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::Dimension(format!("cost is {}x{}", n, c.ncols())));
    }
    if n > MAX_EXHAUSTIVE_N {
        return Err(Error::Parameter(format!(
            "refusing factorial enumeration for N = {n} > {MAX_EXHAUSTIVE_N}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let cost: f64 = perm.iter().enumerate().map(|(x, &y)| c.at(x, y)).sum();
        match &best {
            Some((b, _)) if cost >= *b => {}
            _ => best = Some((cost, perm.clone())),
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (total_cost, permutation) = best.expect("n >= 1");
    Ok(ExhaustiveAssignment { mean_cost: total_cost / n as f64, total_cost, permutation })
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
    perm.swap(i, j);
    perm[i + 1..].reverse();
    true
}

/// Central finite-difference gradient of a scalar field over potentials.
pub fn finite_diff_gradient(
    f: impl Fn(&Potential) -> f64,
    psi: &Potential,
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    (0..psi.len())
        .map(|y| {
            let mut up = psi.clone();
            up[y] += h;
            let mut dn = psi.clone();
            dn[y] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// One-sided directional derivatives along the coordinate direction `y`:
/// (left, right) difference quotients at step `h`. At kinks of a concave
/// function these bracket the superdifferential.
pub fn finite_diff_directional(
    f: impl Fn(&Potential) -> f64,
    psi: &Potential,
    y: usize,
    h: f64,
) -> (f64, f64) {
    assert!(h > 0.0, "step must be positive");
    let base = f(psi);
    let mut up = psi.clone();
    up[y] += h;
    let mut dn = psi.clone();
    dn[y] -= h;
    let right = (f(&up) - base) / h;
    let left = (base - f(&dn)) / h;
    (left, right)
}

/// Samples of t -> G_y(psi - t 1_y) over an even grid; the reference curve
/// for decrement searches. The sequence is nondecreasing in t.
pub fn grid_scan_mass(
    y: usize,
    psi: &Potential,
    t_range: (f64, f64),
    steps: usize,
    sites: &SiteSet,
    rho: &PolygonalDensity,
) -> Result<Vec<(f64, f64)>> {
    if steps < 2 {
        return Err(Error::Parameter("need at least 2 samples".into()));
    }
    let (t0, t1) = t_range;
    let mut samples = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = t0 + (t1 - t0) * k as f64 / (steps - 1) as f64;
        let mut shifted = psi.clone();
        shifted[y] -= t;
        let diag = build_diagram(sites, &shifted, rho)?;
        samples.push((t, cell_masses(&diag, rho)[y]));
    }
    Ok(samples)
}
