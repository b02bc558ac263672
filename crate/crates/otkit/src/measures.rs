//! Measures, cost matrices, dual potentials, transport plans and the
//! Kantorovich functional on finite supports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Tolerance for "weights sum to one" checks on construction.
pub const MASS_TOL: f64 = 1e-12;

/// Default tolerance recorded with marginal checks on transport plans.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-10;

/// A weighted point cloud. Points are optional: a measure over an abstract
/// index set carries only weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Measure over an abstract index set. Weights must be nonnegative and
    /// sum to one within `MASS_TOL`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::validate(&weights)?;
        Ok(DiscreteMeasure { points: None, weights })
    }

    pub fn with_points(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        Self::validate(&weights)?;
        Ok(DiscreteMeasure { points: Some(points), weights })
    }

    /// Uniform measure of size `n`.
    pub fn uniform(n: usize) -> Self {
        DiscreteMeasure { points: None, weights: vec![1.0 / n as f64; n] }
    }

    fn validate(weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("measure has no support".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1 within {MASS_TOL:e}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Solver entry points that divide by weights require strict positivity.
    pub fn require_positive(&self) -> Result<()> {
        if self.weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Parameter("all weights must be > 0".into()));
        }
        Ok(())
    }
}

/// Dense cost matrix over X x Y with cached oscillation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Mat,
    min: f64,
    max: f64,
}

impl CostMatrix {
    pub fn new(values: Mat) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cost matrix entries must be finite".into()));
        }
        let min = values.min();
        let max = values.max();
        Ok(CostMatrix { values, min, max })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Mat::from_rows(rows)?)
    }

    /// Quadratic cost c(x,y) = 1/2 |x-y|^2 between two point clouds.
    pub fn half_sq_euclidean(xs: &[[f64; 2]], ys: &[[f64; 2]]) -> Self {
        let values = Mat::from_fn(xs.len(), ys.len(), |i, j| {
            let dx = xs[i][0] - ys[j][0];
            let dy = xs[i][1] - ys[j][1];
            0.5 * (dx * dx + dy * dy)
        });
        CostMatrix { min: values.min(), max: values.max(), values }
    }

    /// Euclidean distance cost between two point clouds.
    pub fn euclidean(xs: &[[f64; 2]], ys: &[[f64; 2]]) -> Self {
        let values = Mat::from_fn(xs.len(), ys.len(), |i, j| {
            let dx = xs[i][0] - ys[j][0];
            let dy = xs[i][1] - ys[j][1];
            (dx * dx + dy * dy).sqrt()
        });
        CostMatrix { min: values.min(), max: values.max(), values }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.values.row(x)
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    /// Half the spread of the costs: (max - min) / 2.
    pub fn oscillation(&self) -> f64 {
        0.5 * (self.max - self.min)
    }

    /// Full spread of the costs: max - min.
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Dual potential: a real vector indexed by target (or source) points,
/// meaningful up to an additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Potential(pub Vec<f64>);

impl Potential {
    pub fn zeros(n: usize) -> Self {
        Potential(vec![0.0; n])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential entries must be finite".into()));
        }
        Ok(Potential(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise difference, for update norms.
    pub fn sub(&self, other: &Potential) -> Potential {
        debug_assert_eq!(self.len(), other.len());
        Potential(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn shifted(&self, a: f64) -> Potential {
        Potential(self.0.iter().map(|v| v + a).collect())
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.len() as f64
    }

    /// Shift so the mean is zero; collapses the additive gauge freedom.
    pub fn mean_zeroed(&self) -> Potential {
        self.shifted(-self.mean())
    }
}

impl std::ops::Index<usize> for Potential {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Potential {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Oscillation pseudo-norm: half the spread, invariant under constant shifts.
pub fn osc_norm(f: &[f64]) -> f64 {
    assert!(!f.is_empty(), "osc_norm of an empty vector");
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (max - min)
}

/// c-transform of a potential over Y: phi(x) = min_y c(x,y) + psi(y).
/// Ties are broken by the lowest index, so downstream solvers are
/// deterministic. Rows are independent reductions, evaluated in parallel.
pub fn c_transform(psi: &Potential, c: &CostMatrix) -> Result<(Potential, Vec<usize>)> {
    if psi.len() != c.ncols() {
        return Err(Error::Dimension(format!(
            "potential has {} entries, cost has {} columns",
            psi.len(),
            c.ncols()
        )));
    }
    let rows: Vec<(f64, usize)> = (0..c.nrows())
        .into_par_iter()
        .map(|x| {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (y, cy) in c.row(x).iter().enumerate() {
                let v = cy + psi[y];
                if v < best {
                    best = v;
                    arg = y;
                }
            }
            (best, arg)
        })
        .collect();
    let (phi, argmins) = rows.into_iter().unzip();
    Ok((Potential(phi), argmins))
}

/// Kantorovich functional for finite supports:
/// sum_x mu_x min_y (c(x,y) + psi(y)) - sum_y nu_y psi(y).
pub fn kantorovich_value(
    psi: &Potential,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
) -> Result<f64> {
    if mu.len() != c.nrows() || nu.len() != c.ncols() {
        return Err(Error::Dimension(format!(
            "measures {}x{} vs cost {}x{}",
            mu.len(),
            nu.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    let (phi, _) = c_transform(psi, c)?;
    let pos: f64 = phi.0.iter().zip(&mu.weights).map(|(p, w)| p * w).sum();
    let neg: f64 = psi.0.iter().zip(&nu.weights).map(|(p, w)| p * w).sum();
    Ok(pos - neg)
}

/// Nonnegative coupling matrix with its marginal check tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Mat,
    /// Tolerance within which the marginals were verified when the plan was
    /// produced.
    pub marginal_tol: f64,
}

impl TransportPlan {
    pub fn new(entries: Mat, marginal_tol: f64) -> Result<Self> {
        if entries.iter().any(|v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidPlan("entries must be finite and >= 0".into()));
        }
        Ok(TransportPlan { entries, marginal_tol })
    }

    /// Product measure mu (x) nu.
    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let entries =
            Mat::from_fn(mu.len(), nu.len(), |i, j| mu.weights[i] * nu.weights[j]);
        TransportPlan { entries, marginal_tol: DEFAULT_MARGINAL_TOL }
    }

    /// Deterministic plan carried by a bijection on uniform measures.
    pub fn from_permutation(sigma: &[usize]) -> Self {
        let n = sigma.len();
        let mut entries = Mat::zeros(n, n);
        for (x, &y) in sigma.iter().enumerate() {
            entries[(x, y)] = 1.0 / n as f64;
        }
        TransportPlan { entries, marginal_tol: DEFAULT_MARGINAL_TOL }
    }
}

/// Diagnostics for a transport plan against its prescribed marginals.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    /// Transport cost <c, gamma>.
    pub cost: f64,
    /// Max-norm of row sums minus mu.
    pub row_residual: f64,
    /// Max-norm of column sums minus nu.
    pub col_residual: f64,
    /// Entropy sum of h(gamma_xy) with h(t) = t(log t - 1), h(0) = 0.
    pub entropy: f64,
    pub marginal_tol: f64,
    /// Whether both residuals are within `marginal_tol`.
    pub marginals_ok: bool,
}

pub fn plan_diagnostics(
    gamma: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
) -> Result<PlanReport> {
    let g = &gamma.entries;
    if g.nrows() != mu.len() || g.ncols() != nu.len() || g.nrows() != c.nrows() || g.ncols() != c.ncols() {
        return Err(Error::Dimension(format!(
            "plan {}x{} vs measures {}x{} vs cost {}x{}",
            g.nrows(),
            g.ncols(),
            mu.len(),
            nu.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    if g.iter().any(|v| v < 0.0) {
        return Err(Error::InvalidPlan("negative entry".into()));
    }
    let cost = g
        .as_slice()
        .iter()
        .zip(c.values().as_slice())
        .map(|(gv, cv)| gv * cv)
        .sum();
    let row_residual = g
        .row_sums()
        .iter()
        .zip(&mu.weights)
        .map(|(s, w)| (s - w).abs())
        .fold(0.0, f64::max);
    let col_residual = g
        .col_sums()
        .iter()
        .zip(&nu.weights)
        .map(|(s, w)| (s - w).abs())
        .fold(0.0, f64::max);
    let entropy = g.iter().map(entropy_term).sum();
    let marginal_tol = gamma.marginal_tol;
    Ok(PlanReport {
        cost,
        row_residual,
        col_residual,
        entropy,
        marginal_tol,
        marginals_ok: row_residual <= marginal_tol && col_residual <= marginal_tol,
    })
}

fn entropy_term(t: f64) -> f64 {
    if t > 0.0 {
        t * (t.ln() - 1.0)
    } else {
        0.0
    }
}
