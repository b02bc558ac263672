//! Auction algorithm for the linear assignment problem, with eps-scaling.
//!
//! Prices live on the target side. Each round an unassigned bidder takes its
//! best object and raises that object's price by the gap to the second-best
//! option plus eps, which keeps eps-complementary slackness invariant while
//! forcing strict progress.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{CostMatrix, Potential};

/// Injective partial map from sources to objects with its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialAssignment {
    assigned: Vec<Option<usize>>,
    owner: Vec<Option<usize>>,
}

impl PartialAssignment {
    pub fn empty(n_sources: usize, n_objects: usize) -> Self {
        PartialAssignment {
            assigned: vec![None; n_sources],
            owner: vec![None; n_objects],
        }
    }

    pub fn assigned(&self, x: usize) -> Option<usize> {
        self.assigned[x]
    }

    pub fn owner(&self, y: usize) -> Option<usize> {
        self.owner[y]
    }

    /// Assign `x` to `y`, evicting and returning `y`'s previous owner.
    pub fn assign(&mut self, x: usize, y: usize) -> Option<usize> {
        let evicted = self.owner[y];
        if let Some(prev) = evicted {
            self.assigned[prev] = None;
        }
        if let Some(old_y) = self.assigned[x] {
            self.owner[old_y] = None;
        }
        self.assigned[x] = Some(y);
        self.owner[y] = Some(x);
        evicted
    }

    pub fn first_unassigned(&self) -> Option<usize> {
        self.assigned.iter().position(Option::is_none)
    }

    pub fn is_complete(&self) -> bool {
        self.assigned.iter().all(Option::is_some)
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assigned
    }

    /// The maps must stay mutually inverse; checked in tests and debug runs.
    pub fn check_consistent(&self) -> bool {
        self.assigned.iter().enumerate().all(|(x, a)| match a {
            Some(y) => self.owner[*y] == Some(x),
            None => true,
        }) && self.owner.iter().enumerate().all(|(y, o)| match o {
            Some(x) => self.assigned[*x] == Some(y),
            None => true,
        })
    }

    /// Completed assignment as a bijection, if every source is assigned.
    pub fn to_bijection(&self) -> Option<Vec<usize>> {
        self.assigned.iter().copied().collect()
    }
}

/// One bidding round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionStep {
    pub bidder: usize,
    pub object: usize,
    pub raise: f64,
    pub evicted: Option<usize>,
}

/// Record of a run: per-step events plus per-object raise counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuctionTrace {
    pub steps: Vec<AuctionStep>,
    pub raise_counts: Vec<u64>,
}

impl AuctionTrace {
    fn new(n_objects: usize) -> Self {
        AuctionTrace { steps: Vec::new(), raise_counts: vec![0; n_objects] }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }
}

/// Outcome of one bid: best object, runner-up, and the price raise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid {
    pub best: usize,
    /// None only in the degenerate single-object case.
    pub runner_up: Option<usize>,
    pub raise: f64,
}

/// Completed auction: a bijection, the final prices and the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionResult {
    pub assignment: Vec<usize>,
    pub prices: Potential,
    pub trace: AuctionTrace,
}

/// One scaling round of [`auction_scaled`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledRun {
    pub epsilon: f64,
    pub trace: AuctionTrace,
    /// Prices at the end of the round.
    pub prices: Potential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledAuctionResult {
    pub assignment: Vec<usize>,
    pub prices: Potential,
    pub runs: Vec<ScaledRun>,
    /// eps of the final round; complementary slackness holds at this value.
    pub final_epsilon: f64,
}

impl ScaledAuctionResult {
    pub fn total_steps(&self) -> usize {
        self.runs.iter().map(|r| r.trace.num_steps()).sum()
    }
}

/// Best and second-best objects for bidder `x` at prices `psi`, and the
/// price raise (gap to the runner-up plus eps). With a single object the
/// runner-up is undefined and the raise is eps by convention.
pub fn bid(x: usize, psi: &Potential, c: &CostMatrix, eps: f64) -> Result<Bid> {
    if psi.len() != c.ncols() {
        return Err(Error::Dimension(format!(
            "prices over {} objects, cost has {} columns",
            psi.len(),
            c.ncols()
        )));
    }
    if eps < 0.0 {
        return Err(Error::Parameter("eps must be >= 0".into()));
    }
    let row = c.row(x);
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (y, cy) in row.iter().enumerate() {
        let v = cy + psi[y];
        if v < best_val {
            best_val = v;
            best = y;
        }
    }
    if c.ncols() == 1 {
        return Ok(Bid { best, runner_up: None, raise: eps });
    }
    let mut second = usize::MAX;
    let mut second_val = f64::INFINITY;
    for (y, cy) in row.iter().enumerate() {
        if y == best {
            continue;
        }
        let v = cy + psi[y];
        if v < second_val {
            second_val = v;
            second = y;
        }
    }
    Ok(Bid { best, runner_up: Some(second), raise: second_val - best_val + eps })
}

/// Run the auction at a fixed eps > 0 starting from prices `psi0`.
///
/// Bidders are picked lowest unassigned index first, so traces are
/// deterministic. Returns a bijection satisfying eps-complementary
/// slackness together with the final prices.
pub fn auction(c: &CostMatrix, eps: f64, psi0: &Potential) -> Result<AuctionResult> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::Dimension(format!("cost is {}x{}, expected square", n, c.ncols())));
    }
    if psi0.len() != n {
        return Err(Error::Dimension("initial prices have wrong length".into()));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter(
            "eps must be > 0: bidding wars between tied objects never end at eps = 0".into(),
        ));
    }
    let mut psi = psi0.clone();
    let mut state = PartialAssignment::empty(n, n);
    let mut trace = AuctionTrace::new(n);

    if n == 1 {
        // Immediate: the single pairing is optimal and prices stay put.
        state.assign(0, 0);
        return Ok(AuctionResult { assignment: vec![0], prices: psi, trace });
    }

    while let Some(x) = state.first_unassigned() {
        let b = bid(x, &psi, c, eps)?;
        psi[b.best] += b.raise;
        let evicted = state.assign(x, b.best);
        trace.steps.push(AuctionStep { bidder: x, object: b.best, raise: b.raise, evicted });
        trace.raise_counts[b.best] += 1;
        debug_assert!(state.check_consistent());
        debug_assert!(check_cs(state.assignments(), &psi, c, eps).holds);
    }
    let assignment = state.to_bijection().expect("loop exits only when complete");
    Ok(AuctionResult { assignment, prices: psi, trace })
}

/// Auction with eps-scaling: run at eps = C, C/2, C/4, ... warm-starting the
/// prices, down to and including the first eps below `eta`. C is the cost
/// range max - min; a constant cost matrix (C = 0) gets a single run at
/// eta/2.
pub fn auction_scaled(c: &CostMatrix, eta: f64) -> Result<ScaledAuctionResult> {
    if eta <= 0.0 {
        return Err(Error::Parameter("eta must be > 0".into()));
    }
    let range = c.range();
    let mut eps = if range > 0.0 { range } else { 0.5 * eta };
    let mut psi = Potential::zeros(c.ncols());
    let mut runs = Vec::new();
    loop {
        let result = auction(c, eps, &psi)?;
        psi = result.prices.clone();
        runs.push(ScaledRun { epsilon: eps, trace: result.trace, prices: result.prices });
        if eps < eta {
            return Ok(ScaledAuctionResult {
                assignment: result.assignment,
                prices: psi,
                runs,
                final_epsilon: eps,
            });
        }
        eps *= 0.5;
    }
}

/// Result of an eps-complementary slackness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsReport {
    pub holds: bool,
    /// Worst violation max_x [c(x,sigma(x)) + psi(sigma(x)) - min_y(c+psi) - eps];
    /// negative or zero when the condition holds. Zero on an empty domain.
    pub worst_slack: f64,
}

/// Check eps-complementary slackness of a partial assignment given as
/// `Some(object)` per assigned source.
pub fn check_cs(sigma: &[Option<usize>], psi: &Potential, c: &CostMatrix, eps: f64) -> CsReport {
    let mut worst = f64::NEG_INFINITY;
    for (x, assigned) in sigma.iter().enumerate() {
        let Some(y) = assigned else { continue };
        let mut min = f64::INFINITY;
        for (z, cz) in c.row(x).iter().enumerate() {
            min = min.min(cz + psi[z]);
        }
        let slack = c.at(x, *y) + psi[*y] - min - eps;
        worst = worst.max(slack);
    }
    if worst == f64::NEG_INFINITY {
        // Empty domain: vacuously true.
        return CsReport { holds: true, worst_slack: 0.0 };
    }
    CsReport { holds: worst <= 1e-12, worst_slack: worst }
}

/// Transport cost of a bijection under uniform measures: (1/N) sum c(x, sigma(x)).
pub fn mean_assignment_cost(sigma: &[usize], c: &CostMatrix) -> f64 {
    let n = sigma.len() as f64;
    sigma.iter().enumerate().map(|(x, &y)| c.at(x, y)).sum::<f64>() / n
}
