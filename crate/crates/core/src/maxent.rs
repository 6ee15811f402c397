//! Maximum-entropy expert prior under marginal, forbidden-cell and
//! minimum-present constraints.
//!
//! The maximizer has the exponential form `p_i ∝ exp(sum_j theta_j [bit j of i])`
//! on the allowed support. The solver runs cyclic coordinate ascent on the
//! tilts `theta_j`: each step removes the current tilt of symptom `j`, reads
//! the resulting marginal `m0`, and re-tilts to the nearest point of
//! `[lo_j, hi_j]` (no tilt when `m0` is already inside). Each step is the KL
//! projection onto one marginal constraint, a two-block proportional scaling,
//! with the removed tilt playing the role of the Dykstra correction term, so
//! interval constraints converge to the entropy maximizer and not merely to a
//! feasible point. For equality-only marginals and no support restriction a
//! single cycle yields the independent product.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{entropy, marginal_of, ConstraintSet, Distribution, OutcomeSpace};

#[derive(Debug, Clone)]
pub struct MaxentOptions {
    /// Largest accepted violation of any marginal bound.
    pub residual_tolerance: f64,
    /// Largest accepted entropy change over a full cycle.
    pub entropy_tolerance: f64,
    pub max_cycles: usize,
    /// Starting tilts, one per symptom; all zero (uniform on the allowed
    /// support) when absent.
    pub initial_tilts: Option<Vec<f64>>,
}

impl Default for MaxentOptions {
    fn default() -> Self {
        MaxentOptions {
            residual_tolerance: 1e-8,
            entropy_tolerance: 1e-12,
            max_cycles: 10_000,
            initial_tilts: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxentSolution {
    pub distribution: Distribution,
    /// Shannon entropy in nats.
    pub entropy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_constraint_residual: f64,
    /// Violation of each marginal bound, in input order.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub witness: Option<Distribution>,
    pub max_constraint_residual: f64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub iterations: usize,
    pub max_constraint_residual: f64,
    pub residuals: Vec<f64>,
}

/// Entropy-maximizing distribution satisfying `constraints`.
///
/// Fails with [`Error::Infeasible`] when a support pre-check rules the
/// constraints out or the residual stays above tolerance after
/// `max_cycles` cycles.
pub fn solve_maxent(
    constraints: &ConstraintSet,
    space: Arc<OutcomeSpace>,
    options: &MaxentOptions,
) -> Result<MaxentSolution> {
    let solution = run(constraints, space, options)?;
    if !solution.converged {
        return Err(Error::Infeasible(format!(
            "max constraint residual {:e} after {} cycles (residuals per bound: {:?})",
            solution.max_constraint_residual, solution.iterations, solution.residuals
        )));
    }
    Ok(solution)
}

pub fn check_feasibility(
    constraints: &ConstraintSet,
    space: Arc<OutcomeSpace>,
) -> FeasibilityReport {
    match run(constraints, space, &MaxentOptions::default()) {
        Ok(solution) if solution.converged => FeasibilityReport {
            feasible: true,
            max_constraint_residual: solution.max_constraint_residual,
            witness: Some(solution.distribution),
            reason: None,
        },
        Ok(solution) => FeasibilityReport {
            feasible: false,
            witness: None,
            max_constraint_residual: solution.max_constraint_residual,
            reason: Some(format!(
                "residual {:e} after {} cycles",
                solution.max_constraint_residual, solution.iterations
            )),
        },
        Err(e) => FeasibilityReport {
            feasible: false,
            witness: None,
            max_constraint_residual: f64::INFINITY,
            reason: Some(e.to_string()),
        },
    }
}

/// Product distribution with the given symptom marginals.
pub fn independent_product(marginals: &[f64], space: Arc<OutcomeSpace>) -> Result<Distribution> {
    if marginals.len() != space.symptom_count() {
        return Err(Error::DimensionMismatch {
            left: marginals.len(),
            right: space.symptom_count(),
        });
    }
    if let Some((j, m)) = marginals
        .iter()
        .enumerate()
        .find(|(_, m)| !(0.0..=1.0).contains(*m))
    {
        return Err(Error::invalid(
            "marginals",
            format!("marginal {j} = {m} not in [0, 1]"),
        ));
    }
    let mut probs = vec![1.0];
    // doubling construction keeps bit j <-> symptom j
    for &m in marginals {
        let absent = probs.iter().map(|p| p * (1.0 - m));
        let present = probs.iter().map(|p| p * m);
        probs = absent.chain(present).collect();
    }
    Ok(Distribution::from_raw(space, probs))
}

#[derive(Debug, Clone, Copy)]
struct ActiveBound {
    symptom: usize,
    lo: f64,
    hi: f64,
}

fn run(
    constraints: &ConstraintSet,
    space: Arc<OutcomeSpace>,
    options: &MaxentOptions,
) -> Result<MaxentSolution> {
    constraints.validate(&space)?;
    let mut allowed = constraints.allowed_cells(&space);

    // lo = hi in {0, 1}: remove the contradicted half of the cells up front
    let mut active = Vec::new();
    for b in &constraints.marginal_bounds {
        if b.hi == 0.0 {
            zero_where(&mut allowed, |cell| space.has_symptom(cell, b.index));
        } else if b.lo == 1.0 {
            zero_where(&mut allowed, |cell| !space.has_symptom(cell, b.index));
        } else if b.lo > 0.0 || b.hi < 1.0 {
            active.push(ActiveBound {
                symptom: b.index,
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    if !allowed.iter().any(|&a| a) {
        return Err(Error::Infeasible(
            "forbidden cells, min_present and degenerate marginals leave no cell able to carry mass"
                .into(),
        ));
    }
    for b in &active {
        let with = (0..allowed.len()).any(|c| allowed[c] && space.has_symptom(c, b.symptom));
        let without = (0..allowed.len()).any(|c| allowed[c] && !space.has_symptom(c, b.symptom));
        if b.lo > 0.0 && !with {
            return Err(Error::Infeasible(format!(
                "symptom {} needs marginal >= {} but every cell containing it is excluded",
                b.symptom, b.lo
            )));
        }
        if b.hi < 1.0 && !without {
            return Err(Error::Infeasible(format!(
                "symptom {} needs marginal <= {} but every cell lacking it is excluded",
                b.symptom, b.hi
            )));
        }
    }

    let mut tilts = vec![0.0; space.symptom_count()];
    if let Some(init) = &options.initial_tilts {
        if init.len() != tilts.len() {
            return Err(Error::DimensionMismatch {
                left: init.len(),
                right: tilts.len(),
            });
        }
        // only bounded symptoms carry a tilt at the optimum
        for b in &active {
            tilts[b.symptom] = init[b.symptom];
        }
    }
    let mut probs = start_point(&allowed, &space, &tilts);

    let mut h = entropy(&probs);
    let mut cycles = 0;
    let mut converged = false;
    let mut stalled = false;
    while cycles < options.max_cycles {
        cycles += 1;
        for b in &active {
            if !project(&mut probs, &space, b, &mut tilts[b.symptom]) {
                stalled = true;
            }
        }
        let h_next = entropy(&probs);
        let dh = (h_next - h).abs();
        h = h_next;
        let residual = max_residual(&probs, constraints);
        if residual <= options.residual_tolerance && dh <= options.entropy_tolerance {
            converged = true;
            break;
        }
        if stalled {
            break;
        }
    }

    let residuals = residuals(&probs, constraints);
    let max_constraint_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(MaxentSolution {
        entropy: h,
        distribution: Distribution::from_raw(space, probs),
        iterations: cycles,
        converged,
        max_constraint_residual,
        residuals,
    })
}

fn zero_where(allowed: &mut [bool], pred: impl Fn(usize) -> bool) {
    for (cell, a) in allowed.iter_mut().enumerate() {
        if pred(cell) {
            *a = false;
        }
    }
}

fn start_point(allowed: &[bool], space: &OutcomeSpace, tilts: &[f64]) -> Vec<f64> {
    let log_w: Vec<f64> = (0..allowed.len())
        .map(|cell| {
            if !allowed[cell] {
                return f64::NEG_INFINITY;
            }
            tilts
                .iter()
                .enumerate()
                .filter(|(j, _)| space.has_symptom(cell, *j))
                .map(|(_, t)| t)
                .sum()
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_w
        .iter()
        .zip(allowed)
        .map(|(&lw, &a)| if a { (lw - max).exp().max(1e-300) } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// KL projection onto one marginal interval, carrying the symptom's tilt.
/// Returns false when the current marginal is degenerate (all mass on one
/// side), which only happens once the iteration is diverging.
fn project(probs: &mut [f64], space: &OutcomeSpace, b: &ActiveBound, tilt: &mut f64) -> bool {
    let (mut inside, mut outside) = (0.0, 0.0);
    for (cell, &p) in probs.iter().enumerate() {
        if space.has_symptom(cell, b.symptom) {
            inside += p;
        } else {
            outside += p;
        }
    }
    if !(inside > 0.0 && outside > 0.0) {
        return false;
    }
    // marginal with this symptom's tilt removed, in log-odds
    let log_odds0 = (inside / outside).ln() - *tilt;
    let m0 = logistic(log_odds0);
    let (target, new_tilt) = if m0 < b.lo {
        (b.lo, logit(b.lo) - log_odds0)
    } else if m0 > b.hi {
        (b.hi, logit(b.hi) - log_odds0)
    } else {
        (m0, 0.0)
    };
    let up = target / inside;
    let down = (1.0 - target) / outside;
    for (cell, p) in probs.iter_mut().enumerate() {
        *p *= if space.has_symptom(cell, b.symptom) {
            up
        } else {
            down
        };
    }
    *tilt = new_tilt;
    true
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn residuals(probs: &[f64], constraints: &ConstraintSet) -> Vec<f64> {
    constraints
        .marginal_bounds
        .iter()
        .map(|b| {
            let m = marginal_of(probs, b.index);
            (b.lo - m).max(m - b.hi).max(0.0)
        })
        .collect()
}

fn max_residual(probs: &[f64], constraints: &ConstraintSet) -> f64 {
    residuals(probs, constraints)
        .into_iter()
        .fold(0.0, f64::max)
}
