//! Diagnostics for the best-of-both-models guarantees. Each check reports
//! the quantities involved; the inequality is only claimed when the
//! concentration event (`emp` within `epsilon` of `p_star`) holds.

use serde::Serialize;

use crate::error::Result;
use crate::model::{check_same_space, kl, l1, Distribution};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem1Diagnostic {
    /// `||p_star - estimate||_1`.
    pub error: f64,
    /// `2 min(epsilon, ||p_star - expert||_1)`.
    pub bound: f64,
    /// `||p_star - emp||_1 <= epsilon`.
    pub event_holds: bool,
}

impl Theorem1Diagnostic {
    pub fn violated(&self, tolerance: f64) -> bool {
        self.event_holds && self.error > self.bound + tolerance
    }
}

pub fn theorem1_check(
    p_star: &Distribution,
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
    estimate: &Distribution,
) -> Result<Theorem1Diagnostic> {
    for d in [expert, emp, estimate] {
        check_same_space(p_star, d)?;
    }
    let p = p_star.probs();
    Ok(Theorem1Diagnostic {
        error: l1(p, estimate.probs()),
        bound: 2.0 * epsilon.min(l1(p, expert.probs())),
        event_holds: l1(p, emp.probs()) <= epsilon,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem2Diagnostic {
    /// `KL(estimate || p_star)`.
    pub kl_estimate: f64,
    /// `KL(expert || p_star)`.
    pub kl_expert: f64,
    /// `KL(emp || p_star)`.
    pub kl_emp: f64,
    /// `KL(emp || expert)`.
    pub kl_emp_expert: f64,
    /// `(KL(expert||p*) - KL(emp||p*)) / KL(emp||expert)`; `None` when
    /// `expert == emp`.
    pub l_n: Option<f64>,
    /// `epsilon (L_n + 1)`.
    pub rate_bound: Option<f64>,
    /// `min(KL(expert||p*), epsilon (L_n + 1))`, or `KL(expert||p*)` alone
    /// when `L_n` is undefined.
    pub bound: f64,
    /// `w KL(expert||p*) + (1 - w) KL(emp||p*)` where `w` is the expert
    /// weight of `estimate` on the expert-emp segment; by joint convexity of
    /// KL this always dominates `kl_estimate`.
    pub segment_bound: Option<f64>,
    /// `KL(emp || p_star) <= epsilon`.
    pub event_holds: bool,
}

impl Theorem2Diagnostic {
    /// Event holds and `kl_estimate` exceeds `bound` by more than
    /// `relative_tolerance * |bound|` (plus `1e-15` absolute slack for
    /// bounds that are exactly zero).
    pub fn violated(&self, relative_tolerance: f64) -> bool {
        self.event_holds && exceeds(self.kl_estimate, self.bound, relative_tolerance)
    }

    /// Violation of the `KL(expert || p_star)` branch alone.
    pub fn expert_branch_violated(&self, relative_tolerance: f64) -> bool {
        self.event_holds && exceeds(self.kl_estimate, self.kl_expert, relative_tolerance)
    }

    /// Violation of the `epsilon (L_n + 1)` branch alone.
    pub fn rate_branch_violated(&self, relative_tolerance: f64) -> bool {
        match self.rate_bound {
            Some(b) => self.event_holds && exceeds(self.kl_estimate, b, relative_tolerance),
            None => false,
        }
    }
}

fn exceeds(value: f64, bound: f64, relative_tolerance: f64) -> bool {
    value > bound + relative_tolerance * bound.abs() + 1e-15
}

pub fn theorem2_check(
    p_star: &Distribution,
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
    estimate: &Distribution,
) -> Result<Theorem2Diagnostic> {
    for d in [expert, emp, estimate] {
        check_same_space(p_star, d)?;
    }
    let p = p_star.probs();
    let kl_expert = kl(expert.probs(), p);
    let kl_emp = kl(emp.probs(), p);
    let kl_emp_expert = kl(emp.probs(), expert.probs());
    let l_n = (kl_emp_expert > 0.0).then(|| (kl_expert - kl_emp) / kl_emp_expert);
    let rate_bound = l_n.map(|l| epsilon * (l + 1.0));
    let bound = match rate_bound {
        Some(r) => kl_expert.min(r),
        None => kl_expert,
    };
    let spread = l1(expert.probs(), emp.probs());
    let segment_bound = (spread > 0.0).then(|| {
        let w = (l1(estimate.probs(), emp.probs()) / spread).clamp(0.0, 1.0);
        w * kl_expert + (1.0 - w) * kl_emp
    });
    Ok(Theorem2Diagnostic {
        kl_estimate: kl(estimate.probs(), p),
        kl_expert,
        kl_emp,
        kl_emp_expert,
        l_n,
        rate_bound,
        bound,
        segment_bound,
        event_holds: kl_emp <= epsilon,
    })
}
