//! Estimators that fuse an expert prior with the empirical distribution.
//!
//! Both estimators return the point closest to the expert among the
//! distributions within `epsilon` of the empirical distribution:
//!
//! * [`l1_barycenter`]: closeness in L1. The solution set can contain more
//!   than one point; the barycentric one is returned.
//! * [`kl_centroid`]: minimizes `KL(expert || p)` subject to
//!   `KL(emp || p) <= epsilon`. The minimizer is unique and lies on the
//!   segment between the two inputs.

pub mod oracle;
mod theorems;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{check_same_space, kl, l1, mix_slices, Distribution};

pub use theorems::{theorem1_check, theorem2_check, Theorem1Diagnostic, Theorem2Diagnostic};

/// Stopping resolution of the segment bisection on the expert weight.
const BISECTION_WEIGHT_RESOLUTION: f64 = 1e-15;
const BISECTION_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    L1,
    Kl,
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionReport {
    #[serde(serialize_with = "serialize_probs")]
    pub estimate: Distribution,
    pub method: Method,
    pub epsilon: f64,
    /// Weight on the expert in `w * expert + (1 - w) * emp`.
    pub mix_weight: f64,
    /// `(1 - w) / w` for the KL centroid; `None` for L1.
    #[serde(serialize_with = "serialize_extended")]
    pub lambda_tilde: Option<f64>,
    /// `||estimate - emp||_1` or `KL(emp || estimate)`.
    pub achieved_constraint: f64,
    /// Whether the expert itself was within `epsilon` of the data.
    pub expert_feasible: bool,
}

/// L1 barycenter `alpha * expert + (1 - alpha) * emp` with
/// `alpha = min(1, epsilon / ||emp - expert||_1)`.
pub fn l1_barycenter(
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
) -> Result<FusionReport> {
    check_same_space(expert, emp)?;
    check_epsilon(epsilon)?;
    let d = l1(emp.probs(), expert.probs());
    let expert_feasible = d <= epsilon;
    let alpha = if expert_feasible || d == 0.0 {
        1.0
    } else {
        epsilon / d
    };
    let estimate = if alpha == 1.0 {
        expert.clone()
    } else {
        Distribution::from_raw(
            expert.space().clone(),
            mix_slices(expert.probs(), emp.probs(), alpha),
        )
    };
    Ok(FusionReport {
        achieved_constraint: l1(estimate.probs(), emp.probs()),
        estimate,
        method: Method::L1,
        epsilon,
        mix_weight: alpha,
        lambda_tilde: None,
        expert_feasible,
    })
}

/// KL centroid: the minimizer of `KL(expert || p)` over
/// `{p : KL(emp || p) <= epsilon}`.
///
/// The minimizer is `w * expert + (1 - w) * emp` for the largest feasible
/// `w`. Along the segment `g(w) = KL(emp || p(w))` is convex with `g(0) = 0`,
/// hence non-decreasing, so the boundary weight is found by bisection.
pub fn kl_centroid(
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
) -> Result<FusionReport> {
    check_same_space(expert, emp)?;
    check_epsilon(epsilon)?;
    let d = kl(emp.probs(), expert.probs());
    let expert_feasible = d <= epsilon;
    let w = if expert_feasible {
        1.0
    } else if epsilon == 0.0 {
        // KL(emp || p) = 0 only at p = emp
        0.0
    } else {
        segment_weight(expert.probs(), emp.probs(), epsilon, 0.0, 1.0)
    };
    let estimate = if w == 1.0 {
        expert.clone()
    } else {
        Distribution::from_raw(
            expert.space().clone(),
            mix_slices(expert.probs(), emp.probs(), w),
        )
    };
    let lambda_tilde = if w > 0.0 {
        (1.0 - w) / w
    } else {
        f64::INFINITY
    };
    Ok(FusionReport {
        achieved_constraint: kl(emp.probs(), estimate.probs()),
        estimate,
        method: Method::Kl,
        epsilon,
        mix_weight: w,
        lambda_tilde: Some(lambda_tilde),
        expert_feasible,
    })
}

/// Largest `w` in `[lo, hi]` with `KL(emp || w expert + (1-w) emp) <= epsilon`,
/// given that `lo` is feasible and `hi` is not.
pub(crate) fn segment_weight(
    expert: &[f64],
    emp: &[f64],
    epsilon: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let g = |w: f64| segment_kl(expert, emp, w);
    debug_assert!(g(lo) <= epsilon);
    for _ in 0..BISECTION_MAX_ITERATIONS {
        if hi - lo <= BISECTION_WEIGHT_RESOLUTION {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `KL(emp || w expert + (1 - w) emp)`.
pub(crate) fn segment_kl(expert: &[f64], emp: &[f64], w: f64) -> f64 {
    let mut total = 0.0;
    for (&e, &m) in expert.iter().zip(emp) {
        if m > 0.0 {
            let q = w * e + (1.0 - w) * m;
            if q <= 0.0 {
                return f64::INFINITY;
            }
            total += m * (m / q).ln();
        }
    }
    total.max(0.0)
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be >= 0")));
    }
    Ok(())
}

fn serialize_probs<S: Serializer>(d: &Distribution, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(d.probs())
}

/// JSON has no infinity; `+inf` is written as the string `"inf"`.
fn serialize_extended<S: Serializer>(
    v: &Option<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) => s.serialize_str(&crate::model::io::format_prob(*x)),
    }
}
