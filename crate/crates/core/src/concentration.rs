//! Radii `eps_n` such that the empirical distribution of `n` samples lies
//! within `eps_n` of the truth with probability at least `1 - delta`.
//!
//! All logarithms are natural.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The radius used when nothing else is configured.
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Kl,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusVariant {
    /// Non-asymptotic KL bound with the combinatorial constant `G_n`.
    ExactKl,
    /// `(-log delta + (n/2) log(1 + (K-1)/n)) / n`.
    ConjectureKl,
    /// Square root of [`RadiusVariant::ConjectureKl`].
    ConjectureL1,
}

impl RadiusVariant {
    pub fn divergence(self) -> Divergence {
        match self {
            RadiusVariant::ExactKl | RadiusVariant::ConjectureKl => Divergence::Kl,
            RadiusVariant::ConjectureL1 => Divergence::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSpec {
    pub divergence: Divergence,
    pub delta: f64,
    pub variant: RadiusVariant,
}

impl ConcentrationSpec {
    pub fn new(divergence: Divergence, delta: f64, variant: RadiusVariant) -> Result<Self> {
        if variant.divergence() != divergence {
            return Err(Error::invalid(
                "variant",
                format!("{variant:?} does not bound the {divergence:?} divergence"),
            ));
        }
        check_delta(delta)?;
        Ok(ConcentrationSpec {
            divergence,
            delta,
            variant,
        })
    }

    pub fn conjecture_kl(delta: f64) -> Result<Self> {
        ConcentrationSpec::new(Divergence::Kl, delta, RadiusVariant::ConjectureKl)
    }

    pub fn exact_kl(delta: f64) -> Result<Self> {
        ConcentrationSpec::new(Divergence::Kl, delta, RadiusVariant::ExactKl)
    }

    pub fn conjecture_l1(delta: f64) -> Result<Self> {
        ConcentrationSpec::new(Divergence::L1, delta, RadiusVariant::ConjectureL1)
    }

    pub fn radius(&self, n: u64, cell_count: usize) -> Result<f64> {
        match self.variant {
            RadiusVariant::ExactKl => epsilon_kl_exact(n, cell_count, self.delta),
            RadiusVariant::ConjectureKl => epsilon_kl_conjecture(n, cell_count, self.delta),
            RadiusVariant::ConjectureL1 => epsilon_l1_conjecture(n, cell_count, self.delta),
        }
    }
}

/// `(1/n) (-log delta + log G_n)`.
pub fn epsilon_kl_exact(n: u64, cell_count: usize, delta: f64) -> Result<f64> {
    check_args(n, cell_count, delta)?;
    Ok((-delta.ln() + log_g_n(n, cell_count)) / n as f64)
}

/// `log G_n` with `G_n = 3 + 3 sum_{i=1}^{K-2} (e^3 n / (2 pi i))^{i/2}`.
///
/// Evaluated as a log-sum-exp over the log-terms; the raw terms overflow
/// `f64` long before `K = 512`. For `K = 2` the sum is empty and `G_n = 3`.
pub fn log_g_n(n: u64, cell_count: usize) -> f64 {
    let log_n = (n as f64).ln();
    let log_terms = (1..cell_count.saturating_sub(1)).map(|i| {
        let i = i as f64;
        0.5 * i * (3.0 + log_n - (2.0 * PI * i).ln())
    });
    // log(3 + 3 S) = log 3 + log(1 + S), with the 1 entering as exp(0)
    3f64.ln() + log_sum_exp(std::iter::once(0.0).chain(log_terms))
}

pub fn epsilon_kl_conjecture(n: u64, cell_count: usize, delta: f64) -> Result<f64> {
    check_args(n, cell_count, delta)?;
    let n = n as f64;
    let k = cell_count as f64;
    Ok((-delta.ln() + 0.5 * n * ((k - 1.0) / n).ln_1p()) / n)
}

pub fn epsilon_l1_conjecture(n: u64, cell_count: usize, delta: f64) -> Result<f64> {
    Ok(epsilon_kl_conjecture(n, cell_count, delta)?.sqrt())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let y = (v - max).exp() - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    max + sum.ln()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", format!("{delta} not in (0, 1]")));
    }
    Ok(())
}

fn check_args(n: u64, cell_count: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    if cell_count < 2 {
        return Err(Error::invalid(
            "K",
            format!("need at least 2 cells, got {cell_count}"),
        ));
    }
    check_delta(delta)
}
