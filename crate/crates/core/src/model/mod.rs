//! Core value types: the outcome space of binary symptom combinations,
//! distributions on its simplex, and empirical counts.
//!
//! Cell `i` encodes symptom `j` as bit `j` of `i` (set = present), so cell 0
//! is the all-absent combination and cell `K - 1` has every symptom present.

mod constraints;
pub mod io;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use constraints::{ConstraintSet, MarginalBound};

/// Absolute tolerance on `sum(probs) - 1` accepted by [`Distribution::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Largest supported number of symptoms (dense vectors of `2^20` cells).
pub const MAX_SYMPTOMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSpace {
    symptom_count: usize,
    labels: Option<Vec<String>>,
}

impl OutcomeSpace {
    pub fn new(symptom_count: usize) -> Result<Self> {
        if symptom_count == 0 || symptom_count > MAX_SYMPTOMS {
            return Err(Error::invalid(
                "symptom_count",
                format!("expected 1..={MAX_SYMPTOMS}, got {symptom_count}"),
            ));
        }
        Ok(OutcomeSpace {
            symptom_count,
            labels: None,
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut space = OutcomeSpace::new(labels.len())?;
        space.labels = Some(labels);
        Ok(space)
    }

    /// Space whose cell count is `cell_count`, which must be a power of two `>= 2`.
    pub fn from_cell_count(cell_count: usize) -> Result<Self> {
        if cell_count < 2 || !cell_count.is_power_of_two() {
            return Err(Error::invalid(
                "cell_count",
                format!("expected a power of two >= 2, got {cell_count}"),
            ));
        }
        OutcomeSpace::new(cell_count.trailing_zeros() as usize)
    }

    pub fn symptom_count(&self) -> usize {
        self.symptom_count
    }

    pub fn cell_count(&self) -> usize {
        1usize << self.symptom_count
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn has_symptom(&self, cell: usize, symptom: usize) -> bool {
        cell >> symptom & 1 == 1
    }

    /// Binary rendering of a cell, symptom `J - 1` leftmost.
    pub fn bitmask(&self, cell: usize) -> String {
        format!("{:0width$b}", cell, width = self.symptom_count)
    }

    pub fn check_symptom(&self, symptom: usize) -> Result<()> {
        if symptom >= self.symptom_count {
            return Err(Error::SymptomOutOfRange {
                index: symptom,
                symptom_count: self.symptom_count,
            });
        }
        Ok(())
    }

    pub fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.cell_count() {
            return Err(Error::CellOutOfRange {
                index: cell,
                cell_count: self.cell_count(),
            });
        }
        Ok(())
    }
}

/// A point on the probability simplex over the cells of an [`OutcomeSpace`].
#[derive(Debug, Clone)]
pub struct Distribution {
    probs: Vec<f64>,
    space: Arc<OutcomeSpace>,
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs && self.space.symptom_count == other.space.symptom_count
    }
}

impl Distribution {
    /// Validates non-negativity and the unit sum. Inputs off the simplex are
    /// rejected rather than renormalized.
    pub fn new(space: Arc<OutcomeSpace>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.cell_count() {
            return Err(Error::DimensionMismatch {
                left: probs.len(),
                right: space.cell_count(),
            });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::NotOnSimplex {
                sum,
                tolerance: SIMPLEX_TOLERANCE,
            });
        }
        Ok(Distribution { probs, space })
    }

    pub(crate) fn from_raw(space: Arc<OutcomeSpace>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), space.cell_count());
        Distribution { probs, space }
    }

    pub fn uniform(space: Arc<OutcomeSpace>) -> Self {
        let k = space.cell_count();
        Distribution::from_raw(space, vec![1.0 / k as f64; k])
    }

    pub fn point_mass(space: Arc<OutcomeSpace>, cell: usize) -> Result<Self> {
        space.check_cell(cell)?;
        let mut probs = vec![0.0; space.cell_count()];
        probs[cell] = 1.0;
        Ok(Distribution::from_raw(space, probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    pub fn cell_count(&self) -> usize {
        self.probs.len()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &Distribution, weight: f64) -> Result<Distribution> {
        check_same_space(self, other)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid("weight", format!("{weight} not in [0, 1]")));
        }
        Ok(Distribution::from_raw(
            self.space.clone(),
            mix_slices(&self.probs, &other.probs, weight),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalCounts {
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        EmpiricalCounts { counts, n }
    }

    /// Counts with a separately declared total, which must equal their sum.
    pub fn with_total(counts: Vec<u64>, n: u64) -> Result<Self> {
        let sum: u64 = counts.iter().sum();
        if sum != n {
            return Err(Error::invalid(
                "n",
                format!("counts sum to {sum} but the declared total is {n}"),
            ));
        }
        Ok(EmpiricalCounts { counts, n })
    }

    pub fn zeros(cell_count: usize) -> Self {
        EmpiricalCounts {
            counts: vec![0; cell_count],
            n: 0,
        }
    }

    pub fn observe(&mut self, cell: usize) {
        self.counts[cell] += 1;
        self.n += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

pub fn empirical_distribution(
    space: Arc<OutcomeSpace>,
    counts: &EmpiricalCounts,
) -> Result<Distribution> {
    if counts.counts.len() != space.cell_count() {
        return Err(Error::DimensionMismatch {
            left: counts.counts.len(),
            right: space.cell_count(),
        });
    }
    if counts.n == 0 {
        return Err(Error::NoSamples);
    }
    let n = counts.n as f64;
    let probs = counts.counts.iter().map(|&c| c as f64 / n).collect();
    Ok(Distribution::from_raw(space, probs))
}

/// Probability that `symptom` is present.
pub fn marginal(dist: &Distribution, symptom: usize) -> Result<f64> {
    dist.space.check_symptom(symptom)?;
    Ok(marginal_of(&dist.probs, symptom))
}

pub(crate) fn marginal_of(probs: &[f64], symptom: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|(cell, _)| cell >> symptom & 1 == 1)
        .map(|(_, p)| p)
        .sum()
}

pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_same_space(p, q)?;
    Ok(l1(&p.probs, &q.probs))
}

/// `KL(p || q)` in nats, `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_same_space(p, q)?;
    Ok(kl(&p.probs, &q.probs))
}

pub fn check_same_space(p: &Distribution, q: &Distribution) -> Result<()> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::DimensionMismatch {
            left: p.probs.len(),
            right: q.probs.len(),
        });
    }
    Ok(())
}

pub fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

pub fn l2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    // rounding can leave tiny negative totals for p == q
    total.max(0.0)
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub(crate) fn mix_slices(a: &[f64], b: &[f64], weight: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| weight * x + (1.0 - weight) * y)
        .collect()
}
