use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::OutcomeSpace;
use crate::error::{Error, Result};

/// `lo <= P[symptom present] <= hi`; an equality has `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalBound {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Expert knowledge about the target distribution: marginal intervals,
/// forbidden cells and a minimum number of present symptoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default, rename = "marginals")]
    pub marginal_bounds: Vec<MarginalBound>,
    #[serde(default)]
    pub forbidden_cells: BTreeSet<usize>,
    #[serde(default)]
    pub min_present: Option<usize>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        ConstraintSet::default()
    }

    pub fn with_marginal(mut self, index: usize, lo: f64, hi: f64) -> Self {
        self.marginal_bounds.push(MarginalBound { index, lo, hi });
        self
    }

    pub fn with_marginal_eq(self, index: usize, value: f64) -> Self {
        self.with_marginal(index, value, value)
    }

    pub fn forbid(mut self, cell: usize) -> Self {
        self.forbidden_cells.insert(cell);
        self
    }

    pub fn with_min_present(mut self, m: usize) -> Self {
        self.min_present = Some(m);
        self
    }

    /// Equality constraints on every symptom marginal.
    pub fn from_marginals(marginals: &[f64]) -> Self {
        marginals
            .iter()
            .enumerate()
            .fold(ConstraintSet::new(), |c, (j, &m)| c.with_marginal_eq(j, m))
    }

    /// The outcome space named by `symptoms`.
    pub fn outcome_space(&self) -> Result<OutcomeSpace> {
        if self.symptoms.is_empty() {
            return Err(Error::InvalidConstraint(
                "`symptoms` must list at least one symptom".into(),
            ));
        }
        OutcomeSpace::with_labels(self.symptoms.clone())
    }

    pub fn validate(&self, space: &OutcomeSpace) -> Result<()> {
        if !self.symptoms.is_empty() && self.symptoms.len() != space.symptom_count() {
            return Err(Error::InvalidConstraint(format!(
                "{} symptom labels for a space of {} symptoms",
                self.symptoms.len(),
                space.symptom_count()
            )));
        }
        let mut seen = BTreeSet::new();
        for (row, b) in self.marginal_bounds.iter().enumerate() {
            if b.index >= space.symptom_count() {
                return Err(Error::InvalidConstraint(format!(
                    "marginals[{row}].index = {} out of range for {} symptoms",
                    b.index,
                    space.symptom_count()
                )));
            }
            if !seen.insert(b.index) {
                return Err(Error::InvalidConstraint(format!(
                    "marginals[{row}]: duplicate bound for symptom {}",
                    b.index
                )));
            }
            if !(b.lo.is_finite() && b.hi.is_finite() && 0.0 <= b.lo && b.lo <= b.hi && b.hi <= 1.0)
            {
                return Err(Error::InvalidConstraint(format!(
                    "marginals[{row}]: need 0 <= lo <= hi <= 1, got lo = {}, hi = {}",
                    b.lo, b.hi
                )));
            }
        }
        if let Some(&cell) = self.forbidden_cells.iter().next_back() {
            if cell >= space.cell_count() {
                return Err(Error::InvalidConstraint(format!(
                    "forbidden cell {cell} out of range for {} cells",
                    space.cell_count()
                )));
            }
        }
        if let Some(m) = self.min_present {
            if m > space.symptom_count() {
                return Err(Error::InvalidConstraint(format!(
                    "min_present = {m} exceeds the {} symptoms",
                    space.symptom_count()
                )));
            }
        }
        Ok(())
    }

    /// Cells not excluded by `forbidden_cells` or `min_present`.
    pub fn allowed_cells(&self, space: &OutcomeSpace) -> Vec<bool> {
        let m = self.min_present.unwrap_or(0) as u32;
        (0..space.cell_count())
            .map(|cell| !self.forbidden_cells.contains(&cell) && cell.count_ones() >= m)
            .collect()
    }
}
