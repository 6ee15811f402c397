//! Simulation harness: random targets, noisy-marginal expert priors, error
//! trajectories against the sample size, and Monte-Carlo coverage of the
//! concentration events and the estimator guarantees.
//!
//! Randomness: every replication `r` owns a `ChaCha8Rng` seeded with
//! [`replication_seed`]`(master_seed, r)`. Within a replication the draws
//! happen in a fixed order (target, then one noise vector per prior in
//! configuration order, then the samples), so output is reproducible for a
//! given build regardless of how replications are scheduled across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::distr::{weighted::WeightedIndex, Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::{epsilon_kl_conjecture, epsilon_kl_exact, epsilon_l1_conjecture};
use crate::error::{Error, Result};
use crate::fusion::{kl_centroid, l1_barycenter, theorem1_check, theorem2_check};
use crate::maxent::{solve_maxent, MaxentOptions};
use crate::model::io::format_prob;
use crate::model::{
    empirical_distribution, kl, l1, marginal_of, ConstraintSet, Distribution, EmpiricalCounts,
    OutcomeSpace,
};

/// Noisy marginals are clipped into this interval before the maxent fit.
pub const MARGINAL_CLIP: (f64, f64) = (0.01, 0.99);

/// Relative tolerance used when tallying bound violations.
pub const BOUND_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_CHECKPOINTS: [u64; 11] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000];

/// Which KL radius the KL centroid uses. The L1 barycenter always uses the
/// square-root conjecture radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KlRadius {
    Exact,
    Conjecture,
}

impl KlRadius {
    pub fn epsilon(self, n: u64, cell_count: usize, delta: f64) -> Result<f64> {
        match self {
            KlRadius::Exact => epsilon_kl_exact(n, cell_count, delta),
            KlRadius::Conjecture => epsilon_kl_conjecture(n, cell_count, delta),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub symptoms: usize,
    /// Marginal noise variances, one noisy prior each.
    pub sigma2s: Vec<f64>,
    /// Append a prior equal to the target itself.
    pub include_exact_prior: bool,
    pub delta: f64,
    pub variant: KlRadius,
    pub n_max: u64,
    pub checkpoints: Vec<u64>,
    pub replications: usize,
    pub master_seed: u64,
}

impl SimulationConfig {
    /// Priors with variances 0.1, 0.2, 0.4 plus the exact prior, `delta = 1e-6`,
    /// conjecture radii and the default checkpoint grid up to `n_max`.
    pub fn standard(symptoms: usize, n_max: u64, replications: usize, master_seed: u64) -> Self {
        SimulationConfig {
            symptoms,
            sigma2s: vec![0.1, 0.2, 0.4],
            include_exact_prior: true,
            delta: 1e-6,
            variant: KlRadius::Conjecture,
            n_max,
            checkpoints: default_checkpoints(n_max),
            replications,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        OutcomeSpace::new(self.symptoms)?;
        if self.replications == 0 {
            return Err(Error::invalid("replications", "need at least one"));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max", "need at least one sample"));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || self.checkpoints[0] == 0
            || *self.checkpoints.last().unwrap() > self.n_max
        {
            return Err(Error::invalid(
                "checkpoints",
                format!("need a strictly increasing list within [1, {}]", self.n_max),
            ));
        }
        if let Some(s) = self.sigma2s.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma2", format!("{s} is not a variance")));
        }
        if self.sigma2s.is_empty() && !self.include_exact_prior {
            return Err(Error::invalid("sigma2", "no prior configured"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(
                "delta",
                format!("{} not in (0, 1]", self.delta),
            ));
        }
        Ok(())
    }

    pub fn prior_count(&self) -> usize {
        self.sigma2s.len() + usize::from(self.include_exact_prior)
    }
}

/// Grid `{1, 2, 5, 10, ...}` truncated at `n_max`, always ending at `n_max`.
pub fn default_checkpoints(n_max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = DEFAULT_CHECKPOINTS
        .iter()
        .copied()
        .filter(|&n| n < n_max)
        .collect();
    let mut scale = 10_000;
    while scale < n_max {
        for m in [1, 2, 5] {
            if m * scale < n_max {
                out.push(m * scale);
            }
        }
        scale *= 10;
    }
    out.sort_unstable();
    out.push(n_max);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    KlCentroid,
    L1Barycenter,
    Empirical,
    Expert,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::KlCentroid,
        Estimator::L1Barycenter,
        Estimator::Empirical,
        Estimator::Expert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::KlCentroid => "kl_centroid",
            Estimator::L1Barycenter => "l1_barycenter",
            Estimator::Empirical => "empirical",
            Estimator::Expert => "expert",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `Kl` is `KL(estimate || p_star)`, `L1` is `||estimate - p_star||_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Kl,
    L1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Kl => "kl",
            Metric::L1 => "l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub rep: usize,
    /// 1-based; noisy priors in configuration order, then the exact prior.
    pub prior: usize,
    pub n: u64,
    pub estimator: Estimator,
    pub metric: Metric,
    pub value: f64,
}

/// Violations of the estimator guarantees observed while running, counted
/// only when the corresponding concentration event held.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BoundTally {
    pub theorem1_checked: u64,
    pub theorem1_violations: u64,
    pub theorem2_checked: u64,
    /// Violations of `min(KL(expert||p*), eps (L_n + 1))`.
    pub theorem2_violations: u64,
    pub theorem2_expert_branch_violations: u64,
    pub theorem2_rate_branch_violations: u64,
    /// Violations of the segment convexity bound (never expected).
    pub theorem2_segment_violations: u64,
}

impl BoundTally {
    fn merge(&mut self, o: &BoundTally) {
        self.theorem1_checked += o.theorem1_checked;
        self.theorem1_violations += o.theorem1_violations;
        self.theorem2_checked += o.theorem2_checked;
        self.theorem2_violations += o.theorem2_violations;
        self.theorem2_expert_branch_violations += o.theorem2_expert_branch_violations;
        self.theorem2_rate_branch_violations += o.theorem2_rate_branch_violations;
        self.theorem2_segment_violations += o.theorem2_segment_violations;
    }

    fn check(
        &mut self,
        p_star: &Distribution,
        prior: &Distribution,
        emp: &Distribution,
        (eps_kl, eps_l1): (f64, f64),
        (kl_est, l1_est): (&Distribution, &Distribution),
    ) -> Result<()> {
        let t1 = theorem1_check(p_star, prior, emp, eps_l1, l1_est)?;
        if t1.event_holds {
            self.theorem1_checked += 1;
            self.theorem1_violations += u64::from(t1.violated(BOUND_TOLERANCE));
        }
        let t2 = theorem2_check(p_star, prior, emp, eps_kl, kl_est)?;
        if t2.event_holds {
            self.theorem2_checked += 1;
            self.theorem2_violations += u64::from(t2.violated(BOUND_TOLERANCE));
            self.theorem2_expert_branch_violations +=
                u64::from(t2.expert_branch_violated(BOUND_TOLERANCE));
            self.theorem2_rate_branch_violations +=
                u64::from(t2.rate_branch_violated(BOUND_TOLERANCE));
            if let Some(b) = t2.segment_bound {
                let slack = BOUND_TOLERANCE * b.abs() + 1e-15;
                self.theorem2_segment_violations += u64::from(t2.kl_estimate > b + slack);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub bounds: BoundTally,
}

/// Seed of replication `rep`: SplitMix64 applied to
/// `master_seed + (rep + 1) * 0x9E3779B97F4A7C15` (wrapping).
pub fn replication_seed(master_seed: u64, rep: usize) -> u64 {
    let mixed = master_seed.wrapping_add(
        (rep as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    splitmix64(mixed)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_rng(master_seed: u64, rep: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replication_seed(master_seed, rep))
}

/// Target drawn as `K` i.i.d. uniforms on `(0, 1)`, normalized.
pub fn sample_target<R: Rng + ?Sized>(space: Arc<OutcomeSpace>, rng: &mut R) -> Distribution {
    let raw: Vec<f64> = (0..space.cell_count())
        .map(|_| rng.sample(Open01))
        .collect();
    let total: f64 = raw.iter().sum();
    Distribution::from_raw(space, raw.into_iter().map(|x| x / total).collect())
}

/// Maxent prior matching the target's marginals after adding
/// `N(0, sigma2)` noise and clipping into [`MARGINAL_CLIP`].
pub fn noisy_expert_prior<R: Rng + ?Sized>(
    p_star: &Distribution,
    sigma2: f64,
    rng: &mut R,
) -> Result<Distribution> {
    let noise = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| Error::invalid("sigma2", format!("{sigma2}: {e}")))?;
    let marginals: Vec<f64> = (0..p_star.space().symptom_count())
        .map(|j| {
            let m = marginal_of(p_star.probs(), j) + noise.sample(rng);
            m.clamp(MARGINAL_CLIP.0, MARGINAL_CLIP.1)
        })
        .collect();
    let constraints = ConstraintSet::from_marginals(&marginals);
    Ok(solve_maxent(
        &constraints,
        p_star.space().clone(),
        &MaxentOptions::default(),
    )?
    .distribution)
}

fn draw_priors<R: Rng + ?Sized>(
    p_star: &Distribution,
    sigma2s: &[f64],
    include_exact: bool,
    rng: &mut R,
) -> Result<Vec<Distribution>> {
    let mut priors = sigma2s
        .iter()
        .map(|&s| noisy_expert_prior(p_star, s, rng))
        .collect::<Result<Vec<_>>>()?;
    if include_exact {
        priors.push(p_star.clone());
    }
    Ok(priors)
}

fn sampler(p_star: &Distribution) -> WeightedIndex<f64> {
    WeightedIndex::new(p_star.probs()).expect("target has positive mass")
}

pub fn run_trajectory(config: &SimulationConfig) -> Result<Trajectory> {
    config.validate()?;
    let space = Arc::new(OutcomeSpace::new(config.symptoms)?);
    let per_rep = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, space.clone(), rep))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut bounds = BoundTally::default();
    for (recs, tally) in per_rep {
        records.extend(recs);
        bounds.merge(&tally);
    }
    Ok(Trajectory { records, bounds })
}

fn run_replication(
    config: &SimulationConfig,
    space: Arc<OutcomeSpace>,
    rep: usize,
) -> Result<(Vec<TrajectoryRecord>, BoundTally)> {
    let k = space.cell_count();
    let mut rng = replication_rng(config.master_seed, rep);
    let p_star = sample_target(space.clone(), &mut rng);
    let priors = draw_priors(
        &p_star,
        &config.sigma2s,
        config.include_exact_prior,
        &mut rng,
    )?;
    let sampler = sampler(&p_star);
    let mut counts = EmpiricalCounts::zeros(k);
    let mut records = Vec::with_capacity(config.checkpoints.len() * priors.len() * 8);
    let mut tally = BoundTally::default();
    let mut next = config.checkpoints.iter().peekable();
    for n in 1..=config.n_max {
        counts.observe(sampler.sample(&mut rng));
        if next.peek() != Some(&&n) {
            continue;
        }
        next.next();
        let emp = empirical_distribution(space.clone(), &counts)?;
        let eps_kl = config.variant.epsilon(n, k, config.delta)?;
        let eps_l1 = epsilon_l1_conjecture(n, k, config.delta)?;
        for (idx, prior) in priors.iter().enumerate() {
            let kl_est = kl_centroid(prior, &emp, eps_kl)?.estimate;
            let l1_est = l1_barycenter(prior, &emp, eps_l1)?.estimate;
            tally.check(&p_star, prior, &emp, (eps_kl, eps_l1), (&kl_est, &l1_est))?;
            for (estimator, d) in [
                (Estimator::KlCentroid, &kl_est),
                (Estimator::L1Barycenter, &l1_est),
                (Estimator::Empirical, &emp),
                (Estimator::Expert, prior),
            ] {
                for (metric, value) in [
                    (Metric::Kl, kl(d.probs(), p_star.probs())),
                    (Metric::L1, l1(d.probs(), p_star.probs())),
                ] {
                    records.push(TrajectoryRecord {
                        rep,
                        prior: idx + 1,
                        n,
                        estimator,
                        metric,
                        value,
                    });
                }
            }
        }
    }
    Ok((records, tally))
}

/// Long-format CSV: `rep,prior,n,estimator,metric,value`.
pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["rep", "prior", "n", "estimator", "metric", "value"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.rep.to_string(),
            r.prior.to_string(),
            r.n.to_string(),
            r.estimator.to_string(),
            r.metric.to_string(),
            format_prob(r.value),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Replication means keyed by `(prior, n, estimator, metric)`.
#[derive(Debug, Clone, Default)]
pub struct TrajectorySummary {
    cells: BTreeMap<(usize, u64, Estimator, Metric), (f64, usize)>,
}

impl TrajectorySummary {
    pub fn new(records: &[TrajectoryRecord]) -> Self {
        let mut cells = BTreeMap::new();
        for r in records {
            let e = cells
                .entry((r.prior, r.n, r.estimator, r.metric))
                .or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        TrajectorySummary { cells }
    }

    pub fn mean(&self, prior: usize, n: u64, estimator: Estimator, metric: Metric) -> Option<f64> {
        self.cells
            .get(&(prior, n, estimator, metric))
            .map(|(sum, count)| sum / *count as f64)
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        let mut ns: Vec<u64> = self.cells.keys().map(|k| k.1).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageConfig {
    pub symptoms: usize,
    pub n: u64,
    pub delta: f64,
    pub variant: KlRadius,
    pub replications: usize,
    pub master_seed: u64,
    pub sigma2s: Vec<f64>,
    pub include_exact_prior: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub schema: u32,
    pub config: CoverageConfig,
    pub cell_count: usize,
    pub epsilon_kl: f64,
    pub epsilon_l1: f64,
    pub kl_event_failures: u64,
    pub kl_event_failure_frequency: f64,
    pub l1_event_failures: u64,
    pub l1_event_failure_frequency: f64,
    /// `3 sqrt(delta (1 - delta) / replications)`.
    pub binomial_slack: f64,
    /// Whether the KL failure frequency is within `delta + binomial_slack`.
    /// Only a guarantee for the exact radius.
    pub kl_within_delta: bool,
    pub bounds: BoundTally,
    /// Violations of the L1 and KL guarantees, counted under their events.
    pub conditional_violations: u64,
}

pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageReport> {
    let space = Arc::new(OutcomeSpace::new(config.symptoms)?);
    if config.replications == 0 {
        return Err(Error::invalid("replications", "need at least one"));
    }
    if config.sigma2s.is_empty() && !config.include_exact_prior {
        return Err(Error::invalid("sigma2", "no prior configured"));
    }
    let k = space.cell_count();
    let eps_kl = config.variant.epsilon(config.n, k, config.delta)?;
    let eps_l1 = epsilon_l1_conjecture(config.n, k, config.delta)?;
    let per_rep = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(config.master_seed, rep);
            let p_star = sample_target(space.clone(), &mut rng);
            let priors = draw_priors(
                &p_star,
                &config.sigma2s,
                config.include_exact_prior,
                &mut rng,
            )?;
            let sampler = sampler(&p_star);
            let mut counts = EmpiricalCounts::zeros(k);
            for _ in 0..config.n {
                counts.observe(sampler.sample(&mut rng));
            }
            let emp = empirical_distribution(space.clone(), &counts)?;
            let mut tally = BoundTally::default();
            for prior in &priors {
                let kl_est = kl_centroid(prior, &emp, eps_kl)?.estimate;
                let l1_est = l1_barycenter(prior, &emp, eps_l1)?.estimate;
                tally.check(&p_star, prior, &emp, (eps_kl, eps_l1), (&kl_est, &l1_est))?;
            }
            let kl_fail = kl(emp.probs(), p_star.probs()) > eps_kl;
            let l1_fail = l1(emp.probs(), p_star.probs()) > eps_l1;
            Ok((kl_fail, l1_fail, tally))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bounds = BoundTally::default();
    let (mut kl_fail, mut l1_fail) = (0, 0);
    for (kf, lf, t) in &per_rep {
        kl_fail += u64::from(*kf);
        l1_fail += u64::from(*lf);
        bounds.merge(t);
    }
    let reps = config.replications as f64;
    let binomial_slack = 3.0 * (config.delta * (1.0 - config.delta) / reps).sqrt();
    let kl_freq = kl_fail as f64 / reps;
    Ok(CoverageReport {
        schema: 1,
        config: config.clone(),
        cell_count: k,
        epsilon_kl: eps_kl,
        epsilon_l1: eps_l1,
        kl_event_failures: kl_fail,
        kl_event_failure_frequency: kl_freq,
        l1_event_failures: l1_fail,
        l1_event_failure_frequency: l1_fail as f64 / reps,
        binomial_slack,
        kl_within_delta: kl_freq <= config.delta + binomial_slack,
        conditional_violations: bounds.theorem1_violations + bounds.theorem2_violations,
        bounds,
    })
}
