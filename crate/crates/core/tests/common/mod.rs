//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use priorfuse::model::{ConstraintSet, Distribution, OutcomeSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(cell_count: usize) -> Arc<OutcomeSpace> {
    Arc::new(OutcomeSpace::from_cell_count(cell_count).unwrap())
}

pub fn dist(probs: &[f64]) -> Distribution {
    Distribution::new(space(probs.len()), probs.to_vec()).unwrap()
}

/// Strictly positive point of the simplex: normalized uniforms on (0, 1).
pub fn random_probs<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-12).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_dist<R: Rng>(rng: &mut R, k: usize) -> Distribution {
    dist(&random_probs(rng, k))
}

pub fn shannon(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub fn relative_entropy(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total.max(0.0)
}

pub fn manhattan(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `{x : a.x in [lo, hi]}`.
struct Slab {
    a: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Intersection of an affine subspace (orthonormalized rows), slabs and the
/// non-negative orthant, projected onto with Dykstra's algorithm.
pub struct Polytope {
    k: usize,
    /// Cells pinned to zero; the orthant step is the box `x >= 0, x_c = 0`.
    zero: Vec<bool>,
    rows: Vec<(Vec<f64>, f64)>,
    slabs: Vec<Slab>,
}

impl Polytope {
    /// Feasible set of a constraint set, built from first principles: cell
    /// `c` carries symptom `j` iff bit `j` of `c` is set.
    pub fn from_constraints(c: &ConstraintSet, symptoms: usize) -> Self {
        let k = 1usize << symptoms;
        let mut equalities = vec![(vec![1.0; k], 1.0)];
        let mut slabs = Vec::new();
        let zero = (0..k)
            .map(|cell| {
                c.forbidden_cells.contains(&cell)
                    || c.min_present
                        .is_some_and(|m| (cell.count_ones() as usize) < m)
            })
            .collect();
        for b in &c.marginal_bounds {
            let a: Vec<f64> = (0..k).map(|cell| ((cell >> b.index) & 1) as f64).collect();
            if b.lo == b.hi {
                equalities.push((a, b.lo));
            } else {
                slabs.push(Slab {
                    a,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        Polytope {
            k,
            zero,
            rows: orthonormalize(equalities),
            slabs,
        }
    }

    fn project_affine(&self, x: &mut [f64]) {
        for (q, c) in &self.rows {
            let r = dot(q, x) - c;
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= r * qi;
            }
        }
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let sets = 2 + self.slabs.len();
        let mut x = v.to_vec();
        let mut increments = vec![vec![0.0; self.k]; sets];
        for _ in 0..200_000 {
            let before = x.clone();
            for (s, inc) in increments.iter_mut().enumerate() {
                let mut y: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let shifted = y.clone();
                match s {
                    0 => self.project_affine(&mut y),
                    1 => self.clip(&mut y),
                    _ => {
                        let slab = &self.slabs[s - 2];
                        let t = dot(&slab.a, &y);
                        let target = t.clamp(slab.lo, slab.hi);
                        let norm2 = dot(&slab.a, &slab.a);
                        for (yi, ai) in y.iter_mut().zip(&slab.a) {
                            *yi -= (t - target) * ai / norm2;
                        }
                    }
                }
                for i in 0..self.k {
                    inc[i] = shifted[i] - y[i];
                }
                x = y;
            }
            let change = x
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            // the iterate can sit still while the increments are still moving
            if change < 1e-15 && self.max_violation(&x) < 1e-13 {
                break;
            }
        }
        self.clip(&mut x);
        x
    }

    fn clip(&self, x: &mut [f64]) {
        for (v, &z) in x.iter_mut().zip(&self.zero) {
            *v = if z { 0.0 } else { v.max(0.0) };
        }
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x
            .iter()
            .zip(&self.zero)
            .map(|(&v, &z)| if z { v.abs() } else { (-v).max(0.0) })
            .fold(0.0, f64::max);
        for (q, c) in &self.rows {
            worst = worst.max((dot(q, x) - c).abs());
        }
        for s in &self.slabs {
            let t = dot(&s.a, x);
            worst = worst.max(s.lo - t).max(t - s.hi);
        }
        worst
    }
}

fn orthonormalize(rows: Vec<(Vec<f64>, f64)>) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for (mut a, mut c) in rows {
        for (q, d) in &out {
            let r = dot(q, &a);
            for (ai, qi) in a.iter_mut().zip(q) {
                *ai -= r * qi;
            }
            c -= r * d;
        }
        let norm = dot(&a, &a).sqrt();
        if norm > 1e-10 {
            a.iter_mut().for_each(|v| *v /= norm);
            out.push((a, c / norm));
        }
    }
    out
}

/// Maximum-entropy point of `poly` by projected gradient ascent with Armijo
/// backtracking, stopped once a step moves less than `1e-12`.
pub fn brute_force_maxent(poly: &Polytope) -> Vec<f64> {
    let k = poly.k;
    let mut x = poly.project(&vec![1.0 / k as f64; k]);
    let mut h = shannon(&x);
    let mut eta = 1.0;
    for _ in 0..100_000 {
        let grad: Vec<f64> = x
            .iter()
            .zip(&poly.zero)
            .map(|(&v, &z)| if z { 0.0 } else { -(v.max(1e-300).ln() + 1.0) })
            .collect();
        let mut accepted = None;
        while eta > 1e-18 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + eta * g).collect();
            let y = poly.project(&trial);
            let hy = shannon(&y);
            let gain: f64 = grad
                .iter()
                .zip(y.iter().zip(&x))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if hy >= h + 1e-4 * gain {
                accepted = Some((y, hy));
                break;
            }
            eta *= 0.5;
        }
        let Some((y, hy)) = accepted else { break };
        let step = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        h = hy;
        eta = (eta * 2.0).min(1.0);
        if step < 1e-12 {
            break;
        }
    }
    x
}

/// Best point of `w expert + (1 - w) emp` over a uniform grid of `points + 1`
/// weights, subject to `KL(emp || p) <= epsilon`. Returns
/// `(w, KL(expert || p), KL(emp || p))`.
pub fn grid_kl_centroid(
    expert: &[f64],
    emp: &[f64],
    epsilon: f64,
    points: usize,
) -> (f64, f64, f64) {
    let mut best = (0.0, relative_entropy(expert, emp), 0.0);
    let mut p = vec![0.0; expert.len()];
    for step in 0..=points {
        let w = step as f64 / points as f64;
        for i in 0..p.len() {
            p[i] = w * expert[i] + (1.0 - w) * emp[i];
        }
        let constraint = relative_entropy(emp, &p);
        if constraint <= epsilon {
            let objective = relative_entropy(expert, &p);
            if objective < best.1 {
                best = (w, objective, constraint);
            }
        }
    }
    best
}

/// Random constraint set over `symptoms` symptoms with some forbidden cells
/// and equality marginals taken from a positive point on the allowed cells,
/// so the set has a strictly positive feasible point.
pub fn random_forbidden_instance<R: Rng>(rng: &mut R, symptoms: usize) -> ConstraintSet {
    let k = 1usize << symptoms;
    let forbid_count = rng.random_range(1..=(k / 4).max(1));
    let mut c = ConstraintSet::new();
    c.symptoms = (1..=symptoms).map(|j| format!("s{j}")).collect();
    while c.forbidden_cells.len() < forbid_count {
        c = c.forbid(rng.random_range(0..k));
    }
    let mut p = random_probs(rng, k);
    for &cell in &c.forbidden_cells {
        p[cell] = 0.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    for j in 0..symptoms {
        if rng.random_bool(0.8) {
            let m: f64 = (0..k)
                .filter(|cell| (cell >> j) & 1 == 1)
                .map(|cell| p[cell])
                .sum();
            c = c.with_marginal_eq(j, m);
        }
    }
    c
}
