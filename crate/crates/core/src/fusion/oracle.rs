//! Generic numerical solvers for the fusion problems, used to check the
//! closed-form and segment-search estimators. Not meant for production use:
//! they are slow and restricted to small outcome spaces.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::model::{check_same_space, kl, l1, l2, Distribution};

/// Largest outcome space accepted by the oracles.
pub const ORACLE_MAX_CELLS: usize = 16;

const SUBGRADIENT_ITERATIONS: usize = 100_000;
const DYKSTRA_MAX_SWEEPS: usize = 10_000;
const DYKSTRA_TOLERANCE: f64 = 1e-15;
const FEASIBILITY_SLACK: f64 = 1e-12;

/// Numerically minimizes `||p - expert||_objective_norm` over the simplex
/// subject to `||p - emp||_constraint_norm <= epsilon`, for norms in `{1, 2}`.
///
/// * `(1, 1)` is a linear program and is solved exactly.
/// * `(2, j)` is the Euclidean projection of `expert` onto the feasible set,
///   computed with Dykstra's alternating projections (one projected-gradient
///   step of unit length on `|p - expert|^2 / 2`).
/// * `(1, 2)` runs projected subgradient descent with steps `c / sqrt(t)`
///   and returns the best feasible iterate.
pub fn lp_projection_oracle(
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
    objective_norm: u8,
    constraint_norm: u8,
) -> Result<Distribution> {
    check_same_space(expert, emp)?;
    check_size(expert)?;
    for (name, norm) in [
        ("objective_norm", objective_norm),
        ("constraint_norm", constraint_norm),
    ] {
        if norm != 1 && norm != 2 {
            return Err(Error::invalid(
                name,
                format!("unsupported norm index {norm}"),
            ));
        }
    }
    super::check_epsilon(epsilon)?;
    let (e, m) = (expert.probs(), emp.probs());
    if norm(e, m, constraint_norm) <= epsilon {
        return Ok(expert.clone());
    }
    let feasible = FeasibleSet {
        center: m,
        radius: epsilon,
        norm: constraint_norm,
    };
    let probs = match (objective_norm, constraint_norm) {
        (1, 1) => l1_l1_program(e, m, epsilon)?,
        (2, _) => feasible.project(e),
        _ => projected_subgradient(e, &feasible),
    };
    Ok(Distribution::from_raw(expert.space().clone(), probs))
}

/// Minimizes `KL(expert || p)` subject to `KL(emp || p) <= epsilon` with a
/// log-barrier interior-point method (equality-constrained Newton steps),
/// without using the segment structure of the solution.
pub fn kl_projection_oracle(
    expert: &Distribution,
    emp: &Distribution,
    epsilon: f64,
) -> Result<Distribution> {
    check_same_space(expert, emp)?;
    check_size(expert)?;
    super::check_epsilon(epsilon)?;
    let (e, m) = (expert.probs(), emp.probs());
    if kl(m, e) <= epsilon {
        return Ok(expert.clone());
    }
    if epsilon == 0.0 {
        return Ok(emp.clone());
    }
    let support: Vec<usize> = (0..e.len()).filter(|&i| e[i] > 0.0 || m[i] > 0.0).collect();
    let es: Vec<f64> = support.iter().map(|&i| e[i]).collect();
    let ms: Vec<f64> = support.iter().map(|&i| m[i]).collect();
    let ps = BarrierProblem {
        expert: &es,
        emp: &ms,
        epsilon,
    }
    .solve();
    let mut probs = vec![0.0; e.len()];
    for (&i, p) in support.iter().zip(ps) {
        probs[i] = p;
    }
    Ok(Distribution::from_raw(expert.space().clone(), probs))
}

fn check_size(d: &Distribution) -> Result<()> {
    if d.cell_count() > ORACLE_MAX_CELLS {
        return Err(Error::invalid(
            "K",
            format!(
                "oracle supports at most {ORACLE_MAX_CELLS} cells, got {}",
                d.cell_count()
            ),
        ));
    }
    Ok(())
}

fn norm(a: &[f64], b: &[f64], which: u8) -> f64 {
    if which == 1 {
        l1(a, b)
    } else {
        l2(a, b)
    }
}

fn l1_l1_program(e: &[f64], m: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let k = e.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let p: Vec<_> = (0..k).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let u: Vec<_> = (0..k)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let v: Vec<_> = (0..k)
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..k {
        // u_i >= |p_i - e_i|, v_i >= |p_i - m_i|
        lp.add_constraint([(p[i], 1.0), (u[i], -1.0)], ComparisonOp::Le, e[i]);
        lp.add_constraint([(p[i], 1.0), (u[i], 1.0)], ComparisonOp::Ge, e[i]);
        lp.add_constraint([(p[i], 1.0), (v[i], -1.0)], ComparisonOp::Le, m[i]);
        lp.add_constraint([(p[i], 1.0), (v[i], 1.0)], ComparisonOp::Ge, m[i]);
    }
    lp.add_constraint(
        v.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>(),
        ComparisonOp::Le,
        epsilon,
    );
    lp.add_constraint(
        p.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>(),
        ComparisonOp::Eq,
        1.0,
    );
    let solution = lp
        .solve()
        .map_err(|e| Error::invalid("epsilon", format!("linear program failed: {e}")))?;
    let mut probs: Vec<f64> = p.iter().map(|&x| solution[x].max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|x| *x /= total);
    Ok(probs)
}

struct FeasibleSet<'a> {
    center: &'a [f64],
    radius: f64,
    norm: u8,
}

impl FeasibleSet<'_> {
    fn contains(&self, p: &[f64]) -> bool {
        norm(p, self.center, self.norm) <= self.radius + FEASIBILITY_SLACK
    }

    /// Euclidean projection onto simplex ∩ ball by Dykstra's algorithm.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let k = x.len();
        let mut cur = x.to_vec();
        let mut corr_simplex = vec![0.0; k];
        let mut corr_ball = vec![0.0; k];
        for _ in 0..DYKSTRA_MAX_SWEEPS {
            let before = cur.clone();
            let y: Vec<f64> = (0..k).map(|i| cur[i] + corr_simplex[i]).collect();
            let a = project_simplex(&y, 1.0);
            for i in 0..k {
                corr_simplex[i] = y[i] - a[i];
            }
            let z: Vec<f64> = (0..k).map(|i| a[i] + corr_ball[i]).collect();
            let b = self.project_ball(&z);
            for i in 0..k {
                corr_ball[i] = z[i] - b[i];
            }
            cur = b;
            if l1(&cur, &before) <= DYKSTRA_TOLERANCE {
                break;
            }
        }
        // the last step lands in the ball; finish on the simplex
        project_simplex(&cur, 1.0)
    }

    fn project_ball(&self, x: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = x.iter().zip(self.center).map(|(a, c)| a - c).collect();
        let moved = if self.norm == 2 {
            let r = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if r <= self.radius {
                return x.to_vec();
            }
            diff.iter().map(|d| d * self.radius / r).collect::<Vec<_>>()
        } else {
            let r: f64 = diff.iter().map(|d| d.abs()).sum();
            if r <= self.radius {
                return x.to_vec();
            }
            let mags: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
            let shrunk = project_simplex(&mags, self.radius);
            diff.iter()
                .zip(shrunk)
                .map(|(d, s)| d.signum() * s)
                .collect()
        };
        moved.iter().zip(self.center).map(|(d, c)| c + d).collect()
    }
}

/// Euclidean projection onto `{p >= 0, sum p = total}` (sort-based).
fn project_simplex(y: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (idx, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - total) / (idx + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn projected_subgradient(e: &[f64], feasible: &FeasibleSet) -> Vec<f64> {
    let mut p = feasible.project(feasible.center);
    let mut best = p.clone();
    let mut best_value = l1(&p, e);
    for t in 1..=SUBGRADIENT_ITERATIONS {
        let step = 0.1 / (t as f64).sqrt();
        let stepped: Vec<f64> = p
            .iter()
            .zip(e)
            .map(|(pi, ei)| pi - step * (pi - ei).signum())
            .collect();
        p = feasible.project(&stepped);
        let value = l1(&p, e);
        if value < best_value && feasible.contains(&p) {
            best_value = value;
            best.clone_from(&p);
        }
    }
    best
}

struct BarrierProblem<'a> {
    expert: &'a [f64],
    emp: &'a [f64],
    epsilon: f64,
}

impl BarrierProblem<'_> {
    /// `KL(emp || p)` on the restricted support.
    fn constraint(&self, p: &[f64]) -> f64 {
        kl(self.emp, p)
    }

    /// Cross-entropy part of `KL(expert || p)`.
    fn objective(&self, p: &[f64]) -> f64 {
        -self
            .expert
            .iter()
            .zip(p)
            .filter(|(e, _)| **e > 0.0)
            .map(|(e, q)| e * q.ln())
            .sum::<f64>()
    }

    fn barrier(&self, t: f64, p: &[f64]) -> f64 {
        if p.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        let slack = self.epsilon - self.constraint(p);
        if slack <= 0.0 {
            return f64::INFINITY;
        }
        t * self.objective(p) - slack.ln()
    }

    fn solve(&self) -> Vec<f64> {
        let k = self.expert.len();
        let uniform = 1.0 / k as f64;
        let mut s = 1e-3;
        let mut p: Vec<f64>;
        loop {
            p = self
                .emp
                .iter()
                .map(|m| (1.0 - s) * m + s * uniform)
                .collect();
            if self.constraint(&p) < 0.5 * self.epsilon {
                break;
            }
            s *= 0.5;
        }
        let mut t = 1.0;
        while 1.0 / t > 1e-14 {
            for _ in 0..200 {
                let (dir, decrement) = self.newton_direction(t, &p);
                if decrement * 0.5 < 1e-16 {
                    break;
                }
                let f0 = self.barrier(t, &p);
                let slope: f64 = -decrement;
                let mut step = 1.0;
                loop {
                    let cand: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                    let f1 = self.barrier(t, &cand);
                    if f1 <= f0 + 0.25 * step * slope || step < 1e-20 {
                        p = cand;
                        break;
                    }
                    step *= 0.5;
                }
            }
            t *= 8.0;
        }
        let total: f64 = p.iter().sum();
        p.iter().map(|x| x / total).collect()
    }

    /// Newton step for `t f(p) - log(eps - c(p))` on `sum p = 1`, with the
    /// squared Newton decrement.
    fn newton_direction(&self, t: f64, p: &[f64]) -> (Vec<f64>, f64) {
        let k = p.len();
        let slack = self.epsilon - self.constraint(p);
        let grad_c: Vec<f64> = (0..k).map(|i| -self.emp[i] / p[i]).collect();
        let grad: Vec<f64> = (0..k)
            .map(|i| -t * self.expert[i] / p[i] + grad_c[i] / slack)
            .collect();
        let n = k + 1;
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = grad_c[i] * grad_c[j] / (slack * slack);
            }
            a[i][i] += (t * self.expert[i] + self.emp[i] / slack) / (p[i] * p[i]);
            a[i][k] = 1.0;
            a[k][i] = 1.0;
            a[i][n] = -grad[i];
        }
        let x = gaussian_solve(a);
        let dir = x[..k].to_vec();
        let decrement = -dir.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>();
        (dir, decrement.max(0.0))
    }
}

/// Solves an augmented `n x (n+1)` system by partial-pivot elimination.
fn gaussian_solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let (top, below) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in below {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= f * p;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (a[row][n] - s) / a[row][row];
    }
    x
}
