//! Away-step Frank-Wolfe over the distortion-constrained policy polytope.
//!
//! The feasible set is a product of two blocks (one per hypothesis), each the
//! product of per-row simplices over allowed `(x, y)` coordinates intersected
//! with one budget half-space. The linear-minimization oracle is an exact
//! dense-simplex LP per block, so every atom added to the active set is a true
//! vertex and away steps give linear convergence on these small polytopes.

use std::collections::HashMap;

use super::simplex::{solve_lp, Lp, LpOutcome, Rel};
use crate::error::{Error, Result};

/// Log floor used inside solver gradients only. Public divergence functions
/// are exact; the solver needs finite gradient entries to feed the LP oracle,
/// and `exp(230)` stays comfortably inside f64 range for any exponent in
/// `[0, 1]`.
const GRAD_FLOOR: f64 = 1e-100;

/// One hypothesis block of the feasible polytope.
pub(crate) struct PolytopeBlock {
    /// Allowed coordinates `(x_index, y_index)`, grouped by row.
    pub coords: Vec<(usize, usize)>,
    /// `coords[row_offsets[x]..row_offsets[x+1]]` is the row of `x`.
    pub row_offsets: Vec<usize>,
    /// Source probability `p_h(x)` per coordinate.
    pub px: Vec<f64>,
    /// Budget weight `p_h(x) * d(x, y)` per coordinate.
    pub w: Vec<f64>,
    /// Budget bound for this hypothesis.
    pub budget: f64,
    /// Number of observation symbols.
    pub n_y: usize,
    /// Constraint rows of the block LP, prebuilt once.
    lp_rows: Vec<(Vec<f64>, Rel, f64)>,
}

impl PolytopeBlock {
    pub fn new(
        coords: Vec<(usize, usize)>,
        row_offsets: Vec<usize>,
        px: Vec<f64>,
        w: Vec<f64>,
        budget: f64,
        n_y: usize,
    ) -> Self {
        let nv = coords.len();
        let n_x = row_offsets.len() - 1;
        let mut lp_rows = Vec::with_capacity(n_x + 1);
        for x in 0..n_x {
            let mut row = vec![0.0; nv];
            for k in row_offsets[x]..row_offsets[x + 1] {
                row[k] = 1.0;
            }
            lp_rows.push((row, Rel::Eq, 1.0));
        }
        lp_rows.push((w.clone(), Rel::Le, budget));
        Self {
            coords,
            row_offsets,
            px,
            w,
            budget,
            n_y,
            lp_rows,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.coords.len()
    }

    /// Minimal achievable budget usage over the block (row-wise greedy is not
    /// valid once the budget couples rows, so this is an LP).
    pub fn min_budget_usage(&self) -> Result<f64> {
        let lp = Lp {
            c: self.w.clone(),
            rows: self.lp_rows[..self.lp_rows.len() - 1].to_vec(),
        };
        match solve_lp(&lp) {
            LpOutcome::Optimal { value, .. } => Ok(value),
            _ => Err(Error::Infeasible("empty policy block".into())),
        }
    }

    /// Exact linear-minimization oracle over the block.
    fn lmo(&self, grad: &[f64]) -> Result<Vec<f64>> {
        let lp = Lp {
            c: grad.to_vec(),
            rows: self.lp_rows.clone(),
        };
        match solve_lp(&lp) {
            LpOutcome::Optimal { x, .. } => Ok(x),
            LpOutcome::Infeasible => Err(Error::Infeasible(
                "linear oracle reported an infeasible block".into(),
            )),
            LpOutcome::Unbounded => Err(Error::Infeasible(
                "linear oracle reported an unbounded block".into(),
            )),
        }
    }

    /// Strictly positive feasible start: uniform over allowed outputs per row,
    /// mixed toward the cheapest deterministic vertex until the budget holds.
    pub fn interior_start(&self) -> Result<Vec<f64>> {
        let nv = self.n_vars();
        let n_x = self.row_offsets.len() - 1;
        let mut uniform = vec![0.0; nv];
        let mut cheapest = vec![0.0; nv];
        for x in 0..n_x {
            let lo = self.row_offsets[x];
            let hi = self.row_offsets[x + 1];
            let share = 1.0 / (hi - lo) as f64;
            let mut best = lo;
            for k in lo..hi {
                uniform[k] = share;
                if self.w[k] < self.w[best] {
                    best = k;
                }
            }
            cheapest[best] = 1.0;
        }
        let bu: f64 = self.w.iter().zip(&uniform).map(|(w, z)| w * z).sum();
        if bu <= self.budget {
            return Ok(uniform);
        }
        let bv: f64 = self.w.iter().zip(&cheapest).map(|(w, z)| w * z).sum();
        if bv > self.budget + 1e-10 {
            return Err(Error::Infeasible(format!(
                "minimal budget usage {bv} exceeds budget {}",
                self.budget
            )));
        }
        let t = ((bu - self.budget) / (bu - bv)).clamp(0.0, 1.0);
        Ok(uniform
            .iter()
            .zip(&cheapest)
            .map(|(u, v)| (1.0 - t) * u + t * v)
            .collect())
    }
}

/// Objective expressed through the induced observation marginals. The engine
/// only ever needs gradients: line search bisects on the directional
/// derivative, and final values are re-evaluated exactly by the caller.
pub(crate) trait MarginalObjective {
    /// Gradient with respect to the marginals, with floored logs so every
    /// entry is finite.
    fn grad(&self, m0: &[f64], m1: &[f64], g0: &mut [f64], g1: &mut [f64]);
}

pub(crate) struct KlObjective;

impl MarginalObjective for KlObjective {
    fn grad(&self, m0: &[f64], m1: &[f64], g0: &mut [f64], g1: &mut [f64]) {
        for y in 0..m0.len() {
            let p = m0[y].max(GRAD_FLOOR);
            let q = m1[y].max(GRAD_FLOOR);
            g0[y] = (p / q).ln() + 1.0;
            g1[y] = -(m0[y] / q);
        }
    }
}

pub(crate) struct ChernoffTauObjective {
    pub tau: f64,
}

impl MarginalObjective for ChernoffTauObjective {
    fn grad(&self, m0: &[f64], m1: &[f64], g0: &mut [f64], g1: &mut [f64]) {
        let tau = self.tau;
        let mut sum = 0.0;
        for y in 0..m0.len() {
            if m0[y] > 0.0 && m1[y] > 0.0 {
                sum += (tau * m0[y].ln() + (1.0 - tau) * m1[y].ln()).exp();
            }
        }
        let sum = sum.max(1e-280);
        for y in 0..m0.len() {
            let p = m0[y].max(GRAD_FLOOR);
            let q = m1[y].max(GRAD_FLOOR);
            let lr = q.ln() - p.ln();
            g0[y] = -(tau / sum) * ((1.0 - tau) * lr).exp();
            g1[y] = -((1.0 - tau) / sum) * (-tau * lr).exp();
        }
    }
}

pub(crate) struct FwOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
}

pub(crate) struct FwReport {
    /// Final joint point over `[block0 coords | block1 coords]`.
    pub z: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

struct ActiveSet {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

impl ActiveSet {
    fn new(start: Vec<f64>) -> Self {
        let key = bits_key(&start);
        let mut index = HashMap::new();
        index.insert(key, 0);
        Self {
            atoms: vec![start],
            weights: vec![1.0],
            index,
        }
    }

    fn insert_or_merge(&mut self, atom: Vec<f64>, weight: f64) {
        let key = bits_key(&atom);
        match self.index.get(&key) {
            Some(&i) => self.weights[i] += weight,
            None => {
                self.index.insert(key, self.atoms.len());
                self.atoms.push(atom);
                self.weights.push(weight);
            }
        }
    }

    fn remove(&mut self, i: usize) {
        let last = self.atoms.len() - 1;
        self.index.remove(&bits_key(&self.atoms[i]));
        self.atoms.swap_remove(i);
        self.weights.swap_remove(i);
        if i != last {
            let key = bits_key(&self.atoms[i]);
            self.index.insert(key, i);
        }
    }

    fn reconstruct(&mut self, out: &mut [f64]) {
        let total: f64 = self.weights.iter().sum();
        for w in self.weights.iter_mut() {
            *w /= total;
        }
        out.fill(0.0);
        for (atom, &w) in self.atoms.iter().zip(&self.weights) {
            for (o, a) in out.iter_mut().zip(atom) {
                *o += w * a;
            }
        }
    }
}

fn bits_key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub(crate) struct FwProblem<'a, O: MarginalObjective> {
    pub block0: &'a PolytopeBlock,
    pub block1: &'a PolytopeBlock,
    pub objective: &'a O,
}

impl<'a, O: MarginalObjective> FwProblem<'a, O> {
    fn marginals(&self, z: &[f64], m0: &mut [f64], m1: &mut [f64]) {
        let n0 = self.block0.n_vars();
        m0.fill(0.0);
        m1.fill(0.0);
        for (k, &(_, y)) in self.block0.coords.iter().enumerate() {
            m0[y] += self.block0.px[k] * z[k];
        }
        for (k, &(_, y)) in self.block1.coords.iter().enumerate() {
            m1[y] += self.block1.px[k] * z[n0 + k];
        }
    }

    /// Lifts a marginal-space gradient to policy coordinates.
    fn lift(&self, g0: &[f64], g1: &[f64], gz: &mut [f64]) {
        let n0 = self.block0.n_vars();
        for (k, &(_, y)) in self.block0.coords.iter().enumerate() {
            gz[k] = self.block0.px[k] * g0[y];
        }
        for (k, &(_, y)) in self.block1.coords.iter().enumerate() {
            gz[n0 + k] = self.block1.px[k] * g1[y];
        }
    }

    /// Directional derivative of the objective at `m + gamma * dm`.
    #[allow(clippy::too_many_arguments)]
    fn dir_derivative(
        &self,
        m0: &[f64],
        m1: &[f64],
        dm0: &[f64],
        dm1: &[f64],
        gamma: f64,
        buf: &mut GradBuffers,
    ) -> f64 {
        for y in 0..m0.len() {
            buf.m0g[y] = (m0[y] + gamma * dm0[y]).max(0.0);
            buf.m1g[y] = (m1[y] + gamma * dm1[y]).max(0.0);
        }
        self.objective
            .grad(&buf.m0g, &buf.m1g, &mut buf.g0, &mut buf.g1);
        let mut out = 0.0;
        for y in 0..m0.len() {
            out += buf.g0[y] * dm0[y] + buf.g1[y] * dm1[y];
        }
        out
    }

    pub fn solve(&self, start: Vec<f64>, opts: &FwOptions) -> Result<FwReport> {
        let n0 = self.block0.n_vars();
        let n1 = self.block1.n_vars();
        let n = n0 + n1;
        let n_y = self.block0.n_y;
        debug_assert_eq!(start.len(), n);

        let mut x = start.clone();
        let mut active = ActiveSet::new(start);

        let mut m0 = vec![0.0; n_y];
        let mut m1 = vec![0.0; n_y];
        let mut g0 = vec![0.0; n_y];
        let mut g1 = vec![0.0; n_y];
        let mut gz = vec![0.0; n];
        let mut dm0 = vec![0.0; n_y];
        let mut dm1 = vec![0.0; n_y];
        let mut buf = GradBuffers::new(n_y);

        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < opts.max_iters {
            iterations += 1;
            self.marginals(&x, &mut m0, &mut m1);
            self.objective.grad(&m0, &m1, &mut g0, &mut g1);
            self.lift(&g0, &g1, &mut gz);

            let v0 = self.block0.lmo(&gz[..n0])?;
            let v1 = self.block1.lmo(&gz[n0..])?;

            let mut dot_x = 0.0;
            let mut dot_v = 0.0;
            for k in 0..n {
                dot_x += gz[k] * x[k];
                dot_v += gz[k] * if k < n0 { v0[k] } else { v1[k - n0] };
            }
            gap = dot_x - dot_v;
            if gap <= opts.gap_tol {
                converged = true;
                break;
            }

            // Away atom: the active vertex the gradient most wants to leave.
            let mut away = 0;
            let mut away_dot = f64::NEG_INFINITY;
            for (i, atom) in active.atoms.iter().enumerate() {
                let d: f64 = gz.iter().zip(atom).map(|(g, a)| g * a).sum();
                if d > away_dot {
                    away_dot = d;
                    away = i;
                }
            }
            let away_gain = away_dot - dot_x;

            let use_away = away_gain > gap && active.weights[away] < 1.0 - 1e-12;
            let (dir, gamma_max): (Vec<f64>, f64) = if use_away {
                let atom = &active.atoms[away];
                let w = active.weights[away];
                let dir = x.iter().zip(atom).map(|(xi, ai)| xi - ai).collect();
                (dir, (w / (1.0 - w)).min(1e12))
            } else {
                let mut dir = vec![0.0; n];
                for k in 0..n {
                    let v = if k < n0 { v0[k] } else { v1[k - n0] };
                    dir[k] = v - x[k];
                }
                (dir, 1.0)
            };

            dm0.fill(0.0);
            dm1.fill(0.0);
            for (k, &(_, y)) in self.block0.coords.iter().enumerate() {
                dm0[y] += self.block0.px[k] * dir[k];
            }
            for (k, &(_, y)) in self.block1.coords.iter().enumerate() {
                dm1[y] += self.block1.px[k] * dir[n0 + k];
            }

            // Exact line search: the objective is convex along the segment, so
            // bisect on the directional derivative.
            let gamma = {
                let d_end = self.dir_derivative(&m0, &m1, &dm0, &dm1, gamma_max, &mut buf);
                if d_end <= 0.0 {
                    gamma_max
                } else {
                    let mut lo = 0.0f64;
                    let mut hi = gamma_max;
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if self.dir_derivative(&m0, &m1, &dm0, &dm1, mid, &mut buf) <= 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo <= 1e-16 * gamma_max.max(1.0) {
                            break;
                        }
                    }
                    0.5 * (lo + hi)
                }
            };
            if gamma <= 0.0 {
                break;
            }

            for k in 0..n {
                x[k] = (x[k] + gamma * dir[k]).max(0.0);
            }
            if use_away {
                let scale = 1.0 + gamma;
                for w in active.weights.iter_mut() {
                    *w *= scale;
                }
                active.weights[away] -= gamma;
                if active.weights[away] <= 1e-15 || gamma >= gamma_max - 1e-15 {
                    active.remove(away);
                }
            } else {
                if gamma >= 1.0 - 1e-15 {
                    // Full step: the new vertex replaces the whole set.
                    let mut atom = vec![0.0; n];
                    atom[..n0].copy_from_slice(&v0);
                    atom[n0..].copy_from_slice(&v1);
                    x.copy_from_slice(&atom);
                    active = ActiveSet::new(atom);
                } else {
                    for w in active.weights.iter_mut() {
                        *w *= 1.0 - gamma;
                    }
                    let mut atom = vec![0.0; n];
                    atom[..n0].copy_from_slice(&v0);
                    atom[n0..].copy_from_slice(&v1);
                    active.insert_or_merge(atom, gamma);
                }
            }

            if iterations % 128 == 0 {
                active.reconstruct(&mut x);
            }
        }

        Ok(FwReport {
            z: x,
            iterations,
            gap,
            converged,
        })
    }
}

struct GradBuffers {
    m0g: Vec<f64>,
    m1g: Vec<f64>,
    g0: Vec<f64>,
    g1: Vec<f64>,
}

impl GradBuffers {
    fn new(n_y: usize) -> Self {
        Self {
            m0g: vec![0.0; n_y],
            m1g: vec![0.0; n_y],
            g0: vec![0.0; n_y],
            g1: vec![0.0; n_y],
        }
    }
}
