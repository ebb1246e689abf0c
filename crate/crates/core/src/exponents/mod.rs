//! Single-letter exponent programs over the distortion-constrained policy
//! polytope: the minimal KL divergence between induced observation marginals
//! (`solve_phi`), the minimal Chernoff coefficient at fixed `tau`
//! (`solve_nu_tau`), and the minimal Chernoff information (`solve_nu`), plus
//! budget sweeps and the supply-alphabet quantization map.
//!
//! The feasible set is a product of per-row simplices intersected with two
//! budget half-spaces, one per hypothesis. Both objectives are jointly convex
//! in the policy pair, so a Frank-Wolfe scheme with an exact LP oracle and
//! away steps certifies optimality through its duality gap.

mod fw;
mod simplex;

use fw::{ChernoffTauObjective, FwOptions, FwProblem, KlObjective, PolytopeBlock};

use crate::distributions::{
    chernoff, chernoff_coeff, kl, marginal, Alphabet, ConditionalPmf, Pmf, PolicyPair, SourceModel,
};
use crate::error::{Error, Result};

/// Nonnegative distortion matrix `d(x, y)` with a feasibility mask.
///
/// `mask[x][y] = true` marks a forbidden pair; forbidden entries carry zero
/// distortion so the matrix stays nonnegative everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    d: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    d_max: f64,
}

impl DistortionSpec {
    pub fn new(
        x_alphabet: Alphabet,
        y_alphabet: Alphabet,
        d: Vec<Vec<f64>>,
        mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let (nx, ny) = (x_alphabet.len(), y_alphabet.len());
        if d.len() != nx || mask.len() != nx {
            return Err(Error::InvalidParameter(
                "distortion matrix row count must match the data alphabet".into(),
            ));
        }
        for x in 0..nx {
            if d[x].len() != ny || mask[x].len() != ny {
                return Err(Error::InvalidParameter(
                    "distortion matrix column count must match the observation alphabet".into(),
                ));
            }
            if d[x].iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::InvalidParameter(
                    "distortion entries must be finite and nonnegative".into(),
                ));
            }
            if mask[x].iter().all(|&m| m) {
                return Err(Error::InvalidParameter(format!(
                    "every data symbol needs at least one allowed observation (row {x} fully masked)"
                )));
            }
        }
        let mut d_max = 0.0f64;
        for x in 0..nx {
            for y in 0..ny {
                if !mask[x][y] {
                    d_max = d_max.max(d[x][y]);
                }
            }
        }
        Ok(Self {
            x_alphabet,
            y_alphabet,
            d,
            mask,
            d_max,
        })
    }

    /// Distortion matrix without forbidden pairs.
    pub fn unmasked(x_alphabet: Alphabet, y_alphabet: Alphabet, d: Vec<Vec<f64>>) -> Result<Self> {
        let mask = vec![vec![false; y_alphabet.len()]; x_alphabet.len()];
        Self::new(x_alphabet, y_alphabet, d, mask)
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }

    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.d[x][y]
    }

    pub fn is_forbidden(&self, x: usize, y: usize) -> bool {
        self.mask[x][y]
    }

    /// Maximum distortion over allowed pairs.
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Number of allowed `(x, y)` pairs.
    pub fn allowed_pairs(&self) -> usize {
        self.mask
            .iter()
            .map(|row| row.iter().filter(|&&m| !m).count())
            .sum()
    }
}

/// Distortion spec plus per-hypothesis budgets: the feasible policy polytope.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub distortion: DistortionSpec,
    pub budget_h0: f64,
    pub budget_h1: f64,
}

impl ConstraintSet {
    pub fn new(distortion: DistortionSpec, budget_h0: f64, budget_h1: f64) -> Result<Self> {
        if !(budget_h0 > 0.0) || !budget_h0.is_finite() || !(budget_h1 > 0.0) || !budget_h1.is_finite()
        {
            return Err(Error::InvalidParameter(
                "budgets must be positive and finite".into(),
            ));
        }
        Ok(Self {
            distortion,
            budget_h0,
            budget_h1,
        })
    }

    /// Checks a policy against this constraint set: expected distortions,
    /// exact zeros on forbidden pairs, and budgets within `1e-8`.
    pub fn check_policy(&self, source: &SourceModel, policy: &PolicyPair) -> Result<PolicyCheck> {
        if policy.x_alphabet() != self.distortion.x_alphabet()
            || policy.y_alphabet() != self.distortion.y_alphabet()
        {
            return Err(Error::AlphabetMismatch(
                "policy alphabets do not match the distortion spec".into(),
            ));
        }
        let mut mask_satisfied = true;
        for x in 0..self.distortion.x_alphabet.len() {
            for y in 0..self.distortion.y_alphabet.len() {
                if self.distortion.mask[x][y]
                    && (policy.cond_h0().row(x)[y] != 0.0 || policy.cond_h1().row(x)[y] != 0.0)
                {
                    mask_satisfied = false;
                }
            }
        }
        let d0 = expected_distortion(source.p_x_h0(), policy.cond_h0(), &self.distortion);
        let d1 = expected_distortion(source.p_x_h1(), policy.cond_h1(), &self.distortion);
        Ok(PolicyCheck {
            distortion_h0: d0,
            distortion_h1: d1,
            mask_satisfied,
            budgets_satisfied: d0 <= self.budget_h0 + BUDGET_TOL && d1 <= self.budget_h1 + BUDGET_TOL,
        })
    }
}

/// Budget slack tolerance used when auditing returned policies.
pub const BUDGET_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct PolicyCheck {
    pub distortion_h0: f64,
    pub distortion_h1: f64,
    pub mask_satisfied: bool,
    pub budgets_satisfied: bool,
}

impl PolicyCheck {
    pub fn ok(&self) -> bool {
        self.mask_satisfied && self.budgets_satisfied
    }
}

/// Expected distortion of a single conditional under a source pmf.
pub fn expected_distortion(p_x: &Pmf, cond: &ConditionalPmf, spec: &DistortionSpec) -> f64 {
    let mut out = 0.0;
    for (x, &px) in p_x.probs().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &pyx) in cond.row(x).iter().enumerate() {
            if pyx > 0.0 {
                out += px * pyx * spec.d[x][y];
            }
        }
    }
    out
}

/// Solver knobs. Defaults match the documented contracts: duality gap at most
/// `1e-8` or 50k iterations, `tau` located to `1e-6` in the outer Chernoff
/// search with the inner solves tightened to a `1e-9` gap.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
    pub tau_tol: f64,
    pub nu_inner_gap_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            max_iters: 50_000,
            tau_tol: 1e-6,
            nu_inner_gap_tol: 1e-9,
        }
    }
}

/// Which exponent program a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentKind {
    Phi,
    Nu,
}

impl std::fmt::Display for ExponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExponentKind::Phi => write!(f, "phi"),
            ExponentKind::Nu => write!(f, "nu"),
        }
    }
}

/// Outcome of one exponent solve.
#[derive(Debug, Clone)]
pub struct ExponentResult {
    /// Objective value in nats, re-evaluated exactly at `policy`.
    pub value: f64,
    pub policy: PolicyPair,
    /// Maximizing Chernoff parameter; `None` for the KL program.
    pub tau_star: Option<f64>,
    pub distortion_h0: f64,
    pub distortion_h1: f64,
    pub iterations: usize,
    /// Final Frank-Wolfe duality gap (first-order optimality certificate).
    pub duality_gap: f64,
    pub converged: bool,
}

impl ExponentResult {
    /// True when the optimum diverges (an observation symbol is reachable
    /// under one hypothesis only); values above `1e3` nats are reported as
    /// effectively infinite.
    pub fn effectively_infinite(&self) -> bool {
        self.value > 1e3
    }
}

fn ensure_compatible(source: &SourceModel, cons: &ConstraintSet) -> Result<()> {
    if source.x_alphabet() != cons.distortion.x_alphabet() {
        return Err(Error::AlphabetMismatch(
            "source and distortion data alphabets differ".into(),
        ));
    }
    Ok(())
}

fn build_block(p_x: &Pmf, spec: &DistortionSpec, budget: f64) -> PolytopeBlock {
    let nx = spec.x_alphabet.len();
    let ny = spec.y_alphabet.len();
    let mut coords = Vec::new();
    let mut row_offsets = Vec::with_capacity(nx + 1);
    row_offsets.push(0);
    for x in 0..nx {
        for y in 0..ny {
            if !spec.mask[x][y] {
                coords.push((x, y));
            }
        }
        row_offsets.push(coords.len());
    }
    let px: Vec<f64> = coords.iter().map(|&(x, _)| p_x.probs()[x]).collect();
    let w: Vec<f64> = coords
        .iter()
        .zip(&px)
        .map(|(&(x, y), &p)| p * spec.d[x][y])
        .collect();
    PolytopeBlock::new(coords, row_offsets, px, w, budget, ny)
}

fn build_blocks(source: &SourceModel, cons: &ConstraintSet) -> (PolytopeBlock, PolytopeBlock) {
    (
        build_block(source.p_x_h0(), &cons.distortion, cons.budget_h0),
        build_block(source.p_x_h1(), &cons.distortion, cons.budget_h1),
    )
}

/// Feasibility probe: minimize the worst budget violation by LP and reject
/// when the optimum exceeds `1e-10`.
fn probe_feasibility(b0: &PolytopeBlock, b1: &PolytopeBlock) -> Result<()> {
    let min0 = b0.min_budget_usage()?;
    let min1 = b1.min_budget_usage()?;
    let violation = (min0 - b0.budget).max(min1 - b1.budget).max(0.0);
    if violation > 1e-10 {
        return Err(Error::Infeasible(format!(
            "minimal budget usage violates the constraints by {violation:.3e}"
        )));
    }
    Ok(())
}

fn point_to_policy(
    z: &[f64],
    b0: &PolytopeBlock,
    b1: &PolytopeBlock,
    spec: &DistortionSpec,
) -> Result<PolicyPair> {
    let n0 = b0.n_vars();
    let build = |block: &PolytopeBlock, vals: &[f64]| -> Result<ConditionalPmf> {
        let mut rows = vec![vec![0.0; spec.y_alphabet.len()]; spec.x_alphabet.len()];
        for (k, &(x, y)) in block.coords.iter().enumerate() {
            rows[x][y] = vals[k];
        }
        // Atoms are convex combinations of LP vertices: row sums can drift by
        // a few ulps, so renormalize before the strict constructor.
        for row in rows.iter_mut() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::CorruptPolicy(format!(
                    "solver produced a row summing to {sum}"
                )));
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        ConditionalPmf::new(spec.x_alphabet.clone(), spec.y_alphabet.clone(), rows)
    };
    PolicyPair::new(build(b0, &z[..n0])?, build(b1, &z[n0..])?)
}

fn policy_to_point(
    policy: &PolicyPair,
    b0: &PolytopeBlock,
    b1: &PolytopeBlock,
    cons: &ConstraintSet,
) -> Option<Vec<f64>> {
    let spec = &cons.distortion;
    if policy.x_alphabet() != &spec.x_alphabet || policy.y_alphabet() != &spec.y_alphabet {
        return None;
    }
    // Forbidden pairs must carry no mass for the point to live in the polytope.
    for x in 0..spec.x_alphabet.len() {
        for y in 0..spec.y_alphabet.len() {
            if spec.mask[x][y]
                && (policy.cond_h0().row(x)[y] != 0.0 || policy.cond_h1().row(x)[y] != 0.0)
            {
                return None;
            }
        }
    }
    let mut z = Vec::with_capacity(b0.n_vars() + b1.n_vars());
    for &(x, y) in &b0.coords {
        z.push(policy.cond_h0().row(x)[y]);
    }
    for &(x, y) in &b1.coords {
        z.push(policy.cond_h1().row(x)[y]);
    }
    let usage0: f64 = b0.w.iter().zip(&z[..b0.n_vars()]).map(|(w, v)| w * v).sum();
    let usage1: f64 = b1
        .w
        .iter()
        .zip(&z[b0.n_vars()..])
        .map(|(w, v)| w * v)
        .sum();
    if usage0 > b0.budget + 1e-12 || usage1 > b1.budget + 1e-12 {
        return None;
    }
    Some(z)
}

fn assemble_result(
    source: &SourceModel,
    cons: &ConstraintSet,
    policy: PolicyPair,
    value: f64,
    tau_star: Option<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
) -> ExponentResult {
    let d0 = expected_distortion(source.p_x_h0(), policy.cond_h0(), &cons.distortion);
    let d1 = expected_distortion(source.p_x_h1(), policy.cond_h1(), &cons.distortion);
    ExponentResult {
        value,
        policy,
        tau_star,
        distortion_h0: d0,
        distortion_h1: d1,
        iterations,
        duality_gap: gap,
        converged,
    }
}

/// Minimal KL divergence between the induced observation marginals over the
/// constrained policy polytope.
pub fn solve_phi(source: &SourceModel, cons: &ConstraintSet) -> Result<ExponentResult> {
    solve_phi_opts(source, cons, &SolveOptions::default(), None)
}

pub fn solve_phi_opts(
    source: &SourceModel,
    cons: &ConstraintSet,
    opts: &SolveOptions,
    warm_start: Option<&PolicyPair>,
) -> Result<ExponentResult> {
    ensure_compatible(source, cons)?;
    let (b0, b1) = build_blocks(source, cons);
    probe_feasibility(&b0, &b1)?;
    let start = warm_start
        .and_then(|p| policy_to_point(p, &b0, &b1, cons))
        .map_or_else(
            || -> Result<Vec<f64>> {
                let mut z = b0.interior_start()?;
                z.extend(b1.interior_start()?);
                Ok(z)
            },
            Ok,
        )?;
    let problem = FwProblem {
        block0: &b0,
        block1: &b1,
        objective: &KlObjective,
    };
    let report = problem.solve(
        start,
        &FwOptions {
            gap_tol: opts.gap_tol,
            max_iters: opts.max_iters,
        },
    )?;
    let policy = point_to_policy(&report.z, &b0, &b1, &cons.distortion)?;
    let m0 = marginal(source.p_x_h0(), policy.cond_h0())?;
    let m1 = marginal(source.p_x_h1(), policy.cond_h1())?;
    let value = kl(&m0, &m1)?;
    Ok(assemble_result(
        source,
        cons,
        policy,
        value,
        None,
        report.iterations,
        report.gap,
        report.converged,
    ))
}

/// Minimal Chernoff coefficient at a fixed `tau` over the constrained policy
/// polytope.
pub fn solve_nu_tau(source: &SourceModel, cons: &ConstraintSet, tau: f64) -> Result<ExponentResult> {
    solve_nu_tau_opts(source, cons, tau, &SolveOptions::default(), None)
}

pub fn solve_nu_tau_opts(
    source: &SourceModel,
    cons: &ConstraintSet,
    tau: f64,
    opts: &SolveOptions,
    warm_start: Option<&PolicyPair>,
) -> Result<ExponentResult> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in [0, 1], got {tau}"
        )));
    }
    ensure_compatible(source, cons)?;
    let (b0, b1) = build_blocks(source, cons);
    probe_feasibility(&b0, &b1)?;

    if tau == 0.0 || tau == 1.0 {
        // At the endpoints the coefficient only sees the marginal supports: a
        // strictly positive interior policy matches them and attains the
        // global minimum of zero outright.
        let mut z = b0.interior_start()?;
        z.extend(b1.interior_start()?);
        let policy = point_to_policy(&z, &b0, &b1, &cons.distortion)?;
        let m0 = marginal(source.p_x_h0(), policy.cond_h0())?;
        let m1 = marginal(source.p_x_h1(), policy.cond_h1())?;
        let value = chernoff_coeff(&m0, &m1, tau)?;
        let converged = value <= 1e-12;
        let gap = if converged { 0.0 } else { value };
        return Ok(assemble_result(
            source,
            cons,
            policy,
            value,
            Some(tau),
            0,
            gap,
            converged,
        ));
    }

    let start = warm_start
        .and_then(|p| policy_to_point(p, &b0, &b1, cons))
        .map_or_else(
            || -> Result<Vec<f64>> {
                let mut z = b0.interior_start()?;
                z.extend(b1.interior_start()?);
                Ok(z)
            },
            Ok,
        )?;
    let objective = ChernoffTauObjective { tau };
    let problem = FwProblem {
        block0: &b0,
        block1: &b1,
        objective: &objective,
    };
    let report = problem.solve(
        start,
        &FwOptions {
            gap_tol: opts.gap_tol,
            max_iters: opts.max_iters,
        },
    )?;
    let policy = point_to_policy(&report.z, &b0, &b1, &cons.distortion)?;
    let m0 = marginal(source.p_x_h0(), policy.cond_h0())?;
    let m1 = marginal(source.p_x_h1(), policy.cond_h1())?;
    let value = chernoff_coeff(&m0, &m1, tau)?;
    Ok(assemble_result(
        source,
        cons,
        policy,
        value,
        Some(tau),
        report.iterations,
        report.gap,
        report.converged,
    ))
}

/// Minimal Chernoff information over the constrained policy polytope.
///
/// The outer maximization over `tau` and the inner minimization over policies
/// form a saddle problem (the coefficient is convex in the policy pair and
/// concave in `tau`), so a golden-section search over `tau` of the inner
/// minima locates the saddle. Every inner optimizer is additionally scored by
/// its full Chernoff information, and the best of those is returned: the
/// searched maximum of the fixed-`tau` minima is a lower bound on the optimal
/// value and the returned policy's information is an upper bound, so the pair
/// certifies the solve. A `converged` result has the two within `1e-6`.
///
/// Scoring by the full information is what keeps degenerate instances honest:
/// when the marginals can be matched outright, every fixed-`tau` minimum is
/// zero and the boundary `tau` minimizers say nothing about the information
/// of their policies, but an interior-`tau` minimizer with zero coefficient
/// has matched marginals exactly.
pub fn solve_nu(source: &SourceModel, cons: &ConstraintSet) -> Result<ExponentResult> {
    solve_nu_opts(source, cons, &SolveOptions::default())
}

pub fn solve_nu_opts(
    source: &SourceModel,
    cons: &ConstraintSet,
    opts: &SolveOptions,
) -> Result<ExponentResult> {
    ensure_compatible(source, cons)?;
    let inner_opts = SolveOptions {
        gap_tol: opts.nu_inner_gap_tol,
        ..*opts
    };

    struct Upper {
        value: f64,
        tau_star: f64,
        inner: ExponentResult,
    }
    let mut warm: Option<PolicyPair> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut upper: Option<Upper> = None;
    let mut total_iterations = 0usize;

    let mut eval = |tau: f64, warm: &mut Option<PolicyPair>| -> Result<f64> {
        let r = solve_nu_tau_opts(source, cons, tau, &inner_opts, warm.as_ref())?;
        total_iterations += r.iterations;
        let v = r.value;
        *warm = Some(r.policy.clone());
        let m0 = marginal(source.p_x_h0(), r.policy.cond_h0())?;
        let m1 = marginal(source.p_x_h1(), r.policy.cond_h1())?;
        let (c_value, c_tau) = chernoff(&m0, &m1)?;
        lower = lower.max(v);
        if upper.as_ref().map_or(true, |u| c_value < u.value) {
            upper = Some(Upper {
                value: c_value,
                tau_star: c_tau,
                inner: r,
            });
        }
        Ok(v)
    };

    // Endpoints first (computed explicitly), then golden section inside.
    eval(0.0, &mut warm)?;
    eval(1.0, &mut warm)?;

    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = eval(x1, &mut warm)?;
    let mut f2 = eval(x2, &mut warm)?;
    while b - a > opts.tau_tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = eval(x1, &mut warm)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = eval(x2, &mut warm)?;
        }
    }
    eval(0.5 * (a + b), &mut warm)?;

    let best = upper.expect("at least the endpoints were evaluated");
    let certified = best.inner.converged && best.value - lower <= 1e-6;
    Ok(assemble_result(
        source,
        cons,
        best.inner.policy,
        best.value,
        Some(best.tau_star),
        total_iterations,
        best.inner.duality_gap,
        certified,
    ))
}

/// Requantizes a policy onto the data alphabet: every observation in
/// `(x_(i-1), x_(i)]` collapses to `x_(i)`, and observations at or below the
/// smallest data symbol collapse to it. Under the supply-side mask (`y > x`
/// forbidden, distortion `x - y`) the result stays feasible with no larger
/// expected distortion and an unchanged-or-smaller divergence objective.
pub fn quantize_to_demand_alphabet(policy: &PolicyPair, target: &Alphabet) -> Result<PolicyPair> {
    if policy.x_alphabet() != target {
        return Err(Error::AlphabetMismatch(
            "quantization target must equal the policy's data alphabet".into(),
        ));
    }
    let y_syms = policy.y_alphabet().symbols();
    let t_syms = target.symbols();
    let mut bucket = Vec::with_capacity(y_syms.len());
    for &y in y_syms {
        let idx = t_syms.partition_point(|&t| t < y);
        if idx == t_syms.len() {
            return Err(Error::CorruptPolicy(format!(
                "observation symbol {y} exceeds the largest target symbol {}",
                t_syms[t_syms.len() - 1]
            )));
        }
        bucket.push(idx);
    }
    let requantize = |cond: &ConditionalPmf| -> Result<ConditionalPmf> {
        let rows = cond
            .rows()
            .iter()
            .map(|row| {
                let mut out = vec![0.0; t_syms.len()];
                for (j, &p) in row.iter().enumerate() {
                    out[bucket[j]] += p;
                }
                out
            })
            .collect();
        ConditionalPmf::new(policy.x_alphabet().clone(), target.clone(), rows)
    };
    PolicyPair::new(requantize(policy.cond_h0())?, requantize(policy.cond_h1())?)
}

/// Options for [`sweep_exponent`]. With `threads <= 1` the sweep runs
/// serially and warm-starts each solve from the previous optimizer; with more
/// threads it parallelizes across budgets (warm starts disabled) and restores
/// the input ordering, so output is deterministic either way.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub solve: SolveOptions,
    pub threads: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub s: f64,
    pub value: f64,
    pub tau_star: Option<f64>,
    pub distortion_h0: f64,
    pub distortion_h1: f64,
    pub converged: bool,
    /// Populated when the solve for this budget failed outright.
    pub note: Option<String>,
}

/// Monotonicity / midpoint-convexity audit over the swept values, at twice
/// the solver gap tolerance.
#[derive(Debug, Clone, Copy)]
pub struct SweepAudit {
    pub monotone: bool,
    pub max_monotonicity_violation: f64,
    pub midpoint_convex: bool,
    pub max_convexity_violation: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub kind: ExponentKind,
    pub rows: Vec<SweepRow>,
    pub audit: SweepAudit,
}

/// Solves the chosen exponent program along a sorted grid of equal budgets
/// `(s, s)`, auditing monotone decrease and midpoint convexity of the values.
/// Failed budgets are recorded per row and do not abort the sweep.
pub fn sweep_exponent(
    source: &SourceModel,
    distortion: &DistortionSpec,
    s_values: &[f64],
    which: ExponentKind,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    if s_values.is_empty() {
        return Err(Error::InvalidParameter("empty budget grid".into()));
    }
    if s_values.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter(
            "budget grid entries must be positive and finite".into(),
        ));
    }
    if s_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "budget grid must be sorted ascending".into(),
        ));
    }

    let solve_one = |s: f64, warm: Option<&PolicyPair>| -> Result<ExponentResult> {
        let cons = ConstraintSet::new(distortion.clone(), s, s)?;
        match which {
            ExponentKind::Phi => solve_phi_opts(source, &cons, &opts.solve, warm),
            ExponentKind::Nu => solve_nu_opts(source, &cons, &opts.solve),
        }
    };
    let to_row = |s: f64, outcome: &Result<ExponentResult>| -> SweepRow {
        match outcome {
            Ok(r) => SweepRow {
                s,
                value: r.value,
                tau_star: r.tau_star,
                distortion_h0: r.distortion_h0,
                distortion_h1: r.distortion_h1,
                converged: r.converged,
                note: None,
            },
            Err(e) => SweepRow {
                s,
                value: f64::NAN,
                tau_star: None,
                distortion_h0: f64::NAN,
                distortion_h1: f64::NAN,
                converged: false,
                note: Some(e.to_string()),
            },
        }
    };

    let rows: Vec<SweepRow> = if opts.threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            s_values
                .par_iter()
                .map(|&s| to_row(s, &solve_one(s, None)))
                .collect()
        })
    } else {
        let mut warm: Option<PolicyPair> = None;
        let mut rows = Vec::with_capacity(s_values.len());
        for &s in s_values {
            let outcome = solve_one(s, warm.as_ref());
            rows.push(to_row(s, &outcome));
            if let Ok(r) = outcome {
                warm = Some(r.policy);
            }
        }
        rows
    };

    let audit = audit_rows(&rows, 2.0 * opts.solve.gap_tol);
    Ok(SweepTable { kind: which, rows, audit })
}

fn audit_rows(rows: &[SweepRow], tol: f64) -> SweepAudit {
    let mut mono_violation = 0.0f64;
    for w in rows.windows(2) {
        if w[0].value.is_nan() || w[1].value.is_nan() {
            continue;
        }
        mono_violation = mono_violation.max(w[1].value - w[0].value);
    }
    let mut conv_violation = 0.0f64;
    for w in rows.windows(3) {
        if w.iter().any(|r| r.value.is_nan()) {
            continue;
        }
        // Midpoint test only where the grid is locally uniform.
        if ((w[1].s - w[0].s) - (w[2].s - w[1].s)).abs() > 1e-9 * w[2].s.max(1.0) {
            continue;
        }
        conv_violation = conv_violation.max(w[1].value - 0.5 * (w[0].value + w[2].value));
    }
    SweepAudit {
        monotone: mono_violation <= tol,
        max_monotonicity_violation: mono_violation,
        midpoint_convex: conv_violation <= tol,
        max_convexity_violation: conv_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::fw::MarginalObjective;
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn binary_alphabet() -> Alphabet {
        Alphabet::new(vec![0.0, 2.0]).unwrap()
    }

    /// Binary supply-side instance: d(x, y) = x - y on allowed pairs, y > x
    /// forbidden. `pbar`, `ptil` are the low-demand probabilities.
    fn binary_instance(pbar: f64, ptil: f64, s: f64) -> (SourceModel, ConstraintSet) {
        let a = binary_alphabet();
        let p0 = Pmf::new(a.clone(), vec![pbar, 1.0 - pbar]).unwrap();
        let p1 = Pmf::new(a.clone(), vec![ptil, 1.0 - ptil]).unwrap();
        let source = SourceModel::new(p0, p1, 0.5, 0.5).unwrap();
        let d = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let mask = vec![vec![false, true], vec![false, false]];
        let spec = DistortionSpec::new(a.clone(), a, d, mask).unwrap();
        let cons = ConstraintSet::new(spec, s, s).unwrap();
        (source, cons)
    }

    /// Exhaustive grid oracle over the two free parameters of the binary
    /// instance (probability of mapping high demand to the low symbol under
    /// each hypothesis).
    fn binary_grid_oracle(pbar: f64, ptil: f64, s: f64, tau: Option<f64>, step: f64) -> f64 {
        let a0_max = (s / (2.0 * (1.0 - pbar))).min(1.0);
        let a1_max = (s / (2.0 * (1.0 - ptil))).min(1.0);
        let params = |amax: f64| {
            let mut v: Vec<f64> = (0..)
                .map(|k| k as f64 * step)
                .take_while(|&x| x <= amax)
                .collect();
            if *v.last().unwrap() < amax {
                v.push(amax);
            }
            v
        };
        let mut best = f64::INFINITY;
        for &a0 in &params(a0_max) {
            let m0 = [pbar + (1.0 - pbar) * a0, (1.0 - pbar) * (1.0 - a0)];
            for &a1 in &params(a1_max) {
                let m1 = [ptil + (1.0 - ptil) * a1, (1.0 - ptil) * (1.0 - a1)];
                let v = match tau {
                    None => crate::distributions::kl_slices(&m0, &m1),
                    Some(t) => crate::distributions::chernoff_coeff_slices(&m0, &m1, t),
                };
                best = best.min(v);
            }
        }
        best
    }

    #[test]
    fn phi_collapses_to_zero_with_large_budget() {
        let (source, cons) = binary_instance(0.75, 0.2, 2.0);
        let r = solve_phi(&source, &cons).unwrap();
        assert!(r.converged);
        assert!(r.value <= 1e-9, "value = {}", r.value);
    }

    #[test]
    fn phi_tiny_budget_recovers_source_kl() {
        let (source, cons) = binary_instance(0.75, 0.2, 1e-6);
        let r = solve_phi(&source, &cons).unwrap();
        assert!(r.converged);
        assert!((r.value - source.source_kl()).abs() < 1e-4);
    }

    #[test]
    fn phi_matches_closed_form_at_half_budget() {
        // At s = 0.5 the h0 budget is slack and the h1 budget binds:
        // marginals Bern(0.75) vs Bern(0.45).
        let (source, cons) = binary_instance(0.75, 0.2, 0.5);
        let r = solve_phi(&source, &cons).unwrap();
        let expected = 0.75 * (0.75f64 / 0.45).ln() + 0.25 * (0.25f64 / 0.55).ln();
        assert!(r.converged);
        assert!((r.value - expected).abs() < 1e-6, "value = {}", r.value);
        let check = cons.check_policy(&source, &r.policy).unwrap();
        assert!(check.ok(), "{check:?}");
    }

    #[test]
    fn phi_matches_grid_oracle() {
        let (source, cons) = binary_instance(0.6, 0.3, 0.4);
        let r = solve_phi(&source, &cons).unwrap();
        let oracle = binary_grid_oracle(0.6, 0.3, 0.4, None, 1e-3);
        assert!((r.value - oracle).abs() < 5e-3, "{} vs {}", r.value, oracle);
        // The solver must never beat the true optimum by more than the grid
        // resolution effect allows in the other direction.
        assert!(r.value <= oracle + 1e-9);
    }

    #[test]
    fn nu_tau_endpoints_are_zero() {
        let (source, cons) = binary_instance(0.75, 0.2, 0.5);
        for tau in [0.0, 1.0] {
            let r = solve_nu_tau(&source, &cons, tau).unwrap();
            assert!(r.converged);
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn nu_tau_matches_grid_oracle() {
        let (source, cons) = binary_instance(0.75, 0.2, 0.5);
        let r = solve_nu_tau(&source, &cons, 0.5).unwrap();
        let oracle = binary_grid_oracle(0.75, 0.2, 0.5, Some(0.5), 1e-3);
        assert!(r.converged);
        assert!((r.value - oracle).abs() < 5e-3, "{} vs {}", r.value, oracle);
        assert!(r.value <= oracle + 1e-9);
    }

    #[test]
    fn nu_near_identical_sources_is_zero() {
        let a = binary_alphabet();
        let p0 = Pmf::new(a.clone(), vec![0.5, 0.5]).unwrap();
        let p1 = Pmf::new(a.clone(), vec![0.5 - 1e-9, 0.5 + 1e-9]).unwrap();
        let source = SourceModel::new(p0, p1, 0.5, 0.5).unwrap();
        let d = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let mask = vec![vec![false, true], vec![false, false]];
        let spec = DistortionSpec::new(a.clone(), a, d, mask).unwrap();
        let cons = ConstraintSet::new(spec, 0.5, 0.5).unwrap();
        let r = solve_nu(&source, &cons).unwrap();
        assert!(r.value < 1e-6, "value = {}", r.value);
    }

    #[test]
    fn nu_never_exceeds_phi() {
        for s in [0.2, 0.5, 1.0] {
            let (source, cons) = binary_instance(0.75, 0.2, s);
            let phi = solve_phi(&source, &cons).unwrap();
            let nu = solve_nu(&source, &cons).unwrap();
            assert!(
                nu.value <= phi.value + 1e-6,
                "s = {s}: nu {} > phi {}",
                nu.value,
                phi.value
            );
            assert!(nu.tau_star.is_some());
        }
    }

    #[test]
    fn returned_policies_respect_mask_and_budgets() {
        for s in [0.1, 0.5, 1.5] {
            let (source, cons) = binary_instance(0.7, 0.25, s);
            for r in [
                solve_phi(&source, &cons).unwrap(),
                solve_nu(&source, &cons).unwrap(),
            ] {
                // Mask zeros are exact, budgets hold within 1e-8.
                assert_eq!(r.policy.cond_h0().row(0)[1], 0.0);
                assert_eq!(r.policy.cond_h1().row(0)[1], 0.0);
                let check = cons.check_policy(&source, &r.policy).unwrap();
                assert!(check.ok(), "s = {s}: {check:?}");
                assert!(r.distortion_h0 <= cons.budget_h0 + BUDGET_TOL);
                assert!(r.distortion_h1 <= cons.budget_h1 + BUDGET_TOL);
            }
        }
    }

    #[test]
    fn infeasible_budgets_are_rejected() {
        // Distortion at least 1 everywhere but budget 0.5.
        let a = binary_alphabet();
        let p0 = Pmf::new(a.clone(), vec![0.75, 0.25]).unwrap();
        let p1 = Pmf::new(a.clone(), vec![0.2, 0.8]).unwrap();
        let source = SourceModel::new(p0, p1, 0.5, 0.5).unwrap();
        let d = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let spec = DistortionSpec::unmasked(a.clone(), a, d).unwrap();
        let cons = ConstraintSet::new(spec, 0.5, 0.5).unwrap();
        assert!(matches!(
            solve_phi(&source, &cons),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        // Both objectives, 10 random interior policies, step 1e-6,
        // relative error below 1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Alphabet::new(vec![0.0, 1.0, 2.0]).unwrap();
        let h = 1e-6;
        for trial in 0..10 {
            let rand_pmf = |rng: &mut ChaCha8Rng| {
                let w: Vec<f64> = (0..3).map(|_| -(rng.random::<f64>().ln()) + 0.05).collect();
                Pmf::new_normalized(a.clone(), w).unwrap()
            };
            let p0 = rand_pmf(&mut rng);
            let p1 = rand_pmf(&mut rng);
            let d = vec![
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 1.0],
                vec![2.0, 1.0, 0.0],
            ];
            let spec = DistortionSpec::unmasked(a.clone(), a.clone(), d).unwrap();
            let source = match SourceModel::new(p0.clone(), p1.clone(), 0.5, 0.5) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let cons = ConstraintSet::new(spec, 1.0, 1.0).unwrap();
            let (b0, b1) = build_blocks(&source, &cons);
            let n0 = b0.n_vars();
            let n = n0 + b1.n_vars();

            // Random strictly positive rows; feasibility is irrelevant to the
            // gradient check since the objective extends off the polytope.
            let mut z = vec![0.0; n];
            for x in 0..3 {
                for (block, off) in [(&b0, 0), (&b1, n0)] {
                    let lo = block.row_offsets[x];
                    let hi = block.row_offsets[x + 1];
                    let w: Vec<f64> =
                        (lo..hi).map(|_| -(rng.random::<f64>().ln()) + 0.05).collect();
                    let sum: f64 = w.iter().sum();
                    for (k, wk) in (lo..hi).zip(w) {
                        z[off + k] = wk / sum;
                    }
                }
            }

            let marginals = |z: &[f64]| {
                let mut m0 = vec![0.0; 3];
                let mut m1 = vec![0.0; 3];
                for (k, &(_, y)) in b0.coords.iter().enumerate() {
                    m0[y] += b0.px[k] * z[k];
                }
                for (k, &(_, y)) in b1.coords.iter().enumerate() {
                    m1[y] += b1.px[k] * z[n0 + k];
                }
                (m0, m1)
            };

            let objectives: Vec<(Box<dyn Fn(&[f64], &[f64]) -> f64>, Box<dyn MarginalObjective>)> = vec![
                (
                    Box::new(|m0: &[f64], m1: &[f64]| crate::distributions::kl_slices(m0, m1)),
                    Box::new(KlObjective),
                ),
                (
                    Box::new(|m0: &[f64], m1: &[f64]| {
                        crate::distributions::chernoff_coeff_slices(m0, m1, 0.37)
                    }),
                    Box::new(ChernoffTauObjective { tau: 0.37 }),
                ),
            ];
            for (value_fn, obj) in &objectives {
                let (m0, m1) = marginals(&z);
                let mut g0 = vec![0.0; 3];
                let mut g1 = vec![0.0; 3];
                obj.grad(&m0, &m1, &mut g0, &mut g1);
                // Lift to policy coordinates.
                let mut gz = vec![0.0; n];
                for (k, &(_, y)) in b0.coords.iter().enumerate() {
                    gz[k] = b0.px[k] * g0[y];
                }
                for (k, &(_, y)) in b1.coords.iter().enumerate() {
                    gz[n0 + k] = b1.px[k] * g1[y];
                }
                for k in 0..n {
                    let mut zp = z.clone();
                    zp[k] += h;
                    let (m0p, m1p) = marginals(&zp);
                    zp[k] -= 2.0 * h;
                    let (m0m, m1m) = marginals(&zp);
                    let fd = (value_fn(&m0p, &m1p) - value_fn(&m0m, &m1m)) / (2.0 * h);
                    let rel = (fd - gz[k]).abs() / gz[k].abs().max(1.0);
                    assert!(
                        rel < 1e-5,
                        "trial {trial} coord {k}: fd {fd} vs grad {}",
                        gz[k]
                    );
                }
            }
        }
    }

    #[test]
    fn quantize_identity_when_supported_on_target() {
        let a = binary_alphabet();
        let rows0 = vec![vec![1.0, 0.0], vec![0.4, 0.6]];
        let rows1 = vec![vec![1.0, 0.0], vec![0.7, 0.3]];
        let policy = PolicyPair::new(
            ConditionalPmf::new(a.clone(), a.clone(), rows0).unwrap(),
            ConditionalPmf::new(a.clone(), a.clone(), rows1).unwrap(),
        )
        .unwrap();
        let q = quantize_to_demand_alphabet(&policy, &a).unwrap();
        assert_eq!(q, policy);
    }

    #[test]
    fn quantize_hand_example() {
        // y alphabet {0, 1, 2}, target {0, 2}: mass at y = 1 moves to y = 2.
        let x = binary_alphabet();
        let y = Alphabet::new(vec![0.0, 1.0, 2.0]).unwrap();
        let rows0 = vec![vec![1.0, 0.0, 0.0], vec![0.2, 0.3, 0.5]];
        let rows1 = vec![vec![1.0, 0.0, 0.0], vec![0.1, 0.6, 0.3]];
        let policy = PolicyPair::new(
            ConditionalPmf::new(x.clone(), y.clone(), rows0).unwrap(),
            ConditionalPmf::new(x.clone(), y, rows1).unwrap(),
        )
        .unwrap();
        let q = quantize_to_demand_alphabet(&policy, &x).unwrap();
        assert_eq!(q.cond_h0().row(0), &[1.0, 0.0]);
        let approx = |row: &[f64], want: [f64; 2]| {
            assert!(row.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "{row:?}");
        };
        approx(q.cond_h0().row(1), [0.2, 0.8]);
        approx(q.cond_h1().row(1), [0.1, 0.9]);
    }

    #[test]
    fn quantize_rejects_observations_above_target() {
        let x = binary_alphabet();
        let y = Alphabet::new(vec![0.0, 2.0, 5.0]).unwrap();
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]];
        let policy = PolicyPair::new(
            ConditionalPmf::new(x.clone(), y.clone(), rows.clone()).unwrap(),
            ConditionalPmf::new(x.clone(), y, rows).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            quantize_to_demand_alphabet(&policy, &x),
            Err(Error::CorruptPolicy(_))
        ));
    }

    #[test]
    fn quantize_never_increases_kl() {
        // Data processing: quantizing the observation alphabet cannot grow
        // the divergence between the induced marginals.
        let x = binary_alphabet();
        let y = Alphabet::new(vec![0.0, 1.0, 2.0]).unwrap();
        let p0 = Pmf::new(x.clone(), vec![0.75, 0.25]).unwrap();
        let p1 = Pmf::new(x.clone(), vec![0.2, 0.8]).unwrap();
        let rows0 = vec![vec![0.8, 0.2, 0.0], vec![0.3, 0.3, 0.4]];
        let rows1 = vec![vec![0.6, 0.4, 0.0], vec![0.1, 0.5, 0.4]];
        let policy = PolicyPair::new(
            ConditionalPmf::new(x.clone(), y.clone(), rows0).unwrap(),
            ConditionalPmf::new(x.clone(), y, rows1).unwrap(),
        )
        .unwrap();
        let before = kl(
            &marginal(&p0, policy.cond_h0()).unwrap(),
            &marginal(&p1, policy.cond_h1()).unwrap(),
        )
        .unwrap();
        let q = quantize_to_demand_alphabet(&policy, &x).unwrap();
        let after = kl(
            &marginal(&p0, q.cond_h0()).unwrap(),
            &marginal(&p1, q.cond_h1()).unwrap(),
        )
        .unwrap();
        assert!(after <= before + 1e-12, "{after} > {before}");
    }

    #[test]
    fn sweep_is_monotone_and_terminally_zero() {
        let (source, cons) = binary_instance(0.75, 0.2, 1.0);
        let grid: Vec<f64> = (1..=12).map(|k| k as f64 * 0.2).collect();
        let table = sweep_exponent(
            &source,
            &cons.distortion,
            &grid,
            ExponentKind::Phi,
            &SweepOptions::default(),
        )
        .unwrap();
        assert!(table.audit.monotone, "{:?}", table.audit);
        assert!(table.audit.midpoint_convex, "{:?}", table.audit);
        assert!(table.rows.last().unwrap().value <= 1e-9);
        assert!(table.rows.iter().all(|r| r.converged));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let (source, cons) = binary_instance(0.75, 0.2, 1.0);
        for grid in [vec![], vec![-0.1, 0.5], vec![0.5, 0.2]] {
            assert!(sweep_exponent(
                &source,
                &cons.distortion,
                &grid,
                ExponentKind::Phi,
                &SweepOptions::default(),
            )
            .is_err());
        }
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let (source, cons) = binary_instance(0.75, 0.2, 1.0);
        let grid: Vec<f64> = (1..=8).map(|k| k as f64 * 0.15).collect();
        let serial = sweep_exponent(
            &source,
            &cons.distortion,
            &grid,
            ExponentKind::Phi,
            &SweepOptions::default(),
        )
        .unwrap();
        let parallel = sweep_exponent(
            &source,
            &cons.distortion,
            &grid,
            ExponentKind::Phi,
            &SweepOptions {
                threads: 4,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in serial.rows.iter().zip(&parallel.rows) {
            assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
        }
    }

    #[test]
    fn warm_start_reaches_the_same_optimum() {
        let (source, cons_small) = binary_instance(0.75, 0.2, 0.3);
        let (_, cons_large) = binary_instance(0.75, 0.2, 0.6);
        let small = solve_phi(&source, &cons_small).unwrap();
        let cold = solve_phi(&source, &cons_large).unwrap();
        let warm = solve_phi_opts(
            &source,
            &cons_large,
            &SolveOptions::default(),
            Some(&small.policy),
        )
        .unwrap();
        assert!((cold.value - warm.value).abs() < 1e-7);
    }
}
