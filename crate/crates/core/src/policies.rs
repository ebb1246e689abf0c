//! Executable management policies: memoryless hypothesis-aware application of
//! an exponent-program optimizer, and the two-phase hypothesis-unaware policy
//! with memory that first learns the hypothesis from a short prefix and then
//! runs the optimizer for the learned hypothesis at reduced budgets.
//!
//! The two-phase construction spends `o(n) = floor(log n)` slots (natural
//! log; overridable) emitting the smallest observation symbol — revealing
//! nothing — while it watches the raw data, decides the hypothesis by a
//! relative-entropy typical-set test of width `xi`, and then plays the
//! optimizer of the exponent program at budgets `(s - delta, s - omega)` for
//! the remaining slots. The headroom `psi = delta - d_max * xi > 0` is what
//! absorbs learning mistakes and the free learning phase.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::distributions::{Pmf, PolicyPair, SourceModel};
use crate::error::{Error, Result};
use crate::exponents::{expected_distortion, solve_nu, solve_phi, ConstraintSet, DistortionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H0 => "h0",
            Hypothesis::H1 => "h1",
        }
    }
}

/// Which exponent program drives the privacy-preserving phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TwoPhaseVariant {
    /// Phase 2 plays the minimal-KL optimizer (Neyman-Pearson setting).
    NeymanPearson,
    /// Phase 2 plays the minimal-Chernoff-information optimizer (Bayes
    /// setting).
    Bayes,
}

/// Parameters of the two-phase hypothesis-unaware policy.
///
/// In the Neyman-Pearson variant the caller picks the learning-test level
/// `epsilon_prime` and the width is derived as `xi = 1 - epsilon_prime`; in
/// the Bayes variant `xi` is picked directly. Validity demands
/// `xi < min(source KL, delta / d_max)`, which keeps
/// `psi = delta - d_max * xi` strictly positive.
#[derive(Debug, Clone)]
pub struct TwoPhaseConfig {
    pub n: usize,
    pub delta: f64,
    pub omega: f64,
    pub xi: f64,
    pub epsilon_prime: Option<f64>,
    pub variant: TwoPhaseVariant,
    /// Overrides `floor(ln n)` when set (the log base of the learning-phase
    /// length is a convention, so it is configurable).
    pub learning_slots_override: Option<usize>,
}

impl TwoPhaseConfig {
    pub fn neyman_pearson(n: usize, delta: f64, omega: f64, epsilon_prime: f64) -> Self {
        Self {
            n,
            delta,
            omega,
            xi: 1.0 - epsilon_prime,
            epsilon_prime: Some(epsilon_prime),
            variant: TwoPhaseVariant::NeymanPearson,
            learning_slots_override: None,
        }
    }

    pub fn bayes(n: usize, delta: f64, omega: f64, xi: f64) -> Self {
        Self {
            n,
            delta,
            omega,
            xi,
            epsilon_prime: None,
            variant: TwoPhaseVariant::Bayes,
            learning_slots_override: None,
        }
    }

    /// Learning-phase length `o(n)`: `floor(ln n)`, at least one slot, never
    /// longer than the horizon.
    pub fn learning_slots(&self) -> usize {
        let o = self
            .learning_slots_override
            .unwrap_or_else(|| (self.n as f64).ln().floor() as usize);
        o.max(1).min(self.n)
    }

    /// Budget pair `(s - delta, s - omega)` fed to the phase-2 solver.
    pub fn phase2_budgets(&self, s: f64) -> (f64, f64) {
        (s - self.delta, s - self.omega)
    }

    /// Budget headroom `psi = delta - d_max * xi`.
    pub fn psi(&self, d_max: f64) -> f64 {
        self.delta - d_max * self.xi
    }

    pub fn validate(&self, s: f64, source: &SourceModel, distortion: &DistortionSpec) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < s) || !(self.omega > 0.0 && self.omega < s) {
            return Err(Error::InvalidParameter(format!(
                "delta and omega must lie in (0, s) = (0, {s})"
            )));
        }
        let d = source.source_kl();
        let d_max = distortion.d_max();
        let xi_cap = if d_max > 0.0 {
            d.min(self.delta / d_max)
        } else {
            d
        };
        match self.variant {
            TwoPhaseVariant::NeymanPearson => {
                let eps = self.epsilon_prime.ok_or_else(|| {
                    Error::InvalidParameter("the Neyman-Pearson variant needs epsilon_prime".into())
                })?;
                let lower = (1.0 - xi_cap).max(0.0);
                if !(eps > lower && eps < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "epsilon_prime must lie in ({lower}, 1), got {eps}"
                    )));
                }
                if (self.xi - (1.0 - eps)).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "xi must equal 1 - epsilon_prime".into(),
                    ));
                }
            }
            TwoPhaseVariant::Bayes => {
                if !(self.xi > 0.0 && self.xi < xi_cap) {
                    return Err(Error::InvalidParameter(format!(
                        "xi must lie in (0, {xi_cap}), got {}",
                        self.xi
                    )));
                }
            }
        }
        if !(self.psi(d_max) > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "psi = delta - d_max * xi must be positive, got {}",
                self.psi(d_max)
            )));
        }
        Ok(())
    }
}

/// Full record of one two-phase run: inputs, outputs, the learned hypothesis,
/// and per-slot distortions.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    pub x_seq: Vec<f64>,
    pub y_seq: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub learned: Option<Hypothesis>,
    pub distortions: Vec<f64>,
    pub learning_slots: usize,
}

impl PolicyTrace {
    pub fn average_distortion(&self) -> f64 {
        if self.distortions.is_empty() {
            return 0.0;
        }
        self.distortions.iter().sum::<f64>() / self.distortions.len() as f64
    }

    /// Index of the first privacy-preserving slot.
    pub fn phase_boundary(&self) -> usize {
        self.learning_slots
    }
}

/// Draws an i.i.d. sequence from a pmf; deterministic in the seed.
pub fn sample_iid(pmf: &Pmf, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| pmf.sample(&mut rng)).collect()
}

/// Applies a memoryless hypothesis-aware policy slot by slot: each output is
/// drawn independently from the conditional row of the true hypothesis at the
/// current input symbol. Deterministic given the seed.
pub fn memoryless_policy_apply(
    policy: &PolicyPair,
    h: Hypothesis,
    x_seq: &[f64],
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let cond = match h {
        Hypothesis::H0 => policy.cond_h0(),
        Hypothesis::H1 => policy.cond_h1(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let y_syms = cond.y_alphabet().symbols();
    x_seq
        .iter()
        .map(|&x| {
            let xi = cond
                .x_alphabet()
                .index_of(x)
                .ok_or(Error::SymbolNotInAlphabet(x))?;
            let u: f64 = rng.random();
            Ok(y_syms[cond.sample_row_index(xi, u)])
        })
        .collect()
}

/// Relative-entropy typical-set decision: h0 when the normalized
/// log-likelihood ratio of the prefix sits within `xi` of the source KL
/// divergence, h1 otherwise.
///
/// Prefixes with an infinite ratio in either direction fall outside the band
/// and decide h1. For a symbol with zero probability under h1 but positive
/// probability under h0 this is counterintuitive (such data can only have
/// come from h0), but it is what band membership says; callers wanting a
/// different convention should screen those symbols beforehand.
pub fn typical_set_decision(x_learn: &[f64], source: &SourceModel, xi: f64) -> Result<Hypothesis> {
    if x_learn.is_empty() {
        return Err(Error::InvalidParameter(
            "the learning prefix must be nonempty".into(),
        ));
    }
    let p0 = source.p_x_h0().probs();
    let p1 = source.p_x_h1().probs();
    let mut llr_sum = 0.0f64;
    for &x in x_learn {
        let idx = source
            .x_alphabet()
            .index_of(x)
            .ok_or(Error::SymbolNotInAlphabet(x))?;
        if p0[idx] == 0.0 || p1[idx] == 0.0 {
            return Ok(Hypothesis::H1);
        }
        llr_sum += p0[idx].ln() - p1[idx].ln();
    }
    let avg = llr_sum / x_learn.len() as f64;
    if (avg - source.source_kl()).abs() <= xi {
        Ok(Hypothesis::H0)
    } else {
        Ok(Hypothesis::H1)
    }
}

type CacheKey = (TwoPhaseVariant, Vec<u64>);

fn phase2_cache() -> &'static Mutex<HashMap<CacheKey, PolicyPair>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, PolicyPair>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cache_key(
    variant: TwoPhaseVariant,
    source: &SourceModel,
    distortion: &DistortionSpec,
    budgets: (f64, f64),
) -> CacheKey {
    let mut bits: Vec<u64> = Vec::new();
    for &x in source.x_alphabet().symbols() {
        bits.push(x.to_bits());
    }
    for &p in source.p_x_h0().probs() {
        bits.push(p.to_bits());
    }
    for &p in source.p_x_h1().probs() {
        bits.push(p.to_bits());
    }
    for &y in distortion.y_alphabet().symbols() {
        bits.push(y.to_bits());
    }
    for x in 0..distortion.x_alphabet().len() {
        for y in 0..distortion.y_alphabet().len() {
            bits.push(distortion.d(x, y).to_bits());
            bits.push(distortion.is_forbidden(x, y) as u64);
        }
    }
    bits.push(budgets.0.to_bits());
    bits.push(budgets.1.to_bits());
    (variant, bits)
}

/// Solves the phase-2 program, memoized per (variant, source, distortion,
/// budget pair) so Monte Carlo sweeps re-solve nothing.
fn phase2_policy(
    variant: TwoPhaseVariant,
    source: &SourceModel,
    distortion: &DistortionSpec,
    budgets: (f64, f64),
) -> Result<PolicyPair> {
    let key = cache_key(variant, source, distortion, budgets);
    if let Some(hit) = phase2_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let cons = ConstraintSet::new(distortion.clone(), budgets.0, budgets.1)?;
    let result = match variant {
        TwoPhaseVariant::NeymanPearson => solve_phi(source, &cons)?,
        TwoPhaseVariant::Bayes => solve_nu(source, &cons)?,
    };
    phase2_cache()
        .lock()
        .unwrap()
        .insert(key, result.policy.clone());
    Ok(result.policy)
}

/// A validated two-phase policy bound to one instance, with the phase-2
/// optimizer solved up front so repeated applications are cheap.
pub struct TwoPhaseRunner {
    cfg: TwoPhaseConfig,
    source: SourceModel,
    distortion: DistortionSpec,
    policy: PolicyPair,
}

impl TwoPhaseRunner {
    pub fn new(
        cfg: TwoPhaseConfig,
        source: &SourceModel,
        distortion: &DistortionSpec,
        s: f64,
    ) -> Result<Self> {
        cfg.validate(s, source, distortion)?;
        let policy = phase2_policy(cfg.variant, source, distortion, cfg.phase2_budgets(s))?;
        Ok(Self {
            cfg,
            source: source.clone(),
            distortion: distortion.clone(),
            policy,
        })
    }

    pub fn config(&self) -> &TwoPhaseConfig {
        &self.cfg
    }

    /// The optimizer played during the privacy-preserving phase.
    pub fn phase2_policy(&self) -> &PolicyPair {
        &self.policy
    }

    /// Expected per-slot phase-2 distortion under (true hypothesis, learned
    /// hypothesis).
    pub fn phase2_expected_distortion(&self, truth: Hypothesis, learned: Hypothesis) -> f64 {
        let p_x = match truth {
            Hypothesis::H0 => self.source.p_x_h0(),
            Hypothesis::H1 => self.source.p_x_h1(),
        };
        let cond = match learned {
            Hypothesis::H0 => self.policy.cond_h0(),
            Hypothesis::H1 => self.policy.cond_h1(),
        };
        expected_distortion(p_x, cond, &self.distortion)
    }

    /// Smallest horizon (searched up to `cap`) from which the budget chain
    /// guarantees the average distortion constraint: the headroom `psi` must
    /// absorb the learning phase, and the learning type-II error term must be
    /// covered by `omega`.
    pub fn guaranteed_horizon(&self, cap: usize) -> Option<usize> {
        let d_max = self.distortion.d_max();
        let d = self.source.source_kl();
        let psi = self.cfg.psi(d_max);
        let holds = |n: usize| {
            let o = TwoPhaseConfig {
                n,
                ..self.cfg.clone()
            }
            .learning_slots() as f64;
            let frac = o / n as f64;
            psi - frac * d_max >= 0.0
                && d_max * (-o * (d - self.cfg.xi)).exp() + frac * d_max - self.cfg.omega <= 0.0
        };
        let mut first = None;
        for n in 1..=cap {
            if holds(n) {
                if first.is_none() {
                    first = Some(n);
                }
            } else {
                first = None;
            }
        }
        first
    }

    /// Runs the policy on one input sequence. Phase 1 always emits the
    /// smallest observation symbol; phase 2 plays the optimizer row of the
    /// learned hypothesis.
    pub fn apply(&self, h: Hypothesis, x_seq: &[f64], rng_seed: u64) -> Result<PolicyTrace> {
        if x_seq.len() != self.cfg.n {
            return Err(Error::InvalidParameter(format!(
                "input length {} does not match the configured horizon {}",
                x_seq.len(),
                self.cfg.n
            )));
        }
        let o = self.cfg.learning_slots();
        let y_syms = self.distortion.y_alphabet().symbols();
        let y_min = y_syms[0];
        let mut y_seq = Vec::with_capacity(x_seq.len());
        let mut distortions = Vec::with_capacity(x_seq.len());

        let x_index = |x: f64| -> Result<usize> {
            self.distortion
                .x_alphabet()
                .index_of(x)
                .ok_or(Error::SymbolNotInAlphabet(x))
        };

        for &x in &x_seq[..o] {
            let xi = x_index(x)?;
            y_seq.push(y_min);
            distortions.push(self.distortion.d(xi, 0));
        }

        let learned = typical_set_decision(&x_seq[..o], &self.source, self.cfg.xi)?;
        let cond = match learned {
            Hypothesis::H0 => self.policy.cond_h0(),
            Hypothesis::H1 => self.policy.cond_h1(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for &x in &x_seq[o..] {
            let xi = x_index(x)?;
            let u: f64 = rng.random();
            let yi = cond.sample_row_index(xi, u);
            y_seq.push(y_syms[yi]);
            distortions.push(self.distortion.d(xi, yi));
        }

        Ok(PolicyTrace {
            x_seq: x_seq.to_vec(),
            y_seq,
            hypothesis: h,
            learned: Some(learned),
            distortions,
            learning_slots: o,
        })
    }
}

/// One-shot convenience wrapper around [`TwoPhaseRunner`]; the phase-2 solve
/// is cached process-wide, so repeated calls stay cheap.
pub fn two_phase_apply(
    cfg: &TwoPhaseConfig,
    source: &SourceModel,
    distortion: &DistortionSpec,
    s: f64,
    h: Hypothesis,
    x_seq: &[f64],
    rng_seed: u64,
) -> Result<PolicyTrace> {
    TwoPhaseRunner::new(cfg.clone(), source, distortion, s)?.apply(h, x_seq, rng_seed)
}
