//! Exact finite-horizon adversary oracles: the randomized Neyman-Pearson
//! optimal test, the deterministic log-likelihood-ratio threshold test, and
//! the Bayes likelihood-ratio test, plus the error-exponent trend over
//! growing horizons.
//!
//! For product-form i.i.d. observations the oracles enumerate type classes
//! (symbol-count histograms), which keeps the computation polynomial in the
//! horizon: binary alphabets comfortably reach n >= 500. All probabilities are
//! assembled in log domain from a cumulative log-factorial table, never by
//! multiplying raw sequence probabilities. Outcomes with zero probability
//! under exactly one hypothesis keep symbolic likelihood ratios (`+inf` /
//! `-inf`) and sort to the extremes; nothing is epsilon-floored.

use crate::distributions::{kl, Alphabet, Pmf};
use crate::error::{Error, Result};

/// Maximum number of enumerated type classes in product-form mode.
pub const TYPE_CLASS_CAP: usize = 2_000_000;
/// Maximum number of explicit joint outcomes (`|Y|^n`).
pub const JOINT_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMode {
    NeymanPearson,
    Bayes,
}

/// Observation law available to the adversary over the horizon.
#[derive(Debug, Clone)]
pub enum ObservationModel {
    /// Per-slot pmfs on a shared alphabet; observations i.i.d. across slots.
    PerSlot { p_h0: Pmf, p_h1: Pmf },
    /// Explicit joint pmfs over all `|Y|^n` sequences, indexed base-`|Y|`
    /// with the first slot as the most significant digit.
    Joint {
        y_alphabet: Alphabet,
        p_h0: Vec<f64>,
        p_h1: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct TestSpec {
    pub n: usize,
    pub mode: TestMode,
    /// Type-I error bound, Neyman-Pearson mode only.
    pub epsilon: Option<f64>,
    pub model: ObservationModel,
}

impl TestSpec {
    pub fn per_slot(
        n: usize,
        mode: TestMode,
        epsilon: Option<f64>,
        p_h0: Pmf,
        p_h1: Pmf,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if p_h0.alphabet() != p_h1.alphabet() {
            return Err(Error::AlphabetMismatch(
                "per-slot pmfs must share the observation alphabet".into(),
            ));
        }
        Ok(Self {
            n,
            mode,
            epsilon,
            model: ObservationModel::PerSlot { p_h0, p_h1 },
        })
    }

    pub fn joint(
        n: usize,
        mode: TestMode,
        epsilon: Option<f64>,
        y_alphabet: Alphabet,
        p_h0: Vec<f64>,
        p_h1: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        let size = (y_alphabet.len() as f64).powi(n as i32);
        if !(size <= JOINT_CAP as f64) {
            return Err(Error::SizeCapExceeded(format!(
                "joint mode needs |Y|^n <= {JOINT_CAP}, got {size:.3e}"
            )));
        }
        let size = size as usize;
        if p_h0.len() != size || p_h1.len() != size {
            return Err(Error::InvalidDistribution(format!(
                "joint pmfs must have |Y|^n = {size} entries"
            )));
        }
        for p in [&p_h0, &p_h1] {
            if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidDistribution(
                    "joint pmf entries must lie in [0, 1]".into(),
                ));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!(
                    "joint pmf sums to {sum}"
                )));
            }
        }
        Ok(Self {
            n,
            mode,
            epsilon,
            model: ObservationModel::Joint {
                y_alphabet,
                p_h0,
                p_h1,
            },
        })
    }
}

/// Counts of enumerated atoms (type classes in product-form mode, outcomes in
/// joint mode) per decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegionSummary {
    pub decide_h0: usize,
    pub decide_h1: usize,
    pub randomized: usize,
}

#[derive(Debug, Clone)]
pub struct TestResult {
    /// Probability of deciding h1 under h0.
    pub type1: f64,
    /// Probability of deciding h0 under h1.
    pub type2: f64,
    /// Prior-weighted error probability; Bayes mode only.
    pub bayes_error: Option<f64>,
    /// Test threshold. Neyman-Pearson: normalized log-likelihood ratio
    /// `llr / n` of the boundary class; threshold test: `t(n)`; Bayes: the
    /// prior ratio `p1 / p0` on the likelihood-ratio scale.
    pub threshold: f64,
    /// Probability of deciding h0 on the boundary class (randomized
    /// Neyman-Pearson only; deterministic tests report 0).
    pub randomization: f64,
    pub region_summary: RegionSummary,
}

/// One enumerated event whose sequences share a likelihood ratio: a type
/// class (product form) or a single outcome (joint form).
#[derive(Debug, Clone, Copy)]
struct Atom {
    p0: f64,
    p1: f64,
    /// Per-sequence log-likelihood ratio; `+inf` when `p1 = 0`, `-inf` when
    /// `p0 = 0`.
    llr: f64,
}

fn lnfact_table(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

fn ensure_type_class_count(n: usize, k: usize) -> Result<()> {
    // C(n + k - 1, k - 1) classes in total.
    let t = lnfact_table(n + k);
    let ln_count = t[n + k - 1] - t[n] - t[k - 1];
    if ln_count > (TYPE_CLASS_CAP as f64).ln() {
        return Err(Error::SizeCapExceeded(format!(
            "about exp({ln_count:.1}) type classes exceed the cap of {TYPE_CLASS_CAP}"
        )));
    }
    Ok(())
}

struct ProductEnumerator<'a> {
    n: usize,
    k: usize,
    p0: &'a [f64],
    p1: &'a [f64],
    ln_p0: Vec<f64>,
    ln_p1: Vec<f64>,
    lnfact: Vec<f64>,
    atoms: Vec<Atom>,
}

impl ProductEnumerator<'_> {
    /// Recurses over symbol counts. `lw0`/`lw1` carry
    /// `sum_i c_i ln p_i - sum_i ln(c_i!)` over the symbols fixed so far;
    /// `llr` carries `sum_i c_i (ln p0_i - ln p1_i)`; `z0`/`z1` flag a zero
    /// class probability under each hypothesis.
    #[allow(clippy::too_many_arguments)]
    fn go(&mut self, sym: usize, remaining: usize, lw0: f64, lw1: f64, llr: f64, z0: bool, z1: bool) {
        let take = |this: &Self, c: usize, mut lw0: f64, mut lw1: f64, mut llr: f64, mut z0: bool, mut z1: bool| {
            if c > 0 {
                if this.p0[sym] == 0.0 {
                    z0 = true;
                } else {
                    lw0 += c as f64 * this.ln_p0[sym];
                }
                if this.p1[sym] == 0.0 {
                    z1 = true;
                } else {
                    lw1 += c as f64 * this.ln_p1[sym];
                }
                let lf = this.lnfact[c];
                lw0 -= lf;
                lw1 -= lf;
                if !z0 && !z1 {
                    llr += c as f64 * (this.ln_p0[sym] - this.ln_p1[sym]);
                }
            }
            (lw0, lw1, llr, z0, z1)
        };
        if sym == self.k - 1 {
            let (lw0, lw1, llr, z0, z1) = take(self, remaining, lw0, lw1, llr, z0, z1);
            if z0 && z1 {
                return;
            }
            let base = self.lnfact[self.n];
            self.atoms.push(Atom {
                p0: if z0 { 0.0 } else { (base + lw0).exp() },
                p1: if z1 { 0.0 } else { (base + lw1).exp() },
                llr: if z1 {
                    f64::INFINITY
                } else if z0 {
                    f64::NEG_INFINITY
                } else {
                    llr
                },
            });
            return;
        }
        for c in 0..=remaining {
            let (lw0c, lw1c, llrc, z0c, z1c) = take(self, c, lw0, lw1, llr, z0, z1);
            if z0c && z1c {
                continue;
            }
            self.go(sym + 1, remaining - c, lw0c, lw1c, llrc, z0c, z1c);
        }
    }
}

fn enumerate_atoms_product(n: usize, p0: &[f64], p1: &[f64]) -> Result<Vec<Atom>> {
    let k = p0.len();
    ensure_type_class_count(n, k)?;
    let safe_ln = |p: f64| if p > 0.0 { p.ln() } else { 0.0 };
    let mut e = ProductEnumerator {
        n,
        k,
        p0,
        p1,
        ln_p0: p0.iter().map(|&p| safe_ln(p)).collect(),
        ln_p1: p1.iter().map(|&p| safe_ln(p)).collect(),
        lnfact: lnfact_table(n),
        atoms: Vec::new(),
    };
    e.go(0, n, 0.0, 0.0, 0.0, false, false);
    Ok(e.atoms)
}

fn enumerate_atoms_joint(p0: &[f64], p1: &[f64]) -> Vec<Atom> {
    p0.iter()
        .zip(p1)
        .filter(|(&a, &b)| a > 0.0 || b > 0.0)
        .map(|(&a, &b)| Atom {
            p0: a,
            p1: b,
            llr: if b == 0.0 {
                f64::INFINITY
            } else if a == 0.0 {
                f64::NEG_INFINITY
            } else {
                (a / b).ln()
            },
        })
        .collect()
}

fn atoms_of(spec: &TestSpec) -> Result<Vec<Atom>> {
    match &spec.model {
        ObservationModel::PerSlot { p_h0, p_h1 } => {
            enumerate_atoms_product(spec.n, p_h0.probs(), p_h1.probs())
        }
        ObservationModel::Joint { p_h0, p_h1, .. } => Ok(enumerate_atoms_joint(p_h0, p_h1)),
    }
}

/// Atoms with identical likelihood ratio merged, sorted by ratio descending.
/// Merging is what makes the boundary randomization uniform over the whole
/// boundary class.
struct LrGroup {
    llr: f64,
    p0: f64,
    p1: f64,
    atom_count: usize,
}

fn lr_groups_descending(mut atoms: Vec<Atom>) -> Vec<LrGroup> {
    atoms.sort_by(|a, b| b.llr.total_cmp(&a.llr));
    let mut groups: Vec<LrGroup> = Vec::new();
    for a in atoms {
        match groups.last_mut() {
            Some(g) if g.llr == a.llr => {
                g.p0 += a.p0;
                g.p1 += a.p1;
                g.atom_count += 1;
            }
            _ => groups.push(LrGroup {
                llr: a.llr,
                p0: a.p0,
                p1: a.p1,
                atom_count: 1,
            }),
        }
    }
    groups
}

/// Randomized Neyman-Pearson test: the exactly minimal type-II error subject
/// to `type1 <= epsilon`.
///
/// Classes are sorted by likelihood ratio descending and accepted into the
/// h0-decision region until the type-I budget is exhausted; the boundary
/// class is accepted with the fractional probability that makes the type-I
/// constraint tight.
pub fn np_exact(spec: &TestSpec) -> Result<TestResult> {
    if spec.mode != TestMode::NeymanPearson {
        return Err(Error::InvalidParameter(
            "np_exact requires a Neyman-Pearson test spec".into(),
        ));
    }
    let epsilon = spec
        .epsilon
        .ok_or_else(|| Error::InvalidParameter("Neyman-Pearson mode needs an epsilon".into()))?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let groups = lr_groups_descending(atoms_of(spec)?);

    let need = 1.0 - epsilon;
    let mut acc0 = 0.0f64;
    let mut beta = 0.0f64;
    let mut type1 = 0.0f64;
    let mut summary = RegionSummary::default();
    let mut threshold = f64::NEG_INFINITY;
    let mut randomization = 1.0;
    let mut boundary_seen = false;
    for g in &groups {
        let remaining = need - acc0;
        if boundary_seen || remaining <= 0.0 {
            summary.decide_h1 += g.atom_count;
            type1 += g.p0;
            continue;
        }
        if g.p0 <= remaining {
            acc0 += g.p0;
            beta += g.p1;
            summary.decide_h0 += g.atom_count;
            threshold = g.llr;
        } else {
            let f = remaining / g.p0;
            beta += f * g.p1;
            type1 += (1.0 - f) * g.p0;
            summary.randomized += g.atom_count;
            threshold = g.llr;
            randomization = f;
            boundary_seen = true;
        }
    }
    Ok(TestResult {
        type1,
        type2: beta,
        bayes_error: None,
        threshold: threshold / spec.n as f64,
        randomization,
        region_summary: summary,
    })
}

/// Deterministic threshold test: decide h0 on
/// `{ y^n : llr(y^n)/n >= t(n) }` with
/// `t(n) = D(p_{h0}^n || p_{h1}^n)/n - delta'/n`. A change-of-measure bound
/// on the region gives `type2 <= exp(-n t(n))` outright.
pub fn np_threshold_test(spec: &TestSpec, delta_prime: f64) -> Result<TestResult> {
    if !(delta_prime > 0.0) || !delta_prime.is_finite() {
        return Err(Error::InvalidParameter(
            "delta' must be positive and finite".into(),
        ));
    }
    let atoms = atoms_of(spec)?;
    let divergence_n = match &spec.model {
        ObservationModel::PerSlot { p_h0, p_h1 } => spec.n as f64 * kl(p_h0, p_h1)?,
        ObservationModel::Joint { .. } => atoms
            .iter()
            .filter(|a| a.p0 > 0.0)
            .map(|a| a.p0 * a.llr)
            .sum(),
    };
    let t_total = divergence_n - delta_prime;
    let mut type1 = 0.0;
    let mut type2 = 0.0;
    let mut summary = RegionSummary::default();
    for a in &atoms {
        if a.llr >= t_total {
            type2 += a.p1;
            summary.decide_h0 += 1;
        } else {
            type1 += a.p0;
            summary.decide_h1 += 1;
        }
    }
    Ok(TestResult {
        type1,
        type2,
        bayes_error: None,
        threshold: t_total / spec.n as f64,
        randomization: 0.0,
        region_summary: summary,
    })
}

/// Bayes-optimal deterministic likelihood-ratio test: minimal prior-weighted
/// error `sum min(p0 P_h0, p1 P_h1)`. Ratio ties decide h0.
pub fn bayes_exact(spec: &TestSpec, prior_h0: f64, prior_h1: f64) -> Result<TestResult> {
    if spec.mode != TestMode::Bayes {
        return Err(Error::InvalidParameter(
            "bayes_exact requires a Bayes test spec".into(),
        ));
    }
    if !(prior_h0 > 0.0 && prior_h1 > 0.0) || (prior_h0 + prior_h1 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "priors must be positive and sum to one".into(),
        ));
    }
    let atoms = atoms_of(spec)?;
    let log_ratio = (prior_h1 / prior_h0).ln();
    let mut alpha = 0.0;
    let mut type1 = 0.0;
    let mut type2 = 0.0;
    let mut summary = RegionSummary::default();
    for a in &atoms {
        alpha += (prior_h0 * a.p0).min(prior_h1 * a.p1);
        if a.llr >= log_ratio {
            type2 += a.p1;
            summary.decide_h0 += 1;
        } else {
            type1 += a.p0;
            summary.decide_h1 += 1;
        }
    }
    Ok(TestResult {
        type1,
        type2,
        bayes_error: Some(alpha),
        threshold: prior_h1 / prior_h0,
        randomization: 0.0,
        region_summary: summary,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TrendRow {
    pub n: usize,
    pub error: f64,
    pub exponent_nats: f64,
}

/// Exact error and normalized exponent `-(1/n) log error` across horizons for
/// i.i.d. per-slot observations, e.g. the marginals of an exponent-program
/// optimizer. In Neyman-Pearson mode the exponent approaches the KL
/// divergence of the marginals (from above, for epsilon near one); in Bayes
/// mode it approaches their Chernoff information.
pub fn exponent_trend(
    p_h0: &Pmf,
    p_h1: &Pmf,
    n_values: &[usize],
    mode: TestMode,
    epsilon: Option<f64>,
    priors: Option<(f64, f64)>,
) -> Result<Vec<TrendRow>> {
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let error = match mode {
            TestMode::NeymanPearson => {
                let spec = TestSpec::per_slot(n, mode, epsilon, p_h0.clone(), p_h1.clone())?;
                np_exact(&spec)?.type2
            }
            TestMode::Bayes => {
                let (pr0, pr1) = priors.unwrap_or((0.5, 0.5));
                let spec = TestSpec::per_slot(n, mode, None, p_h0.clone(), p_h1.clone())?;
                bayes_exact(&spec, pr0, pr1)?
                    .bayes_error
                    .expect("bayes mode reports an error probability")
            }
        };
        let exponent_nats = if error > 0.0 {
            -error.ln() / n as f64
        } else {
            f64::INFINITY
        };
        rows.push(TrendRow {
            n,
            error,
            exponent_nats,
        });
    }
    Ok(rows)
}
