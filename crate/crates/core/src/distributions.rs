//! Finite alphabets, pmfs, conditional policies, and the information measures
//! consumed by every other module: Kullback-Leibler divergence, Rényi
//! divergence, the Chernoff coefficient, and Chernoff information.
//!
//! All divergences are reported in nats. Zero-probability conventions follow
//! the standard information-theoretic ones: `0·log 0 = 0`, and
//! `kl(p, q) = +inf` whenever `p` puts mass where `q` does not. The boundary
//! behaviour of the Chernoff coefficient at `tau` in `{0, 1}` is fixed so that
//! `C_1(p, q) = -log p({z : q(z) > 0})`, i.e. terms whose zero-exponent factor
//! has probability zero contribute nothing to the sum.
//!
//! Every type here is immutable after construction and all operations are pure
//! functions, so values can be shared freely across threads.

use crate::error::{Error, Result};
use crate::scalar::golden_section_max;

/// Normalization tolerance applied when constructing a [`Pmf`] or a row of a
/// [`ConditionalPmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;

/// A finite alphabet of strictly increasing, finite real symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    symbols: Vec<f64>,
}

impl Alphabet {
    pub fn new(symbols: Vec<f64>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParameter("alphabet must be nonempty".into()));
        }
        if symbols.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "alphabet symbols must be finite".into(),
            ));
        }
        if symbols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "alphabet symbols must be strictly increasing".into(),
            ));
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn min_symbol(&self) -> f64 {
        self.symbols[0]
    }

    pub fn max_symbol(&self) -> f64 {
        *self.symbols.last().unwrap()
    }

    /// Index of a symbol by exact value match.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.symbols.iter().position(|&v| v == x)
    }
}

/// A probability mass function over an [`Alphabet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf, requiring the entries to sum to one within
    /// [`PMF_SUM_TOL`]. Inputs are never silently renormalized; use
    /// [`Pmf::new_normalized`] to opt in explicitly.
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.len() {
            return Err(Error::InvalidDistribution(format!(
                "pmf length {} does not match alphabet size {}",
                probs.len(),
                alphabet.len()
            )));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidDistribution(
                "pmf entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "pmf entries sum to {sum}, expected 1 within {PMF_SUM_TOL}"
            )));
        }
        Ok(Self { alphabet, probs })
    }

    /// Builds a pmf from nonnegative weights, renormalizing explicitly.
    pub fn new_normalized(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != alphabet.len() {
            return Err(Error::InvalidDistribution(format!(
                "weight length {} does not match alphabet size {}",
                weights.len(),
                alphabet.len()
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution(
                "weights must have positive sum".into(),
            ));
        }
        let probs = weights.iter().map(|w| w / sum).collect();
        Ok(Self { alphabet, probs })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Expectation of a per-symbol function.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.probs
            .iter()
            .zip(self.alphabet.symbols())
            .map(|(&p, &x)| p * f(x))
            .sum()
    }

    /// Inverse-CDF sample: maps a uniform draw `u` in `[0, 1)` to a symbol
    /// index. Deterministic in `u`, which keeps seeded simulations
    /// byte-reproducible.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.alphabet.symbols()[self.sample_index(u)]
    }

    /// Total variation distance to another pmf on the same alphabet.
    pub fn total_variation(&self, other: &Pmf) -> Result<f64> {
        ensure_same_alphabet(&self.alphabet, &other.alphabet)?;
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Hypothesis pair of source pmfs with prior probabilities.
///
/// The priors follow the convention `0 < prior_h0 <= prior_h1 < 1`, and the
/// source pair must satisfy `0 < kl(p_x_h0, p_x_h1) < inf`: the hypotheses are
/// distinguishable but not perfectly so.
#[derive(Debug, Clone)]
pub struct SourceModel {
    x_alphabet: Alphabet,
    p_x_h0: Pmf,
    p_x_h1: Pmf,
    prior_h0: f64,
    prior_h1: f64,
}

impl SourceModel {
    pub fn new(p_x_h0: Pmf, p_x_h1: Pmf, prior_h0: f64, prior_h1: f64) -> Result<Self> {
        ensure_same_alphabet(p_x_h0.alphabet(), p_x_h1.alphabet())?;
        if !(prior_h0 > 0.0) {
            return Err(Error::InvalidParameter(
                "prior_h0 must be strictly positive".into(),
            ));
        }
        if (prior_h0 + prior_h1 - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidParameter(
                "priors must sum to one".into(),
            ));
        }
        if prior_h0 > prior_h1 {
            return Err(Error::InvalidParameter(
                "priors must satisfy prior_h0 <= prior_h1".into(),
            ));
        }
        let d = kl(&p_x_h0, &p_x_h1)?;
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "source pair must satisfy 0 < kl(p_x_h0, p_x_h1) < inf, got {d}"
            )));
        }
        let x_alphabet = p_x_h0.alphabet().clone();
        Ok(Self {
            x_alphabet,
            p_x_h0,
            p_x_h1,
            prior_h0,
            prior_h1,
        })
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn p_x_h0(&self) -> &Pmf {
        &self.p_x_h0
    }

    pub fn p_x_h1(&self) -> &Pmf {
        &self.p_x_h1
    }

    pub fn prior_h0(&self) -> f64 {
        self.prior_h0
    }

    pub fn prior_h1(&self) -> f64 {
        self.prior_h1
    }

    /// `kl(p_x_h0, p_x_h1)`, finite and positive by construction.
    pub fn source_kl(&self) -> f64 {
        kl(&self.p_x_h0, &self.p_x_h1).expect("alphabets match by construction")
    }
}

/// A row-stochastic conditional pmf `p(y | x)` between two alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    rows: Vec<Vec<f64>>,
}

impl ConditionalPmf {
    pub fn new(x_alphabet: Alphabet, y_alphabet: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != x_alphabet.len() {
            return Err(Error::InvalidDistribution(format!(
                "conditional has {} rows, expected {}",
                rows.len(),
                x_alphabet.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != y_alphabet.len() {
                return Err(Error::InvalidDistribution(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    y_alphabet.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidDistribution(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PMF_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "row {i} sums to {sum}, expected 1 within {PMF_SUM_TOL}"
                )));
            }
        }
        Ok(Self {
            x_alphabet,
            y_alphabet,
            rows,
        })
    }

    /// Identity channel on one alphabet.
    pub fn identity(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect();
        Self {
            x_alphabet: alphabet.clone(),
            y_alphabet: alphabet,
            rows,
        }
    }

    /// Channel sending every input to the single output `y_index`.
    pub fn constant(x_alphabet: Alphabet, y_alphabet: Alphabet, y_index: usize) -> Result<Self> {
        if y_index >= y_alphabet.len() {
            return Err(Error::InvalidParameter(format!(
                "constant target index {y_index} out of range"
            )));
        }
        let mut row = vec![0.0; y_alphabet.len()];
        row[y_index] = 1.0;
        let rows = vec![row; x_alphabet.len()];
        Ok(Self {
            x_alphabet,
            y_alphabet,
            rows,
        })
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x_index: usize) -> &[f64] {
        &self.rows[x_index]
    }

    /// Inverse-CDF sample from the row of `x_index`.
    pub fn sample_row_index(&self, x_index: usize, u: f64) -> usize {
        let row = &self.rows[x_index];
        let mut acc = 0.0;
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        row.len() - 1
    }
}

/// A memoryless hypothesis-aware policy: one conditional per hypothesis over
/// shared alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    cond_h0: ConditionalPmf,
    cond_h1: ConditionalPmf,
}

impl PolicyPair {
    pub fn new(cond_h0: ConditionalPmf, cond_h1: ConditionalPmf) -> Result<Self> {
        ensure_same_alphabet(cond_h0.x_alphabet(), cond_h1.x_alphabet())?;
        ensure_same_alphabet(cond_h0.y_alphabet(), cond_h1.y_alphabet())?;
        Ok(Self { cond_h0, cond_h1 })
    }

    pub fn cond_h0(&self) -> &ConditionalPmf {
        &self.cond_h0
    }

    pub fn cond_h1(&self) -> &ConditionalPmf {
        &self.cond_h1
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        self.cond_h0.x_alphabet()
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        self.cond_h0.y_alphabet()
    }
}

fn ensure_same_alphabet(a: &Alphabet, b: &Alphabet) -> Result<()> {
    if a != b {
        return Err(Error::AlphabetMismatch(format!(
            "{:?} vs {:?}",
            a.symbols(),
            b.symbols()
        )));
    }
    Ok(())
}

/// Pushforward of `source_pmf` through the channel `cond`.
pub fn marginal(source_pmf: &Pmf, cond: &ConditionalPmf) -> Result<Pmf> {
    ensure_same_alphabet(source_pmf.alphabet(), cond.x_alphabet())?;
    let mut out = vec![0.0; cond.y_alphabet().len()];
    for (x, &px) in source_pmf.probs().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &pyx) in cond.row(x).iter().enumerate() {
            out[y] += px * pyx;
        }
    }
    Pmf::new(cond.y_alphabet().clone(), out)
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut out = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            out += pi * (pi / qi).ln();
        }
    }
    out
}

/// Kullback-Leibler divergence `sum p log(p/q)` in nats; `+inf` when `p` has
/// mass outside the support of `q`. Clamped at zero: the divergence is
/// nonnegative, and near-identical inputs can cancel to a negative ulp.
pub fn kl(p: &Pmf, q: &Pmf) -> Result<f64> {
    ensure_same_alphabet(p.alphabet(), q.alphabet())?;
    Ok(kl_slices(p.probs(), q.probs()).max(0.0))
}

pub(crate) fn chernoff_coeff_slices(p: &[f64], q: &[f64], tau: f64) -> f64 {
    // Terms where either probability vanishes contribute nothing, which at
    // tau in {0, 1} reproduces C_1(p, q) = -log p({q > 0}) and symmetrically.
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 && qi > 0.0 {
            sum += (tau * pi.ln() + (1.0 - tau) * qi.ln()).exp();
        }
    }
    if sum == 0.0 {
        return f64::INFINITY;
    }
    -sum.ln()
}

/// Chernoff coefficient `C_tau(p, q) = -log sum p^tau q^(1-tau)` for
/// `tau` in `[0, 1]`.
pub fn chernoff_coeff(p: &Pmf, q: &Pmf, tau: f64) -> Result<f64> {
    ensure_same_alphabet(p.alphabet(), q.alphabet())?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in [0, 1], got {tau}"
        )));
    }
    Ok(chernoff_coeff_slices(p.probs(), q.probs(), tau).max(0.0))
}

/// Rényi divergence of order `tau` in `[0, 1)`:
/// `(1/(tau-1)) log sum p^tau q^(1-tau)`, with
/// `D_0(p, q) = -log q({z : p(z) > 0})`.
pub fn renyi(p: &Pmf, q: &Pmf, tau: f64) -> Result<f64> {
    ensure_same_alphabet(p.alphabet(), q.alphabet())?;
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in [0, 1), got {tau}"
        )));
    }
    // C_tau = (1 - tau) D_tau on this range.
    Ok((chernoff_coeff_slices(p.probs(), q.probs(), tau) / (1.0 - tau)).max(0.0))
}

/// Tolerance below which the Chernoff maximizer is reported as `0.5` by
/// convention: when `p == q` every `tau` achieves the zero maximum.
const CHERNOFF_FLAT_TOL: f64 = 1e-13;

/// Chernoff information: `max_tau C_tau(p, q)` together with the maximizing
/// `tau`. The map `tau -> C_tau` is concave on `[0, 1]`, so a golden-section
/// search (tolerance `1e-9` in `tau`) plus explicit endpoint comparison is
/// exact enough for every consumer in this crate.
pub fn chernoff(p: &Pmf, q: &Pmf) -> Result<(f64, f64)> {
    ensure_same_alphabet(p.alphabet(), q.alphabet())?;
    if p.probs() == q.probs() {
        return Ok((0.0, 0.5));
    }
    let ps = p.probs();
    let qs = q.probs();
    let (mut tau_star, mut best) =
        golden_section_max(|t| chernoff_coeff_slices(ps, qs, t), 0.0, 1.0, 1e-9);
    for t in [0.0, 1.0] {
        let v = chernoff_coeff_slices(ps, qs, t);
        if v > best {
            best = v;
            tau_star = t;
        }
    }
    if best <= CHERNOFF_FLAT_TOL {
        // Essentially indistinguishable inputs: any tau attains the maximum.
        return Ok((best.max(0.0), 0.5));
    }
    Ok((best.max(0.0), tau_star))
}
