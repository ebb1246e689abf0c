//! Smart-meter energy-management layer: demand models over watt-valued
//! alphabets, the supply-side constraint set (the energy supply never exceeds
//! the demand, and the long-run average renewable usage is capped by the
//! generation rate), exponent sweeps over generation rates, and policy
//! application to demand traces.

use crate::distributions::{Alphabet, Pmf, SourceModel};
use crate::error::{Error, Result};
use crate::exponents::{
    solve_nu_opts, solve_phi_opts, sweep_exponent, ConstraintSet, DistortionSpec, ExponentKind,
    ExponentResult, SolveOptions, SweepOptions, SweepTable,
};
use crate::policies::{memoryless_policy_apply, sample_iid, Hypothesis};

/// An appliance demand model: watt-valued alphabet with one demand pmf per
/// hypothesis (e.g. two appliance types).
#[derive(Debug, Clone)]
pub struct DemandModel {
    pub name: String,
    pub hypothesis_labels: [String; 2],
    pub source: SourceModel,
}

impl DemandModel {
    pub fn new(
        name: impl Into<String>,
        hypothesis_labels: [String; 2],
        source: SourceModel,
    ) -> Result<Self> {
        if source.x_alphabet().min_symbol() < 0.0 {
            return Err(Error::InvalidParameter(
                "energy demands must be nonnegative".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            hypothesis_labels,
            source,
        })
    }

    /// Two-level demand model (e.g. a fridge with "on" and "sleep" modes).
    /// `pbar` and `ptil` are the low-demand probabilities under each
    /// hypothesis.
    pub fn binary(x_low: f64, x_high: f64, pbar: f64, ptil: f64) -> Result<Self> {
        let a = Alphabet::new(vec![x_low, x_high])?;
        let source = SourceModel::new(
            Pmf::new(a.clone(), vec![pbar, 1.0 - pbar])?,
            Pmf::new(a, vec![ptil, 1.0 - ptil])?,
            0.5,
            0.5,
        )?;
        Self::new(
            format!("binary demand ({pbar}, {ptil})"),
            ["h0".into(), "h1".into()],
            source,
        )
    }

    /// The four-mode dishwasher model (watts): demand statistics for two
    /// appliance types trained under an i.i.d. assumption. Also shipped as
    /// `fixtures/table1_dishwasher.json`.
    pub fn table1_dishwasher() -> Self {
        let a = Alphabet::new(vec![0.0, 200.0, 500.0, 1200.0]).expect("static alphabet");
        let source = SourceModel::new(
            Pmf::new(a.clone(), vec![0.2528, 0.3676, 0.0, 0.3796]).expect("static pmf"),
            Pmf::new(a, vec![0.1599, 0.0579, 0.2318, 0.5504]).expect("static pmf"),
            0.5,
            0.5,
        )
        .expect("static model");
        Self {
            name: "dishwasher".into(),
            hypothesis_labels: ["type A".into(), "type B".into()],
            source: source,
        }
    }

    pub fn demand_pmf(&self, h: Hypothesis) -> &Pmf {
        match h {
            Hypothesis::H0 => self.source.p_x_h0(),
            Hypothesis::H1 => self.source.p_x_h1(),
        }
    }

    /// Synthetic i.i.d. demand trace (stands in for real consumption data).
    pub fn sample_trace(&self, h: Hypothesis, n: usize, seed: u64) -> Vec<f64> {
        sample_iid(self.demand_pmf(h), n, seed)
    }
}

/// The supply-side feasible set for a renewable generation rate `s`: supply
/// is drawn from the demand alphabet, never exceeds the demand (the renewable
/// source cannot be charged from the provider), and the average renewable
/// usage `E[X - Y]` is capped by `s` under both hypotheses.
#[derive(Debug, Clone)]
pub struct EnergyConstraint {
    pub s: f64,
    pub distortion: DistortionSpec,
}

impl EnergyConstraint {
    /// Restricting the supply alphabet to the demand alphabet loses no
    /// optimality (quantization onto the demand alphabet preserves
    /// feasibility and the objectives), so the constraint is built directly
    /// on `y_alphabet = x_alphabet`. Forbidden pairs (`y > x`) carry zero
    /// distortion to keep the matrix nonnegative.
    pub fn new(model: &DemandModel, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(
                "renewable generation rate must be positive".into(),
            ));
        }
        let a = model.source.x_alphabet().clone();
        let syms = a.symbols().to_vec();
        let d = syms
            .iter()
            .map(|&x| syms.iter().map(|&y| if y > x { 0.0 } else { x - y }).collect())
            .collect();
        let mask = syms
            .iter()
            .map(|&x| syms.iter().map(|&y| y > x).collect())
            .collect();
        let distortion = DistortionSpec::new(a.clone(), a, d, mask)?;
        Ok(Self { s, distortion })
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        ConstraintSet::new(self.distortion.clone(), self.s, self.s)
    }
}

/// Constraint set `P_E(s, s)` for a demand model at generation rate `s`.
pub fn build_energy_constraint(model: &DemandModel, s: f64) -> Result<ConstraintSet> {
    EnergyConstraint::new(model, s)?.constraint_set()
}

/// KL and Chernoff exponent sweeps over a grid of generation rates.
pub fn smart_meter_exponents(
    model: &DemandModel,
    s_grid: &[f64],
    opts: &SweepOptions,
) -> Result<(SweepTable, SweepTable)> {
    let distortion = EnergyConstraint::new(model, s_grid.iter().cloned().fold(1.0, f64::max))?
        .distortion;
    let phi = sweep_exponent(&model.source, &distortion, s_grid, ExponentKind::Phi, opts)?;
    let nu = sweep_exponent(&model.source, &distortion, s_grid, ExponentKind::Nu, opts)?;
    Ok((phi, nu))
}

/// Outcome of applying the optimal memoryless policy to a demand trace.
#[derive(Debug, Clone)]
pub struct TraceApplication {
    pub demand: Vec<f64>,
    pub supply: Vec<f64>,
    /// Per-slot renewable usage `x - y`.
    pub renewable: Vec<f64>,
    pub average_renewable: f64,
    pub s: f64,
    /// The solved exponent program behind the policy; `None` at `s = 0`,
    /// where the only feasible policy is the identity.
    pub exponent: Option<ExponentResult>,
}

impl TraceApplication {
    /// Renewable budget audit: average usage within the generation rate, and
    /// supply never exceeding demand.
    pub fn within_budget(&self, slack: f64) -> bool {
        self.average_renewable <= self.s + slack
            && self
                .demand
                .iter()
                .zip(&self.supply)
                .all(|(x, y)| y <= x)
    }
}

/// Solves the exponent program at rate `s` and plays the optimizer row of the
/// true hypothesis along a demand trace.
///
/// `s = 0` is the no-renewables limit: the supply must follow the demand
/// exactly, so the identity policy is applied without invoking the solver
/// (budgets in the solver proper are strictly positive).
pub fn apply_to_trace(
    model: &DemandModel,
    s: f64,
    trace: &[f64],
    variant: ExponentKind,
    h: Hypothesis,
    seed: u64,
) -> Result<TraceApplication> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(
            "renewable generation rate must be nonnegative".into(),
        ));
    }
    for &x in trace {
        if model.source.x_alphabet().index_of(x).is_none() {
            return Err(Error::SymbolNotInAlphabet(x));
        }
    }
    let (supply, exponent) = if s == 0.0 {
        (trace.to_vec(), None)
    } else {
        let cons = build_energy_constraint(model, s)?;
        let opts = SolveOptions::default();
        let result = match variant {
            ExponentKind::Phi => solve_phi_opts(&model.source, &cons, &opts, None)?,
            ExponentKind::Nu => solve_nu_opts(&model.source, &cons, &opts)?,
        };
        let supply = memoryless_policy_apply(&result.policy, h, trace, seed)?;
        (supply, Some(result))
    };
    let renewable: Vec<f64> = trace.iter().zip(&supply).map(|(x, y)| x - y).collect();
    let average_renewable = if renewable.is_empty() {
        0.0
    } else {
        renewable.iter().sum::<f64>() / renewable.len() as f64
    };
    Ok(TraceApplication {
        demand: trace.to_vec(),
        supply,
        renewable,
        average_renewable,
        s,
        exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{kl, marginal};
    use crate::exponents::quantize_to_demand_alphabet;

    #[test]
    fn binary_energy_constraint_has_three_allowed_pairs() {
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        let cons = build_energy_constraint(&model, 0.5).unwrap();
        assert_eq!(cons.distortion.allowed_pairs(), 3);
        assert!(!cons.distortion.is_forbidden(0, 0));
        assert!(cons.distortion.is_forbidden(0, 1));
        assert_eq!(cons.distortion.d(1, 0), 2.0);
        assert_eq!(cons.distortion.d(1, 1), 0.0);
        assert_eq!(cons.distortion.d_max(), 2.0);
    }

    #[test]
    fn table1_constraint_has_ten_allowed_pairs() {
        let model = DemandModel::table1_dishwasher();
        let cons = build_energy_constraint(&model, 100.0).unwrap();
        assert_eq!(cons.distortion.allowed_pairs(), 10);
        // Demand statistics sanity.
        assert!((model.source.p_x_h0().expect(|x| x) - 529.04).abs() < 1e-9);
        assert!((model.source.p_x_h1().expect(|x| x) - 787.96).abs() < 1e-9);
        assert!((model.source.source_kl() - 0.654_190_313_029_075_6).abs() < 1e-12);
    }

    #[test]
    fn generous_rate_drives_both_exponents_to_zero() {
        // s at least the mean demand under both hypotheses: mapping every
        // demand to zero is feasible, so the exponents vanish.
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        let cons = build_energy_constraint(&model, 2.0).unwrap();
        let phi = crate::exponents::solve_phi(&model.source, &cons).unwrap();
        assert!(phi.value <= 1e-9);
        let nu = crate::exponents::solve_nu(&model.source, &cons).unwrap();
        assert!(nu.value <= 1e-9);
    }

    #[test]
    fn tiny_rate_approaches_source_divergence() {
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        let cons = build_energy_constraint(&model, 1e-6).unwrap();
        let phi = crate::exponents::solve_phi(&model.source, &cons).unwrap();
        let expected = 0.75 * 3.75f64.ln() + 0.25 * 0.3125f64.ln();
        assert!((phi.value - expected).abs() < 1e-4);
        assert!((expected - 0.700529).abs() < 1e-6);
    }

    #[test]
    fn opposite_binary_settings_share_the_chernoff_curve() {
        // Swapping the hypothesis roles leaves the Chernoff exponent
        // unchanged (the coefficient is symmetric under tau -> 1 - tau).
        let m1 = DemandModel::binary(0.0, 2.0, 0.8, 0.2).unwrap();
        let m2 = DemandModel::binary(0.0, 2.0, 0.2, 0.8).unwrap();
        for s in [0.2, 0.6, 1.0] {
            let c1 = build_energy_constraint(&m1, s).unwrap();
            let c2 = build_energy_constraint(&m2, s).unwrap();
            let v1 = crate::exponents::solve_nu(&m1.source, &c1).unwrap().value;
            let v2 = crate::exponents::solve_nu(&m2.source, &c2).unwrap().value;
            assert!((v1 - v2).abs() < 1e-5, "s = {s}: {v1} vs {v2}");
        }
    }

    #[test]
    fn zero_rate_supply_follows_demand() {
        let model = DemandModel::table1_dishwasher();
        let trace = model.sample_trace(Hypothesis::H0, 200, 17);
        let out = apply_to_trace(&model, 0.0, &trace, ExponentKind::Phi, Hypothesis::H0, 17)
            .unwrap();
        assert_eq!(out.supply, trace);
        assert_eq!(out.average_renewable, 0.0);
        assert!(out.within_budget(0.0));
        assert!(out.exponent.is_none());
    }

    #[test]
    fn generous_rate_supply_is_mostly_min_demand() {
        // With the budget slack, every zero-divergence optimizer here has a
        // supply marginal dominated by the smallest symbol (at least the h0
        // low-demand share), far above the h1 demand share of that symbol.
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        let trace = model.sample_trace(Hypothesis::H1, 2000, 3);
        let out = apply_to_trace(&model, 5.0, &trace, ExponentKind::Phi, Hypothesis::H1, 3)
            .unwrap();
        let share = |seq: &[f64]| seq.iter().filter(|&&v| v == 0.0).count() as f64
            / seq.len() as f64;
        assert!(share(&out.supply) >= 0.7, "supply zeros: {}", share(&out.supply));
        assert!(share(&out.supply) > share(&out.demand) + 0.3);
        assert!(out.within_budget(1e-12));
    }

    #[test]
    fn supply_never_exceeds_demand_and_budget_audits() {
        let model = DemandModel::table1_dishwasher();
        for (s, h) in [(500.0, Hypothesis::H0), (4000.0, Hypothesis::H1)] {
            let trace = model.sample_trace(h, 2000, 23);
            let out =
                apply_to_trace(&model, s, &trace, ExponentKind::Phi, h, 23).unwrap();
            assert!(out.demand.iter().zip(&out.supply).all(|(x, y)| y <= x));
            // Monte Carlo slack: 3 sigma of the per-slot renewable draw.
            let n = out.renewable.len() as f64;
            let mean = out.average_renewable;
            let var = out
                .renewable
                .iter()
                .map(|r| (r - mean) * (r - mean))
                .sum::<f64>()
                / n;
            assert!(out.within_budget(3.0 * (var / n).sqrt()));
        }
    }

    #[test]
    fn high_rate_brings_supply_marginals_closer() {
        // Total variation of the optimizer's supply marginals shrinks as the
        // generation rate grows.
        let model = DemandModel::table1_dishwasher();
        let tv_at = |s: f64| {
            let cons = build_energy_constraint(&model, s).unwrap();
            let r = crate::exponents::solve_phi(&model.source, &cons).unwrap();
            let m0 = marginal(model.source.p_x_h0(), r.policy.cond_h0()).unwrap();
            let m1 = marginal(model.source.p_x_h1(), r.policy.cond_h1()).unwrap();
            m0.total_variation(&m1).unwrap()
        };
        let tv_small = tv_at(1.0);
        let tv_large = tv_at(4000.0);
        assert!(tv_large < tv_small, "{tv_large} !< {tv_small}");
        assert!(tv_large < 1e-3);
    }

    #[test]
    fn quantization_closure_on_enlarged_supply_alphabet() {
        // Solving with midpoint supply symbols added and quantizing back to
        // the demand alphabet matches the demand-alphabet solution.
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        let x = model.source.x_alphabet().clone();
        let y = Alphabet::new(vec![0.0, 1.0, 2.0]).unwrap();
        let d = x
            .symbols()
            .iter()
            .map(|&xv| {
                y.symbols()
                    .iter()
                    .map(|&yv| if yv > xv { 0.0 } else { xv - yv })
                    .collect()
            })
            .collect();
        let mask = x
            .symbols()
            .iter()
            .map(|&xv| y.symbols().iter().map(|&yv| yv > xv).collect())
            .collect();
        let big = DistortionSpec::new(x.clone(), y, d, mask).unwrap();
        let s = 0.5;
        let big_cons = ConstraintSet::new(big, s, s).unwrap();
        let big_phi = crate::exponents::solve_phi(&model.source, &big_cons).unwrap();
        let quantized = quantize_to_demand_alphabet(&big_phi.policy, &x).unwrap();
        let value_q = kl(
            &marginal(model.source.p_x_h0(), quantized.cond_h0()).unwrap(),
            &marginal(model.source.p_x_h1(), quantized.cond_h1()).unwrap(),
        )
        .unwrap();

        let small_cons = build_energy_constraint(&model, s).unwrap();
        let small_phi = crate::exponents::solve_phi(&model.source, &small_cons).unwrap();
        assert!(
            (value_q - small_phi.value).abs() < 1e-5,
            "{value_q} vs {}",
            small_phi.value
        );
    }

    #[test]
    fn rejects_trace_symbols_outside_the_alphabet() {
        let model = DemandModel::binary(0.0, 2.0, 0.75, 0.2).unwrap();
        assert!(matches!(
            apply_to_trace(&model, 1.0, &[0.0, 3.0], ExponentKind::Phi, Hypothesis::H0, 1),
            Err(Error::SymbolNotInAlphabet(_))
        ));
    }

    #[test]
    fn negative_demand_rejected() {
        assert!(DemandModel::binary(-1.0, 2.0, 0.75, 0.2).is_err());
    }
}
