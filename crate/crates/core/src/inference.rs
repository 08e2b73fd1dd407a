//! Conditional statistics of subsystem A given a measurement at B.
//!
//! A B-observable is spectrally decomposed, its outcomes are grouped into
//! bins, and the state is conditioned on each bin's eigenprojector. The
//! resulting [`ConditionalTable`] yields the inferred variance
//! `Δ²_inf O = Σ P(O^B) Δ²(O | O^B)` and the inferred mean modulus
//! `|⟨C⟩|_inf = Σ P(O^B) |⟨C | O^B⟩|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hilbert::{
    conditional_on_span, expectation_complex, mean_and_variance, reduce_to_subsystem,
    CMatrix, DensityMatrix, LinearOperator, Observable, Party, SpaceDescriptor, State, C64,
};

/// Default number of bins for continuous (quadrature-like) outcomes.
pub const DEFAULT_CONTINUOUS_BINS: usize = 200;
/// Default half-width of the binned range, in marginal standard deviations.
pub const DEFAULT_RANGE_SIGMAS: f64 = 6.0;
pub const DEFAULT_ZERO_PROB_THRESHOLD: f64 = 1e-10;
/// Eigenvalues closer than this (relative to `max(1, |λ|)`) are one outcome.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Outcomes outside `[lo, hi]` join the first or last bin.
    ClipToEdgeBins,
    /// Outcomes outside `[lo, hi]` are discarded and their mass reported.
    Drop,
}

/// Uniform bins over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub lo: f64,
    pub hi: f64,
    pub bin_count: usize,
    pub tail_policy: TailPolicy,
    pub zero_prob_threshold: f64,
}

impl BinningSpec {
    pub fn new(lo: f64, hi: f64, bin_count: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bin range [{lo}, {hi}] is empty")));
        }
        if bin_count == 0 {
            return Err(Error::InvalidArgument("bin_count must be at least 1".into()));
        }
        Ok(Self {
            lo,
            hi,
            bin_count,
            tail_policy: TailPolicy::ClipToEdgeBins,
            zero_prob_threshold: DEFAULT_ZERO_PROB_THRESHOLD,
        })
    }

    pub fn with_tail_policy(mut self, policy: TailPolicy) -> Self {
        self.tail_policy = policy;
        self
    }

    pub fn with_zero_prob_threshold(mut self, threshold: f64) -> Self {
        self.zero_prob_threshold = threshold;
        self
    }

    /// `center ± half_width` split into `bin_count` bins.
    pub fn around(center: f64, half_width: f64, bin_count: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, bin_count)
    }

    /// One bin per lattice point `first, first + step, …, last`, each point at
    /// its bin center.
    pub fn lattice(first: f64, last: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("lattice step {step} must be positive")));
        }
        let count = ((last - first) / step).round() as usize + 1;
        Self::new(first - step / 2.0, last + step / 2.0, count)
    }

    /// The default for `observable` measured on `state`'s B side: one bin per
    /// outcome when the spectrum sits on an integer or half-integer lattice,
    /// otherwise [`DEFAULT_CONTINUOUS_BINS`] bins over the marginal mean
    /// `± DEFAULT_RANGE_SIGMAS` standard deviations.
    pub fn auto(state: &State, observable: &Observable) -> Result<Self> {
        let values = &observable.spectrum().values;
        let (min, max) = (values[0], values[values.len() - 1]);
        for step in [1.0, 0.5] {
            let on_lattice = values.iter().all(|v| {
                let k = (v - min) / step;
                (k - k.round()).abs() < 1e-9
            });
            if on_lattice {
                if max - min < step / 2.0 {
                    return Self::lattice(min, min, step);
                }
                return Self::lattice(min, max, step);
            }
        }
        let marginal: State = reduce_to_subsystem(state, Party::B)?.into();
        let (mean, var) = mean_and_variance(&marginal, observable)?;
        let half = (DEFAULT_RANGE_SIGMAS * var.sqrt()).max(1e-3);
        Self::around(mean, half, DEFAULT_CONTINUOUS_BINS)
    }

    /// Same range with twice the bins; every new bin lies inside an old one.
    pub fn refined(&self) -> Self {
        Self { bin_count: self.bin_count * 2, ..self.clone() }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bin_count as f64
    }

    /// Bin index of an outcome, or `None` if the tail policy discards it.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if value < self.lo || value > self.hi {
            return match self.tail_policy {
                TailPolicy::ClipToEdgeBins if value < self.lo => Some(0),
                TailPolicy::ClipToEdgeBins => Some(self.bin_count - 1),
                TailPolicy::Drop => None,
            };
        }
        let k = ((value - self.lo) / self.width()).floor() as usize;
        Some(k.min(self.bin_count - 1))
    }
}

/// How to bin B outcomes: per-observable defaults or a fixed spec.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Binning {
    #[default]
    Auto,
    Fixed(BinningSpec),
}

impl Binning {
    pub fn resolve(&self, state: &State, observable: &Observable) -> Result<BinningSpec> {
        match self {
            Binning::Auto => BinningSpec::auto(state, observable),
            Binning::Fixed(spec) => Ok(spec.clone()),
        }
    }
}

/// One measured B outcome group and what it implies for A.
#[derive(Clone, Debug)]
pub struct ConditionalBin {
    /// Probability-weighted mean of the B eigenvalues in the bin.
    pub outcome: f64,
    /// `P(O^B)`, renormalized over the kept bins.
    pub probability: f64,
    /// Number of B eigenvectors merged into this bin.
    pub multiplicity: usize,
    state: State,
}

impl ConditionalBin {
    /// The conditional A-state; always a density matrix.
    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn density_matrix(&self) -> &DensityMatrix {
        match &self.state {
            State::Mixed(r) => r,
            State::Pure(_) => unreachable!("conditional states are stored as density matrices"),
        }
    }

    /// `(⟨O | O^B⟩, Δ²(O | O^B))`.
    pub fn moments(&self, observable: &Observable) -> Result<(f64, f64)> {
        mean_and_variance(&self.state, observable)
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalTable {
    bins: Vec<ConditionalBin>,
    dropped_mass: f64,
    binning: BinningSpec,
    b_label: String,
    a_space: SpaceDescriptor,
}

impl ConditionalTable {
    pub fn bins(&self) -> &[ConditionalBin] {
        &self.bins
    }

    /// Probability mass discarded as empty or out-of-range bins before
    /// renormalizing.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn binning(&self) -> &BinningSpec {
        &self.binning
    }

    pub fn b_label(&self) -> &str {
        &self.b_label
    }

    pub fn a_space(&self) -> &SpaceDescriptor {
        &self.a_space
    }

    /// `Σ P(O^B) ρ_{A|O^B}`, equal to the reduced A-state up to dropped mass.
    pub fn recombined(&self) -> DensityMatrix {
        let d = self.a_space.dim();
        let mut m = CMatrix::zeros(d, d);
        for bin in &self.bins {
            m += bin.density_matrix().matrix() * C64::new(bin.probability, 0.0);
        }
        DensityMatrix::from_psd_unchecked(self.a_space.clone(), m)
    }

    /// `(P(O^B), ⟨O | O^B⟩, Δ²(O | O^B))` per bin.
    pub fn conditional_moments(&self, observable: &Observable) -> Result<Vec<(f64, f64, f64)>> {
        self.a_space.require_same(observable.space())?;
        self.bins
            .iter()
            .map(|b| b.moments(observable).map(|(m, v)| (b.probability, m, v)))
            .collect()
    }
}

/// Build the conditional table of `state` given a measurement of
/// `b_observable` (an observable on the B subsystem's local space).
pub fn conditional_table(
    state: &State,
    b_observable: &Observable,
    binning: &Binning,
) -> Result<ConditionalTable> {
    conditional_table_with(Execution::default(), state, b_observable, binning)
}

pub fn conditional_table_with(
    exec: Execution,
    state: &State,
    b_observable: &Observable,
    binning: &Binning,
) -> Result<ConditionalTable> {
    let space = state.space();
    if !space.is_bipartite() {
        return Err(Error::NotBipartite);
    }
    let b_space = space.party(Party::B)?;
    if b_observable.space() != &b_space {
        return Err(Error::WrongSubsystem { label: b_observable.label().into(), party: "B" });
    }
    let spec = binning.resolve(state, b_observable)?;
    let spectrum = b_observable.spectrum();

    // per-eigenvector outcome probabilities from the B marginal
    let rho_b = reduce_to_subsystem(state, Party::B)?;
    let v = &spectrum.vectors;
    let probs: Vec<f64> = (0..v.ncols())
        .map(|k| {
            let col = v.column(k);
            col.dotc(&(rho_b.matrix() * col)).re.max(0.0)
        })
        .collect();

    // merge degenerate eigenvalues, then place each outcome in a bin
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.bin_count];
    let mut dropped_mass = 0.0;
    let values = &spectrum.values;
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len()
            && values[end] - values[end - 1] <= DEGENERACY_TOL * values[end].abs().max(1.0)
        {
            end += 1;
        }
        let cluster_value = values[start..end].iter().sum::<f64>() / (end - start) as f64;
        match spec.bin_of(cluster_value) {
            Some(bin) => members[bin].extend(start..end),
            None => dropped_mass += probs[start..end].iter().sum::<f64>(),
        }
        start = end;
    }
    let occupied: Vec<&Vec<usize>> = members.iter().filter(|m| !m.is_empty()).collect();

    let branches = exec::map_slice(exec, &occupied, |idx| {
        let basis = CMatrix::from_fn(v.nrows(), idx.len(), |r, c| v[(r, idx[c])]);
        let unnormalized = conditional_on_span(state, &basis);
        let p = unnormalized.trace().re;
        let outcome = if p > 0.0 {
            idx.iter().map(|&k| probs[k] * values[k]).sum::<f64>() / idx.iter().map(|&k| probs[k]).sum::<f64>().max(f64::MIN_POSITIVE)
        } else {
            values[idx[0]]
        };
        (p, outcome, idx.len(), unnormalized)
    });

    let a_space = space.party(Party::A)?;
    let mut bins = Vec::with_capacity(branches.len());
    let mut kept = 0.0;
    for (p, outcome, multiplicity, unnormalized) in branches {
        if !(p >= spec.zero_prob_threshold) {
            dropped_mass += p.max(0.0);
            continue;
        }
        kept += p;
        let rho = DensityMatrix::from_psd_unchecked(a_space.clone(), unnormalized / C64::new(p, 0.0));
        bins.push(ConditionalBin { outcome, probability: p, multiplicity, state: rho.into() });
    }
    if bins.is_empty() {
        return Err(Error::AllBinsEmpty);
    }
    for bin in &mut bins {
        bin.probability /= kept;
    }
    Ok(ConditionalTable {
        bins,
        dropped_mass,
        binning: spec,
        b_label: b_observable.label().to_string(),
        a_space,
    })
}

/// `Δ²_inf O = Σ P(O^B) Δ²(O | O^B)`.
pub fn inferred_variance(table: &ConditionalTable, a_observable: &Observable) -> Result<f64> {
    Ok(table
        .conditional_moments(a_observable)?
        .iter()
        .map(|(p, _, v)| p * v)
        .sum())
}

/// `|⟨C⟩|_inf = Σ P(O^B) |⟨C | O^B⟩|`; `C` may be non-Hermitian (a commutator).
pub fn inferred_mean_modulus(table: &ConditionalTable, c: &LinearOperator) -> Result<f64> {
    table.a_space.require_same(c.space())?;
    let mut acc = 0.0;
    for bin in &table.bins {
        acc += bin.probability * expectation_complex(&bin.state, c)?.norm();
    }
    Ok(acc)
}

/// Every link of the inequality chain behind
/// `Δ²O₁ · Δ²_inf O₂ ≥ (|⟨C⟩|_inf)² / 4`, with `C = [O₁, O₂]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceChain {
    /// `Δ²O₁` on the reduced A-state.
    pub variance_1: f64,
    /// `Σ P(O^B) Δ²(O₁ | O^B)`.
    pub averaged_conditional_variance_1: f64,
    /// `Δ²_inf O₂`.
    pub inferred_variance_2: f64,
    /// `(Σ P(O^B) Δ(O₁ | O^B) Δ(O₂ | O^B))²`.
    pub cauchy_schwarz: f64,
    /// `|⟨C⟩|_inf`.
    pub commutator_modulus: f64,
}

impl InferenceChain {
    /// `Δ²O₁ · Δ²_inf O₂`.
    pub fn product(&self) -> f64 {
        self.variance_1 * self.inferred_variance_2
    }

    /// `Δ²O₁ · Δ²_inf O₂ - (|⟨C⟩|_inf)² / 4`.
    pub fn slack(&self) -> f64 {
        self.product() - self.commutator_modulus.powi(2) / 4.0
    }
}

pub fn inference_chain(
    state: &State,
    table: &ConditionalTable,
    a_obs1: &Observable,
    a_obs2: &Observable,
) -> Result<InferenceChain> {
    let reduced: State = reduce_to_subsystem(state, Party::A)?.into();
    let variance_1 = mean_and_variance(&reduced, a_obs1)?.1;
    let m1 = table.conditional_moments(a_obs1)?;
    let m2 = table.conditional_moments(a_obs2)?;
    let averaged_conditional_variance_1 = m1.iter().map(|(p, _, v)| p * v).sum();
    let inferred_variance_2 = m2.iter().map(|(p, _, v)| p * v).sum();
    let cs: f64 = m1.iter().zip(&m2).map(|((p, _, v1), (_, _, v2))| p * (v1 * v2).sqrt()).sum();
    let commutator = a_obs1.commutator(a_obs2)?;
    Ok(InferenceChain {
        variance_1,
        averaged_conditional_variance_1,
        inferred_variance_2,
        cauchy_schwarz: cs * cs,
        commutator_modulus: inferred_mean_modulus(table, &commutator)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        expectation, max_abs, number_op, quadrature_op, spin_observables, StateVector,
    };
    use crate::oracles::random_pure_state;
    use crate::states::{singlet, two_mode_squeezed};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn local(space: &SpaceDescriptor, party: Party) -> SpaceDescriptor {
        space.party(party).unwrap()
    }

    fn random_bipartite(seed: u64, a: usize, b: usize) -> State {
        let space = SpaceDescriptor::fock_bipartite(&[a], &[b]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_pure_state(&space, &mut rng).into()
    }

    #[test]
    fn binning_places_values() {
        let spec = BinningSpec::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(spec.bin_of(-1.0), Some(0));
        assert_eq!(spec.bin_of(-0.49), Some(1));
        assert_eq!(spec.bin_of(1.0), Some(3));
        assert_eq!(spec.bin_of(7.0), Some(3));
        assert_eq!(spec.clone().with_tail_policy(TailPolicy::Drop).bin_of(7.0), None);
        assert!(BinningSpec::new(1.0, 1.0, 3).is_err());
        assert!(BinningSpec::new(0.0, 1.0, 0).is_err());
        let lattice = BinningSpec::lattice(-0.5, 0.5, 1.0).unwrap();
        assert_eq!(lattice.bin_count, 2);
        assert_eq!(lattice.bin_of(-0.5), Some(0));
        assert_eq!(lattice.bin_of(0.5), Some(1));
    }

    #[test]
    fn product_state_conditioning_is_vacuous() {
        let a = random_pure_state(
            &SpaceDescriptor::fock_mode(4).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let b = random_pure_state(
            &SpaceDescriptor::fock_mode(3).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(2),
        );
        let psi: State = a.tensor(&b).unwrap().into();
        let sa = local(psi.space(), Party::A);
        let sb = local(psi.space(), Party::B);
        let pb = quadrature_op(&sb, 0, FRAC_PI_2).unwrap();
        let table = conditional_table(&psi, &pb, &Binning::Auto).unwrap();
        let rho_a = DensityMatrix::from_pure(&a);
        for bin in table.bins() {
            assert!(max_abs(&(bin.density_matrix().matrix() - rho_a.matrix())) < 1e-12);
        }
        let p = quadrature_op(&sa, 0, FRAC_PI_2).unwrap();
        let single: State = a.clone().into();
        let unconditional = mean_and_variance(&single, &p).unwrap().1;
        assert_abs_diff_eq!(inferred_variance(&table, &p).unwrap(), unconditional, epsilon = 1e-12);
        let x = quadrature_op(&sa, 0, 0.0).unwrap();
        let c = x.commutator(&p).unwrap();
        let direct = expectation_complex(&single, &c).unwrap().norm();
        assert_abs_diff_eq!(inferred_mean_modulus(&table, &c).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn tmss_number_conditioning_gives_fock_states() {
        let psi: State = two_mode_squeezed(0.8, Some(25)).unwrap().into();
        let sb = local(psi.space(), Party::B);
        let nb = number_op(&sb, 0).unwrap();
        let table = conditional_table(&psi, &nb, &Binning::Auto).unwrap();
        assert_eq!(table.bins().len(), 26);
        let c = crate::states::tmss_coefficients(0.8, 26);
        let norm: f64 = c.iter().map(|x| x * x).sum();
        for (n, bin) in table.bins().iter().enumerate() {
            assert_abs_diff_eq!(bin.outcome, n as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(bin.probability, c[n] * c[n] / norm, epsilon = 1e-12);
            assert_abs_diff_eq!(bin.density_matrix().matrix()[(n, n)].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singlet_spin_z_bins() {
        let psi: State = singlet().into();
        let sb = local(psi.space(), Party::B);
        let sa = local(psi.space(), Party::A);
        let jz_b = spin_observables(&sb).unwrap().jz;
        let table = conditional_table(&psi, &jz_b, &Binning::Auto).unwrap();
        assert_eq!(table.bins().len(), 2);
        for bin in table.bins() {
            assert_abs_diff_eq!(bin.probability, 0.5, epsilon = 1e-14);
        }
        let jz_a = spin_observables(&sa).unwrap().jz;
        assert_abs_diff_eq!(inferred_variance(&table, &jz_a).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn tmss_inferred_momentum_variance() {
        let r: f64 = 0.8;
        let psi: State = two_mode_squeezed(r, Some(40)).unwrap().into();
        let sa = local(psi.space(), Party::A);
        let sb = local(psi.space(), Party::B);
        let pb = quadrature_op(&sb, 0, FRAC_PI_2).unwrap();
        let spec = BinningSpec::around(0.0, 6.0 * (2.0 * r).cosh().sqrt(), 200).unwrap();
        let table = conditional_table(&psi, &pb, &Binning::Fixed(spec.clone())).unwrap();
        let auto = conditional_table(&psi, &pb, &Binning::Auto).unwrap();
        assert!((auto.binning().hi - spec.hi).abs() < 1e-9);
        let pa = quadrature_op(&sa, 0, FRAC_PI_2).unwrap();
        let inferred = inferred_variance(&table, &pa).unwrap();
        let expected = 1.0 / (2.0 * r).cosh();
        assert!((inferred / expected - 1.0).abs() < 0.02, "{inferred} vs {expected}");
    }

    #[test]
    fn wrong_subsystem_and_unipartite_are_rejected() {
        let psi = random_bipartite(3, 3, 4);
        let sa = local(psi.space(), Party::A);
        let xa = quadrature_op(&sa, 0, 0.0).unwrap();
        assert!(matches!(
            conditional_table(&psi, &xa, &Binning::Auto),
            Err(Error::WrongSubsystem { .. })
        ));
        let single: State = StateVector::basis(sa.clone(), 0).unwrap().into();
        assert!(matches!(
            conditional_table(&single, &xa, &Binning::Auto),
            Err(Error::NotBipartite)
        ));
    }

    #[test]
    fn out_of_range_outcomes_can_be_dropped() {
        let psi = random_bipartite(5, 3, 3);
        let sb = local(psi.space(), Party::B);
        let nb = number_op(&sb, 0).unwrap();
        let spec = BinningSpec::lattice(0.0, 1.0, 1.0).unwrap().with_tail_policy(TailPolicy::Drop);
        let table = conditional_table(&psi, &nb, &Binning::Fixed(spec)).unwrap();
        assert_eq!(table.bins().len(), 2);
        let marginal: State = reduce_to_subsystem(&psi, Party::B).unwrap().into();
        let projector_2 = {
            let mut m = CMatrix::zeros(3, 3);
            m[(2, 2)] = C64::new(1.0, 0.0);
            m
        };
        let p2 = expectation_complex(&marginal, &LinearOperator::new(sb, projector_2, "P2").unwrap())
            .unwrap()
            .re;
        assert_abs_diff_eq!(table.dropped_mass(), p2, epsilon = 1e-12);
        let total: f64 = table.bins().iter().map(|b| b.probability).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let none = BinningSpec::new(10.0, 11.0, 1).unwrap().with_tail_policy(TailPolicy::Drop);
        assert!(matches!(
            conditional_table(&psi, &nb, &Binning::Fixed(none)),
            Err(Error::AllBinsEmpty)
        ));
    }

    /// Brute force on the full four-mode space: project with `1 ⊗ Π_k`, then
    /// read off `⟨J_Z^A⟩` with the embedded operator.
    #[test]
    fn schwinger_pair_state_matches_brute_force() {
        let space = SpaceDescriptor::fock_bipartite(&[3, 3], &[3, 3]).unwrap();
        let psi = random_pure_state(&space, &mut ChaCha8Rng::seed_from_u64(17));
        let state: State = psi.clone().into();
        let sa = local(&space, Party::A);
        let sb = local(&space, Party::B);
        let jz_a = spin_observables(&sa).unwrap().jz;
        let jz_b = spin_observables(&sb).unwrap().jz;
        let table = conditional_table(&state, &jz_b, &Binning::Auto).unwrap();
        let computed = inferred_mean_modulus(&table, jz_a.operator()).unwrap();

        let jz_a_full = jz_a.embed(&space, Party::A).unwrap();
        let spectrum = jz_b.spectrum();
        let mut brute = 0.0;
        let mut start = 0;
        while start < spectrum.values.len() {
            let mut end = start;
            while end < spectrum.values.len()
                && (spectrum.values[end] - spectrum.values[start]).abs() < 1e-9
            {
                end += 1;
            }
            let cols = CMatrix::from_fn(9, end - start, |r, c| spectrum.vectors[(r, start + c)]);
            let pi_local = &cols * cols.adjoint();
            let pi_full = CMatrix::identity(9, 9).kronecker(&pi_local);
            let projected = &pi_full * psi.amplitudes();
            let p = projected.norm_squared();
            if p > 1e-12 {
                let mean = projected.dotc(&(jz_a_full.matrix() * &projected)).re / p;
                brute += p * mean.abs();
            }
            start = end;
        }
        assert_abs_diff_eq!(computed, brute, epsilon = 1e-12);
        let unconditional = expectation(&state, &jz_a_full).unwrap().abs();
        assert!(computed >= unconditional - 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn recombination_reproduces_reduced_state(seed in any::<u64>(), mixed in any::<bool>()) {
            let mut psi = random_bipartite(seed, 4, 5);
            if mixed {
                let other = random_bipartite(seed ^ 0x9e37, 4, 5);
                psi = DensityMatrix::mixture(&[
                    (0.3, psi.to_density_matrix()),
                    (0.7, other.to_density_matrix()),
                ]).unwrap().into();
            }
            let sb = local(psi.space(), Party::B);
            let xb = quadrature_op(&sb, 0, 0.4).unwrap();
            let table = conditional_table(&psi, &xb, &Binning::Auto).unwrap();
            let reduced = reduce_to_subsystem(&psi, Party::A).unwrap();
            prop_assert!(max_abs(&(table.recombined().matrix() - reduced.matrix())) < 1e-10);
            let total: f64 = table.bins().iter().map(|b| b.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }

        #[test]
        fn conditioning_never_raises_variance(seed in any::<u64>(), theta in 0.0f64..3.2) {
            let psi = random_bipartite(seed, 5, 5);
            let sa = local(psi.space(), Party::A);
            let sb = local(psi.space(), Party::B);
            let xb = quadrature_op(&sb, 0, theta).unwrap();
            let pa = quadrature_op(&sa, 0, FRAC_PI_2).unwrap();
            let reduced: State = reduce_to_subsystem(&psi, Party::A).unwrap().into();
            let unconditional = mean_and_variance(&reduced, &pa).unwrap().1;

            let coarse = BinningSpec::around(0.0, 4.0, 3).unwrap();
            let t_coarse = conditional_table(&psi, &xb, &Binning::Fixed(coarse.clone())).unwrap();
            let t_fine = conditional_table(&psi, &xb, &Binning::Fixed(coarse.refined())).unwrap();
            let v_coarse = inferred_variance(&t_coarse, &pa).unwrap();
            let v_fine = inferred_variance(&t_fine, &pa).unwrap();
            prop_assert!(v_coarse <= unconditional + 1e-10);
            prop_assert!(v_fine <= v_coarse + 1e-8);

            let xa = quadrature_op(&sa, 0, 0.0).unwrap();
            let c = xa.commutator(&pa).unwrap();
            let modulus = inferred_mean_modulus(&t_fine, &c).unwrap();
            let direct = expectation_complex(&reduced, &c).unwrap().norm();
            prop_assert!(modulus >= direct - 1e-10);
        }

        #[test]
        fn inference_chain_links_hold(seed in any::<u64>()) {
            let psi = random_bipartite(seed, 6, 6);
            let sa = local(psi.space(), Party::A);
            let sb = local(psi.space(), Party::B);
            let xa = quadrature_op(&sa, 0, 0.0).unwrap();
            let pa = quadrature_op(&sa, 0, FRAC_PI_2).unwrap();
            let pb = quadrature_op(&sb, 0, FRAC_PI_2).unwrap();
            let table = conditional_table(&psi, &pb, &Binning::Auto).unwrap();
            let chain = inference_chain(&psi, &table, &xa, &pa).unwrap();
            prop_assert!(chain.variance_1 >= chain.averaged_conditional_variance_1 - 1e-10);
            prop_assert!(chain.product() >= chain.cauchy_schwarz - 1e-10);
            prop_assert!(chain.cauchy_schwarz >= chain.commutator_modulus.powi(2) / 4.0 - 1e-10);
        }
    }

    #[test]
    fn offsetting_b_changes_nothing_but_labels() {
        let psi = random_bipartite(9, 5, 5);
        let sa = local(psi.space(), Party::A);
        let sb = local(psi.space(), Party::B);
        let pb = quadrature_op(&sb, 0, FRAC_PI_2).unwrap();
        let pa = quadrature_op(&sa, 0, FRAC_PI_2).unwrap();
        let t1 = conditional_table(&psi, &pb, &Binning::Auto).unwrap();
        let t2 = conditional_table(&psi, &pb.offset(3.25), &Binning::Auto).unwrap();
        assert_eq!(t1.bins().len(), t2.bins().len());
        assert_abs_diff_eq!(
            inferred_variance(&t1, &pa).unwrap(),
            inferred_variance(&t2, &pa).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sequential_and_parallel_tables_agree() {
        let psi: State = two_mode_squeezed(0.5, Some(20)).unwrap().into();
        let sb = local(psi.space(), Party::B);
        let sa = local(psi.space(), Party::A);
        let xb = quadrature_op(&sb, 0, 0.0).unwrap();
        let xa = quadrature_op(&sa, 0, 0.0).unwrap();
        let par = conditional_table_with(Execution::Parallel, &psi, &xb, &Binning::Auto).unwrap();
        let seq = conditional_table_with(Execution::Sequential, &psi, &xb, &Binning::Auto).unwrap();
        assert_eq!(
            inferred_variance(&par, &xa).unwrap().to_bits(),
            inferred_variance(&seq, &xa).unwrap().to_bits()
        );
    }
}
