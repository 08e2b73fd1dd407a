//! The uncertainty-relation criteria, evaluated into [`CriterionReport`]s.
//!
//! All comparisons are made at the variance level. A report's `violated` flag
//! means the stated inequality fails beyond tolerance: for the superposition
//! criteria this is evidence of a superposition larger than the reference
//! size; for the inference criteria it is evidence of an EPR paradox, i.e.
//! that no local model built from quantum states of A reproduces the data. It
//! is not a claim that macroscopic realism itself is false.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    expectation, expectation_complex, mean_and_variance, named_observable, quadrature_op,
    reduce_to_subsystem, spin_observables, Observable, Party, SpaceDescriptor, SpaceKind, State,
    StateVector,
};
use crate::inference::{
    conditional_table, inference_chain, inferred_mean_modulus, inferred_variance, Binning,
    BinningSpec, ConditionalTable,
};

/// Floor of the violation tolerance for analytic reports.
pub const ANALYTIC_TOL: f64 = 1e-9;
/// Inferred variances at or below this count as exactly zero.
const ZERO_VARIANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionId {
    CvSscopic,
    SpinSscopic,
    CvSscopicInferred,
    SpinSscopicInferred,
    Theorem1Cv,
    Theorem1Spin,
    EprProductCv,
    EprProductSpin,
    EprProductSpinUninfRhs,
    EprSumSpin,
    MrBound,
}

impl CriterionId {
    pub const ALL: [CriterionId; 11] = [
        CriterionId::CvSscopic,
        CriterionId::SpinSscopic,
        CriterionId::CvSscopicInferred,
        CriterionId::SpinSscopicInferred,
        CriterionId::Theorem1Cv,
        CriterionId::Theorem1Spin,
        CriterionId::EprProductCv,
        CriterionId::EprProductSpin,
        CriterionId::EprProductSpinUninfRhs,
        CriterionId::EprSumSpin,
        CriterionId::MrBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionId::CvSscopic => "cv_sscopic",
            CriterionId::SpinSscopic => "spin_sscopic",
            CriterionId::CvSscopicInferred => "cv_sscopic_inferred",
            CriterionId::SpinSscopicInferred => "spin_sscopic_inferred",
            CriterionId::Theorem1Cv => "theorem1_cv",
            CriterionId::Theorem1Spin => "theorem1_spin",
            CriterionId::EprProductCv => "epr_product_cv",
            CriterionId::EprProductSpin => "epr_product_spin",
            CriterionId::EprProductSpinUninfRhs => "epr_product_spin_uninf_rhs",
            CriterionId::EprSumSpin => "epr_sum_spin",
            CriterionId::MrBound => "mr_bound",
        }
    }

    /// Whether reports carry an inferred superposition size.
    pub fn has_s_min(self) -> bool {
        matches!(
            self,
            CriterionId::CvSscopic
                | CriterionId::SpinSscopic
                | CriterionId::CvSscopicInferred
                | CriterionId::SpinSscopicInferred
                | CriterionId::MrBound
        )
    }

    pub fn is_spin(self) -> bool {
        matches!(
            self,
            CriterionId::SpinSscopic
                | CriterionId::SpinSscopicInferred
                | CriterionId::Theorem1Spin
                | CriterionId::EprProductSpin
                | CriterionId::EprProductSpinUninfRhs
                | CriterionId::EprSumSpin
        )
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriterionId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown criterion `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Sampled,
}

/// Everything needed to replay a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Textual state spec, when the report came from one.
    pub state: Option<String>,
    pub cutoffs: Option<Vec<usize>>,
    /// Observable settings, `A:<obs>` and `B:<obs>`.
    pub settings: Vec<String>,
    /// Binning per conditional table.
    pub binning: Vec<BinningSpec>,
    /// Kept bins per conditional table.
    pub bins: Vec<usize>,
    /// Probability mass dropped per conditional table.
    pub dropped_mass: Vec<f64>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    /// Confidence half-width of `rhs - lhs` (sampled reports only).
    pub ci: Option<f64>,
    /// Margin `rhs - lhs` must exceed to count as a violation.
    pub tolerance: f64,
    pub flags: Vec<String>,
}

impl ReportMetadata {
    pub fn flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    fn record_table(&mut self, table: &ConditionalTable) {
        self.binning.push(table.binning().clone());
        self.bins.push(table.bins().len());
        self.dropped_mass.push(table.dropped_mass());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion_id: CriterionId,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; infinite (serialized as `null`) when only `rhs` vanishes,
    /// 1 when both do.
    #[serde(deserialize_with = "ratio_from_json")]
    pub ratio: f64,
    pub violated: bool,
    pub s_min: Option<f64>,
    pub method: Method,
    pub metadata: ReportMetadata,
}

fn ratio_from_json<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl CriterionReport {
    /// Fills in `ratio`, the tolerance `max(1e-9, 3·ci)` and `violated`.
    pub fn new(
        criterion_id: CriterionId,
        lhs: f64,
        rhs: f64,
        s_min: Option<f64>,
        method: Method,
        mut metadata: ReportMetadata,
    ) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 && rhs == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        metadata.tolerance = ANALYTIC_TOL.max(3.0 * metadata.ci.unwrap_or(0.0));
        let violated = rhs - lhs > metadata.tolerance;
        Self { criterion_id, lhs, rhs, ratio, violated, s_min, method, metadata }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.metadata.flags.iter().any(|f| f == flag)
    }
}

/// `4/S²`, the smallest `Δ²p` of a mixture of states with `x`-spread at most `S`.
pub fn mr_bound(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("superposition size must be positive, got {s}")));
    }
    Ok(4.0 / (s * s))
}

/// `j/2`, the bound used for the sum of the three inferred spin variances.
pub fn hoffmann_bound(j: f64) -> f64 {
    j / 2.0
}

fn positive_variance(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

/// `S > 2/Δp` from a `p` variance. The comparison is against the vacuum
/// level `Δ²p = 1` (`S = 2`); a violation means `s_min` beats the coherent
/// state and is flagged `nontrivial`.
pub fn cv_superposition_size(p_variance: f64) -> Result<CriterionReport> {
    cv_size_report(CriterionId::CvSscopic, p_variance, ReportMetadata::default())
}

fn cv_size_report(id: CriterionId, p_variance: f64, mut meta: ReportMetadata) -> Result<CriterionReport> {
    positive_variance(p_variance, "p variance")?;
    let s_min = 2.0 / p_variance.sqrt();
    if s_min > 2.0 {
        meta = meta.flag("nontrivial");
    }
    Ok(CriterionReport::new(id, p_variance, mr_bound(2.0)?, Some(s_min), Method::Analytic, meta))
}

/// `S > |⟨J_Z⟩|/ΔJ_Y`, compared at the reference size `S = 1`
/// (`Δ²J_Y ≥ ⟨J_Z⟩²`). A zero mean gives `s_min = 0`, flagged `vacuous_bound`.
pub fn spin_superposition_size(jy_variance: f64, jz_mean: f64) -> Result<CriterionReport> {
    positive_variance(jy_variance, "J_Y variance")?;
    spin_size_report(CriterionId::SpinSscopic, jy_variance, jz_mean, None, ReportMetadata::default())
}

fn spin_size_report(
    id: CriterionId,
    jy_variance: f64,
    jz_mean: f64,
    spectral_extent: Option<f64>,
    mut meta: ReportMetadata,
) -> Result<CriterionReport> {
    let s_min = if jy_variance <= ZERO_VARIANCE {
        // |⟨J_Z⟩|/0: no finite size; report the largest one the spectrum allows
        meta = meta.flag("exceeds_spectrum");
        spectral_extent.ok_or_else(|| {
            Error::InvalidArgument("J_Y variance is zero and no spectral extent is known".into())
        })?
    } else if jz_mean == 0.0 {
        meta = meta.flag("vacuous_bound");
        0.0
    } else {
        jz_mean.abs() / jy_variance.sqrt()
    };
    Ok(CriterionReport::new(id, jy_variance, jz_mean * jz_mean, Some(s_min), Method::Analytic, meta))
}

/// `Δ²p ≥ 4/S²` for a given size `S`: a violation means the state is not a
/// mixture of states with spread at most `S`.
pub fn mr_bound_report(s: f64, p_variance: f64) -> Result<CriterionReport> {
    positive_variance(p_variance, "p variance")?;
    let meta = ReportMetadata { flags: vec![format!("S={s}")], ..Default::default() };
    Ok(CriterionReport::new(
        CriterionId::MrBound,
        p_variance,
        mr_bound(s)?,
        Some(2.0 / p_variance.sqrt()),
        Method::Analytic,
        meta,
    ))
}

fn require_bipartite(state: &State) -> Result<()> {
    if state.space().is_bipartite() {
        Ok(())
    } else {
        Err(Error::NotBipartite)
    }
}

fn base_metadata(state: &State, a: &[&Observable], b: &[&Observable]) -> ReportMetadata {
    let mut settings: Vec<String> = a.iter().map(|o| format!("A:{}", o.label())).collect();
    settings.extend(b.iter().map(|o| format!("B:{}", o.label())));
    ReportMetadata { cutoffs: state.space().cutoffs(), settings, ..Default::default() }
}

fn reduced_a(state: &State) -> Result<State> {
    if state.space().is_bipartite() {
        Ok(reduce_to_subsystem(state, Party::A)?.into())
    } else {
        Ok(state.clone())
    }
}

/// `S > 2/Δ_inf p`, with `p` on A inferred from `b_observable`.
pub fn cv_superposition_size_inferred(
    state: &State,
    b_observable: &Observable,
    binning: &Binning,
) -> Result<CriterionReport> {
    require_bipartite(state)?;
    let p = quadrature_op(&state.space().party(Party::A)?, 0, std::f64::consts::FRAC_PI_2)?;
    let table = conditional_table(state, b_observable, binning)?;
    let mut meta = base_metadata(state, &[&p], &[b_observable]);
    meta.record_table(&table);
    let v = inferred_variance(&table, &p)?;
    if v <= ZERO_VARIANCE {
        return Err(Error::NonConvergence(format!(
            "inferred p variance {v:e} vanishes; the size bound is unbounded"
        )));
    }
    cv_size_report(CriterionId::CvSscopicInferred, v, meta)
}

/// `S > |⟨J_Z⟩|/Δ_inf J_Y`: `J_Y` on A inferred from `b_observable`, `⟨J_Z⟩`
/// from the reduced A-state. A vanishing inferred variance is reported as the
/// spectral extent of `J_X` on A, flagged `exceeds_spectrum`.
pub fn spin_superposition_size_inferred(
    state: &State,
    b_observable: &Observable,
    binning: &Binning,
) -> Result<CriterionReport> {
    require_bipartite(state)?;
    let a = spin_observables(&state.space().party(Party::A)?)?;
    let table = conditional_table(state, b_observable, binning)?;
    let mut meta = base_metadata(state, &[&a.jy, &a.jz], &[b_observable]);
    meta.record_table(&table);
    let v = inferred_variance(&table, &a.jy)?;
    let jz = expectation(&reduced_a(state)?, &a.jz)?;
    let values = &a.jx.spectrum().values;
    let extent = values[values.len() - 1] - values[0];
    spin_size_report(CriterionId::SpinSscopicInferred, v, jz, Some(extent), meta)
}

/// Spin-type observables live on a spin space or on a two-mode Schwinger space.
fn is_spin_space(space: &SpaceDescriptor) -> bool {
    space.kind() == SpaceKind::Spin || space.modes() == 2
}

/// `√(Δ²O₁ · Δ²_inf O₂) ≥ |⟨C⟩|_inf / 2` with `C = [O₁, O₂]`. Holds for every
/// quantum state; a violation signals a numerical fault.
pub fn theorem1_report(
    state: &State,
    a_obs1: &Observable,
    a_obs2: &Observable,
    b_observable: &Observable,
    binning: &Binning,
) -> Result<CriterionReport> {
    require_bipartite(state)?;
    let table = conditional_table(state, b_observable, binning)?;
    let chain = inference_chain(state, &table, a_obs1, a_obs2)?;
    let mut meta = base_metadata(state, &[a_obs1, a_obs2], &[b_observable]);
    meta.record_table(&table);
    let id = if is_spin_space(a_obs1.space()) { CriterionId::Theorem1Spin } else { CriterionId::Theorem1Cv };
    Ok(CriterionReport::new(
        id,
        chain.product().sqrt(),
        chain.commutator_modulus / 2.0,
        None,
        Method::Analytic,
        meta,
    ))
}

/// Which `⟨C⟩` enters the right-hand side of the product criterion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EprRhs {
    /// `|⟨C⟩|_inf`, the larger of the values from the two B settings.
    #[default]
    Inferred,
    /// `|⟨C⟩|` on the reduced A-state (weaker).
    Unconditional,
}

/// `Δ²_inf O₁ · Δ²_inf O₂ ≥ (|⟨C⟩|_inf)² / 4`, inferring `O₁` from
/// `b_setting1` and `O₂` from `b_setting2`.
pub fn epr_product_report(
    state: &State,
    a_obs1: &Observable,
    a_obs2: &Observable,
    b_setting1: &Observable,
    b_setting2: &Observable,
    binning: &Binning,
    rhs: EprRhs,
) -> Result<CriterionReport> {
    require_bipartite(state)?;
    let t1 = conditional_table(state, b_setting1, binning)?;
    let t2 = conditional_table(state, b_setting2, binning)?;
    let mut meta = base_metadata(state, &[a_obs1, a_obs2], &[b_setting1, b_setting2]);
    meta.record_table(&t1);
    meta.record_table(&t2);
    let lhs = inferred_variance(&t1, a_obs1)? * inferred_variance(&t2, a_obs2)?;
    let c = a_obs1.commutator(a_obs2)?;
    let modulus = match rhs {
        EprRhs::Inferred => inferred_mean_modulus(&t1, &c)?.max(inferred_mean_modulus(&t2, &c)?),
        EprRhs::Unconditional => expectation_complex(&reduced_a(state)?, &c)?.norm(),
    };
    let id = match (is_spin_space(a_obs1.space()), rhs) {
        (false, _) => CriterionId::EprProductCv,
        (true, EprRhs::Inferred) => CriterionId::EprProductSpin,
        (true, EprRhs::Unconditional) => CriterionId::EprProductSpinUninfRhs,
    };
    Ok(CriterionReport::new(id, lhs, modulus * modulus / 4.0, None, Method::Analytic, meta))
}

/// `Σ_i Δ²_inf O_i ≥ D`, inferring each `O_i` from the matching B setting.
pub fn epr_sum_report(
    state: &State,
    a_observables: &[&Observable],
    b_settings: &[&Observable],
    bound: f64,
    binning: &Binning,
) -> Result<CriterionReport> {
    require_bipartite(state)?;
    if a_observables.len() != b_settings.len() || a_observables.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need matching nonempty observable lists, got {} and {}",
            a_observables.len(),
            b_settings.len()
        )));
    }
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!("sum bound must be positive, got {bound}")));
    }
    let mut meta = base_metadata(state, a_observables, b_settings);
    let mut lhs = 0.0;
    for (a, b) in a_observables.iter().zip(b_settings) {
        let table = conditional_table(state, b, binning)?;
        meta.record_table(&table);
        lhs += inferred_variance(&table, a)?;
    }
    meta = meta.flag(format!("D={bound}"));
    Ok(CriterionReport::new(CriterionId::EprSumSpin, lhs, bound, None, Method::Analytic, meta))
}

/// Options for [`evaluate`].
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// B observables by name (`x`, `p`, `x@θ`, `n`, `jx`, `jy`, `jz`),
    /// overriding the per-criterion defaults.
    pub b_settings: Option<Vec<String>>,
    pub binning: Binning,
    /// `S` for `mr_bound`, `D` for `epr_sum_spin`.
    pub bound: Option<f64>,
}

/// Observable by name on a single-party space; `x@θ` is the quadrature at
/// angle `θ` (radians).
pub fn observable_by_name(space: &SpaceDescriptor, name: &str) -> Result<Observable> {
    match name.split_once('@') {
        Some((q, theta)) if q == "x" => {
            let theta: f64 = theta
                .parse()
                .map_err(|_| Error::Parse(format!("bad quadrature angle in `{name}`")))?;
            quadrature_op(space, 0, theta)
        }
        _ => named_observable(space, name),
    }
}

/// Pairs a single-party state with a B ground state (vacuum, or spin-up
/// `|1/2, 1/2⟩`), so inferred criteria reduce to their unconditional forms.
pub fn with_trivial_b(state: &State) -> Result<State> {
    if state.space().is_bipartite() {
        return Ok(state.clone());
    }
    let b_space = match state.space().kind() {
        SpaceKind::Fock => SpaceDescriptor::fock_mode(1)?,
        SpaceKind::Spin => SpaceDescriptor::spin(0.5)?,
    };
    let ground: State = StateVector::basis(b_space, 0)?.into();
    state.tensor(&ground)
}

/// Evaluates `id` on `state` with the default observables: `p` (and `x`) on
/// mode 0 of A for continuous-variable criteria, the spin (or Schwinger)
/// triple of A for spin criteria, and the same-named observables on B as
/// settings.
pub fn evaluate(id: CriterionId, state: &State, opts: &EvalOptions) -> Result<CriterionReport> {
    let single_party = !state.space().is_bipartite();
    let paired = with_trivial_b(state)?;
    let a_space = paired.space().party(Party::A)?;
    let b_space = paired.space().party(Party::B)?;
    let defaults: &[&str] = match id {
        CriterionId::CvSscopicInferred => &["p"],
        CriterionId::SpinSscopicInferred => &["jy"],
        CriterionId::Theorem1Cv => &["p"],
        CriterionId::Theorem1Spin => &["jy"],
        CriterionId::EprProductCv => &["x", "p"],
        CriterionId::EprProductSpin | CriterionId::EprProductSpinUninfRhs => &["jx", "jy"],
        CriterionId::EprSumSpin => &["jx", "jy", "jz"],
        CriterionId::CvSscopic | CriterionId::SpinSscopic | CriterionId::MrBound => &[],
    };
    let names: Vec<String> = match &opts.b_settings {
        Some(v) if !defaults.is_empty() => {
            if v.len() != defaults.len() {
                return Err(Error::InvalidArgument(format!(
                    "{id} takes {} B setting(s), got {}",
                    defaults.len(),
                    v.len()
                )));
            }
            v.clone()
        }
        _ => defaults.iter().map(|s| s.to_string()).collect(),
    };
    let b: Vec<Observable> =
        names.iter().map(|n| observable_by_name(&b_space, n)).collect::<Result<_>>()?;
    let mut report = match id {
        CriterionId::CvSscopic | CriterionId::MrBound => {
            let p = quadrature_op(&a_space, 0, std::f64::consts::FRAC_PI_2)?;
            let (_, v) = mean_and_variance(&reduced_a(state)?, &p)?;
            let mut r = match id {
                CriterionId::MrBound => {
                    let s = opts.bound.ok_or_else(|| {
                        Error::MissingStatistic("mr_bound needs the size S".into())
                    })?;
                    mr_bound_report(s, v)?
                }
                _ => cv_superposition_size(v)?,
            };
            r.metadata.settings = vec![format!("A:{}", p.label())];
            r
        }
        CriterionId::SpinSscopic => {
            let a = spin_observables(&a_space)?;
            let reduced = reduced_a(state)?;
            let v = mean_and_variance(&reduced, &a.jy)?.1;
            let jz = expectation(&reduced, &a.jz)?;
            let mut r = spin_superposition_size(v, jz)?;
            r.metadata.settings = vec![format!("A:{}", a.jy.label()), format!("A:{}", a.jz.label())];
            r
        }
        CriterionId::CvSscopicInferred => cv_superposition_size_inferred(&paired, &b[0], &opts.binning)?,
        CriterionId::SpinSscopicInferred => {
            spin_superposition_size_inferred(&paired, &b[0], &opts.binning)?
        }
        CriterionId::Theorem1Cv => {
            let x = quadrature_op(&a_space, 0, 0.0)?;
            let p = quadrature_op(&a_space, 0, std::f64::consts::FRAC_PI_2)?;
            theorem1_report(&paired, &x, &p, &b[0], &opts.binning)?
        }
        CriterionId::Theorem1Spin => {
            let a = spin_observables(&a_space)?;
            theorem1_report(&paired, &a.jx, &a.jy, &b[0], &opts.binning)?
        }
        CriterionId::EprProductCv => {
            let x = quadrature_op(&a_space, 0, 0.0)?;
            let p = quadrature_op(&a_space, 0, std::f64::consts::FRAC_PI_2)?;
            epr_product_report(&paired, &x, &p, &b[0], &b[1], &opts.binning, EprRhs::Inferred)?
        }
        CriterionId::EprProductSpin | CriterionId::EprProductSpinUninfRhs => {
            let a = spin_observables(&a_space)?;
            let rhs = if id == CriterionId::EprProductSpin { EprRhs::Inferred } else { EprRhs::Unconditional };
            epr_product_report(&paired, &a.jx, &a.jy, &b[0], &b[1], &opts.binning, rhs)?
        }
        CriterionId::EprSumSpin => {
            let a = spin_observables(&a_space)?;
            let bound = match opts.bound {
                Some(d) => d,
                None if a_space.kind() == SpaceKind::Spin => hoffmann_bound(a_space.spin_j(0)?),
                None => {
                    return Err(Error::MissingStatistic(
                        "epr_sum_spin on a Schwinger space needs an explicit bound D".into(),
                    ))
                }
            };
            epr_sum_report(&paired, &[&a.jx, &a.jy, &a.jz], &[&b[0], &b[1], &b[2]], bound, &opts.binning)?
        }
    };
    if report.criterion_id != id {
        return Err(Error::InvalidArgument(format!(
            "{id} does not apply to a state on {}",
            state.space()
        )));
    }
    report.metadata.cutoffs = state.space().cutoffs();
    if single_party && !defaults.is_empty() {
        report.metadata.flags.push("trivial_b".into());
    }
    Ok(report)
}
