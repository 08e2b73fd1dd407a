//! Factories for the named states: vacuum, coherent, squeezed vacuum, two-mode
//! squeezed vacuum, number states, spin-coherent states, the spin singlet, and
//! products and mixtures of these.
//!
//! Fock-space states are truncated at a cutoff `n_max`; a build fails with
//! [`Error::TruncationOverflow`] when the discarded probability mass reaches
//! [`TAIL_MASS_TOL`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    eigh, quadrature_op, CMatrix, CVector, DensityMatrix, SpaceDescriptor, State, StateVector,
    C64,
};

/// Largest probability mass a truncated Fock expansion may discard.
pub const TAIL_MASS_TOL: f64 = 1e-8;
/// Smallest default cutoff for single-mode coherent, squeezed and vacuum states.
pub const SINGLE_MODE_CUTOFF_FLOOR: usize = 30;
const MAX_AUTO_CUTOFF: usize = 4000;

/// Declarative description of a state, with a canonical `name:key=value,...`
/// text form (see [`fmt::Display`] and [`FromStr`]) and a JSON form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Vacuum {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
    },
    Coherent {
        alpha: f64,
        #[serde(default)]
        alpha_im: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
    },
    /// `Δ²x = e^{2r}`, `Δ²p = e^{-2r}`.
    Squeezed {
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
    },
    /// `Σ c_n |n⟩|n⟩` with `c_n = tanh^n r / cosh r`.
    Tmss {
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
    },
    Number {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<usize>,
    },
    /// Spin-j coherent state pointing along polar angles `(theta, phi)`.
    SpinCoherent {
        j: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Spin-1/2 singlet `(|↑↓⟩ - |↓↑⟩)/√2`.
    Singlet,
    Product {
        a: Box<StateSpec>,
        b: Box<StateSpec>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: StateSpec,
}

impl StateSpec {
    /// Builds the state; mixtures come back as density matrices, everything
    /// else as a state vector.
    pub fn build(&self) -> Result<State> {
        match self {
            StateSpec::Vacuum { cutoff } => {
                let c = cutoff.unwrap_or(SINGLE_MODE_CUTOFF_FLOOR);
                Ok(number_state(0, c)?.into())
            }
            StateSpec::Coherent { alpha, alpha_im, cutoff } => {
                Ok(coherent_state(C64::new(*alpha, *alpha_im), *cutoff)?.into())
            }
            StateSpec::Squeezed { r, cutoff } => Ok(squeezed_vacuum(*r, *cutoff)?.into()),
            StateSpec::Tmss { r, cutoff } => Ok(two_mode_squeezed(*r, *cutoff)?.into()),
            StateSpec::Number { n, cutoff } => {
                Ok(number_state(*n, cutoff.unwrap_or(SINGLE_MODE_CUTOFF_FLOOR.max(*n)))?.into())
            }
            StateSpec::SpinCoherent { j, theta, phi } => {
                Ok(spin_coherent(*j, *theta, *phi)?.into())
            }
            StateSpec::Singlet => Ok(singlet().into()),
            StateSpec::Product { a, b } => a.build()?.tensor(&b.build()?),
            StateSpec::Mixture { components } => Ok(self.build_mixture(components)?.into()),
        }
    }

    fn build_mixture(&self, components: &[MixtureComponent]) -> Result<DensityMatrix> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture has no components".into()));
        }
        let built: Vec<State> = components.iter().map(|c| c.state.build()).collect::<Result<_>>()?;
        let same_space = built.iter().all(|s| s.space() == built[0].space());
        let built = if same_space {
            built
        } else {
            // Rebuild single-mode branches at the largest cutoff any of them needs.
            let common = built
                .iter()
                .map(|s| match s.space().cutoffs() {
                    Some(c) if c.len() == 1 => Ok(c[0]),
                    _ => Err(Error::InvalidArgument(
                        "mixture branches live in different spaces".into(),
                    )),
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            let rebuilt: Vec<State> = components
                .iter()
                .map(|c| c.state.with_default_cutoff(common)?.build())
                .collect::<Result<_>>()?;
            if rebuilt.iter().any(|s| s.space() != rebuilt[0].space()) {
                return Err(Error::InvalidArgument(
                    "mixture branches have conflicting explicit cutoffs".into(),
                ));
            }
            rebuilt
        };
        let parts: Vec<(f64, DensityMatrix)> = components
            .iter()
            .zip(&built)
            .map(|(c, s)| (c.weight, s.to_density_matrix()))
            .collect();
        DensityMatrix::mixture(&parts)
    }

    /// Fills in `cutoff` on single-mode Fock variants that left it unset.
    fn with_default_cutoff(&self, c: usize) -> Result<StateSpec> {
        let mut out = self.clone();
        match &mut out {
            StateSpec::Vacuum { cutoff }
            | StateSpec::Coherent { cutoff, .. }
            | StateSpec::Squeezed { cutoff, .. }
            | StateSpec::Number { cutoff, .. } => {
                cutoff.get_or_insert(c);
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "mixture branches live in different spaces".into(),
                ))
            }
        }
        Ok(out)
    }

    /// Sets a named numeric parameter (`r`, `alpha`, `n`, `cutoff`, ...),
    /// recursing into products and mixtures. Fails when nothing has that key.
    pub fn with_param(&self, key: &str, value: f64) -> Result<StateSpec> {
        let mut out = self.clone();
        if out.set_param(key, value)? {
            Ok(out)
        } else {
            Err(Error::InvalidArgument(format!("state `{self}` has no parameter `{key}`")))
        }
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<bool> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!("`{key}` must be a nonnegative integer")))
            }
        };
        let hit = match (self, key) {
            (StateSpec::Squeezed { r, .. } | StateSpec::Tmss { r, .. }, "r") => {
                *r = value;
                true
            }
            (StateSpec::Coherent { alpha, .. }, "alpha") => {
                *alpha = value;
                true
            }
            (StateSpec::Coherent { alpha_im, .. }, "alpha_im") => {
                *alpha_im = value;
                true
            }
            (StateSpec::Number { n, .. }, "n") => {
                *n = as_count(value)?;
                true
            }
            (StateSpec::SpinCoherent { j, .. }, "j") => {
                *j = value;
                true
            }
            (StateSpec::SpinCoherent { theta, .. }, "theta") => {
                *theta = value;
                true
            }
            (StateSpec::SpinCoherent { phi, .. }, "phi") => {
                *phi = value;
                true
            }
            (
                StateSpec::Vacuum { cutoff }
                | StateSpec::Coherent { cutoff, .. }
                | StateSpec::Squeezed { cutoff, .. }
                | StateSpec::Tmss { cutoff, .. }
                | StateSpec::Number { cutoff, .. },
                "cutoff",
            ) => {
                *cutoff = Some(as_count(value)?);
                true
            }
            (StateSpec::Product { a, b }, _) => {
                let ha = a.set_param(key, value)?;
                let hb = b.set_param(key, value)?;
                ha || hb
            }
            (StateSpec::Mixture { components }, _) => {
                let mut any = false;
                for c in components.iter_mut() {
                    any |= c.state.set_param(key, value)?;
                }
                any
            }
            _ => false,
        };
        Ok(hit)
    }
}

fn check_r(r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::InvalidArgument(format!("squeezing parameter {r} is not finite")));
    }
    Ok(())
}

fn overflow(cutoff: usize, discarded: f64) -> Error {
    Error::TruncationOverflow { cutoff, discarded, tolerance: TAIL_MASS_TOL }
}

/// Evaluates `eval` at `cutoff` and at a cutoff 25% larger; fails with
/// [`Error::NonConvergence`] when the two differ by more than `tol`.
pub fn check_convergence(
    cutoff: usize,
    tol: f64,
    eval: impl Fn(usize) -> Result<f64>,
) -> Result<f64> {
    let base = eval(cutoff)?;
    let refined = eval(cutoff + cutoff.div_ceil(4))?;
    if (refined - base).abs() > tol || !base.is_finite() {
        return Err(Error::NonConvergence(format!(
            "value {base} at cutoff {cutoff} moves to {refined} when the cutoff grows by 25%"
        )));
    }
    Ok(base)
}

/// Smallest `n_max ≥ floor` for which the probabilities `mass(n)`, summed
/// beyond `n_max`, fall below [`TAIL_MASS_TOL`].
fn auto_cutoff(floor: usize, probabilities: impl Fn(usize) -> Vec<f64>) -> Result<usize> {
    let probs = probabilities(MAX_AUTO_CUTOFF);
    // walk down from the top so the tail sum never cancels
    let mut tail = 0.0;
    let mut cutoff = MAX_AUTO_CUTOFF;
    for n in (0..=MAX_AUTO_CUTOFF).rev() {
        if tail >= TAIL_MASS_TOL {
            break;
        }
        cutoff = n;
        tail += probs[n];
    }
    if cutoff >= MAX_AUTO_CUTOFF {
        return Err(overflow(MAX_AUTO_CUTOFF, probs[MAX_AUTO_CUTOFF]));
    }
    Ok(cutoff.max(floor))
}

fn finish_single_mode(amps: Vec<C64>, norm_sq_total: f64, cutoff: usize) -> Result<StateVector> {
    let kept: f64 = amps.iter().take(cutoff + 1).map(|z| z.norm_sqr()).sum();
    let discarded = (norm_sq_total - kept).max(0.0);
    if discarded >= TAIL_MASS_TOL {
        return Err(overflow(cutoff, discarded));
    }
    let space = SpaceDescriptor::fock_mode(cutoff)?;
    StateVector::normalized(space, CVector::from_iterator(cutoff + 1, amps.into_iter().take(cutoff + 1)))
}

pub fn number_state(n: usize, cutoff: usize) -> Result<StateVector> {
    if n > cutoff {
        return Err(overflow(cutoff, 1.0));
    }
    StateVector::basis(SpaceDescriptor::fock_mode(cutoff)?, n)
}

fn coherent_amplitudes(alpha: C64, len: usize) -> Vec<C64> {
    let mut amps = Vec::with_capacity(len);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..len {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        amps.push(c);
    }
    amps
}

/// `e^{-|α|²/2} Σ αⁿ/√n! |n⟩`.
pub fn coherent_state(alpha: C64, cutoff: Option<usize>) -> Result<StateVector> {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::InvalidArgument("coherent amplitude is not finite".into()));
    }
    let cutoff = match cutoff {
        Some(c) => c,
        None => auto_cutoff(SINGLE_MODE_CUTOFF_FLOOR, |len| {
            coherent_amplitudes(alpha, len + 1).iter().map(|z| z.norm_sqr()).collect()
        })?,
    };
    finish_single_mode(coherent_amplitudes(alpha, cutoff + 1), 1.0, cutoff)
}

/// Fock amplitudes of squeezed vacuum: only even photon numbers, with
/// `c_{2m} = tanh^m r · √((2m)!) / (2^m m!) / √cosh r`.
fn squeezed_amplitudes(r: f64, len: usize) -> Vec<C64> {
    let t = r.tanh();
    let mut amps = vec![C64::new(0.0, 0.0); len];
    let mut c = 1.0 / r.cosh().sqrt();
    for n in (0..len).step_by(2) {
        if n > 0 {
            c *= t * ((n as f64 - 1.0) / n as f64).sqrt();
        }
        amps[n] = C64::new(c, 0.0);
    }
    amps
}

/// Squeezed vacuum with `Δ²x = e^{2r}` and `Δ²p = e^{-2r}`; negative `r`
/// squeezes `x` instead.
pub fn squeezed_vacuum(r: f64, cutoff: Option<usize>) -> Result<StateVector> {
    check_r(r)?;
    let cutoff = match cutoff {
        Some(c) => c,
        None => auto_cutoff(SINGLE_MODE_CUTOFF_FLOOR, |len| {
            squeezed_amplitudes(r, len + 1).iter().map(|z| z.norm_sqr()).collect()
        })?,
    };
    finish_single_mode(squeezed_amplitudes(r, cutoff + 1), 1.0, cutoff)
}

/// Schmidt coefficients `c_n = tanh^n r / cosh r`, `n = 0..len`.
pub fn tmss_coefficients(r: f64, len: usize) -> Vec<f64> {
    let t = r.tanh();
    let mut c = 1.0 / r.cosh();
    (0..len)
        .map(|n| {
            if n > 0 {
                c *= t;
            }
            c
        })
        .collect()
}

/// Per-mode cutoff for which `Σ_{n > n_max} c_n² < TAIL_MASS_TOL`.
pub fn tmss_default_cutoff(r: f64) -> Result<usize> {
    check_r(r)?;
    // the tail beyond n_max is tanh^{2(n_max+1)} r
    let t2 = r.tanh().powi(2);
    if t2 == 0.0 {
        return Ok(1);
    }
    let n = (TAIL_MASS_TOL.ln() / t2.ln()).floor() as usize;
    if n > MAX_AUTO_CUTOFF {
        return Err(overflow(MAX_AUTO_CUTOFF, t2.powi(MAX_AUTO_CUTOFF as i32 + 1)));
    }
    Ok(n.max(1))
}

/// Two-mode squeezed vacuum `Σ_n c_n |n⟩_A |n⟩_B` on a bipartite Fock space.
pub fn two_mode_squeezed(r: f64, cutoff: Option<usize>) -> Result<StateVector> {
    let cutoff = match cutoff {
        Some(c) => c,
        None => tmss_default_cutoff(r)?,
    };
    check_r(r)?;
    let discarded = r.tanh().powi(2).powi(cutoff as i32 + 1);
    if discarded >= TAIL_MASS_TOL {
        return Err(overflow(cutoff, discarded));
    }
    let d = cutoff + 1;
    let space = SpaceDescriptor::fock_bipartite(&[d], &[d])?;
    let mut amps = CVector::zeros(d * d);
    for (n, c) in tmss_coefficients(r, d).into_iter().enumerate() {
        amps[n * d + n] = C64::new(c, 0.0);
    }
    StateVector::normalized(space, amps)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Spin-j coherent state along `(θ, φ)`; `θ = 0` is `|j, j⟩`.
pub fn spin_coherent(j: f64, theta: f64, phi: f64) -> Result<StateVector> {
    let space = SpaceDescriptor::spin(j)?;
    let d = space.dim();
    let two_j = d - 1;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    // index k holds m = j - k, i.e. j + m = 2j - k
    let amps = CVector::from_fn(d, |k, _| {
        let up = two_j - k;
        let mag = binomial(two_j, up).sqrt() * c.powi(up as i32) * s.powi(k as i32);
        C64::from_polar(mag, k as f64 * phi)
    });
    StateVector::normalized(space, amps)
}

pub fn singlet() -> StateVector {
    let space = SpaceDescriptor::spin_pair(0.5, 0.5).expect("spin-1/2 pair");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let amps = CVector::from_vec(vec![z, C64::new(s, 0.0), C64::new(-s, 0.0), z]);
    StateVector::new(space, amps).expect("normalized singlet")
}

/// `D(α) S(r) |0⟩` for real `α`, so that `⟨x⟩ = 2α`.
pub fn displaced_squeezed(alpha: f64, r: f64, cutoff: usize) -> Result<StateVector> {
    check_r(r)?;
    let pad = 60 + (4.0 * alpha * alpha) as usize;
    let big = cutoff + 1 + pad;
    let space = SpaceDescriptor::fock_mode(big - 1)?;
    let vac_sq = CVector::from_vec(squeezed_amplitudes(r, big));
    // D(α) = exp(α(a† - a)) = exp(-iα p)
    let p = quadrature_op(&space, 0, std::f64::consts::FRAC_PI_2)?;
    let (values, vectors) = eigh(p.matrix());
    let phases = CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|l| C64::from_polar(1.0, -alpha * l)),
    ));
    let displaced = &vectors * (phases * (vectors.adjoint() * vac_sq));
    let total = displaced.norm_squared();
    finish_single_mode(displaced.iter().copied().collect(), total, cutoff)
}

/// Mixture of displaced, `x`-localized states whose individual 4-sigma spread
/// in `x` equals `s`: each component has `Δx = s/4`, component means are drawn
/// uniformly from `[-s, s]` (zero when `count == 1`), weights uniformly from
/// `[0.5, 1.5]` then normalized.
pub fn sscopic_mixture_fixture(s: f64, count: usize, seed: u64) -> Result<DensityMatrix> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread S must be positive, got {s}")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("fixture needs at least one component".into()));
    }
    let r = (s / 4.0).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = if count == 1 {
        vec![0.0]
    } else {
        (0..count).map(|_| rng.random_range(-s..=s) / 2.0).collect()
    };
    let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();

    let mut cutoff = squeezed_vacuum(r, None)?.space().dim() - 1;
    let a_max = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    cutoff += (4.0 * a_max * a_max + 12.0 * a_max).ceil() as usize;
    let components = loop {
        let built: Result<Vec<StateVector>> =
            alphas.iter().map(|&a| displaced_squeezed(a, r, cutoff)).collect();
        match built {
            Ok(v) => break v,
            Err(Error::TruncationOverflow { .. }) if cutoff < 1000 => cutoff += cutoff / 2,
            Err(e) => return Err(e),
        }
    };
    let mut parts: Vec<(f64, DensityMatrix)> = components
        .iter()
        .zip(&raw)
        .map(|(psi, w)| (w / total, DensityMatrix::from_pure(psi)))
        .collect();
    // absorb the normalization rounding into the last weight
    let sum_but_last: f64 = parts[..count - 1].iter().map(|(w, _)| w).sum();
    parts[count - 1].0 = 1.0 - sum_but_last;
    DensityMatrix::mixture(&parts)
}

fn fmt_opt_cutoff(f: &mut fmt::Formatter<'_>, cutoff: &Option<usize>, first: bool) -> fmt::Result {
    if let Some(c) = cutoff {
        write!(f, "{}cutoff={c}", if first { "" } else { "," })?;
    }
    Ok(())
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Vacuum { cutoff } => {
                write!(f, "vacuum")?;
                if cutoff.is_some() {
                    write!(f, ":")?;
                }
                fmt_opt_cutoff(f, cutoff, true)
            }
            StateSpec::Coherent { alpha, alpha_im, cutoff } => {
                write!(f, "coherent:alpha={alpha}")?;
                if *alpha_im != 0.0 {
                    write!(f, ",alpha_im={alpha_im}")?;
                }
                fmt_opt_cutoff(f, cutoff, false)
            }
            StateSpec::Squeezed { r, cutoff } => {
                write!(f, "squeezed:r={r}")?;
                fmt_opt_cutoff(f, cutoff, false)
            }
            StateSpec::Tmss { r, cutoff } => {
                write!(f, "tmss:r={r}")?;
                fmt_opt_cutoff(f, cutoff, false)
            }
            StateSpec::Number { n, cutoff } => {
                write!(f, "number:n={n}")?;
                fmt_opt_cutoff(f, cutoff, false)
            }
            StateSpec::SpinCoherent { j, theta, phi } => {
                write!(f, "spin_coherent:j={j},theta={theta},phi={phi}")
            }
            StateSpec::Singlet => write!(f, "singlet"),
            StateSpec::Product { a, b } => write!(f, "product:{a}|{b}"),
            StateSpec::Mixture { components } => {
                write!(f, "mixture:")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{}@{}", c.weight, c.state)?;
                }
                Ok(())
            }
        }
    }
}

struct Params<'a> {
    name: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(name: &'a str, body: &'a str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("`{item}` is not key=value")))?;
            pairs.push((k.trim(), v.trim()));
        }
        Ok(Self { name, pairs })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(Error::Parse(format!("`{}` has no parameter `{k}`", self.name)));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.pairs.iter().rev().find(|(k, _)| *k == key) {
            None => Ok(None),
            Some((_, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Parse(format!("`{}` needs `{key}=...`", self.name)))
    }
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "product" => {
                let (a, b) = body
                    .split_once('|')
                    .ok_or_else(|| Error::Parse("product needs `A|B`".into()))?;
                return Ok(StateSpec::Product { a: Box::new(a.parse()?), b: Box::new(b.parse()?) });
            }
            "mixture" => {
                let components = body
                    .split(';')
                    .map(|part| {
                        let (w, spec) = part
                            .split_once('@')
                            .ok_or_else(|| Error::Parse(format!("`{part}` is not weight@state")))?;
                        let weight = w
                            .trim()
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad weight `{w}`")))?;
                        Ok(MixtureComponent { weight, state: spec.parse()? })
                    })
                    .collect::<Result<_>>()?;
                return Ok(StateSpec::Mixture { components });
            }
            _ => {}
        }
        let p = Params::parse(name, body)?;
        let spec = match name {
            "vacuum" => {
                p.check_keys(&["cutoff"])?;
                StateSpec::Vacuum { cutoff: p.get("cutoff")? }
            }
            "coherent" => {
                p.check_keys(&["alpha", "alpha_im", "cutoff"])?;
                StateSpec::Coherent {
                    alpha: p.require("alpha")?,
                    alpha_im: p.get("alpha_im")?.unwrap_or(0.0),
                    cutoff: p.get("cutoff")?,
                }
            }
            "squeezed" => {
                p.check_keys(&["r", "cutoff"])?;
                StateSpec::Squeezed { r: p.require("r")?, cutoff: p.get("cutoff")? }
            }
            "tmss" => {
                p.check_keys(&["r", "cutoff"])?;
                StateSpec::Tmss { r: p.require("r")?, cutoff: p.get("cutoff")? }
            }
            "number" => {
                p.check_keys(&["n", "cutoff"])?;
                StateSpec::Number { n: p.require("n")?, cutoff: p.get("cutoff")? }
            }
            "spin_coherent" => {
                p.check_keys(&["j", "theta", "phi"])?;
                StateSpec::SpinCoherent {
                    j: p.require("j")?,
                    theta: p.get("theta")?.unwrap_or(0.0),
                    phi: p.get("phi")?.unwrap_or(0.0),
                }
            }
            "singlet" => {
                p.check_keys(&[])?;
                StateSpec::Singlet
            }
            other => return Err(Error::Parse(format!("unknown state `{other}`"))),
        };
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        mean_and_variance, quadrature_op, reduce_to_subsystem, spin_ladder_ops, variance, Party,
    };
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn xp_variances(state: &State) -> (f64, f64) {
        let space = state.space().party(Party::A).unwrap();
        let rho: State = reduce_to_subsystem(state, Party::A).unwrap().into();
        let x = quadrature_op(&space, 0, 0.0).unwrap();
        let p = quadrature_op(&space, 0, FRAC_PI_2).unwrap();
        (variance(&rho, &x).unwrap(), variance(&rho, &p).unwrap())
    }

    #[test]
    fn convergence_check_flags_unstable_cutoffs() {
        let vx = |c: usize| -> Result<f64> {
            let st: State = squeezed_vacuum(1.0, Some(c))?.into();
            Ok(xp_variances(&st).0)
        };
        assert!(check_convergence(90, 1e-6, vx).is_ok());
        let default = squeezed_vacuum(1.0, None).unwrap().space().dim() - 1;
        assert!(matches!(check_convergence(default, 1e-9, vx), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn zero_squeezing_is_vacuum() {
        let sq = squeezed_vacuum(0.0, Some(10)).unwrap();
        assert_abs_diff_eq!(sq.amplitudes()[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.amplitudes().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn squeezed_vacuum_is_minimum_uncertainty() {
        for (r, cutoff) in [(0.2, 30), (0.5, 60), (1.0, 90), (-0.4, 40)] {
            let st: State = squeezed_vacuum(r, Some(cutoff)).unwrap().into();
            let (vx, vp) = xp_variances(&st);
            assert_abs_diff_eq!(vx, (2.0 * r).exp(), epsilon = 1e-6);
            assert_abs_diff_eq!(vp, (-2.0 * r).exp(), epsilon = 1e-6);
            assert_abs_diff_eq!(vx * vp, 1.0, epsilon = 1e-6);
        }
        // odd photon numbers never appear
        let sq = squeezed_vacuum(0.7, Some(40)).unwrap();
        assert!(sq.amplitudes().iter().skip(1).step_by(2).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn default_cutoffs_respect_floor_and_tail() {
        let sq = squeezed_vacuum(0.1, None).unwrap();
        assert_eq!(sq.space().dim(), SINGLE_MODE_CUTOFF_FLOOR + 1);
        let big = squeezed_vacuum(1.5, None).unwrap();
        assert!(big.space().dim() > SINGLE_MODE_CUTOFF_FLOOR + 1);
        assert!(matches!(
            squeezed_vacuum(1.5, Some(20)),
            Err(Error::TruncationOverflow { .. })
        ));
        assert!(matches!(number_state(5, 3), Err(Error::TruncationOverflow { .. })));
    }

    #[test]
    fn tmss_schmidt_coefficients() {
        let c = tmss_coefficients(0.8, 3);
        assert_abs_diff_eq!(c[0], 1.0 / 0.8f64.cosh(), epsilon = 1e-15);
        assert_abs_diff_eq!(c[0], 0.7477, epsilon = 1e-4);
        assert_abs_diff_eq!(c[2], 0.8f64.tanh().powi(2) / 0.8f64.cosh(), epsilon = 1e-15);

        let psi: State = two_mode_squeezed(0.8, Some(40)).unwrap().into();
        let rho = reduce_to_subsystem(&psi, Party::A).unwrap();
        let c = tmss_coefficients(0.8, 41);
        let mut diag_sum = 0.0;
        for n in 0..41 {
            assert_abs_diff_eq!(rho.matrix()[(n, n)].re, c[n] * c[n], epsilon = 1e-12);
            diag_sum += rho.matrix()[(n, n)].re;
            for m in 0..41 {
                if m != n {
                    assert!(rho.matrix()[(n, m)].norm() < 1e-15);
                }
            }
        }
        assert_abs_diff_eq!(diag_sum, 1.0, epsilon = 1e-8);
        let (vx, _) = xp_variances(&psi);
        assert_abs_diff_eq!(vx, 1.6f64.cosh(), epsilon = 1e-6);
    }

    #[test]
    fn tmss_default_cutoff_matches_tail_rule() {
        let n = tmss_default_cutoff(0.8).unwrap();
        let t2 = 0.8f64.tanh().powi(2);
        assert!(t2.powi(n as i32 + 1) < TAIL_MASS_TOL);
        assert!(t2.powi(n as i32) >= TAIL_MASS_TOL);
        assert_eq!(tmss_default_cutoff(0.0).unwrap(), 1);
    }

    #[test]
    fn coherent_state_has_vacuum_noise() {
        let st: State = coherent_state(C64::new(1.0, 0.5), Some(40)).unwrap().into();
        let (vx, vp) = xp_variances(&st);
        assert_abs_diff_eq!(vx, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(vp, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn spin_coherent_along_z_is_highest_weight() {
        let psi: State = spin_coherent(10.0, 0.0, 0.0).unwrap().into();
        let s = spin_ladder_ops(10.0).unwrap();
        let (jz, _) = mean_and_variance(&psi, &s.jz).unwrap();
        assert_abs_diff_eq!(jz, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(variance(&psi, &s.jy).unwrap(), 5.0, epsilon = 1e-12);
        // along x
        let psi: State = spin_coherent(2.0, FRAC_PI_2, 0.0).unwrap().into();
        let s = spin_ladder_ops(2.0).unwrap();
        assert_abs_diff_eq!(mean_and_variance(&psi, &s.jx).unwrap().0, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn displaced_squeezed_moments() {
        let psi: State = displaced_squeezed(1.5, -0.5, 80).unwrap().into();
        let space = psi.space().clone();
        let x = quadrature_op(&space, 0, 0.0).unwrap();
        let p = quadrature_op(&space, 0, FRAC_PI_2).unwrap();
        let (mx, vx) = mean_and_variance(&psi, &x).unwrap();
        let (mp, vp) = mean_and_variance(&psi, &p).unwrap();
        assert_abs_diff_eq!(mx, 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(mp, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(vx, (-1.0f64).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(vp, 1.0f64.exp(), epsilon = 1e-7);
    }

    #[test]
    fn fixture_respects_mixture_bound() {
        for s in [1.5, 3.0, 6.0] {
            let rho: State = sscopic_mixture_fixture(s, 4, 11).unwrap().into();
            let space = rho.space().clone();
            let p = quadrature_op(&space, 0, FRAC_PI_2).unwrap();
            let vp = variance(&rho, &p).unwrap();
            assert!(vp >= 4.0 / (s * s), "S={s}: {vp}");
            // looser for every larger S
            for bigger in [s * 1.5, s * 3.0] {
                assert!(vp >= 4.0 / (bigger * bigger));
            }
        }
    }

    #[test]
    fn fixture_single_component_is_centered() {
        let rho: State = sscopic_mixture_fixture(2.0, 1, 3).unwrap().into();
        let space = rho.space().clone();
        let x = quadrature_op(&space, 0, 0.0).unwrap();
        let (mx, vx) = mean_and_variance(&rho, &x).unwrap();
        assert_abs_diff_eq!(mx, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(4.0 * vx.sqrt(), 2.0, epsilon = 1e-6);
        let purity = match &rho {
            State::Mixed(r) => r.purity(),
            State::Pure(_) => 1.0,
        };
        assert_abs_diff_eq!(purity, 1.0, epsilon = 1e-10);
        assert!(sscopic_mixture_fixture(0.0, 1, 3).is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let cases = [
            "vacuum",
            "vacuum:cutoff=12",
            "coherent:alpha=1,alpha_im=-0.5,cutoff=40",
            "squeezed:r=0.5",
            "tmss:r=0.8,cutoff=40",
            "number:n=3",
            "spin_coherent:j=2.5,theta=0.3,phi=1",
            "singlet",
            "product:squeezed:r=0.1|vacuum",
            "mixture:0.25@number:n=1;0.75@vacuum",
        ];
        for text in cases {
            let spec: StateSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
            let json = serde_json::to_string(&spec).unwrap();
            let back: StateSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
        }
        assert!("tmss:q=1".parse::<StateSpec>().is_err());
        assert!("bogus".parse::<StateSpec>().is_err());
        assert!("tmss".parse::<StateSpec>().is_err());
    }

    #[test]
    fn mixtures_unify_cutoffs_and_check_weights() {
        let spec: StateSpec = "mixture:0.5@vacuum;0.5@squeezed:r=1.2".parse().unwrap();
        let st = spec.build().unwrap();
        let sq_dim = squeezed_vacuum(1.2, None).unwrap().space().dim();
        assert_eq!(st.space().dim(), sq_dim);
        let bad: StateSpec = "mixture:0.5@vacuum;0.6@vacuum".parse().unwrap();
        assert!(bad.build().is_err());
        let conflict: StateSpec =
            "mixture:0.5@vacuum:cutoff=5;0.5@vacuum:cutoff=6".parse().unwrap();
        assert!(conflict.build().is_err());
    }

    #[test]
    fn with_param_sets_nested_keys() {
        let spec: StateSpec = "tmss:r=0.8,cutoff=40".parse().unwrap();
        assert_eq!(spec.with_param("r", 0.2).unwrap().to_string(), "tmss:r=0.2,cutoff=40");
        assert!(spec.with_param("alpha", 1.0).is_err());
        let prod: StateSpec = "product:squeezed:r=0.1|squeezed:r=0.3".parse().unwrap();
        assert_eq!(
            prod.with_param("r", 0.5).unwrap().to_string(),
            "product:squeezed:r=0.5|squeezed:r=0.5"
        );
    }
}
