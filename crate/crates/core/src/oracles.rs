//! Independent verifiers for the bounds the criteria rely on: closed-form
//! Gaussian moments, a grid minimization of `Δ²p` over compactly supported
//! wavefunctions, a multistart optimizer for the spin window bound, and
//! randomized sweeps over the inference inequality.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hilbert::{
    expectation_complex, mean_and_variance, quadrature_op, reduce_to_subsystem, spin_ladder_ops,
    spin_observables, CMatrix, CVector, Observable, Party, SpaceDescriptor, State, StateVector, C64,
};
use crate::inference::{conditional_table, inference_chain, Binning};

/// Relative change allowed when the grid is doubled.
pub const GRID_REFINEMENT_TOL: f64 = 5e-3;
pub const DEFAULT_GRID_POINTS: usize = 512;
pub const SPIN_RESTARTS: usize = 50;
/// Restarts that must land this close to the best value.
pub const RESTART_SPREAD_TOL: f64 = 1e-4;
const MIN_AGREEING_RESTARTS: usize = 3;
/// Fock dimension per mode for random continuous-variable states.
pub const RANDOM_FOCK_DIM: usize = 6;
/// Largest spin for random spin states.
pub const RANDOM_MAX_J: f64 = 3.0;

/// `(Δ²x, Δ²_inf p)` of the two-mode squeezed vacuum from Gaussian conditioning:
/// `cosh 2r` and `1/cosh 2r`.
pub fn gaussian_tmss_moments(r: f64) -> (f64, f64) {
    let c = (2.0 * r).cosh();
    let var_x = c;
    // Var(p_A | p_B) = Var(p_A) - Cov(p_A, p_B)² / Var(p_B) with Cov = -sinh 2r
    let cov = -(2.0 * r).sinh();
    let inferred = c - cov * cov / c;
    (var_x, inferred)
}

/// Complex-Gaussian amplitudes, normalized.
pub fn random_pure_state<R: Rng + ?Sized>(space: &SpaceDescriptor, rng: &mut R) -> StateVector {
    let d = space.dim();
    let amps = CVector::from_fn(d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    StateVector::normalized(space.clone(), amps).expect("a Gaussian draw is nonzero")
}

/// A wavefunction sampled on the uniform periodic grid `x_i = -L + i h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWavefunction {
    pub half_range: f64,
    pub spacing: f64,
    pub points: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub support: Vec<bool>,
}

impl GridWavefunction {
    /// `Σ |ψ_i|² h`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.spacing
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMinimum {
    /// Minimum of `Δ²p` on the refined grid.
    pub value: f64,
    /// The same minimum on the requested grid.
    pub coarse_value: f64,
    pub grid_points: usize,
    pub wavefunction: GridWavefunction,
}

/// Minimum of `Δ²p` over normalized wavefunctions vanishing outside
/// `|x| ≤ S/2`, with `p = -2i d/dx` differentiated spectrally on the periodic
/// grid of `n` points over `[-L, L)`.
///
/// The restricted quadratic form is minimized exactly (smallest eigenvalue of
/// the masked spectral `p²` matrix); a real minimizer has `⟨p⟩ = 0`, so this is
/// also the minimum variance. The computation is repeated on a `2n` grid and
/// fails with [`Error::NonConvergence`] if the two differ by more than
/// [`GRID_REFINEMENT_TOL`].
pub fn min_p_variance_on_support(s: f64, half_range: f64, n: usize) -> Result<SupportMinimum> {
    if !(s > 0.0) || !(half_range > 0.0) || s > 2.0 * half_range {
        return Err(Error::InvalidArgument(format!(
            "support width {s} must be positive and fit in [-{half_range}, {half_range}]"
        )));
    }
    if n < DEFAULT_GRID_POINTS {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least {DEFAULT_GRID_POINTS} points, got {n}"
        )));
    }
    let coarse = masked_ground_state(s, half_range, n)?;
    let fine = masked_ground_state(s, half_range, 2 * n)?;
    let change = (fine.0 - coarse.0).abs() / fine.0;
    if change > GRID_REFINEMENT_TOL {
        return Err(Error::NonConvergence(format!(
            "support minimum moved by {:.3}% from {n} to {} grid points ({} -> {})",
            100.0 * change,
            2 * n,
            coarse.0,
            fine.0
        )));
    }
    Ok(SupportMinimum { value: fine.0, coarse_value: coarse.0, grid_points: 2 * n, wavefunction: fine.1 })
}

fn masked_ground_state(s: f64, half_range: f64, n: usize) -> Result<(f64, GridWavefunction)> {
    let h = 2.0 * half_range / n as f64;
    let points: Vec<f64> = (0..n).map(|i| -half_range + i as f64 * h).collect();
    // a continuous wavefunction vanishes on the window edges, so edge points are excluded
    let support: Vec<bool> = points.iter().map(|x| x.abs() < s / 2.0 - 1e-9 * h).collect();
    let inside: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
    if inside.len() < 2 {
        return Err(Error::NonConvergence(format!(
            "support of width {s} holds {} grid points",
            inside.len()
        )));
    }
    // p² = -4 d²/dx²; its spectral matrix is Toeplitz with symbol
    // t(d) = (4/n) Σ_m k_m² cos(k_m d h) over the FFT wavenumbers k_m
    let wavenumbers: Vec<f64> = (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            std::f64::consts::PI * signed / half_range
        })
        .collect();
    let symbol: Vec<f64> = (0..n)
        .map(|d| {
            wavenumbers.iter().map(|k| k * k * (k * d as f64 * h).cos()).sum::<f64>() * 4.0 / n as f64
        })
        .collect();
    let m = inside.len();
    let matrix = DMatrix::from_fn(m, m, |a, b| symbol[inside[a].abs_diff(inside[b])]);
    let eig = SymmetricEigen::new(matrix);
    let (k, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty support");
    let v = eig.eigenvectors.column(k);
    let scale = 1.0 / h.sqrt() * if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let mut amplitudes = vec![C64::new(0.0, 0.0); n];
    for (a, &i) in inside.iter().enumerate() {
        amplitudes[i] = C64::new(v[a] * scale, 0.0);
    }
    Ok((value, GridWavefunction { half_range, spacing: h, points, amplitudes, support }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinWindowMinimum {
    /// Best `S·ΔJ_Y - |⟨J_Z⟩|` found.
    pub value: f64,
    /// Index (ascending `J_X` eigenvalue order) of the window's first eigenvector.
    pub window_start: usize,
    pub restarts: usize,
    /// Restarts within [`RESTART_SPREAD_TOL`] of the best.
    pub agreeing: usize,
    pub spread: f64,
}

/// Minimum of `S·ΔJ_Y - |⟨J_Z⟩|` over spin-`j` pure states supported on
/// `S + 1` adjacent `J_X` eigenvectors, over every window position.
pub fn min_spin_ratio_on_window(j: f64, s: usize, seed: u64) -> Result<SpinWindowMinimum> {
    min_spin_ratio_on_window_with(Execution::default(), j, s, seed)
}

pub fn min_spin_ratio_on_window_with(
    exec: Execution,
    j: f64,
    s: usize,
    seed: u64,
) -> Result<SpinWindowMinimum> {
    let ops = spin_ladder_ops(j)?;
    let d = ops.jx.space().dim();
    if s + 1 > d {
        return Err(Error::InvalidArgument(format!("window extent {s} exceeds 2j = {}", d - 1)));
    }
    let v = &ops.jx.spectrum().vectors;
    let in_x = |m: &CMatrix| v.adjoint() * m * v;
    let jy = in_x(ops.jy.matrix());
    let jy2 = in_x(&(ops.jy.matrix() * ops.jy.matrix()));
    let jz = in_x(ops.jz.matrix());

    let windows = d - s;
    let runs = exec::map_range(exec, windows * SPIN_RESTARTS, |run| {
        let start = run / SPIN_RESTARTS;
        let block = |m: &CMatrix| m.view((start, start), (s + 1, s + 1)).into_owned();
        let problem = WindowProblem { s: s as f64, y: block(&jy), y2: block(&jy2), z: block(&jz) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let psi0 = CVector::from_fn(s + 1, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        (start, problem.minimize(psi0.normalize()))
    });

    let (window_start, best) = runs
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one restart");
    let agreeing = runs.iter().filter(|r| r.1 - best <= RESTART_SPREAD_TOL).count();
    let worst = runs.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    if agreeing < MIN_AGREEING_RESTARTS {
        return Err(Error::NonConvergence(format!(
            "only {agreeing} of {} restarts reached within {RESTART_SPREAD_TOL:e} of the best value {best}",
            runs.len()
        )));
    }
    Ok(SpinWindowMinimum { value: best, window_start, restarts: runs.len(), agreeing, spread: worst - best })
}

struct WindowProblem {
    s: f64,
    y: CMatrix,
    y2: CMatrix,
    z: CMatrix,
}

impl WindowProblem {
    fn moments(&self, psi: &CVector) -> (f64, f64, f64) {
        let e = |m: &CMatrix| psi.dotc(&(m * psi)).re;
        (e(&self.y), e(&self.y2), e(&self.z))
    }

    fn value(&self, psi: &CVector) -> f64 {
        let (y, y2, z) = self.moments(psi);
        self.s * (y2 - y * y).max(0.0).sqrt() - z.abs()
    }

    /// Riemannian steepest descent on the unit sphere with Armijo backtracking.
    fn minimize(&self, mut psi: CVector) -> f64 {
        let mut f = self.value(&psi);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let (y, y2, z) = self.moments(&psi);
            let var = (y2 - y * y).max(1e-300);
            let centered = |m: &CMatrix, mean: f64| m * &psi - &psi * C64::new(mean, 0.0);
            let g_var = centered(&self.y2, y2) * C64::new(2.0, 0.0)
                - centered(&self.y, y) * C64::new(4.0 * y, 0.0);
            let grad = g_var * C64::new(self.s / (2.0 * var.sqrt()), 0.0)
                - centered(&self.z, z) * C64::new(2.0 * z.signum(), 0.0);
            let g2 = grad.norm_squared();
            if g2 < 1e-24 {
                break;
            }
            let mut accepted = false;
            while step > 1e-16 {
                let trial = (&psi - &grad * C64::new(step, 0.0)).normalize();
                let ft = self.value(&trial);
                if ft <= f - 1e-4 * step * g2 {
                    psi = trial;
                    f = ft;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        f
    }
}

/// Inequality checked by [`random_state_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCheck {
    /// `Δ²x · Δ²_inf p - (|⟨[x,p]⟩|_inf)²/4` with a random B quadrature.
    Theorem1Cv,
    /// `Δ²J_X · Δ²_inf J_Y - (|⟨[J_X,J_Y]⟩|_inf)²/4` with a random B spin direction.
    Theorem1Spin,
    /// `Δ²x · Δ²p - |⟨[x,p]⟩|²/4` on the reduced A-state.
    Robertson,
}

impl SweepCheck {
    pub fn name(self) -> &'static str {
        match self {
            SweepCheck::Theorem1Cv => "theorem1_cv",
            SweepCheck::Theorem1Spin => "theorem1_spin",
            SweepCheck::Robertson => "robertson",
        }
    }
}

impl std::str::FromStr for SweepCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1_cv" => Ok(SweepCheck::Theorem1Cv),
            "theorem1_spin" => Ok(SweepCheck::Theorem1Spin),
            "robertson" => Ok(SweepCheck::Robertson),
            other => Err(Error::Parse(format!("unknown sweep check `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub check: SweepCheck,
    pub n: usize,
    pub seed: u64,
    pub worst_slack: f64,
    pub worst_index: usize,
}

/// Slack of the Robertson relation for `(o1, o2)` on the reduced A-state, or
/// of its inferred form with `b_observable` measured at B.
pub fn inference_slack(
    state: &State,
    o1: &Observable,
    o2: &Observable,
    b_observable: Option<&Observable>,
) -> Result<f64> {
    match b_observable {
        Some(b) => {
            let table = conditional_table(state, b, &Binning::Auto)?;
            Ok(inference_chain(state, &table, o1, o2)?.slack())
        }
        None => {
            let reduced: State = if state.space().is_bipartite() {
                reduce_to_subsystem(state, Party::A)?.into()
            } else {
                state.clone()
            };
            let v1 = mean_and_variance(&reduced, o1)?.1;
            let v2 = mean_and_variance(&reduced, o2)?.1;
            let c = expectation_complex(&reduced, &o1.commutator(o2)?)?.norm();
            Ok(v1 * v2 - c * c / 4.0)
        }
    }
}

/// Draws `n` random pure bipartite states (6×6 Fock, or spins with
/// `j ≤ 3`), evaluates `check` on each, and reports the most negative slack.
pub fn random_state_sweep(n: usize, seed: u64, check: SweepCheck) -> Result<SweepResult> {
    random_state_sweep_with(Execution::default(), n, seed, check)
}

pub fn random_state_sweep_with(
    exec: Execution,
    n: usize,
    seed: u64,
    check: SweepCheck,
) -> Result<SweepResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one state".into()));
    }
    let slacks = exec::map_range(exec, n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        random_draw_slack(check, &mut rng)
    });
    let mut worst = (0, f64::INFINITY);
    for (i, s) in slacks.into_iter().enumerate() {
        let s = s?;
        if s < worst.1 {
            worst = (i, s);
        }
    }
    Ok(SweepResult { check, n, seed, worst_slack: worst.1, worst_index: worst.0 })
}

fn random_draw_slack(check: SweepCheck, rng: &mut ChaCha8Rng) -> Result<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    match check {
        SweepCheck::Theorem1Cv | SweepCheck::Robertson => {
            let space = SpaceDescriptor::fock_bipartite(&[RANDOM_FOCK_DIM], &[RANDOM_FOCK_DIM])?;
            let a = space.party(Party::A)?;
            let theta = rng.random_range(0.0..PI);
            let state: State = random_pure_state(&space, rng).into();
            let x = quadrature_op(&a, 0, 0.0)?;
            let p = quadrature_op(&a, 0, FRAC_PI_2)?;
            if check == SweepCheck::Robertson {
                return inference_slack(&state, &x, &p, None);
            }
            let b = quadrature_op(&space.party(Party::B)?, 0, theta)?;
            inference_slack(&state, &x, &p, Some(&b))
        }
        SweepCheck::Theorem1Spin => {
            let max_twice = (2.0 * RANDOM_MAX_J) as usize;
            let ja = rng.random_range(1..=max_twice) as f64 / 2.0;
            let jb = rng.random_range(1..=max_twice) as f64 / 2.0;
            let space = SpaceDescriptor::spin_pair(ja, jb)?;
            let (theta, phi) = (rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI));
            let state: State = random_pure_state(&space, rng).into();
            let a = spin_observables(&space.party(Party::A)?)?;
            let b = spin_observables(&space.party(Party::B)?)?;
            let direction = Observable::combine(
                &[
                    (theta.sin() * phi.cos(), &b.jx),
                    (theta.sin() * phi.sin(), &b.jy),
                    (theta.cos(), &b.jz),
                ],
                "jn",
            )?;
            inference_slack(&state, &a.jx, &a.jy, Some(&direction))
        }
    }
}
