//! Synthetic measurement records and the estimators that re-evaluate the
//! criteria from them.
//!
//! Outcome pairs are drawn from the exact joint distribution of an A and a B
//! observable (eigenvalues as outcomes), optionally blurred by additive
//! Gaussian detection noise. Draws are split into fixed-size chunks, each with
//! its own ChaCha stream, so records do not depend on thread scheduling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    observable_by_name, with_trivial_b, CriterionId, CriterionReport, Method, ReportMetadata,
};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hilbert::{CMatrix, Observable, Party, State};

/// Samples per RNG stream.
const CHUNK: usize = 4096;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Smallest mean number of samples per occupied bin under the default width.
pub const MIN_EXPECTED_PER_BIN: usize = 50;
/// Normal quantile for the reported 95% confidence half-width.
pub const CI_Z: f64 = 1.96;
const MAX_BINS: usize = 10_000_000;
const BOOTSTRAP_STREAM_KEY: u64 = 0xb007_57a9;

/// Additive Gaussian detection noise, standard deviation per side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma_a: f64,
    pub sigma_b: f64,
}

impl Noise {
    pub fn new(sigma_a: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_a >= 0.0 && sigma_b >= 0.0 && sigma_a.is_finite() && sigma_b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise widths must be finite and nonnegative, got ({sigma_a}, {sigma_b})"
            )));
        }
        Ok(Self { sigma_a, sigma_b })
    }
}

/// A seeded record of `n` outcome pairs `(O^A, O^B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// `A:<obs>|B:<obs>`.
    pub setting: String,
    pub seed: u64,
    pub n: usize,
    pub noise: Noise,
    pub pairs: Vec<(f64, f64)>,
}

impl SampleRecord {
    pub fn a_label(&self) -> &str {
        self.setting_part("A:")
    }

    pub fn b_label(&self) -> &str {
        self.setting_part("B:")
    }

    fn setting_part(&self, prefix: &str) -> &str {
        self.setting
            .split('|')
            .find_map(|s| s.strip_prefix(prefix))
            .unwrap_or("")
    }

    /// Columnar text: `#key=value` header lines, an `o_a,o_b` header, then one
    /// pair per row in shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.pairs.len() * 40 + 128);
        out.push_str(&format!("#setting={}\n", self.setting));
        out.push_str(&format!("#seed={}\n", self.seed));
        out.push_str(&format!("#n={}\n", self.n));
        out.push_str(&format!("#noise_a={}\n", self.noise.sigma_a));
        out.push_str(&format!("#noise_b={}\n", self.noise.sigma_b));
        out.push_str("o_a,o_b\n");
        for (a, b) in &self.pairs {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

impl fmt::Display for SampleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for SampleRecord {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut setting = None;
        let mut seed = None;
        let mut n = None;
        let mut noise = Noise::default();
        let mut pairs = Vec::new();
        let mut in_rows = false;
        let num = |v: &str, what: &str| -> Result<f64> {
            v.trim().parse().map_err(|_| Error::Parse(format!("bad {what} `{v}`")))
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(header) = line.strip_prefix('#') {
                let (k, v) = header
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("bad header line `{line}`")))?;
                match k {
                    "setting" => setting = Some(v.to_string()),
                    "seed" => seed = Some(v.parse().map_err(|_| Error::Parse(format!("bad seed `{v}`")))?),
                    "n" => n = Some(v.parse().map_err(|_| Error::Parse(format!("bad n `{v}`")))?),
                    "noise_a" => noise.sigma_a = num(v, "noise")?,
                    "noise_b" => noise.sigma_b = num(v, "noise")?,
                    other => return Err(Error::Parse(format!("unknown header `{other}`"))),
                }
            } else if !in_rows {
                if line.trim() != "o_a,o_b" {
                    return Err(Error::Parse(format!("expected column header, got `{line}`")));
                }
                in_rows = true;
            } else {
                let (a, b) = line
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
                pairs.push((num(a, "outcome")?, num(b, "outcome")?));
            }
        }
        let setting = setting.ok_or_else(|| Error::Parse("missing #setting".into()))?;
        let seed = seed.ok_or_else(|| Error::Parse("missing #seed".into()))?;
        let n: usize = n.ok_or_else(|| Error::Parse("missing #n".into()))?;
        if n != pairs.len() || n == 0 {
            return Err(Error::Parse(format!("#n={n} but {} rows", pairs.len())));
        }
        Ok(Self { setting, seed, n, noise, pairs })
    }
}

/// Joint outcome distribution of `a` (on A) and `b` (on B): eigenvalue pairs
/// and their probabilities, A-major.
fn joint_distribution(state: &State, a: &Observable, b: &Observable) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let space = state.space();
    if !space.is_bipartite() {
        return Err(Error::NotBipartite);
    }
    if a.space() != &space.party(Party::A)? {
        return Err(Error::WrongSubsystem { label: a.label().into(), party: "A" });
    }
    if b.space() != &space.party(Party::B)? {
        return Err(Error::WrongSubsystem { label: b.label().into(), party: "B" });
    }
    let (sa, sb) = (a.spectrum(), b.spectrum());
    let (da, db) = (sa.values.len(), sb.values.len());
    let probs: Vec<f64> = match state {
        State::Pure(psi) => {
            let amps = psi.amplitudes();
            let m = CMatrix::from_fn(da, db, |i, k| amps[i * db + k]);
            let c = sa.vectors.adjoint() * m * sb.vectors.conjugate();
            (0..da * db).map(|ik| c[(ik / db, ik % db)].norm_sqr()).collect()
        }
        State::Mixed(rho) => {
            let u = sa.vectors.kronecker(&sb.vectors);
            let ru = rho.matrix() * &u;
            (0..da * db).map(|col| u.column(col).dotc(&ru.column(col)).re.max(0.0)).collect()
        }
    };
    let outcomes = (0..da)
        .flat_map(|i| (0..db).map(move |k| (sa.values[i], sb.values[k])))
        .collect();
    Ok((outcomes, probs))
}

/// Draws `n` i.i.d. pairs from the joint distribution of `a` on A and `b` on B.
pub fn sample_joint(
    state: &State,
    a: &Observable,
    b: &Observable,
    n: usize,
    seed: u64,
    noise: Noise,
) -> Result<SampleRecord> {
    sample_joint_with(Execution::default(), state, a, b, n, seed, noise)
}

pub fn sample_joint_with(
    exec: Execution,
    state: &State,
    a: &Observable,
    b: &Observable,
    n: usize,
    seed: u64,
    noise: Noise,
) -> Result<SampleRecord> {
    if n == 0 {
        return Err(Error::InvalidArgument("a record needs at least one sample".into()));
    }
    let noise = Noise::new(noise.sigma_a, noise.sigma_b)?;
    let (outcomes, probs) = joint_distribution(state, a, b)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let chunks = n.div_ceil(CHUNK);
    let parts = exec::map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(n - c * CHUNK);
        (0..len)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * total;
                let k = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
                let (mut oa, mut ob) = outcomes[k];
                if noise.sigma_a > 0.0 {
                    oa += noise.sigma_a * rng.sample::<f64, _>(StandardNormal);
                }
                if noise.sigma_b > 0.0 {
                    ob += noise.sigma_b * rng.sample::<f64, _>(StandardNormal);
                }
                (oa, ob)
            })
            .collect::<Vec<_>>()
    });
    Ok(SampleRecord {
        setting: format!("A:{}|B:{}", a.label(), b.label()),
        seed,
        n,
        noise,
        pairs: parts.into_iter().flatten().collect(),
    })
}

/// A point estimate with its bootstrap standard error and the 95% half-width
/// `CI_Z · se`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub ci: f64,
}

impl Estimate {
    fn from_bootstrap(value: f64, replicates: &[f64]) -> Self {
        let finite: Vec<f64> = replicates.iter().copied().filter(|v| v.is_finite()).collect();
        let se = if finite.len() < 2 {
            f64::INFINITY
        } else {
            let m = finite.iter().sum::<f64>() / finite.len() as f64;
            (finite.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
        };
        Self { value, se, ci: CI_Z * se }
    }
}

/// Conditional-statistics estimate from one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedEstimate {
    pub estimate: Estimate,
    pub bin_width: f64,
    /// Bins with at least two samples.
    pub bins_used: usize,
    /// Fraction of samples in bins with fewer than two samples.
    pub dropped_fraction: f64,
}

/// Default bin width: B range over `√n`, widened until the occupied bins
/// average at least [`MIN_EXPECTED_PER_BIN`] samples.
pub fn default_bin_width(record: &SampleRecord) -> Result<f64> {
    let n = record.pairs.len();
    if n < MIN_EXPECTED_PER_BIN {
        return Err(Error::Underpopulated(format!(
            "{n} samples cannot fill a single bin with {MIN_EXPECTED_PER_BIN}"
        )));
    }
    let (lo, hi) = b_range(record);
    let range = hi - lo;
    if range == 0.0 {
        return Ok(1.0);
    }
    let mut width = range / (n as f64).sqrt();
    loop {
        let occupied = Binned::new(record, width)?.occupied();
        if n >= MIN_EXPECTED_PER_BIN * occupied {
            return Ok(width);
        }
        width *= 1.25;
    }
}

fn b_range(record: &SampleRecord) -> (f64, f64) {
    record.pairs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, b)| {
        (lo.min(b), hi.max(b))
    })
}

/// Samples grouped by B bin, anchored so the smallest B outcome sits at the
/// center of bin 0.
struct Binned {
    a: Vec<f64>,
    bin: Vec<usize>,
    bins: usize,
    shift: f64,
}

impl Binned {
    fn new(record: &SampleRecord, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!("bin width must be positive, got {width}")));
        }
        let (lo, hi) = b_range(record);
        let anchor = lo - width / 2.0;
        let bins = ((hi - anchor) / width).floor() as usize + 1;
        if bins > MAX_BINS {
            return Err(Error::InvalidArgument(format!("bin width {width} gives {bins} bins")));
        }
        let bin = record
            .pairs
            .iter()
            .map(|&(_, b)| (((b - anchor) / width).floor() as usize).min(bins - 1))
            .collect();
        let a: Vec<f64> = record.pairs.iter().map(|p| p.0).collect();
        let shift = a.iter().sum::<f64>() / a.len() as f64;
        Ok(Self { a, bin, bins, shift })
    }

    fn occupied(&self) -> usize {
        let mut seen = vec![false; self.bins];
        self.bin.iter().for_each(|&k| seen[k] = true);
        seen.iter().filter(|&&s| s).count()
    }

    /// Per-bin `(count, Σ(a - shift), Σ(a - shift)²)` with sample multiplicities.
    fn moments(&self, weights: Option<&[u32]>) -> Vec<(f64, f64, f64)> {
        let mut m = vec![(0.0, 0.0, 0.0); self.bins];
        for (i, (&a, &k)) in self.a.iter().zip(&self.bin).enumerate() {
            let w = weights.map_or(1.0, |w| w[i] as f64);
            if w == 0.0 {
                continue;
            }
            let d = a - self.shift;
            let e = &mut m[k];
            e.0 += w;
            e.1 += w * d;
            e.2 += w * d * d;
        }
        m
    }

    /// `(Σ_k n_k s_k² / Σ_k n_k, kept bins, kept samples)` over bins with `n_k ≥ 2`.
    fn inferred_variance(&self, weights: Option<&[u32]>) -> (f64, usize, f64) {
        let mut acc = 0.0;
        let mut kept = 0.0;
        let mut bins = 0;
        for (c, s, s2) in self.moments(weights) {
            if c >= 2.0 {
                acc += (s2 - s * s / c).max(0.0) / (c - 1.0) * c;
                kept += c;
                bins += 1;
            }
        }
        (if kept > 0.0 { acc / kept } else { f64::NAN }, bins, kept)
    }

    /// `Σ_k n_k |mean_k| / Σ_k n_k` over bins with `n_k ≥ 2`.
    fn mean_modulus(&self, weights: Option<&[u32]>) -> f64 {
        let mut acc = 0.0;
        let mut kept = 0.0;
        for (c, s, _) in self.moments(weights) {
            if c >= 2.0 {
                acc += (s / c + self.shift).abs() * c;
                kept += c;
            }
        }
        if kept > 0.0 { acc / kept } else { f64::NAN }
    }
}

/// Bootstrap replicates of `stat`, each from a multinomial resample of the
/// record's rows drawn on its own stream.
fn bootstrap<F>(exec: Execution, n: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[u32]) -> f64 + Sync + Send,
{
    exec::map_range(exec, BOOTSTRAP_RESAMPLES, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BOOTSTRAP_STREAM_KEY);
        rng.set_stream(k as u64);
        let mut w = vec![0u32; n];
        for _ in 0..n {
            w[rng.random_range(0..n)] += 1;
        }
        stat(&w)
    })
}

/// `Δ²_inf O^A` from a record: unbiased within-bin variances of the A column,
/// averaged with bin-frequency weights; bins with fewer than two samples are
/// dropped. `bin_width = None` uses [`default_bin_width`].
pub fn estimate_inferred_variance(record: &SampleRecord, bin_width: Option<f64>) -> Result<BinnedEstimate> {
    estimate_inferred_variance_with(Execution::default(), record, bin_width)
}

pub fn estimate_inferred_variance_with(
    exec: Execution,
    record: &SampleRecord,
    bin_width: Option<f64>,
) -> Result<BinnedEstimate> {
    let (binned, width) = binned(record, bin_width)?;
    let (value, bins_used, kept) = binned.inferred_variance(None);
    if bins_used == 0 {
        return Err(Error::Underpopulated(format!(
            "no bin of width {width} holds two samples"
        )));
    }
    let reps = bootstrap(exec, record.pairs.len(), record.seed, |w| binned.inferred_variance(Some(w)).0);
    Ok(BinnedEstimate {
        estimate: Estimate::from_bootstrap(value, &reps),
        bin_width: width,
        bins_used,
        dropped_fraction: 1.0 - kept / record.pairs.len() as f64,
    })
}

/// `|⟨O^A⟩|_inf = Σ_k P_k |mean_k|` from a record, binned like
/// [`estimate_inferred_variance`].
pub fn estimate_inferred_mean_modulus(record: &SampleRecord, bin_width: Option<f64>) -> Result<BinnedEstimate> {
    estimate_inferred_mean_modulus_with(Execution::default(), record, bin_width)
}

pub fn estimate_inferred_mean_modulus_with(
    exec: Execution,
    record: &SampleRecord,
    bin_width: Option<f64>,
) -> Result<BinnedEstimate> {
    let (binned, width) = binned(record, bin_width)?;
    let (_, bins_used, kept) = binned.inferred_variance(None);
    if bins_used == 0 {
        return Err(Error::Underpopulated(format!(
            "no bin of width {width} holds two samples"
        )));
    }
    let value = binned.mean_modulus(None);
    let reps = bootstrap(exec, record.pairs.len(), record.seed, |w| binned.mean_modulus(Some(w)));
    Ok(BinnedEstimate {
        estimate: Estimate::from_bootstrap(value, &reps),
        bin_width: width,
        bins_used,
        dropped_fraction: 1.0 - kept / record.pairs.len() as f64,
    })
}

fn binned(record: &SampleRecord, bin_width: Option<f64>) -> Result<(Binned, f64)> {
    if record.pairs.is_empty() {
        return Err(Error::InvalidArgument("empty record".into()));
    }
    let width = match bin_width {
        Some(w) => w,
        None => default_bin_width(record)?,
    };
    Ok((Binned::new(record, width)?, width))
}

fn weighted_moments(a: &[f64], w: Option<&[u32]>) -> (f64, f64) {
    let shift = a.iter().sum::<f64>() / a.len() as f64;
    let (mut c, mut s, mut s2) = (0.0, 0.0, 0.0);
    for (i, &x) in a.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i] as f64);
        let d = x - shift;
        c += wi;
        s += wi * d;
        s2 += wi * d * d;
    }
    (s / c + shift, (s2 - s * s / c) / (c - 1.0))
}

/// Unbiased sample variance of the A column.
pub fn estimate_variance(record: &SampleRecord) -> Result<Estimate> {
    estimate_variance_with(Execution::default(), record)
}

pub fn estimate_variance_with(exec: Execution, record: &SampleRecord) -> Result<Estimate> {
    if record.pairs.len() < 2 {
        return Err(Error::Underpopulated("a variance needs two samples".into()));
    }
    let a: Vec<f64> = record.pairs.iter().map(|p| p.0).collect();
    let value = weighted_moments(&a, None).1;
    let reps = bootstrap(exec, a.len(), record.seed, |w| weighted_moments(&a, Some(w)).1);
    Ok(Estimate::from_bootstrap(value, &reps))
}

/// Sample mean of the A column.
pub fn estimate_mean(record: &SampleRecord) -> Result<Estimate> {
    estimate_mean_with(Execution::default(), record)
}

pub fn estimate_mean_with(exec: Execution, record: &SampleRecord) -> Result<Estimate> {
    if record.pairs.len() < 2 {
        return Err(Error::Underpopulated("a mean with error bars needs two samples".into()));
    }
    let a: Vec<f64> = record.pairs.iter().map(|p| p.0).collect();
    let value = weighted_moments(&a, None).0;
    let reps = bootstrap(exec, a.len(), record.seed, |w| weighted_moments(&a, Some(w)).0);
    Ok(Estimate::from_bootstrap(value, &reps))
}

/// Estimator options shared by [`estimate_criterion`] and [`simulate_criterion`].
#[derive(Clone, Debug, Default)]
pub struct SampledOptions {
    pub bin_width: Option<f64>,
    /// `S` for `mr_bound`, `D` for `epr_sum_spin`.
    pub bound: Option<f64>,
    pub exec: Execution,
}

struct Pieces<'a> {
    records: &'a [SampleRecord],
    opts: &'a SampledOptions,
    meta: ReportMetadata,
}

impl<'a> Pieces<'a> {
    fn find(&self, a: &str) -> Result<&'a SampleRecord> {
        let records: &'a [SampleRecord] = self.records;
        records
            .iter()
            .find(|r| r.a_label() == a)
            .ok_or_else(|| Error::MissingStatistic(format!("needs a record measuring `{a}` on A")))
    }

    fn note(&mut self, r: &SampleRecord) {
        self.meta.settings.push(r.setting.clone());
        self.meta.n = Some(self.meta.n.map_or(r.n, |m| m.min(r.n)));
        self.meta.seed.get_or_insert(r.seed);
    }

    fn variance(&mut self, a: &str) -> Result<Estimate> {
        let r = self.find(a)?;
        self.note(r);
        estimate_variance_with(self.opts.exec, r)
    }

    fn mean(&mut self, a: &str) -> Result<Estimate> {
        let r = self.find(a)?;
        self.note(r);
        estimate_mean_with(self.opts.exec, r)
    }

    fn inferred_variance(&mut self, a: &str) -> Result<Estimate> {
        let r = self.find(a)?;
        self.note(r);
        let e = estimate_inferred_variance_with(self.opts.exec, r, self.opts.bin_width)?;
        self.meta.bins.push(e.bins_used);
        self.meta.dropped_mass.push(e.dropped_fraction);
        self.meta.flags.push(format!("bin_width[{}]={}", r.setting, e.bin_width));
        Ok(e.estimate)
    }

    /// Largest `|⟨a⟩|_inf` over all records measuring `a` on A.
    fn inferred_mean_modulus(&mut self, a: &str) -> Result<Estimate> {
        let mut best: Option<Estimate> = None;
        let records: &'a [SampleRecord] = self.records;
        let matching: Vec<&SampleRecord> = records.iter().filter(|r| r.a_label() == a).collect();
        if matching.is_empty() {
            return Err(Error::MissingStatistic(format!("needs a record measuring `{a}` on A")));
        }
        for r in matching {
            self.note(r);
            let e = estimate_inferred_mean_modulus_with(self.opts.exec, r, self.opts.bin_width)?.estimate;
            if best.is_none_or(|b| e.value > b.value) {
                best = Some(e);
            }
        }
        Ok(best.expect("at least one record"))
    }

    fn finish(
        mut self,
        id: CriterionId,
        lhs: (f64, f64),
        rhs: (f64, f64),
        s_min: Option<f64>,
    ) -> CriterionReport {
        self.meta.ci = Some(lhs.1.hypot(rhs.1));
        CriterionReport::new(id, lhs.0, rhs.0, s_min, Method::Sampled, self.meta)
    }
}

/// `(x·y, se)` by the delta method for independent estimates.
fn product(x: Estimate, y: Estimate) -> (f64, f64) {
    (x.value * y.value, (y.value * x.ci).hypot(x.value * y.ci))
}

/// Re-evaluates a criterion from records. Records are matched by the A
/// observable of their setting (`x`, `p`, `jx`, `jy`, `jz`); B outcomes are
/// binned for inferred quantities. The continuous-variable right-hand sides
/// use the canonical commutator `[x, p] = 2i`. `metadata.ci` is the combined
/// 95% half-width of `rhs - lhs`.
pub fn estimate_criterion(
    records: &[SampleRecord],
    id: CriterionId,
    opts: &SampledOptions,
) -> Result<CriterionReport> {
    let mut pc = Pieces { records, opts, meta: ReportMetadata::default() };
    let ci = |e: Estimate| (e.value, e.ci);
    let report = match id {
        CriterionId::CvSscopic | CriterionId::CvSscopicInferred | CriterionId::MrBound => {
            let v = if id == CriterionId::CvSscopicInferred {
                pc.inferred_variance("p")?
            } else {
                pc.variance("p")?
            };
            if !(v.value > 0.0) {
                return Err(Error::NonConvergence(format!("estimated p variance {} is not positive", v.value)));
            }
            let s_min = 2.0 / v.value.sqrt();
            let rhs = match id {
                CriterionId::MrBound => {
                    let s = opts
                        .bound
                        .ok_or_else(|| Error::MissingStatistic("mr_bound needs the size S".into()))?;
                    pc.meta.flags.push(format!("S={s}"));
                    crate::criteria::mr_bound(s)?
                }
                _ => 1.0,
            };
            if id != CriterionId::MrBound && s_min > 2.0 {
                pc.meta.flags.push("nontrivial".into());
            }
            pc.meta.flags.push(format!("s_min_ci={}", v.ci / v.value.powf(1.5)));
            pc.finish(id, ci(v), (rhs, 0.0), Some(s_min))
        }
        CriterionId::SpinSscopic | CriterionId::SpinSscopicInferred => {
            let v = if id == CriterionId::SpinSscopicInferred {
                pc.inferred_variance("jy")?
            } else {
                pc.variance("jy")?
            };
            let z = pc.mean("jz")?;
            let s_min = if v.value > 0.0 {
                z.value.abs() / v.value.sqrt()
            } else {
                pc.meta.flags.push("exceeds_spectrum".into());
                f64::INFINITY
            };
            let rhs = (z.value * z.value, 2.0 * z.value.abs() * z.ci);
            pc.finish(id, ci(v), rhs, Some(s_min))
        }
        CriterionId::Theorem1Cv | CriterionId::Theorem1Spin => {
            let (o1, o2) = if id == CriterionId::Theorem1Cv { ("x", "p") } else { ("jx", "jy") };
            let v1 = pc.variance(o1)?;
            let v2 = pc.inferred_variance(o2)?;
            let (prod, prod_ci) = product(v1, v2);
            let lhs = (prod.sqrt(), prod_ci / (2.0 * prod.sqrt()));
            let rhs = if id == CriterionId::Theorem1Cv {
                (1.0, 0.0)
            } else {
                let m = pc.inferred_mean_modulus("jz")?;
                (m.value / 2.0, m.ci / 2.0)
            };
            pc.finish(id, lhs, rhs, None)
        }
        CriterionId::EprProductCv | CriterionId::EprProductSpin | CriterionId::EprProductSpinUninfRhs => {
            let (o1, o2) = if id == CriterionId::EprProductCv { ("x", "p") } else { ("jx", "jy") };
            let lhs = product(pc.inferred_variance(o1)?, pc.inferred_variance(o2)?);
            let rhs = match id {
                CriterionId::EprProductCv => (1.0, 0.0),
                CriterionId::EprProductSpin => {
                    let m = pc.inferred_mean_modulus("jz")?;
                    (m.value * m.value / 4.0, m.value * m.ci / 2.0)
                }
                _ => {
                    let m = pc.mean("jz")?;
                    (m.value * m.value / 4.0, m.value.abs() * m.ci / 2.0)
                }
            };
            pc.finish(id, lhs, rhs, None)
        }
        CriterionId::EprSumSpin => {
            let d = opts
                .bound
                .ok_or_else(|| Error::MissingStatistic("epr_sum_spin needs the bound D".into()))?;
            let parts = [pc.inferred_variance("jx")?, pc.inferred_variance("jy")?, pc.inferred_variance("jz")?];
            let lhs = parts.iter().map(|e| e.value).sum::<f64>();
            let lhs_ci = parts.iter().map(|e| e.ci * e.ci).sum::<f64>().sqrt();
            pc.meta.flags.push(format!("D={d}"));
            pc.finish(id, (lhs, lhs_ci), (d, 0.0), None)
        }
    };
    Ok(report)
}

/// `(A observable, B observable)` records needed by each criterion.
pub fn default_settings(id: CriterionId) -> &'static [(&'static str, &'static str)] {
    match id {
        CriterionId::CvSscopic | CriterionId::CvSscopicInferred | CriterionId::MrBound => &[("p", "p")],
        CriterionId::Theorem1Cv => &[("x", "p"), ("p", "p")],
        CriterionId::EprProductCv => &[("x", "x"), ("p", "p")],
        CriterionId::SpinSscopic => &[("jy", "jy"), ("jz", "jz")],
        CriterionId::SpinSscopicInferred => &[("jy", "jy"), ("jz", "jy")],
        CriterionId::Theorem1Spin => &[("jx", "jy"), ("jy", "jy"), ("jz", "jy")],
        CriterionId::EprProductSpin => &[("jx", "jx"), ("jy", "jy"), ("jz", "jx"), ("jz", "jy")],
        CriterionId::EprProductSpinUninfRhs | CriterionId::EprSumSpin => {
            &[("jx", "jx"), ("jy", "jy"), ("jz", "jz")]
        }
    }
}

/// Seed of the `k`-th record of a simulation; record 0 uses `seed` itself.
pub fn record_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Samples every record `id` needs (see [`default_settings`]) from `state`,
/// `n` pairs each, then estimates the criterion. A single-party state is
/// paired with a B ground state.
pub fn simulate_criterion(
    state: &State,
    id: CriterionId,
    n: usize,
    seed: u64,
    noise: Noise,
    opts: &SampledOptions,
) -> Result<(Vec<SampleRecord>, CriterionReport)> {
    let paired = with_trivial_b(state)?;
    let a_space = paired.space().party(Party::A)?;
    let b_space = paired.space().party(Party::B)?;
    let mut records = Vec::new();
    for (k, (a, b)) in default_settings(id).iter().enumerate() {
        let oa = observable_by_name(&a_space, a)?;
        let ob = observable_by_name(&b_space, b)?;
        records.push(sample_joint_with(opts.exec, &paired, &oa, &ob, n, record_seed(seed, k), noise)?);
    }
    let mut report = estimate_criterion(&records, id, opts)?;
    report.metadata.seed = Some(seed);
    report.metadata.cutoffs = state.space().cutoffs();
    if noise != Noise::default() {
        report.metadata.flags.push(format!("noise_a={},noise_b={}", noise.sigma_a, noise.sigma_b));
    }
    Ok((records, report))
}

/// A-side noise that lifts the inferred `p` variance of a two-mode squeezed
/// vacuum from `1/cosh 2r` to `target`.
pub fn noise_for_inferred_variance(r: f64, target: f64) -> Result<f64> {
    let excess = target - 1.0 / (2.0 * r).cosh();
    if excess < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target {target} is below the noiseless inferred variance {}",
            1.0 / (2.0 * r).cosh()
        )));
    }
    Ok(excess.sqrt())
}
