//! Estimates of the absolutely continuous invariant measure and of its
//! statistical properties along orbits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{kronecker_starts, linear_fit};
use crate::error::{Error, Result};
use crate::map::reduce;
use crate::params::{fmt_real, MapParams};

/// A circle dynamics on `[-1, 1)`: one step returns the reduced image and
/// the derivative.
pub trait Dynamics: Sync {
    fn step(&self, z: f64) -> Result<(f64, f64)>;
}

impl Dynamics for MapParams {
    #[inline]
    fn step(&self, z: f64) -> Result<(f64, f64)> {
        MapParams::step(self, z)
    }
}

/// Rigid rotation `z -> z + 2 alpha`.
#[derive(Clone, Copy, Debug)]
pub struct Rotation(pub f64);

impl Dynamics for Rotation {
    fn step(&self, z: f64) -> Result<(f64, f64)> {
        Ok((reduce(z + 2.0 * self.0), 1.0))
    }
}

/// `z -> slope * z + shift` on the circle; Lebesgue-invariant for integer
/// slopes, and close to an i.i.d. uniform source for large ones.
#[derive(Clone, Copy, Debug)]
pub struct LinearExpander {
    pub slope: f64,
    pub shift: f64,
}

impl Dynamics for LinearExpander {
    fn step(&self, z: f64) -> Result<(f64, f64)> {
        Ok((
            reduce(self.slope * (z + 1.0) - 1.0 + self.shift),
            self.slope,
        ))
    }
}

/// Built-in observables on `[-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `z`.
    Identity,
    /// `sin(pi z)`.
    SinPi,
    /// `cos^2` bump of half-width `width` around `center` (circle distance).
    Bump {
        center: f64,
        width: f64,
    },
    Constant {
        value: f64,
    },
}

impl Observable {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Observable::Identity => z,
            Observable::SinPi => (std::f64::consts::PI * z).sin(),
            Observable::Bump { center, width } => {
                let d = crate::map::circle_distance(z, center);
                if d >= width {
                    0.0
                } else {
                    (0.5 * std::f64::consts::PI * d / width).cos().powi(2)
                }
            }
            Observable::Constant { value } => value,
        }
    }

    /// Parses `z`, `sin`, `bump:CENTER:WIDTH` or `const:VALUE`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad observable {text:?}: {e}")))
        };
        match parts.as_slice() {
            ["z"] => Ok(Observable::Identity),
            ["sin"] => Ok(Observable::SinPi),
            ["bump", c, w] => {
                let width = num(w)?;
                if width.is_nan() || width <= 0.0 {
                    return Err(Error::Config(format!(
                        "bump width must be positive in {text:?}"
                    )));
                }
                Ok(Observable::Bump {
                    center: num(c)?,
                    width,
                })
            }
            ["const", v] => Ok(Observable::Constant { value: num(v)? }),
            _ => Err(Error::Config(format!("unknown observable {text:?}"))),
        }
    }
}

/// Occupation histogram on the uniform grid of `[-1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub n_bins: usize,
    pub mass: Vec<f64>,
    /// Orbits that contributed.
    pub samples: usize,
    /// Orbits dropped after reaching the critical set.
    pub discarded: usize,
}

impl DensityHistogram {
    pub fn from_counts(counts: &[u64], samples: usize, discarded: usize) -> Self {
        let total: u64 = counts.iter().sum();
        let t = total.max(1) as f64;
        DensityHistogram {
            n_bins: counts.len(),
            mass: counts.iter().map(|&c| c as f64 / t).collect(),
            samples,
            discarded,
        }
    }

    pub fn uniform(n_bins: usize) -> Self {
        DensityHistogram {
            n_bins,
            mass: vec![1.0 / n_bins as f64; n_bins],
            samples: 0,
            discarded: 0,
        }
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.n_bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins)
            .map(|i| -1.0 + i as f64 * self.bin_width())
            .collect()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn density(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.mass.iter().map(|m| m / w).collect()
    }

    /// Bin of the reduced point `z`.
    #[inline]
    pub fn bin_of(&self, z: f64) -> usize {
        bin_index(z, self.n_bins)
    }

    /// CSV with columns `bin_center,density`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_center,density\n");
        for (i, d) in self.density().iter().enumerate() {
            s.push_str(&format!(
                "{},{}\n",
                fmt_real(self.bin_center(i)),
                fmt_real(*d)
            ));
        }
        s
    }
}

#[inline]
fn bin_index(z: f64, n_bins: usize) -> usize {
    let u = (reduce(z) + 1.0) * 0.5 * n_bins as f64;
    (u as usize).min(n_bins - 1)
}

/// Birkhoff occupation histogram pooled over `sample_size` seeded starts,
/// each run for `n_transient + n_iter` steps with the first `n_transient`
/// discarded.
pub fn srb_density<D: Dynamics>(
    dynamics: &D,
    n_transient: usize,
    n_iter: usize,
    n_bins: usize,
    sample_size: usize,
    seed: u64,
) -> Result<DensityHistogram> {
    if n_iter < 10_000 {
        return Err(Error::Precondition(format!("n_iter = {n_iter} below 10^4")));
    }
    if n_bins == 0 || sample_size == 0 {
        return Err(Error::Precondition(
            "n_bins and sample_size must be positive".into(),
        ));
    }
    let starts = kronecker_starts(seed, sample_size);
    let parts: Vec<Option<Vec<u64>>> = starts
        .par_iter()
        .map(|&x0| {
            let mut counts = vec![0u64; n_bins];
            let mut z = x0;
            for _ in 0..n_transient {
                z = dynamics.step(z).ok()?.0;
            }
            for _ in 0..n_iter {
                counts[bin_index(z, n_bins)] += 1;
                z = dynamics.step(z).ok()?.0;
            }
            Some(counts)
        })
        .collect();
    let discarded = parts.iter().filter(|p| p.is_none()).count();
    if discarded == sample_size {
        return Err(Error::AllOrbitsSingular);
    }
    let mut total = vec![0u64; n_bins];
    for p in parts.iter().flatten() {
        for (t, c) in total.iter_mut().zip(p) {
            *t += c;
        }
    }
    Ok(DensityHistogram::from_counts(
        &total,
        sample_size - discarded,
        discarded,
    ))
}

/// Default number of sub-points per bin in [`pushforward`].
pub const PUSH_SUBSAMPLES: usize = 256;

/// Image of `hist` under the dynamics, spreading each bin's mass evenly over
/// `subsamples` midpoints.
pub fn pushforward<D: Dynamics>(
    dynamics: &D,
    hist: &DensityHistogram,
    subsamples: usize,
) -> DensityHistogram {
    let n = hist.n_bins;
    let m = subsamples.max(1);
    let w = hist.bin_width();
    let parts: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mass = hist.mass[i];
            if mass == 0.0 {
                return Vec::new();
            }
            let lo = -1.0 + i as f64 * w;
            let share = mass / m as f64;
            let mut out = Vec::with_capacity(m);
            let mut lost = 0.0;
            for k in 0..m {
                let x = lo + (k as f64 + 0.5) * w / m as f64;
                match dynamics.step(x) {
                    Ok((y, _)) => out.push((bin_index(y, n), share)),
                    Err(_) => lost += share,
                }
            }
            // a sub-point on the singular set keeps its mass in place
            if lost > 0.0 {
                out.push((i, lost));
            }
            out
        })
        .collect();
    let mut mass = vec![0.0; n];
    for p in parts {
        for (j, v) in p {
            mass[j] += v;
        }
    }
    DensityHistogram {
        n_bins: n,
        mass,
        samples: hist.samples,
        discarded: hist.discarded,
    }
}

/// `||hist - f_* hist||_1` with [`PUSH_SUBSAMPLES`] sub-points per bin.
pub fn pushforward_check<D: Dynamics>(dynamics: &D, hist: &DensityHistogram) -> f64 {
    let img = pushforward(dynamics, hist, PUSH_SUBSAMPLES);
    hist.mass
        .iter()
        .zip(&img.mass)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

pub fn density_l1_distance(h1: &DensityHistogram, h2: &DensityHistogram) -> Result<f64> {
    if h1.n_bins != h2.n_bins {
        return Err(Error::BinMismatch(h1.n_bins, h2.n_bins));
    }
    Ok(h1
        .mass
        .iter()
        .zip(&h2.mass)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub lags: Vec<usize>,
    pub corr: Vec<f64>,
    /// `c` in `Corr_n ~ C e^{-c n}`, fitted on the leading run of lags above
    /// the floor. NaN when that run is shorter than [`MIN_FIT_LAGS`].
    pub fit_rate: f64,
    pub fit_intercept: f64,
    pub fit_r2: f64,
    pub noise_floor: f64,
    /// Number of lags entering the fit.
    pub fitted_lags: usize,
    /// Lags at or below the noise floor.
    pub below_floor: Vec<usize>,
    pub n_iter: usize,
    pub seed: u64,
}

/// Fewest lags for which the exponential fit is reported; two points always
/// give `R² = 1`.
pub const MIN_FIT_LAGS: usize = 3;

/// Transient discarded before time averages along one orbit.
pub const ORBIT_TRANSIENT: usize = 1000;

/// `Corr_n = |<phi o f^n, psi> - <phi><psi>|` for `n = 0..=n_lags` from one
/// orbit of length `n_iter`.
pub fn correlation<D: Dynamics>(
    dynamics: &D,
    phi: Observable,
    psi: Observable,
    n_lags: usize,
    n_iter: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    if n_iter <= n_lags + 1 {
        return Err(Error::Precondition("n_iter must exceed n_lags + 1".into()));
    }
    let mut z = kronecker_starts(seed, 1)[0];
    for i in 0..ORBIT_TRANSIENT {
        z = dynamics
            .step(z)
            .map_err(|_| Error::SingularOrbit { iterate: i })?
            .0;
    }
    let mut a = Vec::with_capacity(n_iter);
    let mut b = Vec::with_capacity(n_iter);
    for i in 0..n_iter {
        a.push(phi.eval(z));
        b.push(psi.eval(z));
        z = dynamics
            .step(z)
            .map_err(|_| Error::SingularOrbit {
                iterate: ORBIT_TRANSIENT + i,
            })?
            .0;
    }
    let n = n_iter as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    for v in &mut a {
        *v -= ma;
    }
    for v in &mut b {
        *v -= mb;
    }
    let corr: Vec<f64> = (0..=n_lags)
        .into_par_iter()
        .map(|lag| {
            let m = n_iter - lag;
            let s: f64 = (0..m).map(|t| a[t + lag] * b[t]).sum();
            (s / m as f64).abs()
        })
        .collect();
    let floor = 3.0 / n.sqrt();
    let below: Vec<usize> = (0..=n_lags).filter(|&l| corr[l] <= floor).collect();
    // past the first lag under the floor the values are noise
    let run = below.first().copied().unwrap_or(n_lags + 1);
    let xs: Vec<f64> = (0..run).map(|l| l as f64).collect();
    let ys: Vec<f64> = corr[..run].iter().map(|c| c.ln()).collect();
    let (ic, slope, r2) = if run >= MIN_FIT_LAGS {
        linear_fit(&xs, &ys).unwrap_or((f64::NAN, f64::NAN, f64::NAN))
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(CorrelationSeries {
        lags: (0..=n_lags).collect(),
        corr,
        fit_rate: -slope,
        fit_intercept: ic,
        fit_r2: r2,
        noise_floor: floor,
        fitted_lags: run,
        below_floor: below,
        n_iter,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub block_n: usize,
    pub sample_size: usize,
    pub discarded: usize,
    /// Pooled mean of the observable over all blocks.
    pub mean: f64,
    pub theta_hat: f64,
    /// `None` when the blocks show no spread.
    pub ks_statistic: Option<f64>,
    /// 1% critical value `1.628 / sqrt(m)` for `m` retained blocks.
    pub ks_critical_1pct: f64,
    pub zero_variance: bool,
}

/// Normalized block sums `(1/sqrt n) sum_{j<n} (phi(f^j x) - mean)` over
/// seeded starts and their KS distance to `N(0, theta^2)`.
pub fn clt_check<D: Dynamics>(
    dynamics: &D,
    phi: Observable,
    block_n: usize,
    sample_size: usize,
    seed: u64,
) -> Result<CltReport> {
    if block_n == 0 || sample_size < 2 {
        return Err(Error::Precondition(
            "block_n >= 1 and sample_size >= 2 required".into(),
        ));
    }
    let starts = kronecker_starts(seed, sample_size);
    let sums: Vec<Option<f64>> = starts
        .par_iter()
        .map(|&x0| {
            let mut z = x0;
            for _ in 0..ORBIT_TRANSIENT {
                z = dynamics.step(z).ok()?.0;
            }
            let mut s = 0.0;
            for _ in 0..block_n {
                s += phi.eval(z);
                z = dynamics.step(z).ok()?.0;
            }
            Some(s)
        })
        .collect();
    let raw: Vec<f64> = sums.iter().flatten().copied().collect();
    let discarded = sums.len() - raw.len();
    if raw.len() < 2 {
        return Err(Error::AllOrbitsSingular);
    }
    let m = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / (m * block_n as f64);
    let rn = (block_n as f64).sqrt();
    let mut v: Vec<f64> = raw
        .iter()
        .map(|s| (s - mean * block_n as f64) / rn)
        .collect();
    let var = v.iter().map(|x| x * x).sum::<f64>() / (m - 1.0);
    let theta = var.sqrt();
    let crit = 1.628 / m.sqrt();
    // rounding noise of the block sums relative to their size
    if theta.is_nan() || theta <= 1e-12 * (1.0 + mean.abs() * rn) {
        return Ok(CltReport {
            block_n,
            sample_size,
            discarded,
            mean,
            theta_hat: theta,
            ks_statistic: None,
            ks_critical_1pct: crit,
            zero_variance: true,
        });
    }
    v.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, theta).expect("positive scale");
    let mut ks: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = normal.cdf(x);
        ks = ks
            .max((c - i as f64 / m).abs())
            .max(((i + 1) as f64 / m - c).abs());
    }
    Ok(CltReport {
        block_n,
        sample_size,
        discarded,
        mean,
        theta_hat: theta,
        ks_statistic: Some(ks),
        ks_critical_1pct: crit,
        zero_variance: false,
    })
}

/// Floor applied to `log |f'|` in [`entropy_estimate`].
pub const LOG_FLOOR: f64 = -50.0;

/// Sub-intervals per bin for the midpoint rule in [`entropy_estimate`].
pub const ENTROPY_SUBSAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// `sum_i mass_i * mean log |f'|` over bin `i`; a Rokhlin-formula
    /// heuristic, not a proven entropy value.
    pub value: f64,
    /// Mass carried by evaluation points clipped at [`LOG_FLOOR`].
    pub clipped_mass: f64,
}

pub fn entropy_estimate<D: Dynamics>(dynamics: &D, hist: &DensityHistogram) -> EntropyEstimate {
    let w = hist.bin_width();
    let m = ENTROPY_SUBSAMPLES;
    let (value, clipped) = (0..hist.n_bins)
        .into_par_iter()
        .map(|i| {
            let mass = hist.mass[i];
            if mass == 0.0 {
                return (0.0, 0.0);
            }
            let lo = -1.0 + i as f64 * w;
            let mut s = 0.0;
            let mut c = 0usize;
            for k in 0..m {
                let x = lo + (k as f64 + 0.5) * w / m as f64;
                let l = dynamics
                    .step(x)
                    .map(|(_, d)| d.abs().ln())
                    .unwrap_or(f64::NEG_INFINITY);
                if l < LOG_FLOOR {
                    c += 1;
                    s += LOG_FLOOR;
                } else {
                    s += l;
                }
            }
            (mass * s / m as f64, mass * c as f64 / m as f64)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    EntropyEstimate {
        value,
        clipped_mass: clipped,
    }
}

/// Density distances from a base parameter to parameters at increasing
/// separations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub base_mu: f64,
    pub mus: Vec<f64>,
    pub separations: Vec<f64>,
    pub distances: Vec<f64>,
    /// Distance between two seeds at the base parameter.
    pub self_distance: f64,
    pub non_decreasing: bool,
    pub entropy: f64,
    pub clipped_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub n_transient: usize,
    pub n_iter: usize,
    pub n_bins: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            n_transient: ORBIT_TRANSIENT,
            n_iter: 1_000_000,
            n_bins: 512,
            sample_size: 16,
            seed: 0,
        }
    }
}

/// Densities at `base` and at each of `others` (sorted by separation), all
/// with the same seed, plus a second-seed copy at `base`.
pub fn stability(
    template: &MapParams,
    base: f64,
    others: &[f64],
    cfg: &DensityConfig,
) -> Result<StabilityReport> {
    if others.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let density = |mu: f64, seed: u64| -> Result<DensityHistogram> {
        let p = template.with_mu(mu)?;
        srb_density(
            &p,
            cfg.n_transient,
            cfg.n_iter,
            cfg.n_bins,
            cfg.sample_size,
            seed,
        )
    };
    let h0 = density(base, cfg.seed)?;
    let h0b = density(base, cfg.seed.wrapping_add(1))?;
    let mut mus = others.to_vec();
    mus.sort_by(|a, b| (a - base).abs().total_cmp(&(b - base).abs()));
    let mut distances = Vec::with_capacity(mus.len());
    for &mu in &mus {
        distances.push(density_l1_distance(&h0, &density(mu, cfg.seed)?)?);
    }
    let ent = entropy_estimate(&template.with_mu(base)?, &h0);
    Ok(StabilityReport {
        base_mu: base,
        separations: mus.iter().map(|m| (m - base).abs()).collect(),
        non_decreasing: distances.windows(2).all(|w| w[1] >= w[0]),
        mus,
        distances,
        self_distance: density_l1_distance(&h0, &h0b)?,
        entropy: ent.value,
        clipped_mass: ent.clipped_mass,
    })
}
