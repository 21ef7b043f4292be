//! Orbit statistics: Lyapunov sums, truncated recurrence averages, the
//! first-success times `E(x)` and `R(x)`, and tail-set estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{nearest_critical_point, reduce};
use crate::params::{fmt_real, MapParams};

/// Orbits closer than this to the critical set count as singular.
pub const SINGULAR_TOL: f64 = 1e-15;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `count` points of a Kronecker sequence on `[-1, 1)` with a seeded offset.
pub fn kronecker_starts(seed: u64, count: usize) -> Vec<f64> {
    let u0: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    (0..count)
        .map(|i| {
            let u = (u0 + (i as f64 + 1.0) * GOLDEN).fract();
            2.0 * u - 1.0
        })
        .collect()
}

/// One step with the singularity test; returns `(f(z), f'(z), dist(z, C))`.
#[inline]
fn checked_step(params: &MapParams, z: f64, iterate: usize) -> Result<(f64, f64, f64)> {
    let d = nearest_critical_point(params, z).distance;
    if d < SINGULAR_TOL {
        return Err(Error::SingularOrbit { iterate });
    }
    let (y, fp) = params
        .step(z)
        .map_err(|_| Error::SingularOrbit { iterate })?;
    Ok((y, fp, d))
}

#[inline]
fn flat_term(params: &MapParams, d: f64) -> f64 {
    if d <= params.flat() {
        -d.ln()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitStats {
    pub x0: f64,
    /// Iterates taken; short of the request when the orbit hit the
    /// critical set.
    pub n: usize,
    /// `sum_{k<n} log |f'(f^k x0)|`.
    pub log_deriv_sum: f64,
    /// `sum_{k<n} -log dist_flat(f^k x0, C)`.
    pub trunc_dist_sum: f64,
    pub min_dist: f64,
    pub hit_singularity: bool,
    /// `f^n(x0)`, where a continuation would start.
    pub end: f64,
}

pub fn orbit_stats(params: &MapParams, x0: f64, n: usize) -> OrbitStats {
    let mut st = OrbitStats {
        x0,
        n: 0,
        log_deriv_sum: 0.0,
        trunc_dist_sum: 0.0,
        min_dist: f64::INFINITY,
        hit_singularity: false,
        end: reduce(x0),
    };
    let mut z = st.end;
    for k in 0..n {
        match checked_step(params, z, k) {
            Ok((y, fp, d)) => {
                st.log_deriv_sum += fp.abs().ln();
                st.trunc_dist_sum += flat_term(params, d);
                st.min_dist = st.min_dist.min(d);
                z = y;
                st.n = k + 1;
                st.end = z;
            }
            Err(_) => {
                st.hit_singularity = true;
                st.min_dist = 0.0;
                break;
            }
        }
    }
    st
}

fn require_positive(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    Ok(())
}

/// `(1/n) sum_{k<n} log |f'(f^k x0)|`.
pub fn lyapunov_estimate(params: &MapParams, x0: f64, n: usize) -> Result<f64> {
    require_positive(n)?;
    let st = orbit_stats(params, x0, n);
    if st.hit_singularity {
        return Err(Error::SingularOrbit { iterate: st.n });
    }
    Ok(st.log_deriv_sum / n as f64)
}

/// `C_n^flat(x0) = (1/n) sum_{k<n} -log dist_flat(f^k x0, C)`.
pub fn recurrence_average(params: &MapParams, x0: f64, n: usize) -> Result<f64> {
    require_positive(n)?;
    let st = orbit_stats(params, x0, n);
    if st.hit_singularity {
        return Err(Error::SingularOrbit { iterate: st.n });
    }
    Ok(st.trunc_dist_sum / n as f64)
}

/// First-success times of one orbit over the horizon `n_max`; `None` means
/// the condition still failed at `n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstSuccess {
    pub expansion: Option<usize>,
    pub recurrence: Option<usize>,
}

/// Both first-success times from a single pass:
///
/// * `E`: least `N` with `log |(f^n)'(x0)| > (n/3) log sigma` for all
///   `N <= n <= n_max`,
/// * `R`: least `N` with `C_n^flat(x0) < delta` for all `N <= n <= n_max`.
pub fn first_success(params: &MapParams, x0: f64, n_max: usize) -> Result<FirstSuccess> {
    Ok(success_pass(params, x0, n_max)?.0)
}

/// First-success times together with the two sums at `n_max`.
fn success_pass(params: &MapParams, x0: f64, n_max: usize) -> Result<(FirstSuccess, f64, f64)> {
    require_positive(n_max)?;
    let ls3 = params.sigma().ln() / 3.0;
    let delta = params.delta();
    let mut z = reduce(x0);
    let mut ld = 0.0;
    let mut cf = 0.0;
    let (mut last_e, mut last_r) = (0usize, 0usize);
    for n in 1..=n_max {
        let (y, fp, d) = checked_step(params, z, n - 1)?;
        ld += fp.abs().ln();
        cf += flat_term(params, d);
        if ld <= n as f64 * ls3 {
            last_e = n;
        }
        if cf >= delta * n as f64 {
            last_r = n;
        }
        z = y;
    }
    let first = |last: usize| if last == n_max { None } else { Some(last + 1) };
    let fs = FirstSuccess {
        expansion: first(last_e),
        recurrence: first(last_r),
    };
    Ok((fs, ld, cf))
}

pub fn expansion_time(params: &MapParams, x0: f64, n_max: usize) -> Result<Option<usize>> {
    Ok(first_success(params, x0, n_max)?.expansion)
}

pub fn recurrence_time(params: &MapParams, x0: f64, n_max: usize) -> Result<Option<usize>> {
    Ok(first_success(params, x0, n_max)?.recurrence)
}

/// Per-start record of the ensemble experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x0: f64,
    pub expansion: Option<usize>,
    pub recurrence: Option<usize>,
    pub lyapunov: f64,
    pub c_n_flat: f64,
}

/// Records for every start whose orbit stays off the critical set for
/// `n_max` iterates, plus the number discarded. `lyapunov` and `c_n_flat`
/// are taken at `n = n_max`.
pub fn sample_records(
    params: &MapParams,
    starts: &[f64],
    n_max: usize,
) -> Result<(Vec<SampleRecord>, usize)> {
    require_positive(n_max)?;
    let rows: Vec<Option<SampleRecord>> = starts
        .par_iter()
        .map(|&x0| {
            let (fs, ld, cf) = success_pass(params, x0, n_max).ok()?;
            Some(SampleRecord {
                x0,
                expansion: fs.expansion,
                recurrence: fs.recurrence,
                lyapunov: ld / n_max as f64,
                c_n_flat: cf / n_max as f64,
            })
        })
        .collect();
    let discarded = rows.iter().filter(|r| r.is_none()).count();
    Ok((rows.into_iter().flatten().collect(), discarded))
}

/// CSV with columns `x0,E,R,lyapunov,C_n_flat`; exceeded times are written
/// as `exceeded`.
pub fn records_csv(rows: &[SampleRecord]) -> String {
    let t = |v: Option<usize>| v.map_or_else(|| "exceeded".to_string(), |n| n.to_string());
    let mut s = String::from("x0,E,R,lyapunov,C_n_flat\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_real(r.x0),
            t(r.expansion),
            t(r.recurrence),
            fmt_real(r.lyapunov),
            fmt_real(r.c_n_flat)
        ));
    }
    s
}

/// Least-squares line `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some((a, b, r2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n_grid: Vec<usize>,
    /// Fraction of retained samples with `E > n` or `R > n`.
    pub fractions: Vec<f64>,
    /// `xi_3` in `fraction ~ C e^{-xi_3 n}`; NaN when fewer than two grid
    /// points have positive fractions.
    pub fit_rate: f64,
    pub fit_intercept: f64,
    pub fit_r2: f64,
    /// Grid points left out of the fit because their fraction is zero.
    pub zero_fraction_n: Vec<usize>,
    pub sample_size: usize,
    pub discarded_count: usize,
    pub n_max: usize,
    pub seed: u64,
}

/// Tail fractions from existing records.
pub fn tail_from_records(
    rows: &[SampleRecord],
    n_grid: &[usize],
) -> (Vec<f64>, f64, f64, f64, Vec<usize>) {
    let total = rows.len().max(1) as f64;
    let fractions: Vec<f64> = n_grid
        .iter()
        .map(|&n| {
            let gt = |v: Option<usize>| v.is_none_or(|e| e > n);
            rows.iter()
                .filter(|r| gt(r.expansion) || gt(r.recurrence))
                .count() as f64
                / total
        })
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zero = Vec::new();
    for (&n, &f) in n_grid.iter().zip(&fractions) {
        if f > 0.0 {
            xs.push(n as f64);
            ys.push(f.ln());
        } else {
            zero.push(n);
        }
    }
    let (a, b, r2) = linear_fit(&xs, &ys).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    (fractions, -b, a, r2, zero)
}

/// Empirical `lambda(Gamma_n)` on `n_grid` from `sample_size` seeded
/// Kronecker starts, with `E` and `R` checked up to `n_max`.
pub fn tail_measure(
    params: &MapParams,
    n_grid: &[usize],
    sample_size: usize,
    seed: u64,
    n_max: usize,
) -> Result<TailEstimate> {
    if sample_size < 100 {
        return Err(Error::Precondition(format!(
            "sample_size = {sample_size} below 100"
        )));
    }
    if n_grid.is_empty() || n_grid.iter().any(|&n| n > n_max) {
        return Err(Error::Precondition(
            "n_grid must be non-empty and within n_max".into(),
        ));
    }
    let starts = kronecker_starts(seed, sample_size);
    let (rows, discarded) = sample_records(params, &starts, n_max)?;
    let (fractions, rate, intercept, r2, zero) = tail_from_records(&rows, n_grid);
    Ok(TailEstimate {
        n_grid: n_grid.to_vec(),
        fractions,
        fit_rate: rate,
        fit_intercept: intercept,
        fit_r2: r2,
        zero_fraction_n: zero,
        sample_size,
        discarded_count: discarded,
        n_max,
        seed,
    })
}

/// Share of starts whose finite-time exponent at `n` reaches `log(sigma)/3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSummary {
    pub n: usize,
    pub samples: usize,
    pub discarded: usize,
    pub fraction: f64,
    pub threshold: f64,
    pub mean_lyapunov: f64,
    pub min_lyapunov: f64,
}

pub fn expansion_statistic(
    params: &MapParams,
    sample_size: usize,
    n: usize,
    seed: u64,
) -> Result<ExpansionSummary> {
    require_positive(n)?;
    let starts = kronecker_starts(seed, sample_size);
    let vals: Vec<Option<f64>> = starts
        .par_iter()
        .map(|&x| lyapunov_estimate(params, x, n).ok())
        .collect();
    let good: Vec<f64> = vals.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(Error::AllOrbitsSingular);
    }
    let thr = params.sigma().ln() / 3.0;
    let pass = good.iter().filter(|&&v| v >= thr).count();
    Ok(ExpansionSummary {
        n,
        samples: good.len(),
        discarded: vals.len() - good.len(),
        fraction: pass as f64 / good.len() as f64,
        threshold: thr,
        mean_lyapunov: good.iter().sum::<f64>() / good.len() as f64,
        min_lyapunov: good.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
