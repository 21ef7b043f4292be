//! Pointwise parameter exclusion along critical orbits.
//!
//! Each check iterates the critical value `z_k = f(x_k)` on its own; the
//! orbit point `f^j(z_k)` is indexed by `j`, so `j = 0` is `z_k` itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{critical_value, nearest_critical_point};
use crate::params::{fmt_real, MapParams, ParamSpec};
use crate::partition::{default_cap, locate_raw, s_threshold, PointBinder};

/// Iterate and critical index of the first violation of a condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub iterate: usize,
    pub k: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub pass: bool,
    pub first_failure: Option<usize>,
}

impl CheckOutcome {
    fn pass() -> Self {
        CheckOutcome {
            pass: true,
            first_failure: None,
        }
    }

    fn fail(m: usize) -> Self {
        CheckOutcome {
            pass: false,
            first_failure: Some(m),
        }
    }
}

/// Result of the two sub-tests of the critical-path bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CprOutcome {
    /// Running `-log dist` sum against `M_hat * t` at free times.
    pub sum: CheckOutcome,
    /// Return-depth sum against `t / 2` at free times.
    pub depth: CheckOutcome,
    /// A binding period hit its cap (or a return could not be located);
    /// the sub-tests stop at that time.
    pub indeterminate: bool,
    /// Time at which the tests stopped being decidable.
    pub indeterminate_at: Option<usize>,
    /// Largest value of `sum_j -log dist / t` seen at free times.
    pub max_sum_ratio: f64,
    /// Number of return situations (including the one at time 1).
    pub returns: usize,
}

impl CprOutcome {
    /// Conjunction of the sub-tests; an indeterminate outcome fails under
    /// `strict`.
    pub fn pass(&self, strict: bool) -> bool {
        self.sum.pass && self.depth.pass && !(strict && self.indeterminate)
    }

    pub fn first_failure(&self) -> Option<usize> {
        match (self.sum.first_failure, self.depth.first_failure) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

fn check_index(params: &MapParams, k: i64) -> Result<()> {
    let ka = k.unsigned_abs();
    if ka < params.k0() as u64 || ka > params.k_max() as u64 {
        return Err(Error::IndexOutOfRange {
            k,
            min: params.k0(),
            max: params.k_max(),
        });
    }
    Ok(())
}

/// Orbit `w_j = f^j(z_k)` with slopes `f'(w_j)`; it stops early if a step
/// reaches the critical set, so `points.len() == slopes.len() + 1`.
#[derive(Clone, Debug)]
struct Orbit {
    points: Vec<f64>,
    slopes: Vec<f64>,
}

impl Orbit {
    fn new(params: &MapParams, k: i64, n: usize) -> Result<Self> {
        let mut w = critical_value(params, k)?;
        let mut points = Vec::with_capacity(n + 1);
        let mut slopes = Vec::with_capacity(n);
        points.push(w);
        for _ in 0..n {
            match params.step(w) {
                Ok((v, d)) => {
                    slopes.push(d);
                    points.push(v);
                    w = v;
                }
                Err(_) => break,
            }
        }
        Ok(Orbit { points, slopes })
    }
}

/// `(1a)`: `log |(f^m)'(z_k)| >= m log sigma` for every `1 <= m <= n`.
///
/// An orbit that lands on the critical set fails at that iterate.
pub fn check_derivative_growth(params: &MapParams, k: i64, n: usize) -> Result<CheckOutcome> {
    check_index(params, k)?;
    Ok(growth_on(params, &Orbit::new(params, k, n)?, n))
}

fn growth_on(params: &MapParams, orbit: &Orbit, n: usize) -> CheckOutcome {
    let ls = params.sigma().ln();
    let mut sum = 0.0;
    for m in 1..=n {
        let d = match orbit.slopes.get(m - 1) {
            Some(&d) if d != 0.0 => d,
            _ => return CheckOutcome::fail(m),
        };
        sum += d.abs().ln();
        if sum < m as f64 * ls {
            return CheckOutcome::fail(m);
        }
    }
    CheckOutcome::pass()
}

/// `(1b)`: for every `1 <= m <= n`, either `|f^m(z_k)| > eps` or the
/// distance from `f^m(z_k)` to the critical set is at least `e^{-rho m}`.
pub fn check_recurrence_condition(params: &MapParams, k: i64, n: usize) -> Result<CheckOutcome> {
    check_index(params, k)?;
    Ok(recurrence_on(params, &Orbit::new(params, k, n)?, n))
}

fn recurrence_on(params: &MapParams, orbit: &Orbit, n: usize) -> CheckOutcome {
    let e = params.eps();
    let rho = params.rho();
    for m in 1..=n {
        let Some(&z) = orbit.points.get(m) else {
            return CheckOutcome::fail(m);
        };
        if z.abs() <= e && nearest_critical_point(params, z).distance < (-rho * m as f64).exp() {
            return CheckOutcome::fail(m);
        }
    }
    CheckOutcome::pass()
}

/// Default `M_hat = 4 (-log flat)`.
pub fn default_m_hat(params: &MapParams) -> f64 {
    -4.0 * params.flat().ln()
}

/// Binding period started by the orbit point `w` if it is in a return
/// situation; `Ok(None)` when `w` is not, `Err(())` when undecidable.
fn return_at(
    params: &MapParams,
    binder: &mut PointBinder,
    w: f64,
    s_tau: f64,
) -> std::result::Result<Option<(i64, usize)>, ()> {
    if w.abs() > params.eps() || w == 0.0 {
        return if w == 0.0 { Err(()) } else { Ok(None) };
    }
    let (idx, _) = locate_raw(params, w).map_err(|_| ())?;
    if idx.is_outer() || (idx.s.abs() as f64) <= s_tau {
        return Ok(None);
    }
    let depth = idx.l.abs() + idx.s.abs();
    match binder.period(params, w, idx.l, default_cap(idx.l, idx.s)) {
        Ok(p) => Ok(Some((depth, p))),
        Err(_) => Err(()),
    }
}

/// Critical-path bound on the orbit of `z_k` up to time `n`.
///
/// Times count from `x_k`, so `f^j(z_k)` sits at time `t = j + 1`. A return
/// situation is a free time at which the orbit lies in an atom with
/// `|s| > s(tau)`; it opens a binding period `p` and times `r+1 .. r+p-1` are
/// bound. At every free time `t <= n`:
///
/// * (i) `sum_{j<t} -log dist(f^j(z_k), C) <= M_hat t`,
/// * (ii) the depths `|l_i| + |s_i|` of the returns at times `r_i <= t`
///   add up to at most `t / 2`.
///
/// The depth test runs at the return times `r_i`, `i >= 1`, and at `n`. The
/// critical value (time 1) contributes its depth but is not itself tested.
pub fn check_cpr_bound(params: &MapParams, k: i64, n: usize, m_hat: f64) -> Result<CprOutcome> {
    check_index(params, k)?;
    if m_hat.is_nan() || m_hat <= 0.0 {
        return Err(Error::Precondition(format!(
            "M_hat must be positive, got {m_hat}"
        )));
    }
    Ok(cpr_on(params, &Orbit::new(params, k, n)?, n, m_hat))
}

fn cpr_on(params: &MapParams, orbit: &Orbit, n: usize, m_hat: f64) -> CprOutcome {
    let s_tau = s_threshold(params);
    let mut out = CprOutcome {
        sum: CheckOutcome::pass(),
        depth: CheckOutcome::pass(),
        indeterminate: false,
        indeterminate_at: None,
        max_sum_ratio: 0.0,
        returns: 0,
    };
    let mut binder = PointBinder::new();
    let mut log_sum = 0.0;
    let mut depth_sum: i64 = 0;
    // time strictly below which the orbit is bound
    let mut bound_until = 0usize;
    for t in 1..=n {
        let Some(&w) = orbit.points.get(t - 1) else {
            out.sum = out.sum_fail(t);
            out.depth = out.depth_fail(t);
            return out;
        };
        let free = t >= bound_until;
        let mut returned = false;
        if free {
            match return_at(params, &mut binder, w, s_tau) {
                Ok(Some((d, p))) => {
                    depth_sum += d;
                    out.returns += 1;
                    bound_until = t + p;
                    returned = true;
                }
                Ok(None) => {}
                Err(()) => {
                    out.indeterminate = true;
                    out.indeterminate_at = Some(t);
                    return out;
                }
            }
        }
        let dist = nearest_critical_point(params, w).distance;
        if dist == 0.0 {
            out.sum = out.sum_fail(t);
            out.depth = out.depth_fail(t);
            return out;
        }
        log_sum -= dist.ln();
        if free {
            out.max_sum_ratio = out.max_sum_ratio.max(log_sum / t as f64);
            if out.sum.pass && log_sum > m_hat * t as f64 {
                out.sum = CheckOutcome::fail(t);
            }
        }
        if out.depth.pass && ((returned && t > 1) || t == n) && 2 * depth_sum > t as i64 {
            out.depth = CheckOutcome::fail(t);
        }
        if !out.sum.pass && !out.depth.pass {
            return out;
        }
    }
    out
}

impl CprOutcome {
    fn sum_fail(&self, t: usize) -> CheckOutcome {
        if self.sum.pass {
            CheckOutcome::fail(t)
        } else {
            self.sum
        }
    }

    fn depth_fail(&self, t: usize) -> CheckOutcome {
        if self.depth.pass {
            CheckOutcome::fail(t)
        } else {
            self.depth
        }
    }
}

/// Outcome of one condition over every tested critical index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub pass: bool,
    /// Earliest failure over the tested indices.
    pub first_failure: Option<Failure>,
}

impl ConditionVerdict {
    fn new() -> Self {
        ConditionVerdict {
            pass: true,
            first_failure: None,
        }
    }

    fn record(&mut self, k: i64, iterate: Option<usize>) {
        if let Some(m) = iterate {
            self.pass = false;
            if self.first_failure.is_none_or(|f| m < f.iterate) {
                self.first_failure = Some(Failure { iterate: m, k });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionVerdict {
    pub mu: f64,
    pub horizon_n: usize,
    pub cond_1a: ConditionVerdict,
    pub cond_1b: ConditionVerdict,
    pub cond_cpr: ConditionVerdict,
    /// Sum sub-test of the critical-path bound.
    pub cpr_sum: ConditionVerdict,
    /// Depth sub-test of the critical-path bound.
    pub cpr_depth: ConditionVerdict,
    /// Some critical index had an undecidable binding period.
    pub cpr_indeterminate: bool,
    pub survived: bool,
}

/// Run all three conditions on `params` for `k0 <= |k| <= k_test_max`.
pub fn evaluate(
    params: &MapParams,
    n: usize,
    m_hat: f64,
    k_test_max: u32,
    strict: bool,
) -> Result<ExclusionVerdict> {
    let k0 = params.k0() as i64;
    let kmax = k_test_max as i64;
    if kmax < k0 || k_test_max > params.k_max() {
        return Err(Error::Precondition(format!(
            "k_test_max = {k_test_max} outside [{}, {}]",
            params.k0(),
            params.k_max()
        )));
    }
    if m_hat.is_nan() || m_hat <= 0.0 {
        return Err(Error::Precondition(format!(
            "M_hat must be positive, got {m_hat}"
        )));
    }
    let mut a = ConditionVerdict::new();
    let mut b = ConditionVerdict::new();
    let mut c = ConditionVerdict::new();
    let mut cs = ConditionVerdict::new();
    let mut cd = ConditionVerdict::new();
    let mut indeterminate = false;
    for ka in k0..=kmax {
        for k in [ka, -ka] {
            // one orbit serves all three checks; none reads another's result
            let orbit = Orbit::new(params, k, n)?;
            a.record(k, growth_on(params, &orbit, n).first_failure);
            b.record(k, recurrence_on(params, &orbit, n).first_failure);
            let cpr = cpr_on(params, &orbit, n, m_hat);
            cs.record(k, cpr.sum.first_failure);
            cd.record(k, cpr.depth.first_failure);
            c.record(k, cpr.first_failure());
            if cpr.indeterminate {
                indeterminate = true;
                if strict {
                    c.record(k, cpr.indeterminate_at);
                }
            }
        }
    }
    Ok(ExclusionVerdict {
        mu: params.mu(),
        horizon_n: n,
        survived: a.pass && b.pass && c.pass,
        cond_1a: a,
        cond_1b: b,
        cond_cpr: c,
        cpr_sum: cs,
        cpr_depth: cd,
        cpr_indeterminate: indeterminate,
    })
}

/// Counts of first-failure iterates in dyadic bins: bin `i` holds failures
/// with iterate in `[2^i, 2^{i+1})`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub failures: usize,
    pub bins: Vec<usize>,
}

impl FailureHistogram {
    fn add(&mut self, f: Option<Failure>) {
        if let Some(f) = f {
            self.failures += 1;
            let i = (usize::BITS - 1 - f.iterate.max(1).leading_zeros()) as usize;
            if self.bins.len() <= i {
                self.bins.resize(i + 1, 0);
            }
            self.bins[i] += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub horizon_n: usize,
    pub m_hat: f64,
    pub k_test_max: u32,
    pub strict: bool,
}

impl ScanConfig {
    /// Horizon `10^4`, `M_hat = 4(-log flat)`, `k_test_max = k0 + 10` (clamped
    /// to `k_max`).
    pub fn default_for(params: &MapParams) -> Self {
        ScanConfig {
            horizon_n: 10_000,
            m_hat: default_m_hat(params),
            k_test_max: (params.k0() + 10).min(params.k_max()),
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub grid: Vec<f64>,
    pub verdicts: Vec<ExclusionVerdict>,
    pub survivor_fraction: f64,
    pub config: ScanConfig,
    pub params: ParamSpec,
    pub histogram_1a: FailureHistogram,
    pub histogram_1b: FailureHistogram,
    pub histogram_cpr: FailureHistogram,
    pub indeterminate: usize,
}

impl ScanReport {
    pub fn survivors(&self) -> Vec<f64> {
        self.verdicts
            .iter()
            .filter(|v| v.survived)
            .map(|v| v.mu)
            .collect()
    }

    /// One survivor per line in shortest round-trip form.
    pub fn survivors_text(&self) -> String {
        let mut s = String::new();
        for mu in self.survivors() {
            s.push_str(&fmt_real(mu));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Parse a survivors file: one `mu` per line, blank lines and `#` comments
/// ignored.
pub fn parse_survivors(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad survivor line {l:?}: {e}")))
        })
        .collect()
}

/// `count` equispaced points on `[eps^2, eps]`, mirrored to the negative
/// side when `negative` is set.
pub fn default_grid(params: &MapParams, count: usize, negative: bool) -> Vec<f64> {
    let e = params.eps();
    let lo = e * e;
    let sign = if negative { -1.0 } else { 1.0 };
    match count {
        0 => Vec::new(),
        1 => vec![sign * lo],
        _ => (0..count)
            .map(|i| sign * (lo + (e - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Evaluate every grid point; verdicts keep the grid order.
pub fn scan(template: &MapParams, mu_grid: &[f64], cfg: &ScanConfig) -> Result<ScanReport> {
    if mu_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let e = template.eps();
    for &mu in mu_grid {
        let a = mu.abs();
        if !(a >= e * e * (1.0 - 1e-12) && a <= e * (1.0 + 1e-12)) {
            return Err(Error::Precondition(format!(
                "mu = {mu} outside [-eps, -eps^2] ∪ [eps^2, eps]"
            )));
        }
    }
    if cfg.horizon_n < 1000 {
        return Err(Error::Precondition(format!(
            "horizon_n = {} below 1000",
            cfg.horizon_n
        )));
    }
    let verdicts = mu_grid
        .par_iter()
        .map(|&mu| {
            let p = template.with_mu(mu)?;
            evaluate(&p, cfg.horizon_n, cfg.m_hat, cfg.k_test_max, cfg.strict)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h1a = FailureHistogram::default();
    let mut h1b = FailureHistogram::default();
    let mut hc = FailureHistogram::default();
    for v in &verdicts {
        h1a.add(v.cond_1a.first_failure);
        h1b.add(v.cond_1b.first_failure);
        hc.add(v.cond_cpr.first_failure);
    }
    let survivors = verdicts.iter().filter(|v| v.survived).count();
    Ok(ScanReport {
        grid: mu_grid.to_vec(),
        survivor_fraction: survivors as f64 / mu_grid.len() as f64,
        indeterminate: verdicts.iter().filter(|v| v.cpr_indeterminate).count(),
        verdicts,
        config: cfg.clone(),
        params: template.to_spec(),
        histogram_1a: h1a,
        histogram_1b: h1b,
        histogram_cpr: hc,
    })
}
