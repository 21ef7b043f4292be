//! Map constants and analysis thresholds.
//!
//! A [`MapParams`] is built from a [`ParamSpec`] (the user-facing knobs) and
//! carries every derived constant of the family: the critical lattice base
//! `xhat`, the inflection base `zhat`, the critical radius `eps`, the gluing
//! points `yhat < ytilde` and the quintic blend between the two branches.
//! It is immutable once built; use [`MapParams::with_mu`] to move along the
//! parameter line.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when a config file carries derived constants.
const DERIVED_TOL: f64 = 1e-12;

/// Default amplitude of the periodic correction to the outer map. An exactly
/// linear `degree * z mod 2` discards about `log2(degree)` mantissa bits per
/// iterate in floating point and collapses orbits onto dyadic rationals.
pub const DEFAULT_OUTER_WOBBLE: f64 = 0.5;

/// Grid resolution for the `yhat` search and the blend monotonicity check.
const SEARCH_GRID: usize = 4096;

/// User-facing parameters. Derived quantities are optional: when present in a
/// config file they are checked against the recomputed values (`eps`, `xhat`,
/// `zhat`) or taken as overrides (`yhat`, `ytilde`, `blend_width`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k0: u32,
    pub sigma_tilde: f64,
    pub degree: u32,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub tau: f64,
    pub flat: f64,
    pub delta: f64,
    pub k_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend_width: Option<f64>,
    /// Amplitude `b` of the periodic term in the outer map
    /// `degree * z + (b / pi) sin(pi z)`; defaults to [`DEFAULT_OUTER_WOBBLE`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_wobble: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yhat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ytilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zhat: Option<f64>,
}

impl ParamSpec {
    /// Reference suite with `a = 1, alpha = 1/2, beta = 1`.
    ///
    /// `k0 = 1` keeps the critical region wide enough (`eps ~ 0.027`) to
    /// matter for the statistics. At this `eps` the recurrence condition only
    /// lets parameters through for fairly large `rho`, hence `rho = 0.5` and
    /// `tau = 0.6 > rho`.
    pub fn reference_beta1() -> Self {
        ParamSpec {
            a: 1.0,
            alpha: 0.5,
            beta: 1.0,
            k0: 1,
            sigma_tilde: 4.5,
            degree: 6,
            mu: 0.0,
            sigma: 1.5,
            rho: 0.5,
            tau: 0.6,
            flat: (-10.0f64).exp(),
            delta: 0.1,
            k_max: 61,
            blend_width: None,
            outer_wobble: None,
            yhat: None,
            ytilde: None,
            eps: None,
            xhat: None,
            zhat: None,
        }
    }

    /// Reference suite with `beta = 3`, where the free-return threshold
    /// `s(tau)` exceeds 1.
    pub fn reference_beta3() -> Self {
        ParamSpec {
            beta: 3.0,
            k0: 9,
            tau: 0.15,
            rho: 0.01,
            k_max: 69,
            ..Self::reference_beta1()
        }
    }

    pub fn build(&self) -> Result<MapParams> {
        MapParams::new(self)
    }
}

/// Quintic Hermite interpolant on `[x0, x1]` matching value, slope and
/// curvature at both ends.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Quintic {
    pub x0: f64,
    pub h: f64,
    /// Coefficients of the polynomial in `t = (x - x0) / h`.
    pub c: [f64; 6],
}

impl Quintic {
    fn new(x0: f64, x1: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        let h = x1 - x0;
        let (p0, v0, a0) = (left[0], left[1] * h, left[2] * h * h);
        let (p1, v1, a1) = (right[0], right[1] * h, right[2] * h * h);
        let c0 = p0;
        let c1 = v0;
        let c2 = a0 / 2.0;
        // Remaining three coefficients solve the t = 1 conditions.
        let r0 = p1 - (c0 + c1 + c2);
        let r1 = v1 - (c1 + 2.0 * c2);
        let r2 = a1 - 2.0 * c2;
        let c3 = 10.0 * r0 - 4.0 * r1 + 0.5 * r2;
        let c4 = -15.0 * r0 + 7.0 * r1 - r2;
        let c5 = 6.0 * r0 - 3.0 * r1 + 0.5 * r2;
        Quintic {
            x0,
            h,
            c: [c0, c1, c2, c3, c4, c5],
        }
    }

    /// Value and the first three derivatives with respect to `x`.
    pub fn jet(&self, x: f64) -> [f64; 4] {
        let t = (x - self.x0) / self.h;
        let c = &self.c;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let d1 = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        let d3 = 6.0 * c[3] + t * (24.0 * c[4] + t * 60.0 * c[5]);
        let h = self.h;
        [p, d1 / h, d2 / (h * h), d3 / (h * h * h)]
    }
}

/// Immutable, validated constants of one member `f_mu` of the family.
#[derive(Clone, Debug, PartialEq)]
pub struct MapParams {
    pub(crate) a: f64,
    pub(crate) alpha: f64,
    pub(crate) beta: f64,
    pub(crate) k0: u32,
    pub(crate) eps: f64,
    pub(crate) xhat: f64,
    pub(crate) zhat: f64,
    pub(crate) yhat: f64,
    pub(crate) ytilde: f64,
    pub(crate) sigma_tilde: f64,
    pub(crate) degree: u32,
    pub(crate) mu: f64,
    pub(crate) sigma: f64,
    pub(crate) rho: f64,
    pub(crate) tau: f64,
    pub(crate) flat: f64,
    pub(crate) delta: f64,
    pub(crate) k_max: u32,
    pub(crate) blend_width: f64,
    pub(crate) outer_wobble: f64,

    pub(crate) ln_xhat: f64,
    pub(crate) ln_zhat: f64,
    /// `e^{-pi/beta}`, the lattice ratio.
    pub(crate) q: f64,
    /// `sqrt(alpha^2 + beta^2)`.
    pub(crate) r1: f64,
    /// `sqrt(A^2 + B^2)` with `A = alpha(alpha-1) - beta^2`, `B = beta(2 alpha - 1)`.
    pub(crate) r2: f64,
    pub(crate) cos_psi: f64,
    pub(crate) sin_psi: f64,
    pub(crate) blend: Quintic,
}

macro_rules! getters {
    ($($name:ident : $ty:ty),* $(,)?) => {
        $(
            #[inline]
            pub fn $name(&self) -> $ty {
                self.$name
            }
        )*
    };
}

impl MapParams {
    getters!(
        a: f64, alpha: f64, beta: f64, k0: u32, eps: f64, xhat: f64, zhat: f64,
        yhat: f64, ytilde: f64, sigma_tilde: f64, degree: u32, mu: f64, sigma: f64,
        rho: f64, tau: f64, flat: f64, delta: f64, k_max: u32, blend_width: f64,
        outer_wobble: f64,
    );

    /// Lattice ratio `e^{-pi/beta}` between consecutive critical points.
    #[inline]
    pub fn lattice_ratio(&self) -> f64 {
        self.q
    }

    pub fn new(spec: &ParamSpec) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let ParamSpec {
            a,
            alpha,
            beta,
            k0,
            sigma_tilde,
            degree,
            mu,
            sigma,
            rho,
            tau,
            flat,
            delta,
            k_max,
            ..
        } = spec.clone();

        for (name, v) in [
            ("a", a),
            ("alpha", alpha),
            ("beta", beta),
            ("sigma_tilde", sigma_tilde),
            ("mu", mu),
            ("sigma", sigma),
            ("rho", rho),
            ("tau", tau),
            ("flat", flat),
            ("delta", delta),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if a <= 0.0 {
            return bad(format!("a must be positive, got {a}"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return bad(format!("alpha must lie in (0,1), got {alpha}"));
        }
        if beta <= 0.0 {
            return bad(format!("beta must be positive, got {beta}"));
        }
        if k0 < 1 {
            return bad("k0 must be at least 1".into());
        }
        if k_max < k0 {
            return bad(format!("k_max = {k_max} is below k0 = {k0}"));
        }
        if sigma_tilde <= 4.0 {
            return bad(format!("sigma_tilde must exceed 4, got {sigma_tilde}"));
        }
        if (degree as f64) < sigma_tilde.ceil() + 1.0 {
            return bad(format!(
                "degree {degree} is below ceil(sigma_tilde) + 1 = {}",
                sigma_tilde.ceil() + 1.0
            ));
        }
        if !(sigma > 1.0 && sigma < sigma_tilde.sqrt()) {
            return bad(format!(
                "sigma must lie in (1, sqrt(sigma_tilde)), got {sigma}"
            ));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return bad(format!("tau must lie in (0,1), got {tau}"));
        }
        if !(rho > 0.0 && rho < tau && rho < LN_2) {
            return bad(format!(
                "rho must satisfy 0 < rho < min(tau, log 2), got {rho}"
            ));
        }
        if flat <= 0.0 || delta <= 0.0 {
            return bad("flat and delta must be positive".into());
        }

        let q = (-PI / beta).exp();
        let psi = (beta / alpha).atan();
        let ln_xhat = -psi / beta;
        let big_a = alpha * (alpha - 1.0) - beta * beta;
        let big_b = beta * (2.0 * alpha - 1.0);
        let ln_zhat = (big_b / (-big_a)).atan() / beta;
        let xhat = ln_xhat.exp();
        let zhat = ln_zhat.exp();
        let r1 = alpha.hypot(beta);
        let r2 = big_a.hypot(big_b);

        let x_k0 = lattice_point(ln_xhat, beta, k0 as i64);
        let eps = 2.0 * x_k0 / (1.0 + q);
        if eps >= 0.5 {
            return bad(format!("eps = {eps} must be below 1/2 (increase k0)"));
        }

        for (name, given, derived) in [
            ("eps", spec.eps, eps),
            ("xhat", spec.xhat, xhat),
            ("zhat", spec.zhat, zhat),
        ] {
            if let Some(g) = given {
                if ((g - derived) / derived).abs() > DERIVED_TOL {
                    return bad(format!(
                        "{name} = {g} disagrees with derived value {derived}"
                    ));
                }
            }
        }

        let blend_width = spec.blend_width.unwrap_or(eps);
        if blend_width <= 0.0 || eps + blend_width >= 1.0 {
            return bad(format!(
                "blend_width = {blend_width} must lie in (0, 1 - eps)"
            ));
        }
        if mu != 0.0 {
            let m = mu.abs();
            if m < eps * eps * (1.0 - 1e-12) || m > eps * (1.0 + 1e-12) {
                return bad(format!(
                    "|mu| = {m} outside [eps^2, eps] = [{}, {eps}]",
                    eps * eps
                ));
            }
        }
        let outer_wobble = spec.outer_wobble.unwrap_or(DEFAULT_OUTER_WOBBLE);
        if !(outer_wobble >= 0.0 && (degree as f64) - outer_wobble > sigma_tilde) {
            return bad(format!(
                "outer_wobble = {outer_wobble} must lie in [0, degree - sigma_tilde)"
            ));
        }
        if degree as f64 - outer_wobble - 2.0 * mu.abs() / blend_width < 2.0 {
            return bad("ramp would push the outer derivative below 2".into());
        }

        let mut p = MapParams {
            a,
            alpha,
            beta,
            k0,
            eps,
            xhat,
            zhat,
            yhat: 0.0,
            ytilde: 0.0,
            sigma_tilde,
            degree,
            mu,
            sigma,
            rho,
            tau,
            flat,
            delta,
            k_max,
            blend_width,
            outer_wobble,
            ln_xhat,
            ln_zhat,
            q,
            r1,
            r2,
            cos_psi: alpha / r1,
            sin_psi: beta / r1,
            blend: Quintic {
                x0: 0.0,
                h: 1.0,
                c: [0.0; 6],
            },
        };

        if p.local_kind(x_k0) != crate::map::CriticalKind::Minimum {
            return bad(format!(
                "x_k0 is not a local minimum for k0 = {k0} (k0 must be odd)"
            ));
        }

        // Window for the inner gluing point.
        let (lo, hi) = p.yhat_window();
        if hi <= lo {
            return bad(format!(
                "yhat window ({lo}, {hi}) is empty: eps^tau too close to 1 (raise tau or k0)"
            ));
        }
        let yhat = match spec.yhat {
            Some(y) => y,
            None => p.search_yhat(lo, hi),
        };
        if !(yhat > lo && yhat < hi) {
            return bad(format!(
                "yhat = {yhat} outside the admissible window ({lo}, {hi})"
            ));
        }
        let ytilde = spec.ytilde.unwrap_or(0.5 * (yhat + eps));
        if !(ytilde > yhat && ytilde < eps) {
            return bad(format!("ytilde = {ytilde} must lie in (yhat, eps)"));
        }
        p.yhat = yhat;
        p.ytilde = ytilde;
        let left = p.fhat_jet(yhat);
        let right = p.outer_jet(ytilde);
        p.blend = Quintic::new(
            yhat,
            ytilde,
            [left[0], left[1], left[2]],
            [right[0], right[1], right[2]],
        );
        p.check_blend_monotone()?;
        Ok(p)
    }

    /// Same constants with a different parameter `mu`.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut spec = self.to_spec();
        spec.mu = mu;
        MapParams::new(&spec)
    }

    /// `(x_k0, 2 (1 - eps^tau) / (1 + e^{-pi/beta}) x_k0)`.
    pub fn yhat_window(&self) -> (f64, f64) {
        let x_k0 = self.lattice(self.ln_xhat, self.k0 as i64);
        let hi = 2.0 * (1.0 - self.eps.powf(self.tau)) / (1.0 + self.q) * x_k0;
        (x_k0, hi)
    }

    fn search_yhat(&self, lo: f64, hi: f64) -> f64 {
        let mut best = (lo, 0.0);
        for i in 1..SEARCH_GRID {
            let y = lo + (hi - lo) * i as f64 / SEARCH_GRID as f64;
            let d = self.fhat_jet(y)[1].abs();
            if d > best.1 {
                best = (y, d);
            }
        }
        best.0
    }

    fn check_blend_monotone(&self) -> Result<()> {
        let s0 = self.blend.jet(self.yhat)[1].signum();
        for i in 0..=SEARCH_GRID {
            let x = self.yhat + (self.ytilde - self.yhat) * i as f64 / SEARCH_GRID as f64;
            let d = self.blend.jet(x)[1];
            if d * s0 <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "blend on [yhat, ytilde] is not monotone (slope {d} at {x})"
                )));
            }
        }
        Ok(())
    }

    /// Jet of the outer map `degree * t + (b / pi) sin(pi t)`.
    #[inline]
    pub(crate) fn outer_jet(&self, t: f64) -> [f64; 4] {
        let d = self.degree as f64;
        let b = self.outer_wobble;
        let (s, c) = (PI * t).sin_cos();
        [d * t + b / PI * s, d + b * c, -b * PI * s, -b * PI * PI * c]
    }

    #[inline]
    pub(crate) fn lattice(&self, ln_base: f64, k: i64) -> f64 {
        lattice_point(ln_base, self.beta, k)
    }

    /// Round-trip representation, derived values included.
    pub fn to_spec(&self) -> ParamSpec {
        ParamSpec {
            a: self.a,
            alpha: self.alpha,
            beta: self.beta,
            k0: self.k0,
            sigma_tilde: self.sigma_tilde,
            degree: self.degree,
            mu: self.mu,
            sigma: self.sigma,
            rho: self.rho,
            tau: self.tau,
            flat: self.flat,
            delta: self.delta,
            k_max: self.k_max,
            blend_width: Some(self.blend_width),
            outer_wobble: Some(self.outer_wobble),
            yhat: Some(self.yhat),
            ytilde: Some(self.ytilde),
            eps: Some(self.eps),
            xhat: Some(self.xhat),
            zhat: Some(self.zhat),
        }
    }

    /// Flat `key = value` config text. Reals are written with the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let reals = [
            ("a", self.a),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eps", self.eps),
            ("xhat", self.xhat),
            ("zhat", self.zhat),
            ("yhat", self.yhat),
            ("ytilde", self.ytilde),
            ("sigma_tilde", self.sigma_tilde),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("tau", self.tau),
            ("flat", self.flat),
            ("delta", self.delta),
            ("blend_width", self.blend_width),
            ("outer_wobble", self.outer_wobble),
        ];
        let ints = [
            ("k0", self.k0),
            ("degree", self.degree),
            ("k_max", self.k_max),
        ];
        for (k, v) in ints {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, v) in reals {
            let _ = writeln!(s, "{k} = {}", fmt_real(v));
        }
        s
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let spec: ParamSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        MapParams::new(&spec)
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }
}

/// `exp(ln_base - k pi / beta)`. Every lattice position in the crate goes
/// through this one expression so that phase anchoring sees identical bits.
#[inline]
pub(crate) fn lattice_point(ln_base: f64, beta: f64, k: i64) -> f64 {
    (ln_base - (k as f64) * PI / beta).exp()
}

/// Shortest round-trip decimal, always carrying a decimal point or exponent so
/// that TOML reads it back as a float.
pub fn fmt_real(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_suites_build() {
        let p1 = ParamSpec::reference_beta1().build().unwrap();
        let p3 = ParamSpec::reference_beta3().build().unwrap();
        for p in [&p1, &p3] {
            assert!(p.xhat > 0.0 && p.eps < 0.5);
            let (lo, hi) = p.yhat_window();
            assert!(p.yhat > lo && p.yhat < hi);
            assert!(p.ytilde > p.yhat && p.ytilde < p.eps);
        }
    }

    #[test]
    fn derived_constants_match_closed_forms() {
        let p = ParamSpec::reference_beta1().build().unwrap();
        let xhat = (-(1.0f64 / 0.5).atan()).exp();
        assert!((p.xhat - xhat).abs() < 1e-15);
        // alpha = 1/2 makes B = 0, so zhat = 1.
        assert!((p.zhat - 1.0).abs() < 1e-15);
        let x1 = p.lattice(p.ln_xhat, 1);
        assert!((p.eps - 2.0 * x1 / (1.0 + (-PI).exp())).abs() < 1e-17);
    }

    #[test]
    fn config_round_trip_is_exact() {
        let p = ParamSpec::reference_beta3().build().unwrap();
        let p = p.with_mu(p.eps() * 0.123456789).unwrap();
        let text = p.to_config_string();
        let back = MapParams::from_config_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut s = ParamSpec::reference_beta1();
        s.k0 = 2;
        assert!(matches!(s.build(), Err(Error::InvalidParams(_))));

        let mut s = ParamSpec::reference_beta1();
        s.rho = 0.65;
        assert!(s.build().is_err(), "rho must stay below tau");

        let mut s = ParamSpec::reference_beta1();
        s.tau = 0.05;
        assert!(s.build().is_err(), "yhat window should be empty");

        let mut s = ParamSpec::reference_beta1();
        s.degree = 5;
        assert!(s.build().is_err());

        let p = ParamSpec::reference_beta1().build().unwrap();
        assert!(p.with_mu(p.eps * 1.5).is_err());
        assert!(p.with_mu(p.eps * p.eps * 0.5).is_err());
        assert!(p.with_mu(-p.eps * 0.5).is_ok());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let p = ParamSpec::reference_beta1().build().unwrap();
        let text = format!("{}bogus = 1.0\n", p.to_config_string());
        assert!(matches!(
            MapParams::from_config_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn derived_mismatch_is_rejected() {
        let p = ParamSpec::reference_beta1().build().unwrap();
        let text = p
            .to_config_string()
            .replace(&format!("eps = {}", fmt_real(p.eps)), "eps = 0.01");
        assert!(matches!(
            MapParams::from_config_str(&text),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn quintic_matches_end_conditions() {
        let q = Quintic::new(1.0, 3.0, [0.5, -2.0, 4.0], [7.0, 1.5, -0.25]);
        let l = q.jet(1.0);
        let r = q.jet(3.0);
        for (got, want) in l[..3].iter().zip([0.5, -2.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in r[..3].iter().zip([7.0, 1.5, -0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
