//! Evaluation of `f_mu` on the circle `[-1, 1)`.
//!
//! On `(0, 1]` the lift is `P(t) = G(t) + mu * w(t)` where `G` is the inner
//! branch `fhat` up to `yhat`, a quintic blend up to `ytilde` and the outer
//! map `degree * t + (b / pi) sin(pi t)` beyond; `w` is 1 on `(0, eps]` and decays to 0 by a
//! smoothstep over `[eps, eps + blend_width]`. Negative points use the odd
//! extension `F(r) = -P(-r)`.
//!
//! The oscillating factor is evaluated in *anchored* form: the phase
//! `beta * ln(t / base)` is written as `-k pi + beta * log1p((t - anchor) / anchor)`
//! with `anchor` the nearest lattice point. Critical and inflection points
//! computed by this module therefore give exact zeros of `f'` and `f''`,
//! no matter how deep in the lattice.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{lattice_point, MapParams};

/// Below this radius the amplitude `a |z|^alpha` is treated as zero.
pub const SINGULAR_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub k: i64,
    pub position: f64,
    pub kind: CriticalKind,
}

/// Element of the truncated critical set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalTarget {
    Index(i64),
    Origin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nearest {
    pub target: CriticalTarget,
    pub distance: f64,
}

/// Lifted value together with the first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Representative of `x` in `[-1, 1)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    let r = x - 2.0 * ((x + 1.0) * 0.5).floor();
    if r >= 1.0 {
        r - 2.0
    } else {
        r
    }
}

/// Signed difference `u - v` taken in `[-1, 1)`.
#[inline]
pub fn circle_diff(u: f64, v: f64) -> f64 {
    reduce(u - v)
}

#[inline]
pub fn circle_distance(u: f64, v: f64) -> f64 {
    let d = (u - v).abs() % 2.0;
    d.min(2.0 - d)
}

impl MapParams {
    /// `(sin, cos)` of `beta * ln(t / base)` with the phase anchored at the
    /// nearest point of the lattice `base * e^{-k pi / beta}`.
    #[inline]
    fn anchored_phase(&self, ln_base: f64, ln_t: f64, t: f64) -> (f64, f64) {
        let k = ((ln_base - ln_t) * self.beta / PI).round();
        let anchor = lattice_point(ln_base, self.beta, k as i64);
        let eta = self.beta * ((t - anchor) / anchor).ln_1p();
        let (s, c) = eta.sin_cos();
        if (k as i64) & 1 == 1 {
            (-s, -c)
        } else {
            (s, c)
        }
    }

    /// Value and first derivative of `fhat` at `t > 0`.
    #[inline]
    pub(crate) fn fhat_d01(&self, t: f64) -> (f64, f64) {
        let ln_t = t.ln();
        let (sp, cp) = self.anchored_phase(self.ln_xhat, ln_t, t);
        let s = sp * self.cos_psi - cp * self.sin_psi;
        let amp = self.a * (self.alpha * ln_t).exp();
        (-amp * s, -amp / t * self.r1 * sp)
    }

    /// `[fhat, fhat', fhat'', fhat''']` at `t > 0`.
    pub(crate) fn fhat_jet(&self, t: f64) -> [f64; 4] {
        let (alpha, beta) = (self.alpha, self.beta);
        let ln_t = t.ln();
        let (sp, cp) = self.anchored_phase(self.ln_xhat, ln_t, t);
        let s = sp * self.cos_psi - cp * self.sin_psi;
        let c = cp * self.cos_psi + sp * self.sin_psi;
        let (s2, _) = self.anchored_phase(self.ln_zhat, ln_t, t);
        let amp = self.a * (alpha * ln_t).exp();
        let big_a = alpha * (alpha - 1.0) - beta * beta;
        let big_b = beta * (2.0 * alpha - 1.0);
        let p3 = -(alpha - 2.0) * big_a + beta * big_b;
        let q3 = -(alpha - 2.0) * big_b - beta * big_a;
        [
            -amp * s,
            -amp / t * self.r1 * sp,
            amp / (t * t) * self.r2 * s2,
            amp / (t * t * t) * (p3 * s + q3 * c),
        ]
    }

    /// Kind of the local extremum at a positive lattice point.
    pub(crate) fn local_kind(&self, t: f64) -> CriticalKind {
        if self.fhat_jet(t)[2] > 0.0 {
            CriticalKind::Minimum
        } else {
            CriticalKind::Maximum
        }
    }

    /// Lift `P` on `t > 0` (no reduction), with derivatives.
    fn positive_jet(&self, t: f64) -> Jet {
        let g = if t <= self.yhat {
            if t < SINGULAR_FLOOR {
                let j = self.fhat_jet(t.max(f64::MIN_POSITIVE));
                [0.0, j[1], j[2], j[3]]
            } else {
                self.fhat_jet(t)
            }
        } else if t < self.ytilde {
            self.blend.jet(t)
        } else {
            self.outer_jet(t)
        };
        let w = self.ramp(t);
        Jet {
            value: g[0] + self.mu * w[0],
            d1: g[1] + self.mu * w[1],
            d2: g[2] + self.mu * w[2],
            d3: g[3] + self.mu * w[3],
        }
    }

    /// Value and slope of `P` on `t > 0`.
    #[inline]
    fn positive_d01(&self, t: f64) -> (f64, f64) {
        let (g, dg) = if t <= self.yhat {
            if t < SINGULAR_FLOOR {
                (0.0, self.fhat_d01(t.max(f64::MIN_POSITIVE)).1)
            } else {
                self.fhat_d01(t)
            }
        } else if t < self.ytilde {
            let j = self.blend.jet(t);
            (j[0], j[1])
        } else {
            let (s, c) = (PI * t).sin_cos();
            let d = self.degree as f64;
            (
                d * t + self.outer_wobble / PI * s,
                d + self.outer_wobble * c,
            )
        };
        if t <= self.eps {
            (g + self.mu, dg)
        } else if self.mu == 0.0 {
            (g, dg)
        } else {
            let w = self.ramp(t);
            (g + self.mu * w[0], dg + self.mu * w[1])
        }
    }

    /// Jet of the unshifted branch `G` at `t > 0` (no `mu` term).
    pub(crate) fn branch_jet(&self, t: f64) -> [f64; 4] {
        if t <= self.yhat {
            self.fhat_jet(t)
        } else if t < self.ytilde {
            self.blend.jet(t)
        } else {
            self.outer_jet(t)
        }
    }

    /// Offset profile `w` and its first three derivatives.
    #[inline]
    fn ramp(&self, t: f64) -> [f64; 4] {
        if t <= self.eps {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let bw = self.blend_width;
        if t >= self.eps + bw {
            return [0.0; 4];
        }
        let x = (t - self.eps) / bw;
        [
            1.0 - x * x * (3.0 - 2.0 * x),
            -6.0 * x * (1.0 - x) / bw,
            -(6.0 - 12.0 * x) / (bw * bw),
            12.0 / (bw * bw * bw),
        ]
    }

    /// Lifted jet at a circle point. `value` is not reduced.
    pub fn jet(&self, z: f64) -> Result<Jet> {
        let z = reduce(z);
        if z == 0.0 {
            return Err(Error::SingularInput);
        }
        if z > 0.0 {
            Ok(self.positive_jet(z))
        } else {
            let j = self.positive_jet(-z);
            Ok(Jet {
                value: -j.value,
                d1: j.d1,
                d2: -j.d2,
                d3: j.d3,
            })
        }
    }

    /// `(f_mu(z) reduced to [-1, 1), f_mu'(z))`; the hot path for orbits.
    #[inline]
    pub fn step(&self, z: f64) -> Result<(f64, f64)> {
        if z == 0.0 {
            return Err(Error::SingularInput);
        }
        let (v, d) = if z > 0.0 {
            self.positive_d01(z)
        } else {
            let (v, d) = self.positive_d01(-z);
            (-v, d)
        };
        Ok((reduce(v), d))
    }

    /// Value and slope of the continuous lift of `f_mu` to the real line:
    /// `F(y + 2m) = F(y) + 2 m degree`.
    #[inline]
    pub(crate) fn lifted_d01(&self, y: f64) -> Result<(f64, f64)> {
        let z = reduce(y);
        if z == 0.0 {
            return Err(Error::SingularInput);
        }
        let (v, d) = if z > 0.0 {
            self.positive_d01(z)
        } else {
            let (v, d) = self.positive_d01(-z);
            (-v, d)
        };
        let m = ((y - z) * 0.5).round();
        Ok((v + 2.0 * m * self.degree as f64, d))
    }

    /// `x_k` for `k > 0` without range checks.
    #[inline]
    pub fn x_lattice(&self, k: i64) -> f64 {
        lattice_point(self.ln_xhat, self.beta, k)
    }

    /// `y_k = 2 x_k / (1 + e^{-pi/beta})`, the cell boundaries.
    #[inline]
    pub fn y_lattice(&self, k: i64) -> f64 {
        2.0 * self.x_lattice(k) / (1.0 + self.q)
    }

    #[inline]
    pub(crate) fn z_lattice(&self, k: i64) -> f64 {
        lattice_point(self.ln_zhat, self.beta, k)
    }

    fn check_index(&self, k: i64) -> Result<()> {
        let m = k.unsigned_abs();
        if m < self.k0 as u64 || m > self.k_max as u64 {
            Err(Error::IndexOutOfRange {
                k,
                min: self.k0,
                max: self.k_max,
            })
        } else {
            Ok(())
        }
    }
}

/// The raw oscillating branch `a |z|^alpha sin(beta log(1/|z|))`, odd in `z`,
/// without shift, blend or truncation.
pub fn fhat(params: &MapParams, z: f64) -> Result<f64> {
    if z == 0.0 {
        return Err(Error::SingularInput);
    }
    let v = params.fhat_d01(z.abs()).0;
    Ok(if z > 0.0 { v } else { -v })
}

pub fn critical_point(params: &MapParams, k: i64) -> Result<CriticalPoint> {
    params.check_index(k)?;
    let t = params.x_lattice(k.abs());
    let pos_kind = params.local_kind(t);
    let (position, kind) = if k > 0 {
        (t, pos_kind)
    } else {
        let flipped = match pos_kind {
            CriticalKind::Minimum => CriticalKind::Maximum,
            CriticalKind::Maximum => CriticalKind::Minimum,
        };
        (-t, flipped)
    };
    Ok(CriticalPoint { k, position, kind })
}

/// Inflection point `sign(k) zhat e^{-|k| pi / beta}`.
pub fn inflection_point(params: &MapParams, k: i64) -> f64 {
    let t = params.z_lattice(k.abs());
    if k < 0 {
        -t
    } else {
        t
    }
}

pub fn eval_map(params: &MapParams, z: f64) -> Result<f64> {
    Ok(reduce(params.jet(z)?.value))
}

pub fn eval_derivative(params: &MapParams, z: f64) -> Result<f64> {
    Ok(params.jet(z)?.d1)
}

pub fn eval_second_derivative(params: &MapParams, z: f64) -> Result<f64> {
    Ok(params.jet(z)?.d2)
}

pub fn eval_third_derivative(params: &MapParams, z: f64) -> Result<f64> {
    Ok(params.jet(z)?.d3)
}

/// `z_k = f_mu(x_k)`.
pub fn critical_value(params: &MapParams, k: i64) -> Result<f64> {
    let c = critical_point(params, k)?;
    eval_map(params, c.position)
}

/// Nearest element of `{x_k : k0 <= |k| <= k_max} ∪ {0}` in circle distance.
/// Ties go to the smaller `|k|`, the origin counting as the deepest element.
pub fn nearest_critical_point(params: &MapParams, z: f64) -> Nearest {
    let z = reduce(z);
    let t = z.abs();
    // On [-1, 1) the lattice on the same side is never farther than the
    // mirrored one; at z = -1 both sides tie and the same side is kept.
    let sign = if z < 0.0 { -1 } else { 1 };
    let k0 = params.k0 as i64;
    let x0 = params.x_lattice(k0);
    if t >= x0 {
        return Nearest {
            target: CriticalTarget::Index(sign * k0),
            distance: t - x0,
        };
    }
    let kmax = params.k_max as i64;
    let guess = if t > 0.0 {
        ((params.ln_xhat - t.ln()) * params.beta / PI).floor()
    } else {
        f64::INFINITY
    };
    let lo = if guess.is_finite() {
        (guess as i64 - 1).clamp(k0, kmax)
    } else {
        kmax
    };
    let hi = (lo + 3).min(kmax);
    let mut best = Nearest {
        target: CriticalTarget::Origin,
        distance: f64::INFINITY,
    };
    for k in lo..=hi {
        let d = (t - params.x_lattice(k)).abs();
        if d < best.distance {
            best = Nearest {
                target: CriticalTarget::Index(sign * k),
                distance: d,
            };
        }
    }
    if t < best.distance {
        best = Nearest {
            target: CriticalTarget::Origin,
            distance: t,
        };
    }
    best
}

/// Distance from `z` to the critical set, capped to 1 beyond `flat`.
pub fn truncated_distance(params: &MapParams, z: f64) -> f64 {
    let d = nearest_critical_point(params, z).distance;
    if d <= params.flat {
        d
    } else {
        1.0
    }
}

/// Position on the circle of a critical-set element.
pub fn target_position(params: &MapParams, target: CriticalTarget) -> f64 {
    match target {
        CriticalTarget::Origin => 0.0,
        CriticalTarget::Index(k) => {
            let t = params.x_lattice(k.abs());
            if k < 0 {
                -t
            } else {
                t
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSpec;

    fn p1() -> MapParams {
        ParamSpec::reference_beta1().build().unwrap()
    }

    fn p3() -> MapParams {
        ParamSpec::reference_beta3().build().unwrap()
    }

    #[test]
    fn first_critical_point_matches_high_precision_value() {
        // exp(-atan 2 - pi) to 20 digits
        let c = critical_point(&p1(), 1).unwrap();
        assert!((c.position - 0.014_282_198_585_040_214).abs() < 1e-17);
        assert_eq!(c.kind, CriticalKind::Minimum);
        assert_eq!(
            critical_point(&p1(), -1).unwrap().kind,
            CriticalKind::Maximum
        );
        assert_eq!(
            critical_point(&p1(), 2).unwrap().kind,
            CriticalKind::Maximum
        );
    }

    #[test]
    fn fhat_at_xhat() {
        let p = p1();
        let v = fhat(&p, p.xhat()).unwrap();
        let want = p.xhat().sqrt() * 2.0 / 5f64.sqrt();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.514_198_380_064_916_6).abs() < 1e-15);
    }

    #[test]
    fn index_range_is_enforced() {
        let p = p1();
        assert!(matches!(
            critical_point(&p, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(critical_point(&p, p.k_max() as i64 + 1).is_err());
        assert!(critical_value(&p, -(p.k_max() as i64) - 1).is_err());
    }

    #[test]
    fn zero_is_singular() {
        let p = p1();
        assert_eq!(eval_map(&p, 0.0), Err(Error::SingularInput));
        assert_eq!(eval_derivative(&p, 0.0), Err(Error::SingularInput));
        assert_eq!(p.step(0.0), Err(Error::SingularInput));
    }

    #[test]
    fn derivatives_vanish_on_lattices() {
        for p in [p1(), p3()] {
            let k0 = p.k0() as i64;
            for k in k0..=k0 + 20 {
                for sgn in [1, -1] {
                    let c = critical_point(&p, sgn * k).unwrap();
                    assert!(eval_derivative(&p, c.position).unwrap().abs() < 1e-10);
                    let z = inflection_point(&p, sgn * k);
                    if z.abs() < p.yhat() {
                        assert!(eval_second_derivative(&p, z).unwrap().abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn second_derivative_alternates_on_lattice() {
        let p = p3();
        let k0 = p.k0() as i64;
        let mut prev = 0.0;
        for k in k0..=k0 + 20 {
            let d2 = eval_second_derivative(&p, p.x_lattice(k)).unwrap();
            assert!(d2 * prev <= 0.0);
            prev = d2;
        }
    }

    #[test]
    fn shift_is_rigid_inside_yhat() {
        let p0 = p1();
        let p = p0.with_mu(0.001).unwrap();
        for i in 1..200 {
            let z = p0.yhat() * i as f64 / 200.0;
            let d = eval_map(&p, z).unwrap() - eval_map(&p0, z).unwrap();
            assert!((d - 0.001).abs() < 1e-15);
            let d = eval_map(&p, -z).unwrap() - eval_map(&p0, -z).unwrap();
            assert!((d + 0.001).abs() < 1e-15);
        }
    }

    #[test]
    fn map_is_continuous_on_the_circle() {
        for p in [
            p1(),
            p1().with_mu(0.02).unwrap(),
            p3().with_mu(-5e-5).unwrap(),
        ] {
            let pts = [
                p.yhat(),
                p.ytilde(),
                p.eps(),
                p.eps() + p.blend_width(),
                1.0 - 1e-12,
            ];
            for x in pts {
                for s in [1.0, -1.0] {
                    let h = 1e-12;
                    let a = eval_map(&p, s * x - h).unwrap();
                    let b = eval_map(&p, s * x + h).unwrap();
                    assert!(circle_distance(a, b) < 1e-8, "jump at {}", s * x);
                }
            }
        }
    }

    #[test]
    fn outer_slope_at_least_two() {
        let p = p1().with_mu(p1().eps()).unwrap();
        for i in 0..=1000 {
            let t = p.ytilde() + (1.0 - p.ytilde()) * i as f64 / 1000.0;
            assert!(eval_derivative(&p, t).unwrap() >= 2.0);
            assert!(eval_derivative(&p, -t).unwrap() >= 2.0);
        }
    }

    #[test]
    fn critical_values_symmetric() {
        let p = p1();
        for k in 1..=20 {
            let a = critical_value(&p, k).unwrap();
            let b = critical_value(&p, -k).unwrap();
            assert_eq!(a, -b);
            assert!(a.abs() <= p.a() * p.x_lattice(k).powf(p.alpha()));
        }
        let pm = p.with_mu(0.001).unwrap();
        let x1 = p.x_lattice(1);
        let want = fhat(&p, x1).unwrap() + 0.001;
        assert!((critical_value(&pm, 1).unwrap() - want).abs() < 1e-16);
    }

    #[test]
    fn nearest_examples() {
        let p = p1();
        for k in 1..30 {
            let mid = 0.5 * (p.x_lattice(k) + p.x_lattice(k + 1));
            let n = nearest_critical_point(&p, mid * (1.0 + 1e-13));
            assert_eq!(n.target, CriticalTarget::Index(k));
            let n = nearest_critical_point(&p, -mid * (1.0 + 1e-13));
            assert_eq!(n.target, CriticalTarget::Index(-k));
        }
        let n = nearest_critical_point(&p, 0.9);
        assert_eq!(n.target, CriticalTarget::Index(1));
        assert!((n.distance - (0.9 - p.x_lattice(1))).abs() < 1e-15);
        let tiny = p.x_lattice(p.k_max() as i64) * (-PI / 2.0).exp() * 0.99;
        assert_eq!(
            nearest_critical_point(&p, tiny).target,
            CriticalTarget::Origin
        );
        assert_eq!(
            nearest_critical_point(&p, -1.0).target,
            CriticalTarget::Index(-1)
        );
    }

    #[test]
    fn truncated_distance_examples() {
        let p = p1();
        assert_eq!(truncated_distance(&p, 0.5), 1.0);
        let x = p.x_lattice(3);
        let d = truncated_distance(&p, x + p.flat() / 2.0);
        assert!((d - p.flat() / 2.0).abs() < 1e-18);
    }

    #[test]
    fn reduce_maps_into_half_open_interval() {
        for x in [-3.0, -1.0, -0.5, 0.0, 0.999, 1.0, 2.5, 7.0, -1e-18] {
            let r = reduce(x);
            assert!((-1.0..1.0).contains(&r), "{x} -> {r}");
            assert!(((x - r) / 2.0 - ((x - r) / 2.0).round()).abs() < 1e-12);
        }
    }
}
