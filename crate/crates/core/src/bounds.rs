//! Empirical constants of the local derivative estimates inside one lattice
//! cell, and an analytic-versus-finite-difference derivative check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::map::circle_diff;
use crate::params::MapParams;

/// Best constants measured on the cell `(y_{l+1}, y_l)` around `x_l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConstants {
    pub l: i64,
    /// Smallest `C` with `C^{-1} <= |f'(x)| / (|x_l|^{alpha-2} |x - x_l|) <= C`.
    pub c_hat: f64,
    /// Largest `|(f'(s) - f'(t)) / f'(t)| * |t - x_l| / |s - t|` over pairs.
    pub k1_hat: f64,
    /// `max |f''(t)| / |f''(x_l)|` over the cell.
    pub c2_upper: f64,
    /// `min |f''(t)| / |f''(x_l)|` over `|t - x_l| < tau |x_l|`.
    pub c2_lower: f64,
}

/// Relative sample positions `u = x / x_l`: midpoints of `n` equal pieces of
/// the cell. Using the same `u` for every `l` makes constants comparable.
fn cell_grid(params: &MapParams, n: usize) -> Vec<f64> {
    let q = params.lattice_ratio();
    let (a, b) = (2.0 * q / (1.0 + q), 2.0 / (1.0 + q));
    (0..n)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Constants on the cell of `x_l`, `l > k0`, from `n` sample points; pairs
/// use every fourth point.
pub fn cell_constants(params: &MapParams, l: i64, n: usize) -> CellConstants {
    let xl = params.x_lattice(l);
    let us: Vec<f64> = cell_grid(params, n)
        .into_iter()
        .filter(|u| (u - 1.0).abs() > 1e-9)
        .collect();
    let d1 = |x: f64| params.jet(x).expect("nonzero point").d1;
    let d2 = |x: f64| params.jet(x).expect("nonzero point").d2;
    let scale = xl.powf(params.alpha() - 2.0);
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    for &u in &us {
        let r = d1(xl * u).abs() / (scale * xl * (u - 1.0).abs());
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let mut k1 = 0.0f64;
    let pts: Vec<(f64, f64)> = us.iter().step_by(4).map(|&u| (u, d1(xl * u))).collect();
    for &(us_, ds) in &pts {
        for &(ut, dt) in &pts {
            if us_ == ut {
                continue;
            }
            let r = ((ds - dt) / dt).abs() * (ut - 1.0).abs() / (us_ - ut).abs();
            k1 = k1.max(r);
        }
    }
    let c = d2(xl).abs();
    let (mut up, mut low) = (0.0f64, f64::INFINITY);
    for &u in &us {
        let r = d2(xl * u).abs() / c;
        up = up.max(r);
        if (u - 1.0).abs() < params.tau() {
            low = low.min(r);
        }
    }
    CellConstants {
        l,
        c_hat: rmax.max(1.0 / rmin),
        k1_hat: k1,
        c2_upper: up,
        c2_lower: low,
    }
}

/// Largest relative spread `(max - min) / min` of each constant over cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpread {
    pub c_hat: f64,
    pub k1_hat: f64,
    pub c2_upper: f64,
    pub c2_lower: f64,
}

pub fn scale_spread(cells: &[CellConstants]) -> ScaleSpread {
    let spread = |f: fn(&CellConstants) -> f64| {
        let lo = cells.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = cells.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    };
    ScaleSpread {
        c_hat: spread(|c| c.c_hat),
        k1_hat: spread(|c| c.k1_hat),
        c2_upper: spread(|c| c.c2_upper),
        c2_lower: spread(|c| c.c2_lower),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub points: usize,
    pub max_rel_d1: f64,
    pub worst_d1_at: f64,
    pub max_rel_d2: f64,
    pub worst_d2_at: f64,
}

/// Relative half-width of the windows kept clear around the gluing joints.
pub const JOINT_GAP: f64 = 1e-3;

/// Finite-difference step relative to the local length scale.
pub const FD_STEP: f64 = 1e-4;

pub const OUTER_STEP: f64 = 1e-3;

/// Richardson-extrapolated central difference of `g` at `z` with step `h`.
fn richardson(g: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    let d = |h: f64| (g(z + h) - g(z - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

fn joints(params: &MapParams) -> [f64; 4] {
    let e = params.eps();
    [params.yhat(), params.ytilde(), e, e + params.blend_width()]
}

/// The `n` seeded sample points: half log-uniform in `|z|` on
/// `[x_{k0+20}, eps]`, half uniform on `[eps + blend_width, 1)`, random
/// signs, none within [`JOINT_GAP`] (relative) of a gluing joint.
pub fn fd_points(params: &MapParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = params.eps();
    let js = joints(params);
    let outer = e + params.blend_width();
    let (lo, hi) = (params.x_lattice(params.k0() as i64 + 20).ln(), e.ln());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = if out.len() % 2 == 0 {
            (lo + (hi - lo) * rng.random::<f64>()).exp()
        } else {
            outer + (1.0 - outer) * rng.random::<f64>()
        };
        if js.iter().any(|&j| (t - j).abs() < JOINT_GAP * j) || t >= 1.0 - JOINT_GAP {
            continue;
        }
        out.push(if rng.random::<bool>() { t } else { -t });
    }
    out
}

/// Compares the analytic `f'` with a difference quotient of `f` and the
/// analytic `f''` with a difference quotient of `f'`. The step is
/// `FD_STEP` times `|z|` on the `f̂` region, `FD_STEP` times the distance
/// to the nearest joint on the blend, and a quarter of that distance (at most
/// `OUTER_STEP`) on the smooth outer pieces, where `f''` can be small next to
/// `f'`. Inside `[-eps, eps]` the
/// shift is rigid, so `f` is differenced at `mu = 0` to keep the offset out
/// of the cancellation.
pub fn fd_check(params: &MapParams, n: usize, seed: u64) -> FdReport {
    let flat = params.with_mu(0.0).expect("mu = 0 is admissible");
    let js = joints(params);
    let mut rep = FdReport {
        points: n,
        max_rel_d1: 0.0,
        worst_d1_at: f64::NAN,
        max_rel_d2: 0.0,
        worst_d2_at: f64::NAN,
    };
    for z in fd_points(params, n, seed) {
        let t = z.abs();
        let j = params.jet(z).expect("nonzero point");
        let d = js
            .iter()
            .map(|&j| (t - j).abs())
            .fold(f64::INFINITY, f64::min);
        let h = if t < params.yhat() {
            FD_STEP * t
        } else if t < params.ytilde() {
            FD_STEP * d
        } else {
            (0.25 * d).min(OUTER_STEP)
        };
        let src = if t <= params.eps() { &flat } else { params };
        let f = |x: f64| src.jet(x).expect("nonzero point").value;
        let base = f(z);
        // values are reduced mod 2; difference them on the circle
        let fd1 = richardson(|x| base + circle_diff(f(x), base), z, h);
        let fd2 = richardson(|x| params.jet(x).expect("nonzero point").d1, z, h);
        let e1 = ((fd1 - j.d1) / j.d1).abs();
        let e2 = ((fd2 - j.d2) / j.d2).abs();
        if e1 > rep.max_rel_d1 {
            rep.max_rel_d1 = e1;
            rep.worst_d1_at = z;
        }
        if e2 > rep.max_rel_d2 {
            rep.max_rel_d2 = e2;
            rep.worst_d2_at = z;
        }
    }
    rep
}
