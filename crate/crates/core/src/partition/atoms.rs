//! Geometry of the initial partition `P_0`.
//!
//! Inside the lattice cell `(y_{l+1}, y_l)` the half-cells on each side of
//! `x_l` are cut into blocks `I(l, ±s)` at offsets
//! `g_l e^{-(pi/beta) s}` from `x_l` (`g_l = y_l - x_l`), and each block into
//! `(|l| + |s|)^3` equal atoms numbered towards `x_l`. Positive `s` is the side
//! away from the origin. Negative `l` mirrors everything through 0.
//!
//! Offsets from `x_l` are computed directly rather than as differences of
//! positions, so lengths stay accurate even where positions cannot resolve
//! the atoms.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::MapParams;

/// Index `(l, s, j)` of an atom of `P_0`; `(0, 0, 0)` is `S^1 \ [-eps, eps]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomIndex {
    pub l: i64,
    pub s: i64,
    pub j: i64,
}

impl AtomIndex {
    pub const OUTER: AtomIndex = AtomIndex { l: 0, s: 0, j: 0 };

    pub fn new(l: i64, s: i64, j: i64) -> Self {
        AtomIndex { l, s, j }
    }

    #[inline]
    pub fn is_outer(&self) -> bool {
        *self == Self::OUTER
    }

    /// `|l| + |s|`.
    #[inline]
    pub fn depth(&self) -> i64 {
        self.l.abs() + self.s.abs()
    }

    /// Number of atoms in the block `I(l, s)`.
    #[inline]
    pub fn block_size(&self) -> i64 {
        self.depth().pow(3)
    }

    /// Atoms `I(±k0, 1, 1)`, the ones touching `±eps`.
    #[inline]
    pub fn is_edge(&self, k0: u32) -> bool {
        self.l.unsigned_abs() == k0 as u64 && self.s == 1 && self.j == 1
    }

    pub fn validate(&self, params: &MapParams) -> Result<()> {
        if self.is_outer() {
            return Ok(());
        }
        let l = self.l.unsigned_abs();
        let ok = l >= params.k0() as u64
            && l <= params.k_max() as u64
            && self.s != 0
            && self.j >= 1
            && self.j <= self.block_size();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidIndex(*self))
        }
    }
}

impl fmt::Display for AtomIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.l, self.s, self.j)
    }
}

impl std::str::FromStr for AtomIndex {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text
            .trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .collect();
        let bad = || Error::Config(format!("malformed atom index {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<i64> = parts
            .iter()
            .map(|p| p.trim().parse::<i64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Ok(AtomIndex::new(v[0], v[1], v[2]))
    }
}

/// An atom with endpoints `lo < hi`. The outer atom is stored lifted as
/// `(eps, 2 - eps)`; every other atom lies inside `[-eps, eps]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub index: AtomIndex,
    pub lo: f64,
    pub hi: f64,
    /// Closed-form length, more accurate than `hi - lo` deep in the lattice.
    pub length: f64,
}

impl Atom {
    pub fn contains(&self, z: f64) -> bool {
        let z = if self.index.is_outer() && z < 0.0 {
            z + 2.0
        } else {
            z
        };
        z > self.lo && z < self.hi
    }
}

/// Offsets from `x_l` of the two ends of atom `(l, s, j)`: `(near, far)`.
pub(crate) fn atom_offsets(params: &MapParams, l: i64, s: i64, j: i64) -> (f64, f64) {
    let g = cell_half_width(params, l);
    let k = PI / params.beta();
    let sa = s.unsigned_abs() as f64;
    let o_far = g * (-k * (sa - 1.0)).exp();
    let n = (l.abs() + s.abs()).pow(3) as f64;
    // atom length, written to avoid the difference o_far - o_near
    let h = g * (-k * sa).exp() * k.exp_m1() / n;
    let far = o_far - (j - 1) as f64 * h;
    let near = if j as f64 == n {
        g * (-k * sa).exp()
    } else {
        o_far - j as f64 * h
    };
    (near, far)
}

/// `y_l - x_l = x_l (1 - q) / (1 + q)`.
#[inline]
pub(crate) fn cell_half_width(params: &MapParams, l: i64) -> f64 {
    let q = params.lattice_ratio();
    params.x_lattice(l.abs()) * (1.0 - q) / (1.0 + q)
}

/// Closed-form `a_1` of the atom-length identity.
pub fn length_constant(params: &MapParams) -> f64 {
    let e = (PI / params.beta()).exp();
    params.xhat() * (e - 1.0).powi(2) / (e + 1.0)
}

/// Closed-form `a_2` of the distance identity.
pub fn distance_constant(params: &MapParams) -> f64 {
    let e = (PI / params.beta()).exp();
    params.xhat() * (e - 1.0) / (e + 1.0)
}

pub fn atom_bounds(params: &MapParams, index: AtomIndex) -> Result<Atom> {
    index.validate(params)?;
    if index.is_outer() {
        let e = params.eps();
        return Ok(Atom {
            index,
            lo: e,
            hi: 2.0 - e,
            length: 2.0 - 2.0 * e,
        });
    }
    let AtomIndex { l, s, j } = index;
    let (near, far) = atom_offsets(params, l, s, j);
    let x = params.x_lattice(l.abs());
    // positions on the positive side, then mirrored for l < 0
    let (a, b) = if s > 0 {
        (x + near, x + far)
    } else {
        (x - far, x - near)
    };
    let (lo, hi) = if l > 0 { (a, b) } else { (-b, -a) };
    let k = PI / params.beta();
    let length = cell_half_width(params, l) * (-k * s.unsigned_abs() as f64).exp() * k.exp_m1()
        / index.block_size() as f64;
    Ok(Atom {
        index,
        lo,
        hi,
        length,
    })
}

/// Block index `s` and atom number `j` of a point at offset `d != 0` from
/// `x_l` in cell `l > 0`; the second value is the fractional position inside
/// the block scaled by the block size.
fn offset_to_sj(params: &MapParams, l: i64, d: f64) -> (i64, i64, f64) {
    let g = cell_half_width(params, l);
    let k = PI / params.beta();
    let u = (d.abs() / g).min(1.0);
    let mut s = ((-u.ln()) / k).floor() as i64 + 1;
    s = s.max(1);
    // the exponential guess can be off by one at block boundaries
    loop {
        let inner = g * (-k * s as f64).exp();
        if d.abs() <= inner && s < i64::MAX / 2 {
            s += 1;
            continue;
        }
        let outer = g * (-k * (s - 1) as f64).exp();
        if d.abs() > outer && s > 1 {
            s -= 1;
            continue;
        }
        break;
    }
    let n = (l + s).pow(3);
    let o_far = g * (-k * (s - 1) as f64).exp();
    let h = g * (-k * s as f64).exp() * k.exp_m1() / n as f64;
    let v = (o_far - d.abs()) / h;
    let j = (v.floor() as i64 + 1).clamp(1, n);
    let sign = if d > 0.0 { 1 } else { -1 };
    (sign * s, j, v)
}

/// Cell index `l > 0` with `t ∈ (y_{l+1}, y_l]`, or `None` above `eps`.
pub(crate) fn cell_of(params: &MapParams, t: f64) -> Option<i64> {
    if t > params.eps() {
        return None;
    }
    let q = params.lattice_ratio();
    let ln_y = (2.0 / (1.0 + q)).ln() + params.xhat().ln();
    let mut l = (((ln_y - t.ln()) * params.beta() / PI).floor() as i64).max(params.k0() as i64);
    while t <= params.y_lattice(l + 1) {
        l += 1;
    }
    while l > params.k0() as i64 && t > params.y_lattice(l) {
        l -= 1;
    }
    Some(l)
}

/// Index of the atom containing `z`, without boundary checks. Points beyond
/// the truncated lattice and the critical points themselves yield an error.
pub(crate) fn locate_raw(params: &MapParams, z: f64) -> Result<(AtomIndex, f64)> {
    let z = crate::map::reduce(z);
    let t = z.abs();
    if t == 0.0 {
        return Err(Error::SingularPoint(z));
    }
    let Some(l) = cell_of(params, t) else {
        return Ok((AtomIndex::OUTER, f64::NAN));
    };
    if l > params.k_max() as i64 {
        return Err(Error::SingularPoint(z));
    }
    let d = t - params.x_lattice(l);
    if d == 0.0 {
        return Err(Error::SingularPoint(z));
    }
    let (s, j, v) = offset_to_sj(params, l, d);
    let l = if z > 0.0 { l } else { -l };
    Ok((AtomIndex::new(l, s, j), v))
}

/// Boundary tolerance, relative to `|z|`.
pub const BOUNDARY_TOL: f64 = 1e-15;

pub fn locate(params: &MapParams, z: f64) -> Result<AtomIndex> {
    let zr = crate::map::reduce(z);
    let (idx, _) = locate_raw(params, zr)?;
    let tol = BOUNDARY_TOL * zr.abs().max(params.eps());
    if idx.is_outer() {
        if (zr.abs() - params.eps()).abs() <= tol {
            return Err(Error::BoundaryPoint(z));
        }
        return Ok(idx);
    }
    let atom = atom_bounds(params, idx)?;
    let tol = BOUNDARY_TOL * zr.abs();
    if (zr - atom.lo).abs() <= tol || (zr - atom.hi).abs() <= tol {
        return Err(Error::BoundaryPoint(z));
    }
    Ok(idx)
}

/// `s(tau)`: blocks with `|s| > s(tau)` are genuine returns.
pub fn s_threshold(params: &MapParams) -> f64 {
    s_threshold_for(params.beta(), params.tau())
}

/// `s(tau)` from `beta` and `tau` alone.
pub fn s_threshold_for(beta: f64, tau: f64) -> f64 {
    let q = (-PI / beta).exp();
    -(beta / PI) * (tau * (1.0 + q) / (1.0 - q)).ln()
}

/// Neighbours of an atom in increasing circle order: `(left, right)`.
/// `None` marks the truncation edge at `x_{k_max}`.
pub fn neighbors(
    params: &MapParams,
    index: AtomIndex,
) -> Result<(Option<AtomIndex>, Option<AtomIndex>)> {
    index.validate(params)?;
    let k0 = params.k0() as i64;
    if index.is_outer() {
        return Ok((
            Some(AtomIndex::new(k0, 1, 1)),
            Some(AtomIndex::new(-k0, 1, 1)),
        ));
    }
    let (near, far) = neighbors_positive(params, index.l.abs(), index.s, index.j);
    // on the positive side, `far` is the larger coordinate exactly when s > 0
    let (toward_lo, toward_hi) = if index.s > 0 {
        (near, far)
    } else {
        (far, near)
    };
    if index.l > 0 {
        Ok((toward_lo, toward_hi))
    } else {
        let mirror = |a: Option<AtomIndex>| {
            a.map(|a| {
                if a.is_outer() {
                    a
                } else {
                    AtomIndex::new(-a.l, a.s, a.j)
                }
            })
        };
        Ok((mirror(toward_hi), mirror(toward_lo)))
    }
}

/// Neighbours of `(l, s, j)`, `l > 0`, as `(towards x_l, away from x_l)`.
fn neighbors_positive(
    params: &MapParams,
    l: i64,
    s: i64,
    j: i64,
) -> (Option<AtomIndex>, Option<AtomIndex>) {
    let k0 = params.k0() as i64;
    let kmax = params.k_max() as i64;
    let sg = s.signum();
    let sa = s.abs();
    let n = (l + sa).pow(3);
    let near = if j < n {
        AtomIndex::new(l, s, j + 1)
    } else {
        AtomIndex::new(l, sg * (sa + 1), 1)
    };
    let far = if j > 1 {
        Some(AtomIndex::new(l, s, j - 1))
    } else if sa > 1 {
        let prev = AtomIndex::new(l, sg * (sa - 1), 0);
        Some(AtomIndex::new(l, prev.s, prev.block_size()))
    } else if s > 0 {
        // across y_l into the inner side of cell l - 1, or out of [-eps, eps]
        if l == k0 {
            Some(AtomIndex::OUTER)
        } else {
            Some(AtomIndex::new(l - 1, -1, 1))
        }
    } else if l < kmax {
        Some(AtomIndex::new(l + 1, 1, 1))
    } else {
        None
    };
    (Some(near), far)
}

/// `I(l, s, j)^+`: the atom together with its two neighbours in `P_0`.
pub fn host_interval_plus(params: &MapParams, index: AtomIndex) -> Result<Atom> {
    if index.is_outer() {
        return Err(Error::InvalidIndex(index));
    }
    let me = atom_bounds(params, index)?;
    let (left, right) = neighbors(params, index)?;
    let mut lo = me.lo;
    let mut hi = me.hi;
    let mut length = me.length;
    if let Some(a) = left {
        let a = atom_bounds(params, a)?;
        // the outer atom, seen from -eps, extends down to eps - 2
        lo = if a.index.is_outer() { a.lo - 2.0 } else { a.lo };
        length += a.length;
    }
    if let Some(b) = right {
        let b = atom_bounds(params, b)?;
        hi = b.hi;
        length += b.length;
    }
    Ok(Atom {
        index,
        lo,
        hi,
        length,
    })
}

/// Atoms of `P_0` with `|l| <= l_res` and `1 <= |s| <= s_res`, in increasing
/// position order on the positive side of one cell.
pub fn cell_atoms(params: &MapParams, l: i64, s_res: i64) -> Vec<Atom> {
    let mut out = Vec::new();
    // inner side: s = -1 .. -s_res, j = 1..n (moving right, towards x_l)
    for sa in 1..=s_res {
        let n = (l.abs() + sa).pow(3);
        for j in 1..=n {
            out.push(atom_bounds(params, AtomIndex::new(l, -sa, j)).expect("valid index"));
        }
    }
    // outer side: s = s_res .. 1, j = n..1 (moving right, away from x_l)
    for sa in (1..=s_res).rev() {
        let n = (l.abs() + sa).pow(3);
        for j in (1..=n).rev() {
            out.push(atom_bounds(params, AtomIndex::new(l, sa, j)).expect("valid index"));
        }
    }
    if l < 0 {
        out.reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSpec;

    fn p1() -> MapParams {
        ParamSpec::reference_beta1().build().unwrap()
    }

    #[test]
    fn outer_atom() {
        let p = p1();
        let a = atom_bounds(&p, AtomIndex::OUTER).unwrap();
        assert_eq!(a.lo, p.eps());
        assert!(a.contains(0.5) && a.contains(-0.5) && !a.contains(0.0));
    }

    #[test]
    fn edge_atom_touches_eps() {
        let p = p1();
        let k0 = p.k0() as i64;
        let a = atom_bounds(&p, AtomIndex::new(k0, 1, 1)).unwrap();
        assert!((a.hi - p.eps()).abs() < 1e-17);
        let b = atom_bounds(&p, AtomIndex::new(-k0, 1, 1)).unwrap();
        assert!((b.lo + p.eps()).abs() < 1e-17);
    }

    #[test]
    fn atoms_in_a_block_have_equal_length() {
        let p = p1();
        let l = 3;
        let s = -2;
        let n = AtomIndex::new(l, s, 1).block_size();
        let base = atom_bounds(&p, AtomIndex::new(l, s, 1)).unwrap();
        for j in 2..=n {
            let a = atom_bounds(&p, AtomIndex::new(l, s, j)).unwrap();
            assert!(((a.hi - a.lo) - (base.hi - base.lo)).abs() < 1e-12 * base.length);
            assert_eq!(a.length, base.length);
        }
    }

    #[test]
    fn j_increases_towards_critical_point() {
        let p = p1();
        let x = p.x_lattice(2);
        for s in [1i64, -1, 3] {
            let a1 = atom_bounds(&p, AtomIndex::new(2, s, 1)).unwrap();
            let a2 = atom_bounds(&p, AtomIndex::new(2, s, 2)).unwrap();
            let d1 = ((a1.lo + a1.hi) / 2.0 - x).abs();
            let d2 = ((a2.lo + a2.hi) / 2.0 - x).abs();
            assert!(d2 < d1);
        }
    }

    #[test]
    fn invalid_indices_rejected() {
        let p = p1();
        for idx in [
            AtomIndex::new(0, 1, 1),
            AtomIndex::new(1, 0, 1),
            AtomIndex::new(1, 1, 0),
            AtomIndex::new(1, 1, 9),
            AtomIndex::new(p.k_max() as i64 + 1, 1, 1),
        ] {
            assert_eq!(atom_bounds(&p, idx), Err(Error::InvalidIndex(idx)));
        }
    }

    #[test]
    fn locate_round_trips_midpoints() {
        let p = p1();
        for l in [1i64, 2, 5, -1, -4] {
            for s in [1i64, 2, 4, -1, -3] {
                let n = AtomIndex::new(l, s, 1).block_size();
                for j in [1, 2, n / 2, n] {
                    let idx = AtomIndex::new(l, s, j);
                    let a = atom_bounds(&p, idx).unwrap();
                    assert_eq!(locate(&p, 0.5 * (a.lo + a.hi)).unwrap(), idx);
                }
            }
        }
        assert_eq!(locate(&p, 0.5).unwrap(), AtomIndex::OUTER);
        assert_eq!(locate(&p, -0.03).unwrap(), AtomIndex::OUTER);
    }

    #[test]
    fn locate_flags_boundaries_and_critical_points() {
        let p = p1();
        let a = atom_bounds(&p, AtomIndex::new(2, 1, 3)).unwrap();
        assert!(matches!(locate(&p, a.lo), Err(Error::BoundaryPoint(_))));
        assert!(matches!(
            locate(&p, p.x_lattice(2)),
            Err(Error::SingularPoint(_))
        ));
        assert!(matches!(locate(&p, p.eps()), Err(Error::BoundaryPoint(_))));
    }

    #[test]
    fn s_threshold_values() {
        let t = s_threshold_for(3.0, 0.05);
        assert!((t - 2.161).abs() < 1e-3);
        let q = (-PI / 3.0f64).exp();
        let back = (-(PI / 3.0) * t).exp() * (1.0 - q) / (1.0 + q);
        assert!((back - 0.05).abs() < 1e-15);
        let p = ParamSpec::reference_beta3().build().unwrap();
        assert_eq!(s_threshold(&p), s_threshold_for(p.beta(), p.tau()));
    }

    #[test]
    fn neighbours_are_adjacent() {
        let p = p1();
        for idx in [
            AtomIndex::new(2, 1, 1),
            AtomIndex::new(2, 1, 27),
            AtomIndex::new(2, -1, 1),
            AtomIndex::new(2, -2, 64),
            AtomIndex::new(-2, 1, 1),
            AtomIndex::new(-3, -1, 1),
            AtomIndex::new(1, 1, 1),
            AtomIndex::new(-1, 1, 1),
        ] {
            let me = atom_bounds(&p, idx).unwrap();
            let (l, r) = neighbors(&p, idx).unwrap();
            let l = atom_bounds(&p, l.unwrap()).unwrap();
            let r = atom_bounds(&p, r.unwrap()).unwrap();
            let l_hi = if l.index.is_outer() { l.hi - 2.0 } else { l.hi };
            assert!((l_hi - me.lo).abs() < 1e-16, "{idx} left {}", l.index);
            assert!((r.lo - me.hi).abs() < 1e-16, "{idx} right {}", r.index);
        }
    }
}
