//! Lifted interval images and the shared cell geometry used by refinement.

use std::f64::consts::PI;

use super::atoms::{atom_bounds, locate_raw, neighbors, AtomIndex};
use crate::error::{Error, Result};
use crate::map::reduce;
use crate::params::MapParams;

/// Shift `m` such that `u - 2m` lies in `[-1, 1)`.
#[inline]
pub(crate) fn frame_shift(u: f64) -> i64 {
    ((u - reduce(u)) * 0.5).round() as i64
}

/// Image of the interval `[u, v]` under the lift, assuming monotonicity;
/// returns `(lo, hi, increasing)`.
pub(crate) fn image(params: &MapParams, u: f64, v: f64) -> Result<(f64, f64, bool)> {
    let a = params.lifted_d01(u)?.0;
    let b = params.lifted_d01(v)?.0;
    Ok(if a <= b { (a, b, true) } else { (b, a, false) })
}

/// Whether the open interval `(u, v)` meets the critical set modulo 2.
pub(crate) fn contains_critical(params: &MapParams, u: f64, v: f64) -> bool {
    if v - u >= 2.0 {
        return true;
    }
    let r = reduce(u);
    let w = r + (v - u);
    let e = params.eps();
    // the critical set lies in [-eps, eps]; the interval meets it at most twice
    for shift in [0.0, 2.0] {
        let a = r.max(shift - e);
        let b = w.min(shift + e);
        if a < b && meets_lattice(params, a - shift, b - shift) {
            return true;
        }
    }
    false
}

fn meets_lattice(params: &MapParams, a: f64, b: f64) -> bool {
    if a < 0.0 && b > 0.0 {
        return true;
    }
    let (a, b) = if b <= 0.0 { (-b, -a) } else { (a, b) };
    if a <= 0.0 {
        return b > 0.0;
    }
    // x_k in (a, b) iff beta(ln xhat - ln b)/pi < k < beta(ln xhat - ln a)/pi
    let c = params.beta() * (params.xhat().ln() - b.ln()) / PI;
    let k0 = params.k0() as i64;
    let start = (c.floor() as i64 - 1).max(k0);
    (start..start + 4).any(|k| {
        let x = params.x_lattice(k);
        x > a && x < b
    })
}

/// An atom of `P_0` lifted by a multiple of 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LiftedCell {
    pub index: AtomIndex,
    pub lo: f64,
    pub hi: f64,
    /// Multiple of 2 added to the stored bounds.
    pub shift: f64,
}

impl LiftedCell {
    pub fn new(params: &MapParams, index: AtomIndex, shift: f64) -> Self {
        let a = atom_bounds(params, index).expect("valid index");
        LiftedCell {
            index,
            lo: a.lo + shift,
            hi: a.hi + shift,
            shift,
        }
    }

    /// The cell containing `y`; boundary points resolve to either side.
    pub fn at(params: &MapParams, y: f64) -> Result<Self> {
        let r = reduce(y);
        let base = y - r;
        let (index, _) = locate_raw(params, r)?;
        let shift = if index.is_outer() && r < 0.0 {
            base - 2.0
        } else {
            base
        };
        Ok(Self::new(params, index, shift))
    }

    pub fn left(&self, params: &MapParams) -> Option<Self> {
        let k0 = params.k0() as i64;
        let (l, _) = neighbors(params, self.index).expect("valid index");
        let l = l?;
        // the outer atom is stored to the right of eps
        let shift = if l.is_outer() && self.index == AtomIndex::new(-k0, 1, 1) {
            self.shift - 2.0
        } else {
            self.shift
        };
        Some(Self::new(params, l, shift))
    }

    pub fn right(&self, params: &MapParams) -> Option<Self> {
        let (_, r) = neighbors(params, self.index).expect("valid index");
        let r = r?;
        let shift = if self.index.is_outer() {
            self.shift + 2.0
        } else {
            self.shift
        };
        Some(Self::new(params, r, shift))
    }

    /// Member of `I(0,0,0) ∪ I(±k0,1,1)`.
    pub fn in_outer_group(&self, params: &MapParams) -> bool {
        self.index.is_outer() || self.index.is_edge(params.k0())
    }

    /// Multiple of 2 by which the outer group containing this cell is lifted.
    pub fn group_base(&self) -> f64 {
        if self.index.l < 0 {
            self.shift - 2.0
        } else {
            self.shift
        }
    }

    /// Lifted span of the outer group containing this cell.
    pub fn outer_group_span(&self, params: &MapParams) -> (f64, f64) {
        let e = params.eps();
        let w = atom_bounds(params, AtomIndex::new(params.k0() as i64, 1, 1))
            .expect("edge atom")
            .length;
        let base = self.group_base();
        (e - w + base, 2.0 - e + w + base)
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.index == other.index && self.shift == other.shift
    }
}

/// Safeguarded Newton solve of `F(x) - 2m = y` on a bracket where the lift is
/// monotone. Returns the root and `F'` there.
pub(crate) fn invert(
    params: &MapParams,
    lo: f64,
    hi: f64,
    m: i64,
    y: f64,
    guess: f64,
) -> Result<(f64, f64)> {
    let target = y + 2.0 * m as f64;
    let g = |x: f64| -> Result<(f64, f64)> {
        let (v, d) = params.lifted_d01(x)?;
        Ok((v - target, d))
    };
    let (mut a, mut b) = (lo, hi);
    let ga = g(a)?.0;
    let gb = g(b)?.0;
    if ga == 0.0 {
        return Ok((a, g(a)?.1));
    }
    if gb == 0.0 {
        return Ok((b, g(b)?.1));
    }
    if ga.signum() == gb.signum() {
        // target outside due to rounding of the stored image; clamp
        let x = if ga.abs() < gb.abs() { a } else { b };
        return Ok((x, g(x)?.1));
    }
    let inc = gb > 0.0;
    let mut x = if guess > a && guess < b {
        guess
    } else {
        0.5 * (a + b)
    };
    for _ in 0..200 {
        let (gx, dx) = g(x)?;
        if gx == 0.0 {
            return Ok((x, dx));
        }
        if (gx > 0.0) == inc {
            b = x;
        } else {
            a = x;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let nx = x - gx / dx;
        x = if nx > a && nx < b { nx } else { mid };
        if (b - a) <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let x = x.clamp(a, b);
    Ok((x, g(x)?.1))
}

/// Error for an interval that reached the critical set.
pub(crate) fn violation(atom: usize, iterate: usize) -> Error {
    Error::DiffeomorphismViolation { atom, iterate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSpec;

    fn p1() -> MapParams {
        let p = ParamSpec::reference_beta1().build().unwrap();
        p.with_mu(0.3 * p.eps()).unwrap()
    }

    #[test]
    fn lift_is_continuous_across_the_antipode() {
        let p = p1();
        let h = 1e-12;
        let a = p.lifted_d01(1.0 - h).unwrap().0;
        let b = p.lifted_d01(1.0 + h).unwrap().0;
        assert!((b - a).abs() < 1e-9);
        let a = p.lifted_d01(-1.0 - h).unwrap().0;
        let b = p.lifted_d01(-1.0 + h).unwrap().0;
        assert!((b - a).abs() < 1e-9);
    }

    #[test]
    fn critical_containment() {
        let p = p1();
        let x = p.x_lattice(3);
        assert!(contains_critical(&p, x - 1e-12, x + 1e-12));
        assert!(contains_critical(&p, -x - 1e-12, -x + 1e-12));
        assert!(contains_critical(&p, 2.0 - 1e-3, 2.0 + 1e-3));
        assert!(!contains_critical(&p, 0.3, 0.9));
        assert!(!contains_critical(&p, x * 1.01, x * 1.02));
        assert!(contains_critical(&p, 0.5, 3.0));
        let a = crate::partition::atom_bounds(&p, AtomIndex::new(2, 1, 3)).unwrap();
        assert!(!contains_critical(&p, a.lo, a.hi));
        assert!(!contains_critical(&p, a.lo + 4.0, a.hi + 4.0));
    }

    #[test]
    fn lifted_cells_walk_in_order() {
        let p = p1();
        let mut c = LiftedCell::at(&p, p.eps() * 0.999).unwrap();
        assert_eq!(c.index, AtomIndex::new(1, 1, 1));
        for _ in 0..50 {
            let r = c.right(&p).unwrap();
            assert!((r.lo - c.hi).abs() < 1e-15, "{:?} {:?}", c, r);
            assert!(r.left(&p).unwrap().same_as(&c));
            c = r;
        }
        let o = LiftedCell::at(&p, -0.5).unwrap();
        assert!(o.index.is_outer());
        assert!(o.lo < -0.5 && o.hi > -0.5);
    }

    #[test]
    fn inversion_recovers_preimage() {
        let p = p1();
        for x in [0.013, 0.2, -0.7, 0.0251] {
            let (y, _) = p.lifted_d01(x).unwrap();
            let m = frame_shift(y);
            let yr = y - 2.0 * m as f64;
            let (back, _) = invert(&p, x - 1e-4, x + 1e-4, m, yr, x).unwrap();
            assert!((back - x).abs() < 1e-15, "{x} {back}");
        }
    }
}
