//! The inductive refinement `P_0, P_1, ...` on a finite resolution.
//!
//! Only atoms with `|l| <= l_res` and `|s| <= s_res` are tracked individually.
//! The remaining pieces of `[-eps, eps]` (the two cores around every resolved
//! `x_l` and the central region around 0) are carried as frozen lumps, and so
//! is anything that lands in them later. Exact tilings are kept throughout:
//! children share their boundary points.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::atoms::{cell_atoms, s_threshold, AtomIndex};
use super::binding::BindingCache;
use super::image::{contains_critical, frame_shift, image, violation};
use crate::error::{Error, Result};
use crate::params::{fmt_real, MapParams};

/// Atoms shorter than this are frozen.
pub const FREEZE_LENGTH: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Free,
    Bound {
        until: usize,
    },
    Returned,
    /// Below the length floor or inside an unresolved lump.
    Frozen,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Free => write!(f, "free"),
            Status::Bound { until } => write!(f, "bound({until})"),
            Status::Returned => write!(f, "returned"),
            Status::Frozen => write!(f, "frozen"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedAtom {
    /// `omega` in lifted coordinates, `lo < hi`, `lo` in `[-1, 1)`.
    pub lo: f64,
    pub hi: f64,
    pub returns: Vec<usize>,
    pub hosts: Vec<AtomIndex>,
    pub status: Status,
    /// Last return time and its binding period.
    pub last_binding: Option<(usize, usize)>,
    /// `f^n(omega)` as a framed lifted interval, low end first.
    pub image: (f64, f64),
    /// Whether `f^n` maps `lo` to `image.0`.
    pub increasing: bool,
    /// Frame shifts `m_1..m_n`; the framed image at time `k` is
    /// `F(previous) - 2 m_k`.
    shifts: Vec<i64>,
}

impl RefinedAtom {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// `f^n(x)` in the frame of the stored image, for `x` in `omega`.
    pub fn iterate(&self, params: &MapParams, x: f64) -> Result<f64> {
        let mut y = x;
        for &m in &self.shifts {
            y = params.lifted_d01(y)?.0 - 2.0 * m as f64;
        }
        Ok(y)
    }

    /// Preimage in `omega` of a point `t` of the image, by bisection.
    fn preimage(&self, params: &MapParams, t: f64) -> Result<f64> {
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let y = self.iterate(params, mid)?;
            if (y < t) == self.increasing {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Piece labels on the resolution grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cell {
    Atom(AtomIndex),
    Lump,
}

/// One period `[eps - 2, eps)` of the resolved partition, as contiguous cells.
#[derive(Clone, Debug)]
struct Grid {
    start: f64,
    bounds: Vec<f64>,
    cells: Vec<Cell>,
}

impl Grid {
    fn new(params: &MapParams, l_res: i64, s_res: i64) -> Self {
        let e = params.eps();
        let k0 = params.k0() as i64;
        let mut positive: Vec<(f64, f64, Cell)> = Vec::new();
        for l in k0..=l_res {
            let atoms = cell_atoms(params, l, s_res);
            let x = params.x_lattice(l);
            let mut prev: Option<f64> = None;
            for a in atoms {
                if let Some(p) = prev {
                    if a.lo > x && p < x {
                        positive.push((p, a.lo, Cell::Lump));
                    }
                }
                positive.push((a.lo, a.hi, Cell::Atom(a.index)));
                prev = Some(a.hi);
            }
        }
        positive.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mirror = |c: Cell| match c {
            Cell::Atom(i) => Cell::Atom(AtomIndex::new(-i.l, i.s, i.j)),
            Cell::Lump => Cell::Lump,
        };
        // lower ends in increasing order; each cell ends where the next begins
        let mut seq: Vec<(f64, Cell)> = vec![(e - 2.0, Cell::Atom(AtomIndex::OUTER))];
        seq.extend(positive.iter().rev().map(|&(_, hi, c)| (-hi, mirror(c))));
        seq[1].0 = -e;
        seq.push((-params.y_lattice(l_res + 1), Cell::Lump));
        seq.extend(positive.iter().map(|&(lo, _, c)| (lo, c)));
        Grid {
            start: e - 2.0,
            bounds: seq.iter().map(|x| x.0).collect(),
            cells: seq.iter().map(|x| x.1).collect(),
        }
    }

    /// Cell index and period of `y`.
    fn find(&self, y: f64) -> (usize, i64) {
        let m = ((y - self.start) / 2.0).floor();
        let p = y - 2.0 * m;
        let i = self.bounds.partition_point(|&b| b <= p).saturating_sub(1);
        (i, m as i64)
    }

    fn cell_lo(&self, i: usize, m: i64) -> f64 {
        self.bounds[i] + 2.0 * m as f64
    }

    fn cell_hi(&self, i: usize, m: i64) -> f64 {
        if i + 1 < self.bounds.len() {
            self.bounds[i + 1] + 2.0 * m as f64
        } else {
            self.start + 2.0 + 2.0 * m as f64
        }
    }

    /// Pieces of `[u, v]`: `(cell, lo, hi, full)`.
    fn pieces(&self, u: f64, v: f64) -> Vec<(Cell, f64, f64, bool)> {
        let (mut i, mut m) = self.find(u);
        let mut out = Vec::new();
        loop {
            let lo = self.cell_lo(i, m);
            let hi = self.cell_hi(i, m);
            if lo >= v {
                break;
            }
            let a = lo.max(u);
            let b = hi.min(v);
            if b > a {
                out.push((self.cells[i], a, b, lo >= u && hi <= v));
            }
            i += 1;
            if i == self.cells.len() {
                i = 0;
                m += 1;
            }
        }
        out
    }
}

/// Resolution and numerical knobs of a partition run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub l_res: i64,
    pub s_res: i64,
}

impl Resolution {
    pub fn default_for(params: &MapParams) -> Self {
        Resolution {
            l_res: params.k0() as i64 + 1,
            s_res: 2,
        }
    }
}

pub struct PartitionState {
    pub n: usize,
    pub atoms: Vec<RefinedAtom>,
    pub resolution: Resolution,
    grid: Grid,
    cache: BindingCache,
}

/// Child label after gluing: the outer group, an atom, or a lump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Label {
    Outer,
    Atom(AtomIndex),
    Lump,
}

impl PartitionState {
    /// `P_0` at the given resolution.
    pub fn initial(params: &MapParams, resolution: Resolution) -> Result<Self> {
        let k0 = params.k0() as i64;
        if resolution.l_res < k0 || resolution.l_res > params.k_max() as i64 || resolution.s_res < 1
        {
            return Err(Error::InvalidParams(format!(
                "resolution l_res = {}, s_res = {} out of range",
                resolution.l_res, resolution.s_res
            )));
        }
        let grid = Grid::new(params, resolution.l_res, resolution.s_res);
        let cache = BindingCache::new();
        let mut atoms = Vec::with_capacity(grid.cells.len());
        for i in 0..grid.cells.len() {
            let mut lo = grid.cell_lo(i, 0);
            let mut hi = grid.cell_hi(i, 0);
            if lo < -1.0 {
                lo += 2.0;
                hi += 2.0;
            }
            let mut a = RefinedAtom {
                lo,
                hi,
                returns: Vec::new(),
                hosts: Vec::new(),
                status: Status::Free,
                last_binding: None,
                image: (lo, hi),
                increasing: true,
                shifts: Vec::new(),
            };
            match grid.cells[i] {
                Cell::Atom(idx) if idx.is_outer() => {}
                Cell::Atom(idx) => {
                    let (p, _) = cache.get(params, idx.l, idx.s)?;
                    a.returns.push(0);
                    a.hosts.push(idx);
                    a.status = Status::Returned;
                    a.last_binding = Some((0, p));
                }
                Cell::Lump => a.status = Status::Frozen,
            }
            atoms.push(a);
        }
        Ok(PartitionState {
            n: 0,
            atoms,
            resolution,
            grid,
            cache,
        })
    }

    /// Runs refinement up to time `n`.
    pub fn build(params: &MapParams, resolution: Resolution, n: usize) -> Result<Self> {
        let mut st = Self::initial(params, resolution)?;
        while st.n < n {
            st = refine_step(params, st)?;
        }
        Ok(st)
    }

    pub fn total_length(&self) -> f64 {
        self.atoms.iter().map(|a| a.length()).sum()
    }

    /// CSV export: `n,lo,hi,status,R,Q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,lo,hi,status,R,Q\n");
        for a in &self.atoms {
            let r: Vec<String> = a.returns.iter().map(|r| r.to_string()).collect();
            let q: Vec<String> = a.hosts.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},\"{}\"",
                self.n,
                fmt_real(a.lo),
                fmt_real(a.hi),
                a.status,
                r.join(";"),
                q.join(";")
            );
        }
        out
    }
}

fn label_of(params: &MapParams, c: Cell) -> Label {
    match c {
        Cell::Atom(i) if i.is_outer() || i.is_edge(params.k0()) => Label::Outer,
        Cell::Atom(i) => Label::Atom(i),
        Cell::Lump => Label::Lump,
    }
}

/// Groups pieces of a covering image into children `(label, lo, hi)`.
fn group_children(params: &MapParams, pieces: &[(Cell, f64, f64, bool)]) -> Vec<(Label, f64, f64)> {
    let mut out: Vec<(Label, f64, f64)> = Vec::new();
    for &(c, lo, hi, _) in pieces {
        let lab = label_of(params, c);
        match out.last_mut() {
            Some(last) if last.0 == Label::Outer && lab == Label::Outer => last.2 = hi,
            _ => out.push((lab, lo, hi)),
        }
    }
    if out.len() > 1 {
        // partial end pieces of genuine atoms are glued to their neighbour
        let first = &pieces[0];
        if !first.3 && matches!(label_of(params, first.0), Label::Atom(_)) {
            let f = out.remove(0);
            out[0].1 = f.1;
        }
    }
    if out.len() > 1 {
        let last = &pieces[pieces.len() - 1];
        if !last.3 && matches!(label_of(params, last.0), Label::Atom(_)) {
            let f = out.pop().expect("nonempty");
            out.last_mut().expect("nonempty").2 = f.2;
        }
    }
    out
}

/// One refinement step `P_{n-1} -> P_n`.
pub fn refine_step(params: &MapParams, state: PartitionState) -> Result<PartitionState> {
    let PartitionState {
        n: prev,
        atoms,
        resolution,
        grid,
        cache,
    } = state;
    let n = prev + 1;
    let k0 = params.k0();
    let st = s_threshold(params);
    let mut next = Vec::with_capacity(atoms.len());
    for (ai, mut a) in atoms.into_iter().enumerate() {
        if a.status == Status::Frozen {
            next.push(a);
            continue;
        }
        let (u, v) = a.image;
        if contains_critical(params, u, v) {
            return Err(violation(ai, prev));
        }
        let (lo, hi, inc) = image(params, u, v).map_err(|_| violation(ai, prev))?;
        let m = frame_shift(lo);
        let sh = 2.0 * m as f64;
        a.image = (lo - sh, hi - sh);
        a.increasing = a.increasing == inc;
        a.shifts.push(m);
        let (u, v) = a.image;

        // (1) bound
        if let Some((r, p)) = a.last_binding {
            if !a.returns.is_empty() && n < r + p {
                a.status = Status::Bound { until: r + p };
                next.push(a);
                continue;
            }
        }
        let pieces = grid.pieces(u, v);
        // (2) free inside the outer group without covering an edge atom
        let in_group = pieces.iter().all(|p| label_of(params, p.0) == Label::Outer);
        let edge_full = pieces
            .iter()
            .any(|p| p.3 && matches!(p.0, Cell::Atom(i) if i.is_edge(k0)));
        if in_group && !edge_full {
            a.status = Status::Free;
            next.push(a);
            continue;
        }
        let any_full = pieces
            .iter()
            .any(|p| p.3 && matches!(p.0, Cell::Atom(i) if !i.is_outer()));
        if !any_full {
            // (3a)
            if pieces.iter().any(|p| p.0 == Cell::Lump) {
                a.status = Status::Frozen;
                next.push(a);
                continue;
            }
            let mid = 0.5 * (u + v);
            let host = pieces
                .iter()
                .filter_map(|p| match p.0 {
                    Cell::Atom(i) if !i.is_outer() => Some((i, p.1, p.2)),
                    _ => None,
                })
                .min_by(|x, y| dist_to(mid, x.1, x.2).total_cmp(&dist_to(mid, y.1, y.2)))
                .map(|x| x.0)
                .expect("a non-outer piece exists outside case (2)");
            if (host.s.abs() as f64) > st {
                let (p, _) = cache.get(params, host.l, host.s)?;
                a.returns.push(n);
                a.hosts.push(host);
                a.last_binding = Some((n, p));
                a.status = Status::Returned;
            } else {
                a.status = Status::Free;
            }
            next.push(a);
            continue;
        }
        // (3b) split
        let children = group_children(params, &pieces);
        let mut cuts = Vec::with_capacity(children.len() + 1);
        cuts.push(if a.increasing { a.lo } else { a.hi });
        for c in &children[..children.len() - 1] {
            cuts.push(a.preimage(params, c.2)?);
        }
        cuts.push(if a.increasing { a.hi } else { a.lo });
        for (ci, &(lab, clo, chi)) in children.iter().enumerate() {
            let (x0, x1) = (cuts[ci], cuts[ci + 1]);
            let (olo, ohi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
            let mut child = a.clone();
            child.lo = olo;
            child.hi = ohi;
            let cm = frame_shift(clo);
            let csh = 2.0 * cm as f64;
            child.image = (clo - csh, chi - csh);
            *child.shifts.last_mut().expect("n >= 1") += cm;
            match lab {
                Label::Outer => child.status = Status::Free,
                Label::Lump => child.status = Status::Frozen,
                Label::Atom(idx) => {
                    let p = if (idx.s.abs() as f64) > st {
                        cache.get(params, idx.l, idx.s)?.0
                    } else {
                        0
                    };
                    child.returns.push(n);
                    child.hosts.push(idx);
                    child.last_binding = Some((n, p));
                    child.status = Status::Returned;
                }
            }
            if child.length() < FREEZE_LENGTH {
                child.status = Status::Frozen;
            }
            next.push(child);
        }
    }
    Ok(PartitionState {
        n,
        atoms: next,
        resolution,
        grid,
        cache,
    })
}

fn dist_to(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    }
}
