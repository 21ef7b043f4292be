//! Sampled refinement chains.
//!
//! A chain follows one element of `P_n` for large `n`: it starts from a
//! uniformly drawn point of the circle, keeps the images `f^k(omega)` of the
//! current element for every `k`, and at each split picks one child with
//! probability proportional to its Lebesgue measure. The element itself is
//! never stored (it shrinks below double precision quickly); derivatives at
//! its points are recovered by pulling image points back through the stored
//! history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::atoms::{s_threshold, AtomIndex};
use super::binding::{binding_separation_check, BindingCache};
use super::image::{contains_critical, frame_shift, image, invert, LiftedCell};
use crate::error::{Error, Result};
use crate::map::reduce;
use crate::params::MapParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub steps: usize,
    /// Points of the current element whose derivatives are tracked.
    pub markers: usize,
    /// Rejection-sampling attempts per split.
    pub max_proposals: usize,
    /// Iterates at which the running distortion maximum is recorded.
    pub checkpoints: Vec<usize>,
    /// Sample points per bound image in the separation check.
    pub separation_samples: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            steps: 2000,
            markers: 9,
            max_proposals: 64,
            checkpoints: vec![250, 500, 1000, 1500, 2000],
            separation_samples: 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub start: f64,
    pub steps_done: usize,
    pub terminated: Option<String>,
    pub essential: usize,
    pub inessential: usize,
    pub escapes: usize,
    pub splits: usize,
    /// Running maximum of the marker distortion ratio.
    pub d0_max: f64,
    pub d0_trace: Vec<(usize, f64)>,
    pub growth_checks: usize,
    pub growth_failures: usize,
    /// Smallest `log |(f^{p+1})'(f^r(x))|` per return with `p > 0`.
    pub binding_expansion: Vec<f64>,
    pub separation_checks: usize,
    pub separation_violations: usize,
    /// Proposals accepted with probability clipped at 1.
    pub biased_proposals: usize,
}

struct Chain<'a> {
    params: &'a MapParams,
    cache: &'a BindingCache,
    cfg: &'a ChainConfig,
    /// Framed images `J_k`.
    hist: Vec<(f64, f64)>,
    /// `J_k = F(J_{k-1}) - 2 shifts[k-1]`.
    shifts: Vec<i64>,
    /// A genuine orbit inside the element, with cumulative log-derivatives.
    refpos: Vec<f64>,
    lref: Vec<f64>,
    markers: Vec<(f64, f64)>,
    last_binding: Option<(usize, usize)>,
    has_returns: bool,
    /// `(target time, |J_r|)` of a pending growth check.
    growth: Option<(usize, f64)>,
    s_tau: f64,
    report: ChainReport,
}

/// Outcome of locating a child in a covering image.
struct Piece {
    label: Option<AtomIndex>,
    lo: f64,
    hi: f64,
}

impl<'a> Chain<'a> {
    fn new(
        params: &'a MapParams,
        cache: &'a BindingCache,
        cfg: &'a ChainConfig,
        x0: f64,
    ) -> Result<Self> {
        let cell = LiftedCell::at(params, x0)?;
        let x = if cell.index.is_outer() && x0 < 0.0 {
            x0 + 2.0
        } else {
            x0
        };
        let cell = if cell.index.is_outer() {
            LiftedCell::new(params, cell.index, 0.0)
        } else {
            cell
        };
        let mut c = Chain {
            params,
            cache,
            cfg,
            hist: vec![(cell.lo, cell.hi)],
            shifts: Vec::new(),
            refpos: vec![x],
            lref: vec![0.0],
            markers: Vec::new(),
            last_binding: None,
            has_returns: false,
            growth: None,
            s_tau: s_threshold(params),
            report: ChainReport {
                start: x0,
                d0_max: 1.0,
                ..Default::default()
            },
        };
        c.markers = marker_offsets(cfg.markers)
            .map(|t| (cell.lo + t * (cell.hi - cell.lo), 0.0))
            .collect();
        if !cell.index.is_outer() {
            c.record_return(0, cell.index)?;
        }
        Ok(c)
    }

    fn record_return(&mut self, n: usize, idx: AtomIndex) -> Result<()> {
        let p = if (idx.s.abs() as f64) > self.s_tau {
            self.cache.get(self.params, idx.l, idx.s)?.0
        } else {
            0
        };
        self.has_returns = true;
        self.last_binding = Some((n, p));
        self.growth = None;
        if p > 0 {
            let (u, v) = self.hist[n];
            self.growth = Some((n + p + 1, v - u));
            let mut worst = f64::INFINITY;
            for &(pos, _) in &self.markers {
                let mut y = pos;
                let mut s = 0.0;
                for _ in 0..=p {
                    let (ny, d) = self.params.lifted_d01(y)?;
                    s += d.abs().ln();
                    y = reduce(ny);
                }
                worst = worst.min(s);
            }
            self.report.binding_expansion.push(worst);
        }
        Ok(())
    }

    fn advance(&mut self, n: usize) -> Result<()> {
        let (u, v) = self.hist[n - 1];
        if contains_critical(self.params, u, v) {
            return Err(Error::DiffeomorphismViolation {
                atom: 0,
                iterate: n - 1,
            });
        }
        let (lo, hi, _) = image(self.params, u, v)?;
        let m = frame_shift(lo);
        let sh = 2.0 * m as f64;
        self.hist.push((lo - sh, hi - sh));
        self.shifts.push(m);
        let (r, d) = self.params.lifted_d01(self.refpos[n - 1])?;
        self.refpos.push(r - sh);
        self.lref.push(self.lref[n - 1] + d.abs().ln());
        for mk in &mut self.markers {
            let (y, d) = self.params.lifted_d01(mk.0)?;
            mk.0 = y - sh;
            mk.1 += d.abs().ln();
        }
        let (lmin, lmax) = self.marker_range();
        let d0 = (lmax - lmin).exp();
        self.report.d0_max = self.report.d0_max.max(d0);
        Ok(())
    }

    fn marker_range(&self) -> (f64, f64) {
        self.markers
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| {
                (a.min(m.1), b.max(m.1))
            })
    }

    /// Pulls `y` in `J_n` back until it meets the reference orbit. Returns the
    /// orbit segment `y_k..y_n`, the log-slopes along it, and `log|(f^n)'|`.
    fn pullback(&self, n: usize, y: f64) -> Result<(usize, Vec<f64>, Vec<f64>, f64)> {
        let mut path = vec![y];
        let mut slopes = Vec::new();
        let mut cur = y;
        let mut sum = 0.0;
        for j in (1..=n).rev() {
            let (a, b) = self.hist[j - 1];
            let guess = self.refpos[j - 1];
            let (x, d) = invert(self.params, a, b, self.shifts[j - 1], cur, guess)?;
            let ld = d.abs().ln();
            sum += ld;
            path.push(x);
            slopes.push(ld);
            cur = x;
            if (x - guess).abs() <= 4.0 * f64::EPSILON * guess.abs().max(1e-300) {
                path.reverse();
                slopes.reverse();
                return Ok((j - 1, path, slopes, self.lref[j - 1] + sum));
            }
        }
        path.reverse();
        slopes.reverse();
        Ok((0, path, slopes, sum))
    }

    /// Case split at time `n` for a non-bound element.
    fn classify(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let p = self.params;
        let (u, v) = self.hist[n];
        let a = LiftedCell::at(p, u)?;
        let b = LiftedCell::at(p, v)?;
        // (2) inside the outer group without covering an edge atom
        if a.in_outer_group(p) && b.in_outer_group(p) {
            let (glo, ghi) = a.outer_group_span(p);
            let (glo2, _) = b.outer_group_span(p);
            if glo == glo2 && u >= glo && v <= ghi {
                let w = LiftedCell::new(p, AtomIndex::new(p.k0() as i64, 1, 1), 0.0);
                let edge_lo = (glo, glo + (w.hi - w.lo));
                let edge_hi = (ghi - (w.hi - w.lo), ghi);
                let covers = |e: (f64, f64)| u <= e.0 && v >= e.1;
                if !covers(edge_lo) && !covers(edge_hi) {
                    return Ok(());
                }
            }
        }
        let any_full = if a.same_as(&b) {
            u <= a.lo && v >= a.hi
        } else if a.right(p).is_some_and(|r| r.same_as(&b)) {
            (u <= a.lo && !a.index.is_outer()) || (v >= b.hi && !b.index.is_outer())
        } else {
            true
        };
        if !any_full {
            // (3a)
            let c = LiftedCell::at(p, 0.5 * (u + v))?;
            let host = if c.index.is_outer() {
                if a.index.is_outer() {
                    b
                } else {
                    a
                }
            } else {
                c
            };
            if (host.index.s.abs() as f64) > self.s_tau {
                self.report.inessential += 1;
                self.record_return(n, host.index)?;
            }
            return Ok(());
        }
        // (3b)
        self.split(n, rng)
    }

    fn split(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let (u, v) = self.hist[n];
        let (lmin, _) = self.marker_range();
        let floor = lmin - 1.0;
        let mut chosen = None;
        for attempt in 0..self.cfg.max_proposals {
            let y = u + (v - u) * rng.random::<f64>();
            if LiftedCell::at(self.params, y).is_err() {
                continue;
            }
            let pb = self.pullback(n, y)?;
            let acc = (floor - pb.3).exp();
            let last = attempt + 1 == self.cfg.max_proposals;
            if acc > 1.0 || last {
                self.report.biased_proposals += 1;
                chosen = Some((y, pb));
                break;
            }
            if rng.random::<f64>() < acc {
                chosen = Some((y, pb));
                break;
            }
        }
        let Some((y, (k, path, slopes, _))) = chosen else {
            return Err(Error::SingularPoint(u));
        };
        let piece = self.piece_at(n, y)?;
        // the accepted point becomes the reference orbit
        for (i, &x) in path.iter().enumerate() {
            self.refpos[k + i] = x;
        }
        for (i, &s) in slopes.iter().enumerate() {
            self.lref[k + i + 1] = self.lref[k + i] + s;
        }
        let mut markers = Vec::with_capacity(self.cfg.markers);
        for t in marker_offsets(self.cfg.markers) {
            let z = piece.lo + t * (piece.hi - piece.lo);
            let (_, _, _, l) = self.pullback(n, z)?;
            markers.push((z, l));
        }
        self.markers = markers;
        let cm = frame_shift(piece.lo);
        let csh = 2.0 * cm as f64;
        self.hist[n] = (piece.lo - csh, piece.hi - csh);
        self.shifts[n - 1] += cm;
        self.refpos[n] -= csh;
        for mk in &mut self.markers {
            mk.0 -= csh;
        }
        self.report.splits += 1;
        match piece.label {
            None => {}
            Some(idx) => {
                if (idx.s.abs() as f64) > self.s_tau {
                    self.report.essential += 1;
                } else {
                    self.report.escapes += 1;
                }
                self.record_return(n, idx)?;
            }
        }
        Ok(())
    }

    /// The child of the current image containing `y`, after end gluing.
    fn piece_at(&self, n: usize, y: f64) -> Result<Piece> {
        let p = self.params;
        let k0 = p.k0() as i64;
        let (u, v) = self.hist[n];
        let c = LiftedCell::at(p, y)?;
        if c.in_outer_group(p) {
            let (glo, ghi) = c.outer_group_span(p);
            let base = c.group_base();
            let mut lo = glo.max(u);
            let mut hi = ghi.min(v);
            // partial atoms next to the group are glued to it
            if u < glo && LiftedCell::new(p, AtomIndex::new(k0, 1, 2), base).lo < u {
                lo = u;
            }
            if v > ghi && LiftedCell::new(p, AtomIndex::new(-k0, 1, 2), base + 2.0).hi > v {
                hi = v;
            }
            return Ok(Piece {
                label: None,
                lo,
                hi,
            });
        }
        let full = u <= c.lo && c.hi <= v;
        if !full {
            // an end fragment goes to its neighbour inside the image
            let nb = if c.lo < u { c.right(p) } else { c.left(p) };
            let nb = nb.ok_or(Error::SingularPoint(y))?;
            let z = 0.5 * (nb.lo.max(u) + nb.hi.min(v));
            return self.piece_at(n, z);
        }
        let mut lo = c.lo;
        let mut hi = c.hi;
        if let Some(l) = c.left(p) {
            if l.lo < u && u < l.hi && !l.in_outer_group(p) {
                lo = u;
            }
        }
        if let Some(r) = c.right(p) {
            if r.hi > v && v > r.lo && !r.in_outer_group(p) {
                hi = v;
            }
        }
        Ok(Piece {
            label: Some(c.index),
            lo,
            hi,
        })
    }

    fn run(&mut self, rng: &mut ChaCha8Rng) {
        let mut next_cp = 0;
        for n in 1..=self.cfg.steps {
            let out = self.step(n, rng);
            while next_cp < self.cfg.checkpoints.len() && self.cfg.checkpoints[next_cp] <= n {
                self.report
                    .d0_trace
                    .push((self.cfg.checkpoints[next_cp], self.report.d0_max));
                next_cp += 1;
            }
            if let Err(e) = out {
                self.report.terminated = Some(e.to_string());
                return;
            }
            self.report.steps_done = n;
        }
    }

    fn step(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.advance(n)?;
        let (u, v) = self.hist[n];
        if let Some((t, len)) = self.growth {
            if t == n {
                self.report.growth_checks += 1;
                if v - u <= len {
                    self.report.growth_failures += 1;
                }
                self.growth = None;
            }
        }
        if let Some((r, p)) = self.last_binding {
            if self.has_returns && n < r + p {
                let rep = binding_separation_check(
                    self.params,
                    (u, v),
                    n,
                    r,
                    self.cfg.separation_samples,
                );
                self.report.separation_checks += 1;
                self.report.separation_violations += rep.violations;
                return Ok(());
            }
        }
        self.classify(n, rng)
    }
}

/// Marker positions as fractions of the element, clustered towards the ends.
fn marker_offsets(m: usize) -> impl Iterator<Item = f64> {
    let m = m.max(2);
    (0..m).map(move |i| 0.5 - 0.5 * (std::f64::consts::PI * (i as f64 + 0.5) / m as f64).cos())
}

/// Runs one chain from a start point drawn with `rng`.
pub fn run_chain(
    params: &MapParams,
    cache: &BindingCache,
    cfg: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> ChainReport {
    loop {
        let x0 = 2.0 * rng.random::<f64>() - 1.0;
        if let Ok(mut c) = Chain::new(params, cache, cfg, x0) {
            c.run(rng);
            return c.report;
        }
    }
}

/// Aggregate over independent chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chains: usize,
    pub terminated: usize,
    pub returns_with_binding: usize,
    pub min_binding_expansion: f64,
    pub binding_expansion_failures: usize,
    pub growth_checks: usize,
    pub growth_failures: usize,
    pub separation_checks: usize,
    pub separation_violations: usize,
    /// Maximum over chains of the running distortion at each checkpoint.
    pub d0_trace: Vec<(usize, f64)>,
    pub biased_proposals: usize,
}

/// Runs `count` chains in parallel; chain `i` uses its own seeded stream, so
/// the result does not depend on the number of workers.
pub fn run_chains(
    params: &MapParams,
    cfg: &ChainConfig,
    count: usize,
    seed: u64,
) -> (Vec<ChainReport>, ChainSummary) {
    let cache = BindingCache::new();
    let reports: Vec<ChainReport> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            run_chain(params, &cache, cfg, &mut rng)
        })
        .collect();
    let mut s = ChainSummary {
        chains: count,
        terminated: 0,
        returns_with_binding: 0,
        min_binding_expansion: f64::INFINITY,
        binding_expansion_failures: 0,
        growth_checks: 0,
        growth_failures: 0,
        separation_checks: 0,
        separation_violations: 0,
        d0_trace: cfg.checkpoints.iter().map(|&c| (c, 1.0)).collect(),
        biased_proposals: 0,
    };
    let ln2 = std::f64::consts::LN_2;
    for r in &reports {
        s.terminated += usize::from(r.terminated.is_some());
        s.returns_with_binding += r.binding_expansion.len();
        for &e in &r.binding_expansion {
            s.min_binding_expansion = s.min_binding_expansion.min(e);
            s.binding_expansion_failures += usize::from(e <= ln2);
        }
        s.growth_checks += r.growth_checks;
        s.growth_failures += r.growth_failures;
        s.separation_checks += r.separation_checks;
        s.separation_violations += r.separation_violations;
        s.biased_proposals += r.biased_proposals;
        for (slot, &(_, d)) in s.d0_trace.iter_mut().zip(&r.d0_trace) {
            slot.1 = slot.1.max(d);
        }
    }
    (reports, s)
}
