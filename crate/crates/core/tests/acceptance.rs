//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! measured values, and exits non-zero when a criterion outside
//! `DOCUMENTED_FAILURES` fails.
//!
//! Criteria stated for "a surviving mu" are evaluated at the median survivor
//! of each reference scan and pass when either suite meets them; both values
//! are printed.

use std::f64::consts::PI;
use std::time::Instant;

use circmap::bounds::{cell_constants, fd_check, scale_spread};
use circmap::cli;
use circmap::dynamics::{expansion_statistic, kronecker_starts, tail_measure};
use circmap::map::{critical_point, eval_derivative, eval_second_derivative};
use circmap::measure::{
    clt_check, correlation, density_l1_distance, entropy_estimate, pushforward_check, srb_density,
    stability, DensityConfig, Observable, MIN_FIT_LAGS,
};
use circmap::partition::{
    atom_bounds, cell_atoms, length_constant, run_chains, s_threshold, sample_returns, AtomIndex,
    BindingCache, ChainConfig,
};
use circmap::scan::{default_grid, scan, ScanConfig, ScanReport};
use circmap::{MapParams, ParamSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0;

const FD_POINTS: usize = 10_000;
const FD_TOL_D1: f64 = 1e-6;
const FD_TOL_D2: f64 = 1e-4;
const FD_SECONDS: f64 = 5.0;

const LATTICE_SPAN: i64 = 20;
const LATTICE_TOL: f64 = 1e-10;
const MIDPOINT_TOL: f64 = 1e-14;

const TILING_CELLS: i64 = 6;
const TILING_S_RES: i64 = 3;
const TILING_TOL: f64 = 1e-12;
const LENGTH_SAMPLES: usize = 100;
const LENGTH_TOL: f64 = 1e-12;

const LEMMA_CELLS: i64 = 10;
const LEMMA_SAMPLES: usize = 2000;
const SCALE_TOL: f64 = 0.05;
const LEMMA_SECONDS: f64 = 30.0;

const DEPTH_LO: i64 = 2;
const DEPTH_HI: i64 = 20;

const MIN_RETURNS: usize = 500;
const RETURN_STARTS: usize = 40_000;
const RETURN_ITERS: usize = 10_000;
const RETURN_CAP: usize = 600;

const CHAINS: usize = 32;
const D0_GROWTH: f64 = 0.10;

const GRID: usize = 1000;
const HORIZON: usize = 10_000;
const RHO_GRID: usize = 100;

const EXP_SAMPLES: usize = 1000;
const EXP_N: usize = 10_000;
const EXP_FRACTION: f64 = 0.95;
const EXP_SECONDS: f64 = 120.0;

const TAIL_SAMPLES: usize = 10_000;
const TAIL_N_MAX: usize = 10_000;
const TAIL_R2: f64 = 0.9;

const PUSH_TOL: f64 = 0.05;
const SELF_TOL: f64 = 0.02;

const CORR_ITERS: usize = 10_000_000;
const CORR_LAGS: usize = 40;
const CORR_R2: f64 = 0.8;

const CLT_BLOCK: usize = 10_000;
const CLT_SAMPLE: usize = 1000;
const CLT_SCALE_TOL: f64 = 0.15;

const ENTROPY_TOL: f64 = 0.10;
/// Target separations `|mu - mu'|` as fractions of `eps`.
const STABILITY_SCALES: [f64; 3] = [3e-3, 3e-2, 3e-1];

/// Criteria known not to be met at this scale; see the project notes.
const DOCUMENTED_FAILURES: &[u32] = &[12];

struct Suite {
    name: &'static str,
    template: MapParams,
    survivors: Vec<f64>,
    mu: f64,
}

impl Suite {
    fn params(&self) -> MapParams {
        self.template.with_mu(self.mu).unwrap()
    }
}

struct Outcome {
    id: u32,
    pass: bool,
}

fn report(out: &mut Vec<Outcome>, id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass {
        "PASS"
    } else if DOCUMENTED_FAILURES.contains(&id) {
        "FAIL (documented)"
    } else {
        "FAIL"
    };
    println!("[{tag}] C{id:02} {name}: {detail}");
    out.push(Outcome { id, pass });
}

fn info(text: String) {
    println!("        info: {text}");
}

fn templates() -> [(&'static str, MapParams); 2] {
    [
        ("beta1", ParamSpec::reference_beta1().build().unwrap()),
        ("beta3", ParamSpec::reference_beta3().build().unwrap()),
    ]
}

fn c01(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in templates() {
        let p = p.with_mu(0.5 * p.eps()).unwrap();
        let r = fd_check(&p, FD_POINTS, SEED);
        pass &= r.max_rel_d1 < FD_TOL_D1 && r.max_rel_d2 < FD_TOL_D2;
        parts.push(format!(
            "{name} d1 {:.2e} d2 {:.2e}",
            r.max_rel_d1, r.max_rel_d2
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < FD_SECONDS;
    report(
        out,
        1,
        "analytic vs finite differences",
        pass,
        format!(
            "{} over {FD_POINTS} points (tol {FD_TOL_D1:e}/{FD_TOL_D2:e}); {secs:.2} s",
            parts.join("; ")
        ),
    );
}

fn c02(out: &mut Vec<Outcome>) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in templates() {
        let k0 = p.k0() as i64;
        let (mut worst_d, mut worst_mid) = (0.0f64, 0.0f64);
        let mut alternates = true;
        for k in k0..=k0 + LATTICE_SPAN {
            for sk in [k, -k] {
                let x = critical_point(&p, sk).unwrap().position;
                worst_d = worst_d.max(eval_derivative(&p, x).unwrap().abs());
            }
            let s0 = eval_second_derivative(&p, p.x_lattice(k)).unwrap().signum();
            let s1 = eval_second_derivative(&p, p.x_lattice(k + 1))
                .unwrap()
                .signum();
            alternates &= s0 == -s1;
            let x = p.x_lattice(k);
            let mid = 0.5 * (p.y_lattice(k + 1) + p.y_lattice(k));
            worst_mid = worst_mid.max(((mid - x) / x).abs());
        }
        pass &= worst_d < LATTICE_TOL && worst_mid < MIDPOINT_TOL && alternates;
        parts.push(format!(
            "{name} max|f'(x_k)| {worst_d:.1e}, midpoint rel {worst_mid:.1e}, f'' alternates {alternates}"
        ));
    }
    report(
        out,
        2,
        "critical lattice",
        pass,
        format!(
            "{} (k0..k0+{LATTICE_SPAN}, tol {LATTICE_TOL:e}/{MIDPOINT_TOL:e})",
            parts.join("; ")
        ),
    );
}

fn c03(out: &mut Vec<Outcome>) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in templates() {
        let k0 = p.k0() as i64;
        let q = p.lattice_ratio();
        let mut worst_gap = 0.0f64;
        for l in (k0..k0 + TILING_CELLS).flat_map(|l| [l, -l]) {
            let (lo, hi) = (p.y_lattice(l.abs() + 1), p.y_lattice(l.abs()));
            let w = hi - lo;
            let atoms = cell_atoms(&p, l, TILING_S_RES);
            let x = p.x_lattice(l.abs());
            // atoms with |s| > s_res fill (x_l - r, x_l + r)
            let r = (hi - x) * q.powi(TILING_S_RES as i32);
            let sign = l.signum() as f64;
            let (left, right) = ((sign * lo).min(sign * hi), (sign * lo).max(sign * hi));
            for pair in atoms.windows(2) {
                let g = pair[1].lo - pair[0].hi;
                // the single large gap is the unresolved core of width 2r
                let gap = if g.abs() > r {
                    (g - 2.0 * r).abs()
                } else {
                    g.abs()
                };
                worst_gap = worst_gap.max(gap / w);
            }
            worst_gap = worst_gap.max(((atoms[0].lo - left) / w).abs());
            worst_gap = worst_gap.max(((atoms.last().unwrap().hi - right) / w).abs());
        }
        let a1 = length_constant(&p);
        let k = PI / p.beta();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst_len = 0.0f64;
        for _ in 0..LENGTH_SAMPLES {
            let l = rng.random_range(k0..=k0 + 10) * if rng.random::<bool>() { 1 } else { -1 };
            let s = rng.random_range(1..=8i64) * if rng.random::<bool>() { 1 } else { -1 };
            let d = l.abs() + s.abs();
            let j = rng.random_range(1..=d.pow(3));
            let a = atom_bounds(&p, AtomIndex::new(l, s, j)).unwrap();
            let formula = a1 * (-k * d as f64).exp() / (d as f64).powi(3);
            worst_len = worst_len.max(((a.length - formula) / formula).abs());
        }
        pass &= worst_gap < TILING_TOL && worst_len < LENGTH_TOL;
        parts.push(format!(
            "{name} gap/overlap {worst_gap:.1e}, length rel {worst_len:.1e}"
        ));
    }
    report(
        out,
        3,
        "partition geometry",
        pass,
        format!(
            "{} (tol {TILING_TOL:e}, {LENGTH_SAMPLES} indices)",
            parts.join("; ")
        ),
    );
}

fn c04(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in templates() {
        let k0 = p.k0() as i64;
        let cells: Vec<_> = (k0 + 1..=k0 + LEMMA_CELLS)
            .map(|l| cell_constants(&p, l, LEMMA_SAMPLES))
            .collect();
        let sp = scale_spread(&cells);
        let worst = sp.c_hat.max(sp.k1_hat).max(sp.c2_upper).max(sp.c2_lower);
        pass &= worst < SCALE_TOL;
        let c = cells[0];
        parts.push(format!(
            "{name} C {:.3} K1 {:.3} C2 {:.3}/{:.3}, spread {worst:.1e}",
            c.c_hat, c.k1_hat, c.c2_upper, c.c2_lower
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < LEMMA_SECONDS;
    report(
        out,
        4,
        "local derivative constants scale invariance",
        pass,
        format!(
            "{} over {LEMMA_CELLS} cells (tol {SCALE_TOL}); {secs:.2} s",
            parts.join("; ")
        ),
    );
}

fn c05(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let mut pass = false;
    let mut parts = Vec::new();
    for s in suites {
        let p = s.params();
        let k0 = p.k0() as i64;
        let st = s_threshold(&p);
        let ub = 2.0 * PI / (p.beta() * p.sigma().ln());
        let cache = BindingCache::new();
        let (mut iota, mut top) = (f64::INFINITY, 0.0f64);
        let (mut blocks, mut undefined, mut violations, mut capped) = (0, 0, 0, 0);
        for l in k0..=k0 + DEPTH_HI {
            for sv in (-(DEPTH_HI + 2)..=DEPTH_HI + 2).filter(|&v| v != 0 && (v.abs() as f64) > st)
            {
                let d = l + sv.abs();
                if d < k0 + DEPTH_LO || d > k0 + DEPTH_HI {
                    continue;
                }
                blocks += 1;
                let (pp, cap) = cache.get(&p, l, sv).unwrap();
                capped += usize::from(cap);
                if pp == 0 {
                    undefined += 1;
                    continue;
                }
                let r = pp as f64 / d as f64;
                iota = iota.min(r);
                top = top.max(r);
                violations += usize::from(cap || r > ub);
            }
        }
        let ok = violations == 0 && iota > 0.0 && iota.is_finite();
        pass |= ok;
        parts.push(format!(
            "{} mu {:.6e}: band [{iota:.3}, {top:.3}] within [iota, {ub:.3}], {violations} upper violations, \
             {capped} capped, {undefined} of {blocks} blocks with no binding period",
            s.name, s.mu
        ));
    }
    report(out, 5, "binding-period linearity", pass, parts.join("; "));
}

fn c06(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let mut pass = false;
    let mut parts = Vec::new();
    for s in suites {
        let p = s.params();
        let cache = BindingCache::new();
        let rs = sample_returns(
            &p,
            &cache,
            &kronecker_starts(SEED, RETURN_STARTS),
            RETURN_ITERS,
            RETURN_CAP,
        );
        let ln2 = 2f64.ln();
        let bad = rs.iter().filter(|r| r.log_expansion <= ln2).count();
        let min = rs
            .iter()
            .map(|r| r.log_expansion)
            .fold(f64::INFINITY, f64::min);
        let ok = rs.len() >= MIN_RETURNS && bad == 0;
        pass |= ok;
        parts.push(format!(
            "{} {} returns, min log|(f^(p+1))'| {min:.3} (ln 2 = {ln2:.3}), {bad} at or below",
            s.name,
            rs.len()
        ));
    }
    report(out, 6, "binding expansion > 2", pass, parts.join("; "));
}

fn c07(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let mut pass = false;
    let mut parts = Vec::new();
    for s in suites {
        let p = s.params();
        let (_, sum) = run_chains(&p, &ChainConfig::default(), CHAINS, SEED);
        let at = |n: usize| {
            sum.d0_trace
                .iter()
                .find(|(c, _)| *c == n)
                .map(|v| v.1)
                .unwrap()
        };
        let (d1, d2) = (at(1000), at(2000));
        let growth = d2 / d1 - 1.0;
        pass |= growth <= D0_GROWTH;
        parts.push(format!(
            "{} D0(1000) {d1:.4} D0(2000) {d2:.4} growth {:.1}% ({} chains, {} terminated)",
            s.name,
            100.0 * growth,
            CHAINS,
            sum.terminated
        ));
    }
    report(
        out,
        7,
        "bounded distortion",
        pass,
        format!("{} (tol 10%)", parts.join("; ")),
    );
}

fn c08(out: &mut Vec<Outcome>) -> Vec<Suite> {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut suites = Vec::new();
    for (name, p) in templates() {
        let t = Instant::now();
        let grid = default_grid(&p, GRID, false);
        let cfg = ScanConfig::default_for(&p);
        let r = scan(&p, &grid, &cfg).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let mut long = cfg.clone();
        long.horizon_n = 2 * HORIZON;
        let r2 = scan(&p, &grid, &long).unwrap();
        let resurrected = r
            .verdicts
            .iter()
            .zip(&r2.verdicts)
            .filter(|(a, b)| !a.survived && b.survived)
            .count();
        pass &= r.survivor_fraction > 0.0 && resurrected == 0;
        parts.push(format!(
            "{name} fraction {:.3} at n={HORIZON} ({secs:.1} s), {:.3} at n={}, {resurrected} resurrected",
            r.survivor_fraction,
            r2.survivor_fraction,
            2 * HORIZON
        ));
        failure_info(name, &r);
        let survivors = r.survivors();
        let mu = if survivors.is_empty() {
            p.eps()
        } else {
            survivors[survivors.len() / 2]
        };
        suites.push(Suite {
            name,
            template: p,
            survivors,
            mu,
        });
    }
    report(out, 8, "scan produces survivors", pass, parts.join("; "));
    suites
}

fn failure_info(name: &str, r: &ScanReport) {
    let count = |f: fn(&circmap::scan::ExclusionVerdict) -> bool| {
        r.verdicts.iter().filter(|v| f(v)).count()
    };
    info(format!(
        "{name} failures: 1a {}, 1b {}, cpr {}, indeterminate {}",
        count(|v| !v.cond_1a.pass),
        count(|v| !v.cond_1b.pass),
        count(|v| !v.cond_cpr.pass),
        r.indeterminate
    ));
}

fn rho_sweep() {
    let rhos: [(&str, ParamSpec, [f64; 4]); 2] = [
        ("beta1", ParamSpec::reference_beta1(), [0.3, 0.4, 0.5, 0.55]),
        (
            "beta3",
            ParamSpec::reference_beta3(),
            [0.005, 0.01, 0.02, 0.05],
        ),
    ];
    for (name, spec, values) in rhos {
        let mut parts = Vec::new();
        for rho in values {
            let mut s = spec.clone();
            s.rho = rho;
            let p = s.build().unwrap();
            let r = scan(
                &p,
                &default_grid(&p, RHO_GRID, false),
                &ScanConfig::default_for(&p),
            )
            .unwrap();
            parts.push(format!("rho {rho}: {:.2}", r.survivor_fraction));
        }
        info(format!(
            "{name} survivor fraction vs rho ({RHO_GRID}-point grid): {}",
            parts.join(", ")
        ));
    }
}

fn c09(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let mut pass = false;
    let mut parts = Vec::new();
    for s in suites {
        let t = Instant::now();
        let e = expansion_statistic(&s.params(), EXP_SAMPLES, EXP_N, SEED).unwrap();
        let secs = t.elapsed().as_secs_f64();
        pass |= e.fraction >= EXP_FRACTION && secs < EXP_SECONDS;
        parts.push(format!(
            "{} fraction {:.3}, mean exponent {:.3} vs threshold {:.3} ({secs:.1} s, {} workers)",
            s.name,
            e.fraction,
            e.mean_lyapunov,
            e.threshold,
            rayon::current_num_threads()
        ));
    }
    report(out, 9, "expansion statistic", pass, parts.join("; "));
}

fn c10(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let grid: Vec<usize> = (1..=10).map(|i| 50 * i).collect();
    let mut pass = false;
    let mut parts = Vec::new();
    for s in suites {
        let p = s.params();
        let t = tail_measure(&p, &grid, TAIL_SAMPLES, SEED, TAIL_N_MAX).unwrap();
        pass |= t.fit_rate > 0.0 && t.fit_r2 >= TAIL_R2;
        parts.push(format!(
            "{} rate {:.4} R2 {:.3} ({} discarded, {} zero fractions)",
            s.name,
            t.fit_rate,
            t.fit_r2,
            t.discarded_count,
            t.zero_fraction_n.len()
        ));
        let t2 = tail_measure(&p, &grid, TAIL_SAMPLES, SEED, 2 * TAIL_N_MAX).unwrap();
        info(format!(
            "{} doubling n_max: rate {:.4} -> {:.4}, R2 {:.3} -> {:.3}",
            s.name, t.fit_rate, t2.fit_rate, t.fit_r2, t2.fit_r2
        ));
    }
    report(
        out,
        10,
        "tail decay",
        pass,
        format!("{} (R2 >= {TAIL_R2})", parts.join("; ")),
    );
}

fn c11_to_14(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let cfg = DensityConfig::default();
    let mut p11 = (false, Vec::new());
    let mut p12 = (false, Vec::new());
    let mut p13 = (false, Vec::new());
    let mut p14 = (false, Vec::new());
    for s in suites {
        let p = s.params();
        let h = srb_density(
            &p,
            cfg.n_transient,
            cfg.n_iter,
            cfg.n_bins,
            cfg.sample_size,
            SEED,
        )
        .unwrap();
        let h2 = srb_density(
            &p,
            cfg.n_transient,
            cfg.n_iter,
            cfg.n_bins,
            cfg.sample_size,
            SEED + 1,
        )
        .unwrap();
        let push = pushforward_check(&p, &h);
        let selfd = density_l1_distance(&h, &h2).unwrap();
        p11.0 |= push < PUSH_TOL && selfd < SELF_TOL;
        p11.1.push(format!(
            "{} pushforward {push:.4}, self-distance {selfd:.4}",
            s.name
        ));

        let c = correlation(
            &p,
            Observable::SinPi,
            Observable::SinPi,
            CORR_LAGS,
            CORR_ITERS,
            SEED,
        )
        .unwrap();
        p12.0 |= c.fitted_lags >= MIN_FIT_LAGS && c.fit_rate > 0.0 && c.fit_r2 >= CORR_R2;
        let shown: Vec<String> = c.corr.iter().take(4).map(|v| format!("{v:.1e}")).collect();
        p12.1.push(format!(
            "{} {} lags above floor {:.1e} (need {MIN_FIT_LAGS}), rate {:.3} R2 {:.3}, Corr_0..3 [{}]",
            s.name,
            c.fitted_lags,
            c.noise_floor,
            c.fit_rate,
            c.fit_r2,
            shown.join(", ")
        ));

        let r = clt_check(&p, Observable::SinPi, CLT_BLOCK, CLT_SAMPLE, SEED).unwrap();
        let r4 = clt_check(&p, Observable::SinPi, 4 * CLT_BLOCK, CLT_SAMPLE, SEED).unwrap();
        let flat = clt_check(
            &p,
            Observable::Constant { value: 1.0 },
            CLT_BLOCK,
            100,
            SEED,
        )
        .unwrap();
        let ks = r.ks_statistic.unwrap_or(f64::INFINITY);
        p13.0 |= ks < r.ks_critical_1pct && flat.zero_variance && flat.ks_statistic.is_none();
        let scale = (r4.theta_hat / r.theta_hat - 1.0).abs();
        p13.1.push(format!(
            "{} KS {ks:.4} vs {:.4}, constant observable zero-variance {}",
            s.name, r.ks_critical_1pct, flat.zero_variance
        ));
        info(format!(
            "{} theta {:.4} at block {CLT_BLOCK}, {:.4} at {} ({:.1}%, tol {:.0}%)",
            s.name,
            r.theta_hat,
            r4.theta_hat,
            4 * CLT_BLOCK,
            100.0 * scale,
            100.0 * CLT_SCALE_TOL
        ));

        let others = stability_partners(s);
        let ex = expansion_statistic(&p, EXP_SAMPLES, EXP_N, SEED).unwrap();
        let ent = entropy_estimate(&p, &h);
        let rel = (ent.value / ex.mean_lyapunov - 1.0).abs();
        match others {
            Some(others) => {
                let st = stability(&s.template, s.mu, &others, &cfg).unwrap();
                p14.0 |= st.non_decreasing && rel < ENTROPY_TOL;
                let pairs: Vec<String> = st
                    .separations
                    .iter()
                    .zip(&st.distances)
                    .map(|(a, b)| format!("{a:.2e}: {b:.4}"))
                    .collect();
                p14.1.push(format!(
                    "{} distances [{}] non-decreasing {} (self {:.4}); entropy {:.4} vs Lyapunov {:.4} ({:.1}%)",
                    s.name,
                    pairs.join(", "),
                    st.non_decreasing,
                    st.self_distance,
                    ent.value,
                    ex.mean_lyapunov,
                    100.0 * rel
                ));
            }
            None => p14.1.push(format!("{} fewer than four survivors", s.name)),
        }
    }
    report(out, 11, "SRB invariance", p11.0, p11.1.join("; "));
    report(out, 12, "correlation decay", p12.0, p12.1.join("; "));
    report(out, 13, "CLT", p13.0, p13.1.join("; "));
    report(out, 14, "statistical stability", p14.0, p14.1.join("; "));
}

/// Survivors closest (in log separation) to each target scale, distinct.
fn stability_partners(s: &Suite) -> Option<Vec<f64>> {
    let eps = s.template.eps();
    let mut pool: Vec<f64> = s.survivors.iter().copied().filter(|&m| m != s.mu).collect();
    let mut picked = Vec::new();
    for frac in STABILITY_SCALES {
        let target = (frac * eps).ln();
        let (i, _) = pool
            .iter()
            .enumerate()
            .map(|(i, &m)| (i, ((m - s.mu).abs().ln() - target).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        picked.push(pool.remove(i));
    }
    Some(picked)
}

fn c15(out: &mut Vec<Outcome>, suites: &[Suite]) {
    let dir = std::env::temp_dir().join(format!("circmap-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let surv = dir.join("survivors.txt");
    let text: String = suites[0]
        .survivors
        .iter()
        .map(|m| format!("{m:?}\n"))
        .collect();
    std::fs::write(&surv, text).unwrap();
    let surv = surv.to_str().unwrap().to_string();
    let commands: Vec<Vec<&str>> = vec![
        vec!["map-eval", "--points", "64"],
        vec!["partition-build", "--n", "2"],
        vec!["binding", "--l", "1,2,3", "--s", "-2,1,3"],
        vec!["scan", "--grid-size", "40", "--horizon-n", "1000"],
        vec!["lyapunov", "--n", "2000", "--sample-size", "64"],
        vec!["recurrence", "--n", "2000", "--sample-size", "64"],
        vec!["tails", "--sample-size", "200", "--n-max", "1000"],
        vec![
            "density",
            "--survivors",
            &surv,
            "--iters",
            "20000",
            "--bins",
            "64",
        ],
        vec![
            "correlations",
            "--survivors",
            &surv,
            "--iters",
            "100000",
            "--n-lags",
            "5",
        ],
        vec![
            "clt",
            "--survivors",
            &surv,
            "--block-n",
            "500",
            "--sample-size",
            "100",
        ],
        vec![
            "stability",
            "--survivors",
            &surv,
            "--iters",
            "20000",
            "--bins",
            "64",
            "--others",
            "",
        ],
    ];
    let others = suites[0]
        .survivors
        .iter()
        .take(4)
        .skip(1)
        .map(|m| format!("{m:?}"))
        .collect::<Vec<_>>()
        .join(",");
    let mut mismatched = Vec::new();
    for cmd in &commands {
        let mut args: Vec<String> = cmd.iter().map(|s| s.to_string()).collect();
        if args[0] == "stability" {
            *args.last_mut().unwrap() = others.clone();
        }
        let mut runs = Vec::new();
        for workers in ["1", "3", "1"] {
            let mut full = vec![
                "circmap".to_string(),
                "--seed".into(),
                "7".into(),
                "--workers".into(),
                workers.into(),
            ];
            full.extend(args.iter().cloned());
            let mut o = Vec::new();
            let mut e = Vec::new();
            let code = cli::run(full, &mut o, &mut e);
            let text = String::from_utf8(o).unwrap();
            runs.push((code, cli::data_section(&text).to_string()));
        }
        let ok = runs
            .iter()
            .all(|r| r.0 == 0 && !r.1.is_empty() && r.1 == runs[0].1);
        if !ok {
            mismatched.push(format!(
                "{} (exit {:?})",
                args[0],
                runs.iter().map(|r| r.0).collect::<Vec<_>>()
            ));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    report(
        out,
        15,
        "reproducibility",
        mismatched.is_empty(),
        format!(
            "{} commands, workers 1/3/1 byte-identical data sections; mismatches: [{}]",
            commands.len(),
            mismatched.join(", ")
        ),
    );
}

fn main() {
    let t = Instant::now();
    let mut out = Vec::new();
    c01(&mut out);
    c02(&mut out);
    c03(&mut out);
    c04(&mut out);
    let suites = c08(&mut out);
    rho_sweep();
    for s in &suites {
        info(format!(
            "{} designated survivor mu = {:?} ({} survivors)",
            s.name,
            s.mu,
            s.survivors.len()
        ));
    }
    c05(&mut out, &suites);
    c06(&mut out, &suites);
    c07(&mut out, &suites);
    c09(&mut out, &suites);
    c10(&mut out, &suites);
    c11_to_14(&mut out, &suites);
    c15(&mut out, &suites);
    out.sort_by_key(|o| o.id);
    let passed = out.iter().filter(|o| o.pass).count();
    let unexpected: Vec<u32> = out
        .iter()
        .filter(|o| !o.pass && !DOCUMENTED_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.0} s; unexpected failures: {unexpected:?}",
        out.len(),
        t.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
