//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//! Exits non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;
use std::time::Instant;

use fml_core::cube::{build_adic_system, build_distorted_carpet, build_subsampled_dyadic, pushforward_power};
use fml_core::fatthin::{
    fat_thin_on, restricted_doubling_scan, survivor_mass, DEFAULT_RESTRICT_FACTOR, FIT_FROM_SPLIT,
};
use fml_core::measure::{iset, MeasureTree, N0Policy};
use fml_core::quadrature::DEFAULT_TOLERANCE;
use fml_core::scan::{doubling_scan, PointSource, Sampling};
use fml_core::validate::{validate, Axiom};
use fml_core::{AlphaSequence, CubeId, CubeSystem, Point, Result, SequenceSpec, SpaceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL_WEIGHTS: f64 = 1e-12;
const TOL_CONSERVE_1D: f64 = 1e-12;
const TOL_CONSERVE_2D: f64 = 1e-6;
const TAU_2D: f64 = 1e-8;
const TOL_SURVIVOR: f64 = 1e-10;
const TOL_WALLIS_LEVELS: f64 = 1e-10;
const TOL_WALLIS_LIMIT: f64 = 1e-3;
const CEC_STABILITY: f64 = 0.05;
const TOL_A_CLOSED_FORM: f64 = 1e-12;
const DOUBLING_STABILITY: f64 = 0.05;
const UNDISTORTED_SPREAD: f64 = 2.0;
const QUERIES: usize = 1000;

fn sys(q: usize, bases: &str, depth: usize) -> CubeSystem {
    build_adic_system(SpaceModel::new(q).unwrap(), bases.parse().unwrap(), depth, true).unwrap()
}

fn eager(q: usize, bases: &str, depth: usize) -> CubeSystem {
    build_adic_system(SpaceModel::new(q).unwrap(), bases.parse().unwrap(), depth, false).unwrap()
}

fn dyadic(q: usize, depth: usize) -> CubeSystem {
    let alpha = AlphaSequence::new(SequenceSpec::Geometric { ratio: 0.5 }).unwrap();
    build_subsampled_dyadic(SpaceModel::new(q).unwrap(), 2, alpha, depth, false).unwrap()
}

fn tree(s: CubeSystem, rho: f64, depth: usize) -> MeasureTree {
    MeasureTree::new(Arc::new(s), rho, N0Policy::Auto, depth, DEFAULT_TOLERANCE).unwrap()
}

type Check = Result<(bool, String)>;

fn c1_weights() -> Check {
    let mut err: f64 = 0.0;
    let t = tree(sys(1, "7", 1), 1.0, 1);
    let w = t.child_weights(&t.system().root())?;
    err = err.max((w.weight(3).unwrap() - 1.0 / 3.0).abs());
    err = err.max((w.weight(2).unwrap() - 4.0 / 3.0).abs());
    err = err.max((w.weight(4).unwrap() - 4.0 / 3.0).abs());
    err = err.max((w.a.unwrap() - 28.0 / 3.0).abs());
    let t = tree(sys(1, "7", 1), -0.5, 1);
    let w = t.child_weights(&t.system().root())?;
    let s3 = 3f64.sqrt();
    err = err.max((w.weight(3).unwrap() - s3).abs());
    err = err.max((w.weight(2).unwrap() - (3.0 - s3) / 2.0).abs());
    err = err.max((w.weight(4).unwrap() - (3.0 - s3) / 2.0).abs());
    Ok((err <= TOL_WEIGHTS, format!("max abs error {err:.2e} (tol {TOL_WEIGHTS:.0e})")))
}

fn c2_conservation() -> Check {
    let mut worst1: f64 = 0.0;
    let mut cubes = 0;
    for rho in [1.0, -0.5] {
        let a = tree(sys(1, "7", 10), rho, 10).conservation_audit()?;
        worst1 = worst1.max(a.max_relative_error);
        cubes += a.cubes_checked;
    }
    let mut worst2: f64 = 0.0;
    for (bases, rho) in [("7", 1.0), ("5", -0.5), ("odd:2n+1", 1.0)] {
        let t = MeasureTree::new(Arc::new(sys(2, bases, 5)), rho, N0Policy::Auto, 5, TAU_2D)?;
        let a = t.conservation_audit()?;
        worst2 = worst2.max(a.max_relative_error);
        cubes += a.cubes_checked;
    }
    Ok((
        worst1 <= TOL_CONSERVE_1D && worst2 <= TOL_CONSERVE_2D,
        format!(
            "1D depth 10: {worst1:.2e} (tol {TOL_CONSERVE_1D:.0e}); 2D depth 5: {worst2:.2e} (tol {TOL_CONSERVE_2D:.0e}); {cubes} cubes"
        ),
    ))
}

fn c3_rho_zero() -> Check {
    let systems: Vec<(&str, CubeSystem)> = vec![
        ("1D base 3", sys(1, "3", 6)),
        ("1D base 7", sys(1, "7", 5)),
        ("2D base 3", sys(2, "3", 4)),
        ("2D odd:2n+1", sys(2, "odd:2n+1", 3)),
        ("1D dyadic", dyadic(1, 4)),
        ("2D dyadic", dyadic(2, 3)),
        ("distorted carpet", build_distorted_carpet("odd:2n+1".parse().unwrap(), 3, true)?),
        ("pushforward", pushforward_power(&sys(1, "3", 4), 0.5)?),
    ];
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for (name, s) in systems {
        let depth = s.depth();
        let t = tree(s, 0.0, depth);
        for level in 0..=depth {
            if t.system().level_count(level) > 200_000 {
                break;
            }
            for c in t.system().level(level)? {
                checked += 1;
                let m = t.cumulative_weight(&c.id)? * c.volume();
                if m.to_bits() != c.volume().to_bits() {
                    bad.push(format!("{name} {}", c.id));
                }
            }
        }
    }
    let first = bad.first().map(|b| format!(", first {b}")).unwrap_or_default();
    Ok((
        bad.is_empty(),
        format!("{checked} cubes checked bitwise against their volume, {} mismatches{first}", bad.len()),
    ))
}

fn c4_survivor_law() -> Check {
    let mut err: f64 = 0.0;
    for (rho, f) in [(1.0, 20.0 / 21.0), (-0.5, 1.0 - 3f64.sqrt() / 7.0)] {
        let t = tree(sys(1, "7", 10), rho, 10);
        for n in 1..=10 {
            err = err.max((survivor_mass(&t, n)? - f.powi(n as i32)).abs());
        }
    }
    Ok((err <= TOL_SURVIVOR, format!("max abs error {err:.2e} over n ≤ 10 (tol {TOL_SURVIVOR:.0e})")))
}

fn c5_wallis() -> Check {
    let t = tree(sys(2, "odd:2n+1", 5), 0.0, 5);
    let mut err: f64 = 0.0;
    let mut prod = 1.0;
    for n in 1..=5 {
        prod *= 1.0 - ((2 * n + 1) as f64).powi(-2);
        err = err.max((survivor_mass(&t, n)? - prod).abs());
    }
    let rep = fat_thin_on(&t)?;
    let limit = rep.extrapolated_limit.unwrap_or(f64::NAN);
    let gap = (limit - FRAC_PI_4).abs();
    Ok((
        err <= TOL_WALLIS_LEVELS && gap <= TOL_WALLIS_LIMIT,
        format!(
            "levels: {err:.2e} (tol {TOL_WALLIS_LEVELS:.0e}); extrapolated limit {limit:.7} vs π/4, gap {gap:.2e} (tol {TOL_WALLIS_LIMIT:.0e})"
        ),
    ))
}

fn c6_center_ratio() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    let bound_holds = |t: &MeasureTree| -> Result<(bool, f64)> {
        let r = fat_thin_on(t)?;
        let mut holds = true;
        for row in &r.rows {
            if t.is_weighted_split(row.n) {
                holds &= row.center_ratio <= r.cec * row.alpha_n.powf(r.exponent) * (1.0 + 1e-12);
            }
        }
        Ok((holds, r.cec))
    };
    for (q, bases, rho) in [(1, "7", 1.0), (1, "7", -0.5), (1, "5", 2.0), (2, "5", 1.0), (2, "7", -0.5)] {
        let (h4, c4) = bound_holds(&tree(sys(q, bases, 4), rho, 4))?;
        let (h8, c8) = bound_holds(&tree(sys(q, bases, 8), rho, 8))?;
        let drift = (c8 - c4).abs() / c4;
        ok &= h4 && h8 && drift <= CEC_STABILITY;
        notes.push(format!("{q}D base {bases} ρ={rho}: CEC {c4:.4} → {c8:.4}"));
    }
    for (s, rho) in [(sys(2, "odd:2n+1", 4), 0.0), (sys(2, "3,5,7,9", 4), 1.0), (dyadic(1, 5), 1.0)] {
        let depth = s.depth();
        let (h, c) = bound_holds(&tree(s, rho, depth))?;
        ok &= h;
        notes.push(format!("CEC {c:.4}"));
    }
    Ok((
        ok,
        format!("bound holds with one CEC per run, drift tol ±{:.0}%; {}", CEC_STABILITY * 100.0, notes.join("; ")),
    ))
}

fn c7_a_bound() -> Check {
    let mut ok = true;
    let mut c4s = Vec::new();
    for (s, rho) in [
        (sys(1, "7", 4), 1.0),
        (sys(1, "7", 4), -0.5),
        (sys(2, "5", 3), 1.0),
        (sys(2, "odd:2n+1", 3), -0.5),
        (dyadic(1, 4), 2.0),
    ] {
        let depth = s.depth();
        let t = tree(s, rho, depth);
        t.conservation_audit()?;
        let c4 = t.fitted_c4();
        for (a, r) in t.coefficients() {
            let v = a * r.powf(rho);
            ok &= v >= 1.0 / c4 * (1.0 - 1e-12) && v <= c4 * (1.0 + 1e-12);
        }
        ok &= c4.is_finite();
        c4s.push(c4);
    }
    let mut err: f64 = 0.0;
    for (bases, rho) in [("7", 1.0), ("7", -0.5), ("7", 2.0), ("11", 1.0), ("9", -0.25)] {
        let t = tree(sys(1, bases, 3), rho, 3);
        let s = t.system();
        for id in [CubeId::root(), CubeId(vec![0]), CubeId(vec![1, 2])] {
            let c = s.cube_lazy(&id)?;
            let (slots, _) = iset(s, &c)?;
            let kids: Vec<_> = slots.iter().map(|&k| s.child(&c, k)).collect::<Result<_>>()?;
            let lo = kids.iter().map(|k| k.region.bounds().lo[0]).fold(f64::INFINITY, f64::min);
            let hi = kids.iter().map(|k| k.region.bounds().hi[0]).fold(0.0, f64::max);
            let h: f64 = kids.iter().map(|k| k.volume()).sum();
            if ((lo + hi) / 2.0 - c.center.coord(0)).abs() > 1e-15 || (hi - lo - h).abs() > 1e-15 {
                continue;
            }
            let w = t.child_weights(&c)?;
            let closed = (rho + 1.0) * 2f64.powf(rho) * h.powf(-rho);
            err = err.max((w.a.unwrap() - closed).abs() / closed);
        }
    }
    ok &= err <= TOL_A_CLOSED_FORM;
    Ok((
        ok,
        format!(
            "fitted C_4 {:?}; closed form rel error {err:.2e} (tol {TOL_A_CLOSED_FORM:.0e})",
            c4s.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()
        ),
    ))
}

fn c8_doubling() -> Check {
    let plan = Sampling { count: QUERIES, seed: 2024, source: PointSource::Uniform, r_min: 1e-4, r_max: 0.25 };
    let mut ok = true;
    let mut notes = Vec::new();
    for rho in [-0.5, 1.0] {
        let mut maxes = Vec::new();
        for depth in [8, 10] {
            let r = doubling_scan(&tree(sys(1, "7", depth), rho, depth), &plan)?;
            ok &= r.zero_denominators == 0 && r.samples.iter().all(|s| s.ratio.is_finite() && s.ratio >= 1.0);
            maxes.push(r.max_ratio);
        }
        let drift = (maxes[1] - maxes[0]).abs() / maxes[0];
        ok &= drift <= DOUBLING_STABILITY;
        notes.push(format!("ρ={rho}: max {:.4} → {:.4} ({:.2}%)", maxes[0], maxes[1], drift * 100.0));
    }
    Ok((ok, format!("{} (tol {:.0}%), all ratios finite and ≥ 1", notes.join("; "), DOUBLING_STABILITY * 100.0)))
}

fn c9_distortion() -> Check {
    let s = build_distorted_carpet("odd:2n+1".parse().unwrap(), 5, true)?;
    let t = tree(s, 0.0, 5);
    let plan = Sampling { count: 0, seed: 0, source: PointSource::Uniform, r_min: 1e-3, r_max: 1e-3 };
    let rep = restricted_doubling_scan(&t, 5, &plan, DEFAULT_RESTRICT_FACTOR)?;
    let late: Vec<f64> =
        rep.relocation_probes.iter().filter(|p| p.split >= FIT_FROM_SPLIT).map(|p| p.sample.ratio).collect();
    let decreasing = late.len() >= 2 && late.windows(2).all(|w| w[1] < w[0]);
    let fit = rep.fit.clone();
    let plain: Vec<f64> =
        rep.undistorted_probes.iter().filter(|p| p.split >= FIT_FROM_SPLIT).map(|p| p.sample.ratio).collect();
    let spread = plain.iter().cloned().fold(0.0, f64::max) / plain.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda = fit.as_ref().map_or(f64::NAN, |f| f.lambda);
    let all: Vec<String> =
        rep.relocation_probes.iter().map(|p| format!("n={}: {:.3e}", p.split, p.sample.ratio)).collect();
    Ok((
        decreasing && lambda > 0.0 && !plain.is_empty() && spread <= UNDISTORTED_SPREAD,
        format!(
            "relocated ratios [{}]; λ = {lambda:.3}, residual {:.2e}; undistorted spread {spread:.3} (tol {UNDISTORTED_SPREAD})",
            all.join(", "),
            fit.map_or(f64::NAN, |f| f.residual)
        ),
    ))
}

fn c10_pushforward() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for bases in ["3", "7"] {
        let s = eager(1, bases, 6);
        let p = pushforward_power(&s, 0.5)?;
        let r = validate(&p, 6, &[2.0, 4.0])?;
        let f = &r.fitted;
        let finite = f.c1.is_finite() && f.c2_at_d1.is_finite() && f.c3.iter().all(|c| c.1.is_finite());
        ok &= r.all_passed() && finite;
        notes.push(format!("base {bases}: C1 {:.3}, C2 {:.3}, C3 {:?}", f.c1, f.c2_at_d1, f.c3));
        let same = pushforward_power(&s, 1.0)?.to_json()? == s.to_json()?;
        ok &= same;
    }
    Ok((ok, format!("β=1/2 passes I–V with {}; β=1 identical", notes.join("; "))))
}

fn c11_axioms() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    let uniform: Vec<(&str, CubeSystem)> = vec![
        ("1D base 3", eager(1, "3", 6)),
        ("1D base 7", eager(1, "7", 6)),
        ("2D base 3", eager(2, "3", 4)),
        ("2D base 5", eager(2, "5", 3)),
    ];
    for (name, s) in uniform {
        let r = validate(&s, s.depth(), &[2.0, 4.0, 8.0])?;
        let unit = r.fitted.c3.iter().all(|c| c.1 == 1.0);
        ok &= r.all_passed() && unit;
        if !(r.all_passed() && unit) {
            notes.push(format!("{name} failed {:?}", r.first_failure().map(|c| c.axiom)));
        }
    }
    let mixed: Vec<(&str, CubeSystem)> = vec![
        ("1D 3,5,7,3", eager(1, "3,5,7,3", 4)),
        ("2D odd:2n+1", eager(2, "odd:2n+1", 3)),
        ("1D dyadic", dyadic(1, 6)),
        ("2D dyadic", dyadic(2, 3)),
    ];
    for (name, s) in mixed {
        let r = validate(&s, s.depth(), &[2.0, 4.0])?;
        ok &= r.all_passed();
        if !r.all_passed() {
            notes.push(format!("{name} failed {:?}", r.first_failure().map(|c| c.axiom)));
        }
    }
    let mut caught = 0;
    for (s, id, radius) in [(eager(1, "3", 3), CubeId(vec![0, 2]), 0.2), (eager(2, "3", 3), CubeId(vec![4, 1]), 0.3)] {
        let bad = s.with_radius_override(&id, radius)?;
        let r = validate(&bad, 3, &[2.0])?;
        let hit = r.checks.iter().any(|c| !c.passed && c.witness.as_ref().is_some_and(|w| w.cubes.contains(&id)));
        ok &= !r.passed(Axiom::III) && hit;
        caught += hit as usize;
    }
    Ok((
        ok,
        format!(
            "8 systems pass I–V, C_3(T) = 1 on uniform bases; {caught}/2 corruptions caught with witness {}",
            notes.join("; ")
        ),
    ))
}

fn c12_bracketing() -> Check {
    let systems: Vec<(CubeSystem, f64)> = vec![
        (sys(1, "7", 6), 1.0),
        (sys(1, "3", 6), -0.5),
        (sys(2, "3", 3), 1.0),
        (sys(2, "odd:2n+1", 3), -0.5),
        (build_distorted_carpet("odd:2n+1".parse().unwrap(), 3, true)?, 0.0),
        (pushforward_power(&sys(1, "3", 5), 0.5)?, 1.0),
    ];
    let mut violations = 0;
    let mut total = 0;
    for (i, (s, rho)) in systems.into_iter().enumerate() {
        let q = s.dim();
        let depth = s.depth();
        let t = tree(s, rho, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..QUERIES {
            let c: Vec<f64> = (0..q).map(|_| rng.random::<f64>()).collect();
            let r = 10f64.powf(rng.random_range(-4.0..-0.3));
            let m = t.ball_mass(&Point::from_slice(&c).unwrap(), r)?;
            total += 1;
            if !(m.inner <= m.exact && m.exact <= m.outer) {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations in {total} queries")))
}

fn main() {
    let criteria: Vec<(u32, &str, Option<f64>, fn() -> Check)> = vec![
        (1, "closed-form weights", Some(1.0), c1_weights),
        (2, "mass conservation", Some(120.0), c2_conservation),
        (3, "ρ = 0 identity", None, c3_rho_zero),
        (4, "survivor-product law", None, c4_survivor_law),
        (5, "Wallis fat experiment", None, c5_wallis),
        (6, "center-ratio bound", None, c6_center_ratio),
        (7, "A-coefficient bound", None, c7_a_bound),
        (8, "doubling scan stability", Some(180.0), c8_doubling),
        (9, "distortion decay", None, c9_distortion),
        (10, "pushforward invariance", None, c10_pushforward),
        (11, "axiom validation", None, c11_axioms),
        (12, "ball-mass bracketing", None, c12_bracketing),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let (mut pass, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let timing = match limit {
            Some(l) => {
                pass &= secs < l;
                format!("{secs:.2} s (limit {l} s)")
            }
            None => format!("{secs:.2} s"),
        };
        println!("{} criterion {id:>2} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        failed += !pass as usize;
    }
    println!("acceptance: {} of 12 passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
