//! Exhaustive checks of the five cube axioms with fitted constants.
//!
//! I: each level tiles the domain. II: children tile their parent. III: the
//! inner ball lies in the cube and the cube in the dilated ball. IV: the
//! center child's radius is comparable to `α_n` times the parent's, and the
//! parent is not exhausted by it. V: same-level cubes meeting a dilated ball
//! have comparable radii.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{axiom_iv_requirement, Cube, CubeId, CubeSystem};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::sequence::neumaier_sum;

const VOLUME_TOL: f64 = 1e-12;
/// Absolute rounding slack of coordinates in the unit box.
const COORD_TOL: f64 = 8.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axiom {
    I,
    II,
    III,
    IV,
    V,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub level: usize,
    pub cubes: Vec<CubeId>,
    pub points: Vec<Point>,
    pub radii: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    /// Supremum of `max_dist(x, Q) / r` over checked cubes.
    pub c1: f64,
    /// Smallest `C_2` making axiom IV hold with `d = 1`.
    pub c2_at_d1: f64,
    /// Largest `d ≤ 1` for which axiom IV holds with the reference `C_2`
    /// (declared if any, else `c2_at_d1`).
    pub d_max: f64,
    pub c2_reference: f64,
    /// `(T, C_3(T))`.
    pub c3: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AxiomCheck>,
    pub fitted: FittedConstants,
    pub deepest_level: usize,
    /// First level from which every checked axiom held at all deeper levels.
    pub certified_from: usize,
}

impl ValidationReport {
    pub fn passed(&self, axiom: Axiom) -> bool {
        self.checks.iter().find(|c| c.axiom == axiom).is_some_and(|c| c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

#[derive(Default)]
struct Tally {
    witness: HashMap<Axiom, Witness>,
    failing_levels: HashSet<usize>,
}

impl Tally {
    fn fail(&mut self, axiom: Axiom, w: Witness) {
        self.failing_levels.insert(w.level);
        self.witness.entry(axiom).or_insert(w);
    }
}

/// Per-cube outcome of the axiom I–IV checks.
struct CubeCheck {
    c1: f64,
    iv: Option<(f64, f64, f64)>,
    failures: Vec<(Axiom, Witness)>,
}

pub fn validate(system: &CubeSystem, depth: usize, ts: &[f64]) -> Result<ValidationReport> {
    if depth > system.depth() {
        return Err(Error::DepthOutOfRange { requested: depth, available: system.depth() });
    }
    if let Some(t) = ts.iter().find(|t| !(**t > 1.0)) {
        return Err(Error::ParameterOutOfRange(format!("T = {t} must exceed 1")));
    }
    let consts = *system.constants();
    let mut tally = Tally::default();
    let mut c1_fit: f64 = 0.0;
    let mut iv_triples: HashSet<(u64, u64, u64)> = HashSet::new();
    let mut c3 = vec![1.0f64; ts.len()];

    for level in 0..=depth {
        let cubes = system.level(level)?;
        let total = neumaier_sum(cubes.iter().map(Cube::volume));
        if (total - system.domain().volume()).abs() > VOLUME_TOL {
            tally.fail(
                Axiom::I,
                Witness {
                    level,
                    cubes: vec![],
                    points: vec![],
                    radii: vec![],
                    detail: format!("level volumes sum to {total}"),
                },
            );
        }
        let checks: Vec<CubeCheck> =
            cubes.par_iter().map(|c| check_cube(system, c, level < depth, consts.c1)).collect::<Result<_>>()?;
        for ch in checks {
            c1_fit = c1_fit.max(ch.c1);
            if let Some((r, rc, a)) = ch.iv {
                iv_triples.insert((r.to_bits(), rc.to_bits(), a.to_bits()));
            }
            for (ax, w) in ch.failures {
                tally.fail(ax, w);
            }
        }
        for (k, &t) in ts.iter().enumerate() {
            let (v, w) = comparable_radius(system, &cubes, t);
            c3[k] = c3[k].max(v);
            if let Some(w) = w {
                tally.fail(Axiom::V, Witness { level, ..w });
            }
        }
    }

    let triples: Vec<(f64, f64, f64)> =
        iv_triples.iter().map(|&(a, b, c)| (f64::from_bits(a), f64::from_bits(b), f64::from_bits(c))).collect();
    let c2_at_d1 = triples.iter().map(|&(r, rc, a)| axiom_iv_requirement(r, rc, a, 1.0)).fold(1.0, f64::max);
    let c2_reference = consts.c2.unwrap_or(c2_at_d1);
    let d_max = largest_feasible_d(&triples, c2_reference);

    if let Some(c2) = consts.c2 {
        let d = consts.d;
        let bad = triples.iter().find(|&&(r, rc, a)| axiom_iv_requirement(r, rc, a, d) > c2 * (1.0 + 1e-12));
        if let Some(&(r, rc, a)) = bad {
            // locate an offending cube for the witness
            let w = find_iv_witness(system, depth, r, rc, a)?;
            tally.fail(Axiom::IV, w);
        }
    }

    let certified_from = tally.failing_levels.iter().max().map_or(0, |l| l + 1);
    let checks = [Axiom::I, Axiom::II, Axiom::III, Axiom::IV, Axiom::V]
        .into_iter()
        .map(|axiom| {
            let witness = tally.witness.get(&axiom).cloned();
            AxiomCheck { axiom, passed: witness.is_none(), witness }
        })
        .collect();
    Ok(ValidationReport {
        checks,
        fitted: FittedConstants { c1: c1_fit, c2_at_d1, d_max, c2_reference, c3: ts.iter().copied().zip(c3).collect() },
        deepest_level: depth,
        certified_from,
    })
}

fn witness(level: usize, cubes: Vec<CubeId>, points: Vec<Point>, radii: Vec<f64>, detail: String) -> Witness {
    Witness { level, cubes, points, radii, detail }
}

fn check_cube(system: &CubeSystem, c: &Cube, has_children: bool, c1: Option<f64>) -> Result<CubeCheck> {
    let level = c.level();
    let mut failures = Vec::new();
    let domain = system.domain();

    // III
    let inner = c.region.inner_radius(&c.center, &domain);
    if !(c.radius > 0.0 && c.radius.is_finite()) || c.radius > inner * (1.0 + 1e-12) + COORD_TOL {
        failures.push((
            Axiom::III,
            witness(
                level,
                vec![c.id.clone()],
                vec![c.center],
                vec![c.radius, inner],
                format!("ball of radius {} leaves the cube (inner radius {inner})", c.radius),
            ),
        ));
    }
    let outer = c.region.max_dist(&c.center);
    let fit = outer / c.radius;
    if let Some(c1) = c1 {
        if !(outer < c1 * c.radius) {
            failures.push((
                Axiom::III,
                witness(
                    level,
                    vec![c.id.clone()],
                    vec![c.center],
                    vec![c.radius, outer],
                    format!("cube reaches distance {outer} > C_1 r = {}", c1 * c.radius),
                ),
            ));
        }
    }

    let mut iv = None;
    if has_children {
        let kids = system.children(c)?;
        // II: children inside, volumes add up, pairwise disjoint
        let vol = neumaier_sum(kids.iter().map(Cube::volume));
        if (vol - c.volume()).abs() > VOLUME_TOL * c.volume().max(1.0) {
            failures.push((
                Axiom::II,
                witness(level, vec![c.id.clone()], vec![], vec![], format!("children volume {vol} vs {}", c.volume())),
            ));
        }
        for k in &kids {
            if !c.region.contains_region(&k.region) {
                failures.push((
                    Axiom::II,
                    witness(level + 1, vec![c.id.clone(), k.id.clone()], vec![], vec![], "child escapes parent".into()),
                ));
                break;
            }
        }
        if let Some((a, b)) = overlapping_pair(&kids) {
            failures.push((Axiom::I, witness(level + 1, vec![a, b], vec![], vec![], "sibling regions overlap".into())));
        }
        // IV
        if let Some(slot) = c.center_child {
            let cc = kids.iter().find(|k| k.id.0.last() == Some(&slot)).expect("center child among children");
            if !cc.region.contains_point(&c.center) {
                failures.push((
                    Axiom::IV,
                    witness(
                        level,
                        vec![c.id.clone(), cc.id.clone()],
                        vec![c.center],
                        vec![c.radius, cc.radius],
                        "center outside the center child".into(),
                    ),
                ));
            }
            if !(c.volume() - cc.volume() > 0.0) {
                failures.push((
                    Axiom::IV,
                    witness(
                        level,
                        vec![c.id.clone(), cc.id.clone()],
                        vec![c.center],
                        vec![c.radius, cc.radius],
                        "center child exhausts its parent".into(),
                    ),
                ));
            }
            iv = Some((c.radius, cc.radius, system.alpha_at(level + 1)?));
        }
    }
    Ok(CubeCheck { c1: fit, iv, failures })
}

fn overlapping_pair(kids: &[Cube]) -> Option<(CubeId, CubeId)> {
    let mut order: Vec<usize> = (0..kids.len()).collect();
    let bounds: Vec<_> = kids.iter().map(|k| k.region.bounds()).collect();
    order.sort_by(|&a, &b| bounds[a].lo[0].total_cmp(&bounds[b].lo[0]));
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if bounds[b].lo[0] >= bounds[a].hi[0] {
                break;
            }
            if !bounds[a].overlaps(&bounds[b]) {
                continue;
            }
            let shared: f64 = kids[a]
                .region
                .pieces()
                .iter()
                .flat_map(|p| kids[b].region.pieces().iter().map(move |q| p.intersection(q).volume()))
                .sum();
            if shared > 0.0 {
                return Some((kids[a].id.clone(), kids[b].id.clone()));
            }
        }
    }
    None
}

/// Fitted `C_3(T)` over one level, with a witness if a radius is degenerate.
fn comparable_radius(system: &CubeSystem, cubes: &[Cube], t: f64) -> (f64, Option<Witness>) {
    if cubes.len() <= 1 {
        return (1.0, None);
    }
    let bounds: Vec<_> = cubes.iter().map(|c| c.region.bounds()).collect();
    let neighbours: Box<dyn Fn(usize) -> Vec<usize> + Sync> = if system.dim() == 1 {
        let mut order: Vec<usize> = (0..cubes.len()).collect();
        order.sort_by(|&a, &b| bounds[a].lo[0].total_cmp(&bounds[b].lo[0]));
        let los: Vec<f64> = order.iter().map(|&i| bounds[i].lo[0]).collect();
        let bounds = bounds.clone();
        Box::new(move |j: usize| {
            let c = &cubes[j];
            let (lo, hi) = (c.center.coord(0) - t * c.radius, c.center.coord(0) + t * c.radius);
            let start = los.partition_point(|&l| l < lo).saturating_sub(1);
            order[start..].iter().copied().take_while(|&i| bounds[i].lo[0] < hi).collect()
        })
    } else {
        let cell = 1.0 / system.lattice_denominator(cubes[0].level()) as f64;
        let key = move |x: f64| (x / cell).floor() as i64;
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, b) in bounds.iter().enumerate() {
            for gx in key(b.lo[0])..=key(b.hi[0] - 0.5 * cell) {
                for gy in key(b.lo[1])..=key(b.hi[1] - 0.5 * cell) {
                    grid.entry((gx, gy)).or_default().push(i);
                }
            }
        }
        Box::new(move |j: usize| {
            let c = &cubes[j];
            let reach = t * c.radius;
            let mut out = Vec::new();
            for gx in key(c.center.coord(0) - reach)..=key(c.center.coord(0) + reach) {
                for gy in key(c.center.coord(1) - reach)..=key(c.center.coord(1) + reach) {
                    if let Some(v) = grid.get(&(gx, gy)) {
                        out.extend_from_slice(v);
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
    };
    let per: Vec<(f64, Option<(usize, usize)>)> = (0..cubes.len())
        .into_par_iter()
        .map(|j| {
            let cj = &cubes[j];
            let mut best = 1.0f64;
            let mut arg = None;
            for i in neighbours(j) {
                let ci = &cubes[i];
                if !ci.region.meets_ball(&cj.center, t * cj.radius) {
                    continue;
                }
                let ratio = (ci.radius / cj.radius).max(cj.radius / ci.radius);
                if !(ratio <= best) {
                    best = ratio;
                    arg = Some(i);
                }
            }
            (best, arg.map(|i| (i, j)))
        })
        .collect();
    let mut best = 1.0f64;
    let mut worst_pair = None;
    for (v, p) in per {
        if !(v <= best) {
            best = v;
            worst_pair = p;
        }
    }
    let w = if best.is_finite() {
        None
    } else {
        worst_pair.map(|(i, j)| Witness {
            level: cubes[j].level(),
            cubes: vec![cubes[i].id.clone(), cubes[j].id.clone()],
            points: vec![cubes[j].center],
            radii: vec![cubes[i].radius, cubes[j].radius],
            detail: format!("radii not comparable at T = {t}"),
        })
    };
    (best, w)
}

fn largest_feasible_d(triples: &[(f64, f64, f64)], c2: f64) -> f64 {
    let ok = |d: f64| triples.iter().all(|&(r, rc, a)| axiom_iv_requirement(r, rc, a, d) <= c2 * (1.0 + 1e-12));
    if ok(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn find_iv_witness(system: &CubeSystem, depth: usize, r: f64, rc: f64, a: f64) -> Result<Witness> {
    for level in 0..depth {
        for c in system.level(level)? {
            if c.radius.to_bits() != r.to_bits() {
                continue;
            }
            let Some(slot) = c.center_child else { continue };
            let cc = system.child(&c, slot)?;
            if cc.radius.to_bits() == rc.to_bits() && system.alpha_at(level + 1)?.to_bits() == a.to_bits() {
                return Ok(witness(
                    level,
                    vec![c.id.clone(), cc.id.clone()],
                    vec![c.center],
                    vec![r, rc],
                    format!("center child radius {rc} not within C_2 of α = {a} times {r}"),
                ));
            }
        }
    }
    Ok(witness(0, vec![], vec![], vec![r, rc], "axiom IV ratio out of range".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{build_adic_system, build_subsampled_dyadic, pushforward_power};
    use crate::sequence::{AlphaSequence, SequenceSpec};
    use crate::space::SpaceModel;

    #[test]
    fn uniform_adic_passes_with_unit_c3() {
        let s = build_adic_system(SpaceModel::new(2).unwrap(), "3".parse().unwrap(), 3, false).unwrap();
        let r = validate(&s, 3, &[2.0, 4.0, 8.0]).unwrap();
        assert!(r.all_passed(), "{:?}", r.first_failure());
        assert!(r.fitted.c3.iter().all(|&(_, c)| c == 1.0));
        assert!((r.fitted.c1 - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.certified_from, 0);
    }

    #[test]
    fn one_d_c1_at_most_two() {
        let s = build_adic_system(SpaceModel::new(1).unwrap(), "3,5,7,3".parse().unwrap(), 4, false).unwrap();
        let r = validate(&s, 4, &[2.0]).unwrap();
        assert!(r.all_passed());
        assert!(r.fitted.c1 <= 2.0);
    }

    #[test]
    fn dyadic_axiom_iv_with_base_constant() {
        let alpha = AlphaSequence::new(SequenceSpec::Geometric { ratio: 0.5 }).unwrap();
        let s = build_subsampled_dyadic(SpaceModel::new(1).unwrap(), 2, alpha, 4, false).unwrap();
        let r = validate(&s, 4, &[2.0, 8.0]).unwrap();
        assert!(r.all_passed(), "{:?}", r.first_failure());
        assert!(r.fitted.c2_at_d1 <= 2.0);
        assert_eq!(r.fitted.d_max, 1.0);
    }

    #[test]
    fn corrupted_radius_is_caught() {
        let s = build_adic_system(SpaceModel::new(1).unwrap(), "3".parse().unwrap(), 3, false).unwrap();
        let id = CubeId(vec![0, 2]);
        let bad = s.with_radius_override(&id, 0.2).unwrap();
        let r = validate(&bad, 3, &[2.0]).unwrap();
        assert!(!r.passed(Axiom::III));
        let w = r.checks.iter().find(|c| c.axiom == Axiom::III).unwrap().witness.as_ref().unwrap();
        assert_eq!(w.cubes, vec![id]);
        assert!(r.certified_from > 2);
    }

    #[test]
    fn pushforward_fits_constants() {
        let s = build_adic_system(SpaceModel::new(1).unwrap(), "3".parse().unwrap(), 5, false).unwrap();
        let p = pushforward_power(&s, 0.5).unwrap();
        let r = validate(&p, 5, &[2.0, 4.0]).unwrap();
        assert!(r.all_passed(), "{:?}", r.first_failure());
        assert!(r.fitted.c1.is_finite() && r.fitted.c2_at_d1.is_finite());
        assert!(r.fitted.c3.iter().all(|&(_, c)| c.is_finite() && c > 1.0));
    }

    #[test]
    fn deep_level_volumes_still_add_up() {
        let s = build_adic_system(SpaceModel::new(1).unwrap(), "7".parse().unwrap(), 6, true).unwrap();
        let r = validate(&s, 6, &[2.0]).unwrap();
        assert!(r.all_passed(), "{:?}", r.first_failure());
    }
}
