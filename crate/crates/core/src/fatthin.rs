//! Survivor masses, center-child ratios and the fat/thin experiment.
//!
//! `S_n` is the union of the level-`n` cubes that never pass through a
//! center child. Split `n` (level `n-1` to `n`) removes the center children.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{Cube, CubeId, CubeSystem, Edit, Layout, ManifestEntry};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};
use crate::measure::{MeasureTree, N0Choice, N0Policy};
use crate::scan::{with_pool, Sampling};
use crate::sequence::{classify_family, AlphaSequence, FatThinPrediction, Membership};

/// Extra terms of the product evaluated one by one before the analytic tail.
pub const TAIL_TERMS: usize = 10_000;

/// `ν(S_n)`.
pub fn survivor_mass(tree: &MeasureTree, n: usize) -> Result<f64> {
    check_level(tree, n)?;
    surv_rec(tree, &tree.system().root(), 1.0, n, false)
}

/// `ν(Q ∩ S)` where `S` keeps the level-`n` descendants of `Q` that avoid
/// center children strictly below `Q`.
pub fn survivor_mass_in(tree: &MeasureTree, id: &CubeId, n: usize) -> Result<f64> {
    check_level(tree, n)?;
    if n < id.level() {
        return Err(Error::ParameterOutOfRange(format!("level {n} is above cube {id}")));
    }
    let c = tree.system().cube_lazy(id)?;
    let k = tree.cumulative_weight(id)?;
    surv_rec(tree, &c, k, n, true)
}

fn check_level(tree: &MeasureTree, n: usize) -> Result<()> {
    if n > tree.depth() {
        return Err(Error::DepthOutOfRange { requested: n, available: tree.depth() });
    }
    Ok(())
}

fn surv_rec(tree: &MeasureTree, c: &Cube, k: f64, n: usize, start: bool) -> Result<f64> {
    if !start && !c.survivor {
        return Ok(0.0);
    }
    let h = c.volume();
    if c.level() == n {
        return Ok(k * h);
    }
    if tree.system().subtree_regular(&c.id) {
        return Ok(k * h * tree.regular_survivor_fraction(c.level(), n)?);
    }
    let mut acc = 0.0;
    for (ch, kc, _) in tree.child_masses(c, k)? {
        if c.center_child == ch.id.0.last().copied() {
            continue;
        }
        acc += surv_rec(tree, &ch, kc, n, false)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterRatio {
    pub split: usize,
    /// Max over surviving level-`(n-1)` cubes of `ν(center child) / ν(Q)`.
    pub max_ratio: f64,
    /// `max_ratio / α_n^e`.
    pub implied_cec: f64,
    pub exponent: f64,
}

/// `e = (q + ρ) d`.
pub fn center_exponent(tree: &MeasureTree) -> f64 {
    let s = tree.system();
    (s.dim() as f64 + tree.rho()) * s.constants().d
}

pub fn center_child_ratio(tree: &MeasureTree, n: usize) -> Result<CenterRatio> {
    if n == 0 || n > tree.depth() {
        return Err(Error::DepthOutOfRange { requested: n, available: tree.depth() });
    }
    let system = tree.system();
    let e = center_exponent(tree);
    let alpha = system.alpha_at(n)?;
    let mut max_ratio: f64 = 0.0;
    for rep in system.class_representatives(n - 1, true)? {
        let Some(cc) = rep.center_child else { continue };
        let w = tree.child_weights(&rep)?;
        let child = system.child(&rep, cc)?;
        let t = w.weight(cc).unwrap_or(0.0);
        max_ratio = max_ratio.max(t * child.volume() / rep.volume());
    }
    Ok(CenterRatio { split: n, max_ratio, implied_cec: max_ratio / alpha.powf(e), exponent: e })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductBound {
    pub from: usize,
    pub to: usize,
    /// `Π_{j=from}^{to} (1 - C α_j^e)`.
    pub truncated: f64,
    /// Estimate of the infinite product; `None` when the tail is unknown.
    pub limit: Option<f64>,
    /// Set when some factor is not positive.
    pub vacuous: bool,
    pub first_nonpositive: Option<usize>,
}

pub fn product_lower_bound(alpha: &AlphaSequence, e: f64, cec: f64, from: usize, to: usize) -> Result<ProductBound> {
    if from == 0 || to < from {
        return Err(Error::ParameterOutOfRange(format!("product range {from}..={to}")));
    }
    let mut log = 0.0;
    for j in from..=to {
        let f = 1.0 - cec * alpha.value(j)?.powf(e);
        if !(f > 0.0) {
            return Ok(ProductBound {
                from,
                to,
                truncated: 0.0,
                limit: Some(0.0),
                vacuous: true,
                first_nonpositive: Some(j),
            });
        }
        log += f.ln();
    }
    let truncated = log.exp();
    let limit = tail_product(alpha, e, cec, to)?.map(|t| truncated * t);
    Ok(ProductBound { from, to, truncated, limit, vacuous: false, first_nonpositive: None })
}

/// `Π_{j > after} (1 - C α_j^e)`: `TAIL_TERMS` factors summed in log space,
/// then `-C Σ α_j^e` from the analytic tail. `Some(0)` for a divergent sum
/// or a non-positive factor, `None` when the tail is unknown.
pub fn tail_product(alpha: &AlphaSequence, e: f64, cec: f64, after: usize) -> Result<Option<f64>> {
    let end = alpha.length_limit().map_or(after + TAIL_TERMS, |len| len.min(after + TAIL_TERMS));
    let mut log = 0.0;
    for j in after + 1..=end {
        let x = cec * alpha.value(j)?.powf(e);
        if x >= 1.0 {
            return Ok(Some(0.0));
        }
        log += (-x).ln_1p();
    }
    if alpha.length_limit().is_some_and(|len| end >= len) {
        return Ok(Some(log.exp()));
    }
    Ok(match alpha.tail_power_sum(e, end) {
        Some(t) => {
            let next = (cec * alpha.value(end + 1)?.powf(e)).min(0.5);
            Some((log - cec * t / (1.0 - next)).exp())
        }
        None if alpha.power_sum_converges(e) == Some(false) => Some(0.0),
        None => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RhoRule {
    Fixed {
        rho: f64,
    },
    /// Smallest `ρ ∈ {1, 2, 4, ...}` with `Σ α_n^{(q+ρ)d} < ∞`.
    Fat,
    /// `ρ = -q/2`.
    Thin,
}

pub fn choose_rho(system: &CubeSystem, rule: RhoRule) -> Result<f64> {
    let q = system.dim() as f64;
    match rule {
        RhoRule::Fixed { rho } => {
            if rho > -q && rho.is_finite() {
                Ok(rho)
            } else {
                Err(Error::InadmissibleRho(format!("ρ = {rho} not in (-{q}, ∞)")))
            }
        }
        RhoRule::Thin => Ok(-q / 2.0),
        RhoRule::Fat => {
            let d = system.constants().d;
            let mut rho = 1.0;
            while rho <= 64.0 {
                if system.alpha().power_sum_converges((q + rho) * d) == Some(true) {
                    return Ok(rho);
                }
                rho *= 2.0;
            }
            Err(Error::InadmissibleRho("no ρ > 0 makes Σ α_n^((q+ρ)d) finite".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PositiveLimit,
    Collapse,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: usize,
    pub alpha_n: f64,
    pub center_ratio: f64,
    pub survivor_mass: f64,
    pub product_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatThinReport {
    pub rho: f64,
    pub exponent: f64,
    pub n0: N0Choice,
    pub rows: Vec<LevelRow>,
    pub cec: f64,
    pub n1: Option<usize>,
    /// `ν(S_{n1}) · Π_{j ≥ n1} (1 - CEC α_j^e)`.
    pub limit_bound: Option<f64>,
    /// `ν(S_N) · Π_{j > N} (1 - CEC α_j^e)` at the deepest level `N`.
    pub extrapolated_limit: Option<f64>,
    pub verdict: Verdict,
    pub membership: Membership,
    pub prediction: FatThinPrediction,
    pub consistent: Option<bool>,
    pub empty_i_splits: Vec<usize>,
}

/// Successive mass ratios at or below this count as geometric decay.
pub const COLLAPSE_RATIO: f64 = 1.0 - 1e-3;

pub fn fat_thin_experiment(
    system: Arc<CubeSystem>,
    rule: RhoRule,
    n0: N0Policy,
    depth: usize,
) -> Result<FatThinReport> {
    let rho = choose_rho(&system, rule)?;
    let tree = MeasureTree::new(system.clone(), rho, n0, depth, crate::quadrature::DEFAULT_TOLERANCE)?;
    fat_thin_on(&tree)
}

pub fn fat_thin_on(tree: &MeasureTree) -> Result<FatThinReport> {
    let system = tree.system();
    let depth = tree.depth();
    let e = center_exponent(tree);
    let mut rows = Vec::with_capacity(depth);
    let mut cec: f64 = 0.0;
    for n in 1..=depth {
        let cr = center_child_ratio(tree, n)?;
        cec = cec.max(cr.implied_cec);
        rows.push(LevelRow {
            n,
            alpha_n: system.alpha_at(n)?,
            center_ratio: cr.max_ratio,
            survivor_mass: survivor_mass(tree, n)?,
            product_bound: None,
        });
    }
    let alpha = system.alpha();
    let n1 = (1..=depth).find(|&n| (n..=depth).all(|j| 1.0 - cec * alpha.value(j).unwrap_or(1.0).powf(e) > 0.0));
    let mut limit_bound = None;
    if let Some(n1) = n1 {
        let base = rows[n1 - 1].survivor_mass;
        for row in rows.iter_mut().filter(|r| r.n >= n1) {
            let p = product_lower_bound(alpha, e, cec, n1, row.n)?;
            row.product_bound = Some(base * p.truncated);
        }
        let p = product_lower_bound(alpha, e, cec, n1, depth)?;
        limit_bound = p.limit.map(|l| base * l);
    }
    let tail_start = (depth / 2).max(2);
    let decays = depth >= 2
        && (tail_start..=depth).all(|n| {
            let prev = if n == 1 { 1.0 } else { rows[n - 2].survivor_mass };
            rows[n - 1].survivor_mass <= COLLAPSE_RATIO * prev
        });
    let last = rows.last().map_or(1.0, |r| r.survivor_mass);
    let extrapolated_limit = tail_product(alpha, e, cec, depth)?.map(|t| last * t);
    let verdict = match extrapolated_limit {
        Some(l) if l > 0.0 => Verdict::PositiveLimit,
        _ if decays => Verdict::Collapse,
        _ => Verdict::Inconclusive,
    };
    let class = classify_family(alpha.spec())?;
    let consistent = match class.prediction {
        FatThinPrediction::Fat => Some(verdict == Verdict::PositiveLimit),
        FatThinPrediction::Thin => Some(verdict == Verdict::Collapse),
        FatThinPrediction::NeitherFatNorThin => Some(verdict != Verdict::Inconclusive),
        FatThinPrediction::Undetermined => None,
    };
    Ok(FatThinReport {
        rho: tree.rho(),
        exponent: e,
        n0: tree.n0().clone(),
        rows,
        cec,
        n1,
        limit_bound,
        extrapolated_limit,
        verdict,
        membership: class.membership,
        prediction: class.prediction,
        consistent,
        empty_i_splits: tree.empty_i_splits(),
    })
}

/// `ν(B(x, r) ∩ S_n)`.
pub fn restricted_ball_mass(tree: &MeasureTree, n: usize, x: &Point, r: f64) -> Result<f64> {
    check_level(tree, n)?;
    if !(r > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("radius {r} must be positive")));
    }
    restricted_rec(tree, &tree.system().root(), 1.0, n, x, r)
}

fn restricted_rec(tree: &MeasureTree, c: &Cube, k: f64, n: usize, x: &Point, r: f64) -> Result<f64> {
    if !c.survivor || !c.region.meets_ball(x, r) {
        return Ok(0.0);
    }
    let system = tree.system();
    if c.level() == n {
        return Ok(tree.ball_mass_in(c, k, x, r)?.exact);
    }
    if c.region.inside_ball(x, r) && system.subtree_regular(&c.id) {
        return Ok(k * c.volume() * tree.regular_survivor_fraction(c.level(), n)?);
    }
    let w = tree.child_weights(c)?;
    let mut acc = 0.0;
    for ch in system.children_meeting_ball(c, x, r)? {
        let s = *ch.id.0.last().unwrap();
        if c.center_child == Some(s) {
            continue;
        }
        acc += restricted_rec(tree, &ch, k * w.weight(s).unwrap(), n, x, r)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedSample {
    pub x: Point,
    pub r: f64,
    pub nu_r: f64,
    pub nu_fr: f64,
    /// `ν_n(B(x,r)) / ν_n(B(x, factor·r))`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelocationProbe {
    pub split: usize,
    /// `α` of the level holding the probed child.
    pub alpha: f64,
    pub cube: CubeId,
    pub sample: RestrictedSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub c_hat: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedReport {
    pub level: usize,
    pub factor: f64,
    pub samples: Vec<RestrictedSample>,
    pub min_ratio: f64,
    pub zero_denominators: usize,
    pub relocation_probes: Vec<RelocationProbe>,
    pub fit: Option<LambdaFit>,
    pub undistorted_probes: Vec<RelocationProbe>,
}

pub const DEFAULT_RESTRICT_FACTOR: f64 = 6.0;

/// Smallest split used in the `λ` fit.
pub const FIT_FROM_SPLIT: usize = 3;

fn restricted_sample(tree: &MeasureTree, n: usize, x: Point, r: f64, factor: f64) -> Result<RestrictedSample> {
    let a = restricted_ball_mass(tree, n, &x, r)?;
    let b = restricted_ball_mass(tree, n, &x, factor * r)?;
    Ok(RestrictedSample { x, r, nu_r: a, nu_fr: b, ratio: a / b })
}

/// Restricted ratios over a seeded sample, plus targeted probes at every
/// relocated child when the system carries a distortion manifest.
pub fn restricted_doubling_scan(
    tree: &MeasureTree,
    level: usize,
    sampling: &Sampling,
    factor: f64,
) -> Result<RestrictedReport> {
    check_level(tree, level)?;
    if !(factor > 1.0) {
        return Err(Error::ParameterOutOfRange(format!("factor {factor} must exceed 1")));
    }
    let plan = sampling.draw(tree.system())?;
    let samples: Vec<RestrictedSample> = with_pool(|| {
        plan.par_iter().map(|(x, r)| restricted_sample(tree, level, *x, *r, factor)).collect::<Result<Vec<_>>>()
    })?;
    let zero_denominators = samples.iter().filter(|s| !(s.nu_fr > 0.0)).count();
    let min_ratio = samples.iter().filter(|s| s.nu_fr > 0.0).map(|s| s.ratio).fold(1.0, f64::min);
    let relocation_probes = relocation_probes(tree, level, factor)?;
    let fit = fit_lambda(&relocation_probes, FIT_FROM_SPLIT);
    let undistorted_probes =
        if relocation_probes.is_empty() { Vec::new() } else { undistorted_probes(tree, level, factor)? };
    Ok(RestrictedReport {
        level,
        factor,
        samples,
        min_ratio,
        zero_denominators,
        relocation_probes,
        fit,
        undistorted_probes,
    })
}

fn relocations(system: &CubeSystem) -> Vec<(usize, CubeId)> {
    system
        .manifest()
        .iter()
        .filter_map(|m| match m {
            ManifestEntry::Relocation { split, to, .. } => Some((*split, to.clone())),
            _ => None,
        })
        .collect()
}

/// Lower corner of the first piece of a cube.
fn corner(c: &Cube) -> Point {
    let b = c.region.pieces()[0];
    Point::from_slice(&b.lo[..c.center.dim()]).unwrap()
}

/// Distance from `x` to the nearest level-`n` survivor other than `skip`.
pub fn gap_to_other_survivors(system: &CubeSystem, x: &Point, n: usize, skip: &CubeId) -> Result<f64> {
    fn rec(system: &CubeSystem, c: &Cube, x: &Point, n: usize, skip: &CubeId, best: &mut f64) -> Result<()> {
        if !c.survivor || c.id == *skip {
            return Ok(());
        }
        let d = c.region.min_dist(x);
        if d >= *best {
            return Ok(());
        }
        if c.level() == n {
            *best = d;
            return Ok(());
        }
        for ch in system.children_meeting_ball(c, x, *best)? {
            rec(system, &ch, x, n, skip, best)?;
        }
        Ok(())
    }
    let mut best = system.space().diameter();
    rec(system, &system.root(), x, n, skip, &mut best)?;
    Ok(best)
}

/// Probe at the lower corner of each relocated child `C` with `r` equal to
/// the gap between that corner and the other survivors of `C`'s level.
pub fn relocation_probes(tree: &MeasureTree, level: usize, factor: f64) -> Result<Vec<RelocationProbe>> {
    let system = tree.system();
    let mut out = Vec::new();
    for (split, to) in relocations(system) {
        if to.level() > level {
            continue;
        }
        let c = system.cube_lazy(&to)?;
        let x = corner(&c);
        let r = gap_to_other_survivors(system, &x, to.level(), &to)?;
        out.push(RelocationProbe {
            split,
            alpha: system.alpha_at(to.level())?,
            cube: to,
            sample: restricted_sample(tree, level, x, r, factor)?,
        });
    }
    Ok(out)
}

/// The same system without the carpet distortion, weighted like `tree`.
fn undistorted_twin(tree: &MeasureTree) -> Result<MeasureTree> {
    let mut spec = tree.system().spec().clone();
    spec.edits.retain(|e| !matches!(e, Edit::DistortCarpet));
    let plain = Arc::new(CubeSystem::from_spec(spec)?);
    let n0 = match tree.n0() {
        N0Choice::Level(n) | N0Choice::TrivialWeights(n) => N0Policy::Fixed(*n),
        N0Choice::Never => N0Policy::Auto,
    };
    MeasureTree::new(plain, tree.rho(), n0, tree.depth(), tree.tolerance())
}

/// Probes of the undistorted carpet at the left-middle child of the kept
/// neighbour `K`, with `r` a quarter of the level-`n` side.
pub fn undistorted_probes(tree: &MeasureTree, level: usize, factor: f64) -> Result<Vec<RelocationProbe>> {
    let Layout::Adic { bases } = &tree.system().spec().layout else {
        return Err(Error::Unsupported("undistorted probes need an adic carpet".into()));
    };
    let twin = undistorted_twin(tree)?;
    let system = twin.system();
    let mut out = Vec::new();
    for (split, _) in relocations(tree.system()) {
        if split + 1 > level {
            continue;
        }
        let a = bases.base(split).ok_or_else(|| Error::InvalidSpec(format!("no base at split {split}")))? as u32;
        let a2 =
            bases.base(split + 1).ok_or_else(|| Error::InvalidSpec(format!("no base at split {}", split + 1)))? as u32;
        let (m, m2) = ((a - 1) / 2, (a2 - 1) / 2);
        let k = CubeId(vec![0; split - 1]).child(m + 1 + a * m);
        let id = k.child(a2 * m2);
        let c = system.cube_lazy(&id)?;
        let r = 0.25 / system.lattice_denominator(split) as f64;
        out.push(RelocationProbe {
            split,
            alpha: system.alpha_at(split + 1)?,
            cube: id,
            sample: restricted_sample(&twin, level, corner(&c), r, factor)?,
        });
    }
    Ok(out)
}

/// Least-squares fit of `log ratio = log Ĉ + λ log α` over probes with
/// `split ≥ from` and positive ratio.
pub fn fit_lambda(probes: &[RelocationProbe], from: usize) -> Option<LambdaFit> {
    let pts: Vec<(f64, f64)> = probes
        .iter()
        .filter(|p| p.split >= from && p.sample.ratio > 0.0 && p.sample.ratio.is_finite())
        .map(|p| (p.alpha.ln(), p.sample.ratio.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let lambda = sxy / sxx;
    let b = my - lambda * mx;
    let residual = (pts.iter().map(|p| (p.1 - b - lambda * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some(LambdaFit { lambda, c_hat: b.exp(), residual, points: pts.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlumpProbe {
    pub x: Point,
    pub big_r: f64,
    /// First level with a survivor cube inside `B(x, R)`.
    pub level: Option<usize>,
    pub y: Option<Point>,
    pub radius: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlumpnessReport {
    pub probes: Vec<PlumpProbe>,
    pub min_b: f64,
}

/// Distance from `y` to the complement of `S_n` in the domain.
fn distance_to_removed(system: &CubeSystem, y: &Point, n: usize, bound: f64) -> Result<f64> {
    fn rec(system: &CubeSystem, c: &Cube, y: &Point, n: usize, best: &mut f64) -> Result<()> {
        let d = c.region.min_dist(y);
        if d >= *best {
            return Ok(());
        }
        if !c.survivor {
            *best = d;
            return Ok(());
        }
        if c.level() == n {
            return Ok(());
        }
        for ch in system.children_meeting_ball(c, y, *best)? {
            rec(system, &ch, y, n, best)?;
        }
        Ok(())
    }
    let dom = system.domain();
    let mut best = bound;
    for a in 0..system.dim() {
        best = best.min(y.coord(a) - dom.lo[a]).min(dom.hi[a] - y.coord(a));
    }
    if best <= 0.0 {
        return Ok(0.0);
    }
    rec(system, &system.root(), y, n, &mut best)?;
    Ok(best)
}

fn survivors_meeting(system: &CubeSystem, n: usize, x: &Point, r: f64) -> Result<Vec<Cube>> {
    fn rec(system: &CubeSystem, c: &Cube, n: usize, x: &Point, r: f64, out: &mut Vec<Cube>) -> Result<()> {
        if !c.survivor || !c.region.meets_ball(x, r) {
            return Ok(());
        }
        if c.level() == n {
            out.push(c.clone());
            return Ok(());
        }
        for ch in system.children_meeting_ball(c, x, r)? {
            rec(system, &ch, n, x, r, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(system, &system.root(), n, x, r, &mut out)?;
    Ok(out)
}

/// Largest ball `B(y, b R) ⊂ B(x, R) ∩ S_n` found among survivor-cube
/// centers, where `n ≤ n_max` is the first level with a survivor cube
/// inside `B(x, R)`. Every reported ball is certified by construction.
pub fn relative_plumpness_probe(system: &CubeSystem, n_max: usize, probes: &[(Point, f64)]) -> Result<PlumpnessReport> {
    if n_max > system.depth() {
        return Err(Error::DepthOutOfRange { requested: n_max, available: system.depth() });
    }
    let out: Vec<PlumpProbe> = with_pool(|| {
        probes
            .par_iter()
            .map(|(x, big_r)| {
                let mut found = None;
                for n in 0..=n_max {
                    let cubes = survivors_meeting(system, n, x, *big_r)?;
                    if cubes.iter().any(|c| c.region.inside_ball(x, *big_r)) {
                        found = Some((n, cubes));
                        break;
                    }
                }
                let Some((n, cubes)) = found else {
                    return Ok(PlumpProbe { x: *x, big_r: *big_r, level: None, y: None, radius: 0.0, b: 0.0 });
                };
                let mut best = (0.0, None);
                for c in &cubes {
                    for y in [c.center, c.region.pieces()[0].center()] {
                        let room = big_r - y.dist(x);
                        if room <= best.0 {
                            continue;
                        }
                        let rad = distance_to_removed(system, &y, n, room)?;
                        if rad > best.0 {
                            best = (rad, Some(y));
                        }
                    }
                }
                Ok(PlumpProbe { x: *x, big_r: *big_r, level: Some(n), y: best.1, radius: best.0, b: best.0 / big_r })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let min_b = out.iter().map(|p| p.b).fold(f64::INFINITY, f64::min);
    Ok(PlumpnessReport { probes: out, min_b })
}

/// Probes centred on each relocated child with `R` equal to its gap.
pub fn relocation_plumpness_probes(system: &CubeSystem) -> Result<Vec<(usize, Point, f64)>> {
    let mut out = Vec::new();
    for (split, to) in relocations(system) {
        let c = system.cube_lazy(&to)?;
        let x = c.region.pieces()[0].center();
        let r = gap_to_other_survivors(system, &x, to.level(), &to)?;
        out.push((split, x, r));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PorosityWitness {
    pub level: usize,
    pub cube: CubeId,
    pub center: Point,
    pub radius: f64,
    /// `r / (|z - x| + r)`.
    pub ratio: f64,
    /// Whether the ball stays off the boundary of the probed cube.
    pub avoids_boundary: bool,
}

fn box_boundary_distance(b: &Aabb, p: &Point) -> f64 {
    if b.contains_point(p) {
        (0..p.dim()).map(|a| (p.coord(a) - b.lo[a]).min(b.hi[a] - p.coord(a))).fold(f64::INFINITY, f64::min)
    } else {
        b.min_dist(p)
    }
}

/// Inner ball of the level-`m` cube containing `z`, checked against the
/// boundary of the box cube `id`.
pub fn boundary_porosity(system: &CubeSystem, id: &CubeId, z: &Point, m: usize) -> Result<PorosityWitness> {
    let q = system.cube_lazy(id)?;
    if q.region.pieces().len() != 1 {
        return Err(Error::Unsupported(format!("cube {id} is not a box")));
    }
    if m <= id.level() {
        return Err(Error::ParameterOutOfRange(format!("level {m} must be below cube {id}")));
    }
    let dom = system.domain();
    let zz: Vec<f64> = (0..system.dim()).map(|a| z.coord(a).clamp(dom.lo[a], dom.hi[a] - 1e-15)).collect();
    let zz = Point::from_slice(&zz).unwrap();
    let c = system.locate(&zz, m)?.ok_or_else(|| Error::ParameterOutOfRange("point outside the domain".into()))?;
    let qb = q.region.pieces()[0];
    // The open ball may be tangent to the boundary.
    let avoids = box_boundary_distance(&qb, &c.center) >= c.radius * (1.0 - 1e-12);
    Ok(PorosityWitness {
        level: m,
        cube: c.id.clone(),
        center: c.center,
        radius: c.radius,
        ratio: c.radius / (z.dist(&c.center) + c.radius),
        avoids_boundary: avoids,
    })
}
