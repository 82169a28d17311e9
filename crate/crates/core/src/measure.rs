//! Radial-weight measures on cube systems.
//!
//! At split `n` each parent `Q` with center `x` and radius `r` selects the
//! children inside `B(x, r/2)` (the set `I`), and reweights them by the
//! average of `A·d(x, ·)^ρ` over each child, where `A` normalizes the total
//! over `I` to `H(I)`. All other children keep weight 1. The cube mass is
//! `ν(Q) = K(Q)·H(Q)` with `K` the product of weights along the ancestry over
//! splits `n0..=depth`.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::cube::{ClassKey, Cube, CubeId, CubeSystem};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::{power_distance_integral, DEFAULT_TOLERANCE};
use crate::sequence::neumaier_sum;

/// Children of `cube` inside `B(x, r/2)` and the rest, by slot.
pub fn iset(system: &CubeSystem, cube: &Cube) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut inside = Vec::new();
    let mut rest = Vec::new();
    for ch in system.children(cube)? {
        let slot = *ch.id.0.last().unwrap();
        if ch.region.inside_ball(&cube.center, 0.5 * cube.radius) {
            inside.push(slot);
        } else {
            rest.push(slot);
        }
    }
    Ok((inside, rest))
}

/// Weights of all children of one cube at one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChildWeights {
    pub slots: Vec<u32>,
    pub t: Vec<f64>,
    pub in_i: Vec<bool>,
    /// `None` when `I` is empty or the split is unweighted.
    pub a: Option<f64>,
    pub radius: f64,
}

impl ChildWeights {
    pub fn weight(&self, slot: u32) -> Option<f64> {
        self.slots.iter().position(|&s| s == slot).map(|i| self.t[i])
    }

    pub fn i_size(&self) -> usize {
        self.in_i.iter().filter(|&&b| b).count()
    }
}

fn compute_weights(system: &CubeSystem, cube: &Cube, rho: f64, tol: f64) -> Result<ChildWeights> {
    let (cube, kids) = if system.class_key(cube) == ClassKey::Level(cube.level()) {
        system.canonical_family(cube.level())
    } else {
        (cube.clone(), system.children(cube)?)
    };
    let cube = &cube;
    let slots: Vec<u32> = kids.iter().map(|c| *c.id.0.last().unwrap()).collect();
    let in_i: Vec<bool> = kids.iter().map(|c| c.region.inside_ball(&cube.center, 0.5 * cube.radius)).collect();
    let mut t = vec![1.0; kids.len()];
    let members: Vec<usize> = (0..kids.len()).filter(|&i| in_i[i]).collect();
    if members.is_empty() {
        return Ok(ChildWeights { slots, t, in_i, a: None, radius: cube.radius });
    }
    if rho == 0.0 {
        return Ok(ChildWeights { slots, t, in_i, a: Some(1.0), radius: cube.radius });
    }
    let vols: Vec<f64> = members.iter().map(|&i| kids[i].volume()).collect();
    let ints: Vec<f64> = members
        .iter()
        .map(|&i| power_distance_integral(&kids[i].region, &cube.center, rho, tol))
        .collect::<Result<_>>()?;
    let a = neumaier_sum(vols.iter().copied()) / neumaier_sum(ints.iter().copied());
    for (k, &i) in members.iter().enumerate() {
        t[i] = a * (ints[k] / vols[k]);
    }
    Ok(ChildWeights { slots, t, in_i, a: Some(a), radius: cube.radius })
}

/// `A = H(I) / ∫_I d(x, y)^ρ dH(y)`, or `None` for an empty `I`.
pub fn coefficient_a(system: &CubeSystem, cube: &Cube, rho: f64) -> Result<Option<f64>> {
    check_rho(system, rho)?;
    Ok(compute_weights(system, cube, rho, DEFAULT_TOLERANCE)?.a)
}

/// Weight of one child at the split below `cube`.
pub fn child_weight_t(system: &CubeSystem, cube: &Cube, child: u32, rho: f64) -> Result<f64> {
    check_rho(system, rho)?;
    compute_weights(system, cube, rho, DEFAULT_TOLERANCE)?
        .weight(child)
        .ok_or_else(|| Error::NotAChild { parent: cube.id.clone(), child })
}

fn check_rho(system: &CubeSystem, rho: f64) -> Result<()> {
    let q = system.dim();
    if !(rho > -(q as f64)) || !rho.is_finite() {
        return Err(Error::DivergentIntegral { rho, q });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "split", rename_all = "kebab-case")]
pub enum N0Choice {
    /// Every class from this split on has the small ball inside a nontrivial `I`.
    Level(usize),
    /// Only single-child `I` sets were found; weights are identically 1.
    TrivialWeights(usize),
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N0Row {
    pub split: usize,
    /// `B(x, r/16) ⊂ I` for every class.
    pub small_ball_in_i: bool,
    pub min_i_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N0Report {
    pub choice: N0Choice,
    pub rows: Vec<N0Row>,
}

/// Smallest split from which the decidable starting conditions hold for
/// every weight class up to `depth`.
pub fn choose_n0(system: &CubeSystem, depth: usize) -> Result<N0Report> {
    let mut rows = Vec::new();
    for split in 1..=depth {
        let mut ball_ok = true;
        let mut min_i = usize::MAX;
        for c in system.class_representatives(split - 1, false)? {
            let (inside, _) = iset(system, &c)?;
            min_i = min_i.min(inside.len());
            let r16 = c.radius / 16.0;
            let want = c.region.ball_intersection_volume(&c.center, r16);
            let kids = system.children(&c)?;
            let got: f64 = kids
                .iter()
                .filter(|k| inside.contains(k.id.0.last().unwrap()))
                .map(|k| k.region.ball_intersection_volume(&c.center, r16))
                .sum();
            let whole = system.domain().ball_intersection_volume(&c.center, r16);
            if (whole - got).abs() > 1e-12 * whole || (whole - want).abs() > 1e-12 * whole {
                ball_ok = false;
            }
        }
        rows.push(N0Row { split, small_ball_in_i: ball_ok, min_i_size: if min_i == usize::MAX { 0 } else { min_i } });
    }
    let from = |pred: &dyn Fn(&N0Row) -> bool| -> Option<usize> {
        let mut start = None;
        for r in rows.iter().rev() {
            if pred(r) {
                start = Some(r.split);
            } else {
                break;
            }
        }
        start
    };
    let choice = if let Some(n) = from(&|r| r.small_ball_in_i && r.min_i_size >= 2) {
        N0Choice::Level(n)
    } else if let Some(n) = from(&|r| r.small_ball_in_i && r.min_i_size >= 1) {
        N0Choice::TrivialWeights(n)
    } else {
        N0Choice::Never
    };
    Ok(N0Report { choice, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum N0Policy {
    Auto,
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub inner: f64,
    pub exact: f64,
    pub outer: f64,
    /// Uncertainty of `exact`. Finest cubes carry a constant density and their
    /// intersections with balls are closed-form, so this is zero.
    pub bracket: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallMode {
    Inner,
    Exact,
    Outer,
}

impl BallMass {
    pub fn get(&self, mode: BallMode) -> f64 {
        match mode {
            BallMode::Inner => self.inner,
            BallMode::Exact => self.exact,
            BallMode::Outer => self.outer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationAudit {
    pub cubes_checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<CubeId>,
    /// Max over cubes of `|Σ t·H(child) − H(cube)| / H(cube)`.
    pub max_theta_error: f64,
}

#[derive(Debug)]
pub struct MeasureTree {
    system: Arc<CubeSystem>,
    rho: f64,
    n0: N0Choice,
    first_split: Option<usize>,
    depth: usize,
    tol: f64,
    weights: RwLock<HashMap<ClassKey, Arc<ChildWeights>>>,
    fractions: RwLock<HashMap<usize, f64>>,
    empty_i: RwLock<BTreeSet<usize>>,
}

pub fn build_measure(system: Arc<CubeSystem>, rho: f64, n0: N0Policy, depth: usize) -> Result<MeasureTree> {
    MeasureTree::new(system, rho, n0, depth, DEFAULT_TOLERANCE)
}

impl MeasureTree {
    pub fn new(system: Arc<CubeSystem>, rho: f64, n0: N0Policy, depth: usize, tol: f64) -> Result<Self> {
        check_rho(&system, rho)?;
        if depth > system.depth() {
            return Err(Error::DepthOutOfRange { requested: depth, available: system.depth() });
        }
        if !(tol > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("quadrature tolerance {tol} must be positive")));
        }
        let n0 = match n0 {
            N0Policy::Auto => choose_n0(&system, depth)?.choice,
            N0Policy::Fixed(k) => {
                if k == 0 {
                    return Err(Error::ParameterOutOfRange("n0 is a split index, at least 1".into()));
                }
                N0Choice::Level(k)
            }
        };
        let first_split = match n0 {
            N0Choice::Level(k) | N0Choice::TrivialWeights(k) => Some(k),
            N0Choice::Never => None,
        };
        Ok(Self {
            system,
            rho,
            n0,
            first_split,
            depth,
            tol,
            weights: RwLock::new(HashMap::new()),
            fractions: RwLock::new(HashMap::new()),
            empty_i: RwLock::new(BTreeSet::new()),
        })
    }

    /// A single-split measure `θ_n`: only split `n` is weighted.
    pub fn single_split(system: Arc<CubeSystem>, rho: f64, n: usize) -> Result<Self> {
        Self::new(system, rho, N0Policy::Fixed(n), n, DEFAULT_TOLERANCE)
    }

    pub fn system(&self) -> &CubeSystem {
        &self.system
    }

    pub fn system_arc(&self) -> Arc<CubeSystem> {
        self.system.clone()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n0(&self) -> &N0Choice {
        &self.n0
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn is_weighted_split(&self, n: usize) -> bool {
        self.first_split.is_some_and(|k| k <= n && n <= self.depth)
    }

    /// Splits where some cube had an empty `I` and weights defaulted to 1.
    pub fn empty_i_splits(&self) -> Vec<usize> {
        self.empty_i.read().iter().copied().collect()
    }

    /// Weights of the children of `cube`.
    pub fn child_weights(&self, cube: &Cube) -> Result<Arc<ChildWeights>> {
        let split = cube.level() + 1;
        if split > self.system.depth() {
            return Err(Error::DepthOutOfRange { requested: split, available: self.system.depth() });
        }
        let key = self.system.class_key(cube);
        if !self.is_weighted_split(split) {
            let slots = self.system.child_slots(cube);
            let n = slots.len();
            return Ok(Arc::new(ChildWeights {
                slots,
                t: vec![1.0; n],
                in_i: vec![false; n],
                a: None,
                radius: cube.radius,
            }));
        }
        if let Some(w) = self.weights.read().get(&key) {
            return Ok(w.clone());
        }
        let w = Arc::new(compute_weights(&self.system, cube, self.rho, self.tol)?);
        if w.a.is_none() {
            self.empty_i.write().insert(split);
        }
        // Concurrent fills compute identical values; first insert wins.
        Ok(self.weights.write().entry(key).or_insert(w).clone())
    }

    /// `K(Q)`, the product of weights along the path.
    pub fn cumulative_weight(&self, id: &CubeId) -> Result<f64> {
        let mut c = self.system.root();
        let mut k = 1.0;
        for &s in &id.0 {
            if c.level() >= self.depth {
                return Err(Error::DepthOutOfRange { requested: id.level(), available: self.depth });
            }
            let w = self.child_weights(&c)?;
            k *= w.weight(s).ok_or_else(|| Error::UnknownCube(id.clone()))?;
            c = self.system.child(&c, s).map_err(|_| Error::UnknownCube(id.clone()))?;
        }
        Ok(k)
    }

    pub fn cube_mass(&self, id: &CubeId) -> Result<f64> {
        let k = self.cumulative_weight(id)?;
        Ok(k * self.system.cube(id)?.volume())
    }

    /// Masses of the children of a cube whose cumulative weight is `k`.
    pub fn child_masses(&self, cube: &Cube, k: f64) -> Result<Vec<(Cube, f64, f64)>> {
        let w = self.child_weights(cube)?;
        let kids = self.system.children(cube)?;
        Ok(kids
            .into_iter()
            .zip(w.t.iter())
            .map(|(c, &t)| {
                let kc = k * t;
                let m = kc * c.volume();
                (c, kc, m)
            })
            .collect())
    }

    pub fn ball_mass(&self, x: &Point, r: f64) -> Result<BallMass> {
        if !(r > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("radius {r} must be positive")));
        }
        let mut acc = [0.0f64; 3];
        let root = self.system.root();
        self.ball_rec(&root, 1.0, x, r, &mut acc)?;
        Ok(BallMass { inner: acc[0], exact: acc[1], outer: acc[2], bracket: 0.0 })
    }

    /// `ν(B(x, r) ∩ Q)` for a cube `Q` of cumulative weight `k`.
    pub fn ball_mass_in(&self, c: &Cube, k: f64, x: &Point, r: f64) -> Result<BallMass> {
        let mut acc = [0.0f64; 3];
        self.ball_rec(c, k, x, r, &mut acc)?;
        Ok(BallMass { inner: acc[0], exact: acc[1], outer: acc[2], bracket: 0.0 })
    }

    fn ball_rec(&self, c: &Cube, k: f64, x: &Point, r: f64, acc: &mut [f64; 3]) -> Result<()> {
        if !c.region.meets_ball(x, r) {
            return Ok(());
        }
        let h = c.volume();
        if c.region.inside_ball(x, r) {
            let m = k * h;
            acc[0] += m;
            acc[1] += m;
            acc[2] += m;
            return Ok(());
        }
        if c.level() >= self.depth {
            let part = c.region.ball_intersection_volume(x, r).clamp(0.0, h);
            acc[0] += 0.0;
            acc[1] += k * part;
            acc[2] += k * h;
            return Ok(());
        }
        let w = self.child_weights(c)?;
        for ch in self.system.children_meeting_ball(c, x, r)? {
            let t = w.weight(*ch.id.0.last().unwrap()).unwrap();
            self.ball_rec(&ch, k * t, x, r, acc)?;
        }
        Ok(())
    }

    /// Mass fraction of a regular cube at `level` kept by its non-center
    /// children: `Σ_{j ≠ center} t_j H(Q_j) / H(Q)`.
    pub(crate) fn level_survivor_fraction(&self, level: usize) -> Result<f64> {
        if let Some(&f) = self.fractions.read().get(&level) {
            return Ok(f);
        }
        let reps = self.system.class_representatives(level, false)?;
        let rep = reps
            .into_iter()
            .find(|c| self.system.class_key(c) == ClassKey::Level(level))
            .ok_or_else(|| Error::Unsupported(format!("no regular cube at level {level}")))?;
        let w = self.child_weights(&rep)?;
        let kids = self.system.children(&rep)?;
        let h = rep.volume();
        let f = neumaier_sum(
            kids.iter()
                .zip(w.t.iter())
                .filter(|(c, _)| rep.center_child != c.id.0.last().copied())
                .map(|(c, &t)| t * c.volume() / h),
        );
        self.fractions.write().insert(level, f);
        Ok(f)
    }

    /// `Π_{L=from}^{to-1}` of the per-level survivor fractions.
    pub(crate) fn regular_survivor_fraction(&self, from: usize, to: usize) -> Result<f64> {
        let mut f = 1.0;
        for l in from..to {
            f *= self.level_survivor_fraction(l)?;
        }
        Ok(f)
    }

    /// Fitted `C_4 = max(A r^ρ, 1/(A r^ρ))` over every `A` computed so far.
    pub fn fitted_c4(&self) -> f64 {
        self.weights
            .read()
            .values()
            .filter_map(|w| w.a.map(|a| a * w.radius.powf(self.rho)))
            .fold(1.0, |m, v| m.max(v).max(1.0 / v))
    }

    /// Every computed `(class, A, r)`.
    pub fn coefficients(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.weights.read().values().filter_map(|w| w.a.map(|a| (a, w.radius))).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    /// Compare `ν(Q)` with `Σ ν(children)` over every cube above the finest
    /// weighted level, or over class representatives when a level is too big.
    pub fn conservation_audit(&self) -> Result<ConservationAudit> {
        let mut audit =
            ConservationAudit { cubes_checked: 0, max_relative_error: 0.0, worst: None, max_theta_error: 0.0 };
        let root = self.system.root();
        self.audit_rec(&root, 1.0, &mut audit)?;
        Ok(audit)
    }

    fn audit_rec(&self, c: &Cube, k: f64, audit: &mut ConservationAudit) -> Result<()> {
        if c.level() >= self.depth {
            return Ok(());
        }
        let h = c.volume();
        let parent = k * h;
        let kids = self.child_masses(c, k)?;
        let sum = neumaier_sum(kids.iter().map(|(_, _, m)| *m));
        let theta = neumaier_sum(kids.iter().map(|(ch, kc, _)| kc / k * ch.volume()));
        let err = (sum - parent).abs() / parent;
        audit.cubes_checked += 1;
        audit.max_theta_error = audit.max_theta_error.max((theta - h).abs() / h);
        if err > audit.max_relative_error || audit.worst.is_none() {
            if err >= audit.max_relative_error {
                audit.worst = Some(c.id.clone());
            }
            audit.max_relative_error = audit.max_relative_error.max(err);
        }
        let regular = kids.len() > 1 && self.system.subtree_regular(&c.id);
        for (i, (ch, kc, _)) in kids.iter().enumerate() {
            // Regular subtrees repeat the same weights; one child per
            // weight value is enough to cover every class below.
            if regular && kids[..i].iter().any(|(_, kp, _)| (kp / k).to_bits() == (kc / k).to_bits()) {
                continue;
            }
            self.audit_rec(ch, *kc, audit)?;
        }
        Ok(())
    }

    /// Serializable summary: spec of the system plus `K` of the given paths.
    pub fn k_table(&self, ids: &[CubeId]) -> Result<Vec<(CubeId, f64)>> {
        ids.iter().map(|id| Ok((id.clone(), self.cumulative_weight(id)?))).collect()
    }
}
