//! Hierarchical cube systems on `[0,1)^q`.
//!
//! Every cube sits on an integer lattice: at level `L` the domain is split
//! into `N_L` cells per axis and a cube is identified by the lattice index of
//! its lower corner. Boundaries are `i / N_L` computed from integers, so the
//! same boundary is bit-identical at every level that contains it. Cubes are
//! derived from their index path on demand; eager systems additionally keep
//! every level in memory.
//!
//! Edits (center redesignation, the distortion of the carpet, radius
//! corruption for testing, power-map pushforward) live in the system spec so a
//! serialized spec rebuilds the same system.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Region};
use crate::sequence::{AlphaSequence, BaseRule, SequenceSpec};
use crate::space::SpaceModel;

pub const DEFAULT_CUBE_BUDGET: u128 = 4_000_000;

/// Path of child slots from the root. In two dimensions slot `ix + g·iy`
/// addresses column `ix`, row `iy` of a `g × g` grid; slots `≥ g^q` are
/// adopted children.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CubeId(pub Vec<u32>);

impl CubeId {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, slot: u32) -> Self {
        let mut v = self.0.clone();
        v.push(slot);
        Self(v)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn is_prefix_of(&self, other: &CubeId) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "root");
        }
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "{}", parts.join("."))
    }
}

impl FromStr for CubeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "root" {
            return Ok(Self::root());
        }
        s.split('.')
            .map(|p| p.trim().parse::<u32>().map_err(|_| Error::InvalidSpec(format!("bad cube id {s:?}"))))
            .collect::<Result<Vec<u32>>>()
            .map(CubeId)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    #[serde(rename = "path")]
    pub id: CubeId,
    /// Lattice index of the lower corner at this cube's level.
    pub lattice: [u128; 2],
    #[serde(rename = "box")]
    pub region: Region,
    pub center: Point,
    pub radius: f64,
    pub center_child: Option<u32>,
    pub survivor: bool,
    /// Lattice volume for plain boxes, else the region's volume.
    #[serde(skip)]
    volume: f64,
}

impl Cube {
    pub fn level(&self) -> usize {
        self.id.level()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// Split `n` cuts every axis into `a_n` pieces.
    Adic { bases: BaseRule },
    /// Level `n` is generation `k_n` of the `b`-adic grid.
    SubsampledDyadic { base: u64, alpha: AlphaSequence },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Edit {
    DesignateCenterChild { cube: CubeId, child: u32 },
    DistortCarpet,
    RadiusOverride { cube: CubeId, radius: f64 },
    Pushforward { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub q: usize,
    pub layout: Layout,
    pub depth: usize,
    #[serde(default)]
    pub lazy: bool,
    #[serde(default = "default_budget")]
    pub budget: u128,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edits: Vec<Edit>,
}

fn default_budget() -> u128 {
    DEFAULT_CUBE_BUDGET
}

/// Declared axiom constants. `None` means not declared, to be fitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub d: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Override {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Radius applied after any pushforward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_child: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_slots: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adopted: Vec<(u32, [u128; 2])>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Aabb>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<Aabb>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum ManifestEntry {
    /// A child of the hole `hole` was moved under the kept neighbour `keeper`.
    Relocation {
        split: usize,
        parent: CubeId,
        hole: CubeId,
        keeper: CubeId,
        from: CubeId,
        to: CubeId,
        hole_radius: f64,
    },
    /// The split's base is too small to place an isolated child.
    Skipped {
        split: usize,
        base: u64,
    },
    Designation {
        cube: CubeId,
        child: u32,
        radius: f64,
    },
    RadiusOverride {
        cube: CubeId,
        radius: f64,
    },
}

/// Memo key for objects shared by congruent cubes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ClassKey {
    Level(usize),
    Path(CubeId),
}

#[derive(Clone, Debug)]
struct Eager {
    levels: Vec<Vec<Cube>>,
    index: HashMap<CubeId, (usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct CubeSystem {
    spec: SystemSpec,
    space: SpaceModel,
    alpha: AlphaSequence,
    constants: Constants,
    /// Per-axis split factor at split `n`; index 0 unused.
    mult: Vec<u64>,
    /// Lattice cells per axis at each level.
    denom: Vec<u128>,
    overrides: BTreeMap<CubeId, Override>,
    transform: Option<f64>,
    manifest: Vec<ManifestEntry>,
    eager: Option<Eager>,
}

impl CubeSystem {
    pub fn from_spec(spec: SystemSpec) -> Result<Self> {
        let space = SpaceModel::new(spec.q)?;
        let q = spec.q as f64;
        let (alpha, mult, constants) = match &spec.layout {
            Layout::Adic { bases } => {
                bases.check(spec.depth)?;
                let mut mult = vec![1u64];
                for n in 1..=spec.depth {
                    mult.push(bases.base(n).unwrap());
                }
                let alpha = AlphaSequence::new(SequenceSpec::ReciprocalOdd { rule: bases.clone() })?;
                (alpha, mult, Constants { d: 1.0, c1: Some(2.0 * q.sqrt()), c2: Some(1.0) })
            }
            Layout::SubsampledDyadic { base, alpha } => {
                let gaps = subsampled_gaps(*base, alpha, spec.depth)?;
                let mut mult = vec![1u64];
                for g in gaps {
                    let m = base
                        .checked_pow(g)
                        .ok_or_else(|| Error::ParameterOutOfRange(format!("{base}^{g} overflows")))?;
                    mult.push(m);
                }
                (alpha.clone(), mult, Constants { d: 1.0, c1: Some(2.0 * q.sqrt()), c2: Some(*base as f64) })
            }
        };
        let mut denom = vec![1u128];
        for n in 1..=spec.depth {
            let next = denom[n - 1]
                .checked_mul(mult[n] as u128)
                .ok_or_else(|| Error::ParameterOutOfRange(format!("lattice at level {n} exceeds 128 bits")))?;
            denom.push(next);
        }
        let edits = spec.edits.clone();
        let mut sys = Self {
            spec: SystemSpec { edits: Vec::new(), ..spec },
            space,
            alpha,
            constants,
            mult,
            denom,
            overrides: BTreeMap::new(),
            transform: None,
            manifest: Vec::new(),
            eager: None,
        };
        for e in edits {
            sys.apply_edit(e)?;
        }
        sys.materialize()?;
        Ok(sys)
    }

    fn materialize(&mut self) -> Result<()> {
        self.eager = None;
        if self.spec.lazy {
            return Ok(());
        }
        let mut total: u128 = 0;
        for n in 0..=self.spec.depth {
            total = total.saturating_add(self.level_count(n));
            if total > self.spec.budget {
                return Err(Error::BudgetExceeded { level: n, count: self.level_count(n), budget: self.spec.budget });
            }
        }
        let mut levels = vec![vec![self.root()]];
        for n in 1..=self.spec.depth {
            let mut next = Vec::new();
            for c in &levels[n - 1] {
                next.extend(self.children(c)?);
            }
            levels.push(next);
        }
        let mut index = HashMap::new();
        for (l, lv) in levels.iter().enumerate() {
            for (i, c) in lv.iter().enumerate() {
                index.insert(c.id.clone(), (l, i));
            }
        }
        self.eager = Some(Eager { levels, index });
        Ok(())
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn space(&self) -> &SpaceModel {
        &self.space
    }

    pub fn alpha(&self) -> &AlphaSequence {
        &self.alpha
    }

    /// `α_n` for split `n`.
    pub fn alpha_at(&self, n: usize) -> Result<f64> {
        self.alpha.value(n)
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn overrides(&self) -> &BTreeMap<CubeId, Override> {
        &self.overrides
    }

    pub fn depth(&self) -> usize {
        self.spec.depth
    }

    pub fn dim(&self) -> usize {
        self.spec.q
    }

    pub fn domain(&self) -> Aabb {
        self.space.domain()
    }

    pub fn is_lazy(&self) -> bool {
        self.eager.is_none()
    }

    pub fn transform(&self) -> Option<f64> {
        self.transform
    }

    /// Per-axis split factor at split `n ≥ 1`.
    pub fn multiplier(&self, n: usize) -> u64 {
        self.mult[n]
    }

    pub fn lattice_denominator(&self, level: usize) -> u128 {
        self.denom[level]
    }

    fn slots_per_cube(&self, n: usize) -> u128 {
        (self.mult[n] as u128).pow(self.spec.q as u32)
    }

    /// Number of cubes at level `n`. Relocations move cubes without changing
    /// the count.
    pub fn level_count(&self, n: usize) -> u128 {
        (1..=n.min(self.spec.depth)).fold(1u128, |acc, j| acc.saturating_mul(self.slots_per_cube(j)))
    }

    pub fn root(&self) -> Cube {
        self.cube_at(CubeId::root(), [0, 0], true)
    }

    fn lattice_box(&self, level: usize, lo: [u128; 2]) -> Aabb {
        let n = self.denom[level] as f64;
        let c = |i: u128| i as f64 / n;
        match self.spec.q {
            1 => Aabb::interval(c(lo[0]), c(lo[0] + 1)),
            _ => Aabb::rect([c(lo[0]), c(lo[1])], [c(lo[0] + 1), c(lo[1] + 1)]),
        }
    }

    fn default_center_slot(&self, split: usize) -> u32 {
        let g = self.mult[split];
        let m = g / 2;
        match self.spec.q {
            1 => m as u32,
            _ => (m + g * m) as u32,
        }
    }

    fn map_box(&self, b: &Aabb) -> Aabb {
        match self.transform {
            Some(beta) => Aabb::interval(b.lo[0].powf(beta), b.hi[0].powf(beta)),
            None => *b,
        }
    }

    fn cube_at(&self, id: CubeId, lattice: [u128; 2], survivor: bool) -> Cube {
        let ov = self.overrides.get(&id);
        self.build_cube(id, lattice, survivor, ov)
    }

    /// An unedited cube at the origin and its children. Regular cubes of the
    /// same level share weights, and near the origin the child boxes keep
    /// full relative precision.
    pub(crate) fn canonical_family(&self, level: usize) -> (Cube, Vec<Cube>) {
        let id = CubeId(vec![0; level]);
        let parent = self.build_cube(id.clone(), [0, 0], true, None);
        if level >= self.spec.depth {
            return (parent, Vec::new());
        }
        let g = self.mult[level + 1] as u128;
        let kids = (0..self.slots_per_cube(level + 1))
            .map(|s| {
                let lattice = if self.spec.q == 1 { [s, 0] } else { [s % g, s / g] };
                self.build_cube(id.child(s as u32), lattice, true, None)
            })
            .collect();
        (parent, kids)
    }

    fn build_cube(&self, id: CubeId, lattice: [u128; 2], survivor: bool, ov: Option<&Override>) -> Cube {
        let level = id.level();
        let bx = self.lattice_box(level, lattice);
        let (holes, extras) = match ov {
            Some(o) => (o.holes.clone(), o.extras.clone()),
            None => (Vec::new(), Vec::new()),
        };
        let mut center = ov.and_then(|o| o.center).unwrap_or_else(|| bx.center());
        let mut radius = ov.and_then(|o| o.radius).unwrap_or(0.5 / self.denom[level] as f64);
        let mut region = if holes.is_empty() && extras.is_empty() {
            Region::from_box(bx)
        } else {
            Region::with_changes(bx, holes, extras)
        };
        if let Some(beta) = self.transform {
            region = Region::with_changes(
                self.map_box(&region.frame),
                region.holes.iter().map(|h| self.map_box(h)).collect(),
                region.extras.iter().map(|e| self.map_box(e)).collect(),
            );
            center = Point::new1(center.coord(0).powf(beta));
            let r = region.inner_radius(&center, &self.domain());
            radius = if r.is_finite() {
                r
            } else {
                (center.coord(0) - region.frame.lo[0]).min(region.frame.hi[0] - center.coord(0))
            };
        }
        if let Some(r) = ov.and_then(|o| o.radius_final) {
            radius = r;
        }
        let volume = if region.holes.is_empty() && region.extras.is_empty() && self.transform.is_none() {
            (1.0 / self.denom[level] as f64).powi(self.spec.q as i32)
        } else {
            region.volume()
        };
        let center_child = if level < self.spec.depth {
            Some(ov.and_then(|o| o.center_child).unwrap_or_else(|| self.default_center_slot(level + 1)))
        } else {
            None
        };
        Cube { id, lattice, region, center, radius, center_child, survivor, volume }
    }

    /// Slots of the children of `cube`, in order.
    pub fn child_slots(&self, cube: &Cube) -> Vec<u32> {
        let level = cube.level();
        if level >= self.spec.depth {
            return Vec::new();
        }
        let total = self.slots_per_cube(level + 1) as u32;
        match self.overrides.get(&cube.id) {
            None => (0..total).collect(),
            Some(o) => {
                (0..total).filter(|s| !o.removed_slots.contains(s)).chain(o.adopted.iter().map(|(s, _)| *s)).collect()
            }
        }
    }

    pub fn child(&self, cube: &Cube, slot: u32) -> Result<Cube> {
        let level = cube.level();
        if level >= self.spec.depth {
            return Err(Error::DepthOutOfRange { requested: level + 1, available: self.spec.depth });
        }
        let g = self.mult[level + 1] as u128;
        let total = self.slots_per_cube(level + 1) as u32;
        let ov = self.overrides.get(&cube.id);
        let not_child = || Error::NotAChild { parent: cube.id.clone(), child: slot };
        let lattice = if slot < total {
            if ov.is_some_and(|o| o.removed_slots.contains(&slot)) {
                return Err(not_child());
            }
            let s = slot as u128;
            match self.spec.q {
                1 => [cube.lattice[0] * g + s, 0],
                _ => [cube.lattice[0] * g + s % g, cube.lattice[1] * g + s / g],
            }
        } else {
            ov.and_then(|o| o.adopted.iter().find(|(s, _)| *s == slot)).map(|(_, l)| *l).ok_or_else(not_child)?
        };
        let survivor = cube.survivor && cube.center_child != Some(slot);
        Ok(self.cube_at(cube.id.child(slot), lattice, survivor))
    }

    pub fn children(&self, cube: &Cube) -> Result<Vec<Cube>> {
        self.child_slots(cube).into_iter().map(|s| self.child(cube, s)).collect()
    }

    /// The cube at `id`, from the eager table or by walking the path.
    pub fn cube(&self, id: &CubeId) -> Result<Cube> {
        if id.level() > self.spec.depth {
            return Err(Error::UnknownCube(id.clone()));
        }
        if let Some(e) = &self.eager {
            return e.index.get(id).map(|&(l, i)| e.levels[l][i].clone()).ok_or_else(|| Error::UnknownCube(id.clone()));
        }
        self.cube_lazy(id)
    }

    /// Always recomputes from the path, even for eager systems.
    pub fn cube_lazy(&self, id: &CubeId) -> Result<Cube> {
        let mut c = self.root();
        for &s in &id.0 {
            c = self.child(&c, s).map_err(|_| Error::UnknownCube(id.clone()))?;
        }
        Ok(c)
    }

    /// Level-`n` cubes whose every ancestor (and themselves) pass `keep`.
    pub fn collect_level(&self, n: usize, keep: &(dyn Fn(&Cube) -> bool + Sync)) -> Result<Vec<Cube>> {
        if n > self.spec.depth {
            return Err(Error::DepthOutOfRange { requested: n, available: self.spec.depth });
        }
        let mut out = Vec::new();
        let root = self.root();
        if keep(&root) {
            self.collect_rec(&root, n, keep, &mut out)?;
        }
        Ok(out)
    }

    fn collect_rec(
        &self,
        c: &Cube,
        n: usize,
        keep: &(dyn Fn(&Cube) -> bool + Sync),
        out: &mut Vec<Cube>,
    ) -> Result<()> {
        if c.level() == n {
            out.push(c.clone());
            return Ok(());
        }
        for ch in self.children(c)? {
            if keep(&ch) {
                self.collect_rec(&ch, n, keep, out)?;
            }
        }
        Ok(())
    }

    /// All level-`n` cubes. Lazy systems refuse levels above the budget.
    pub fn level(&self, n: usize) -> Result<Vec<Cube>> {
        if n > self.spec.depth {
            return Err(Error::DepthOutOfRange { requested: n, available: self.spec.depth });
        }
        if let Some(e) = &self.eager {
            return Ok(e.levels[n].clone());
        }
        let count = self.level_count(n);
        if count > self.spec.budget {
            return Err(Error::BudgetExceeded { level: n, count, budget: self.spec.budget });
        }
        self.collect_level(n, &|_| true)
    }

    /// Level-`n` cubes never passing through a center child.
    pub fn survivors(&self, n: usize) -> Result<Vec<Cube>> {
        self.collect_level(n, &|c| c.survivor)
    }

    /// Level-`n` cubes inside the open ball `B(x, r)` and those meeting it.
    pub fn in_cover(&self, x: &Point, r: f64, n: usize) -> Result<(Vec<Cube>, Vec<Cube>)> {
        let cov = self.collect_level(n, &|c| c.region.meets_ball(x, r))?;
        let inside = cov.iter().filter(|c| c.region.inside_ball(x, r)).cloned().collect();
        Ok((inside, cov))
    }

    /// The level-`n` cube whose region contains `x`.
    pub fn locate(&self, x: &Point, n: usize) -> Result<Option<Cube>> {
        if n > self.spec.depth {
            return Err(Error::DepthOutOfRange { requested: n, available: self.spec.depth });
        }
        let mut c = self.root();
        if !c.region.contains_point(x) {
            return Ok(None);
        }
        while c.level() < n {
            let next = self.locate_child(&c, x)?;
            match next {
                Some(ch) => c = ch,
                None => return Ok(None),
            }
        }
        Ok(Some(c))
    }

    fn locate_child(&self, c: &Cube, x: &Point) -> Result<Option<Cube>> {
        if self.transform.is_none() && !self.overrides.contains_key(&c.id) {
            let level = c.level() + 1;
            let g = self.mult[level] as u128;
            let n = self.denom[level] as f64;
            let mut slot = 0u128;
            let mut ok = true;
            for a in 0..self.spec.q {
                let idx = (x.coord(a) * n).floor();
                let base = c.lattice[a] * g;
                if idx < base as f64 || idx >= (base + g) as f64 {
                    ok = false;
                    break;
                }
                let local = idx as u128 - base;
                slot += if a == 0 { local } else { local * g };
            }
            if ok {
                let ch = self.child(c, slot as u32)?;
                if ch.region.contains_point(x) {
                    return Ok(Some(ch));
                }
            }
        }
        for ch in self.children(c)? {
            if ch.region.contains_point(x) {
                return Ok(Some(ch));
            }
        }
        Ok(None)
    }

    /// Whether no override touches the subtree of `id` and no map distorts it,
    /// so the subtree is congruent to every other regular subtree at its level.
    pub fn subtree_regular(&self, id: &CubeId) -> bool {
        if self.transform.is_some() {
            return false;
        }
        match self.overrides.range(id.clone()..).next() {
            Some((k, _)) => !id.is_prefix_of(k),
            None => true,
        }
    }

    /// Key under which a cube's child weights can be shared.
    pub fn class_key(&self, cube: &Cube) -> ClassKey {
        if self.transform.is_some() {
            return ClassKey::Path(cube.id.clone());
        }
        let touched = self
            .overrides
            .range(cube.id.clone()..)
            .take_while(|(k, _)| cube.id.is_prefix_of(k))
            .any(|(k, _)| k.level() <= cube.level() + 1);
        if touched {
            ClassKey::Path(cube.id.clone())
        } else {
            ClassKey::Level(cube.level())
        }
    }

    /// Children of `cube` whose regions meet `B(x, r)`, in slot order.
    pub fn children_meeting_ball(&self, cube: &Cube, x: &Point, r: f64) -> Result<Vec<Cube>> {
        let level = cube.level();
        if level >= self.spec.depth {
            return Ok(Vec::new());
        }
        if self.transform.is_some() || self.overrides.contains_key(&cube.id) {
            return Ok(self.children(cube)?.into_iter().filter(|c| c.region.meets_ball(x, r)).collect());
        }
        let g = self.mult[level + 1] as i128;
        let n = self.denom[level + 1] as f64;
        let mut range = [(0i128, 0i128); 2];
        for a in 0..self.spec.q {
            let base = cube.lattice[a] as i128 * g;
            let lo = ((x.coord(a) - r) * n).floor() as i128 - 1;
            let hi = ((x.coord(a) + r) * n).floor() as i128 + 1;
            range[a] = (lo.max(base) - base, hi.min(base + g - 1) - base);
        }
        if self.spec.q == 1 {
            range[1] = (0, 0);
        }
        let mut out = Vec::new();
        for iy in range[1].0..=range[1].1 {
            for ix in range[0].0..=range[0].1 {
                let slot = (ix + g * iy) as u32;
                let ch = self.child(cube, slot)?;
                if ch.region.meets_ball(x, r) {
                    out.push(ch);
                }
            }
        }
        Ok(out)
    }

    /// One cube per weight class at `level`: a congruent representative of
    /// the regular cubes (if any) followed by every cube whose own or child
    /// geometry is edited. With `survivors_only`, only surviving cubes count.
    pub fn class_representatives(&self, level: usize, survivors_only: bool) -> Result<Vec<Cube>> {
        if level > self.spec.depth {
            return Err(Error::DepthOutOfRange { requested: level, available: self.spec.depth });
        }
        if self.transform.is_some() {
            let all = self.level(level)?;
            return Ok(all.into_iter().filter(|c| !survivors_only || c.survivor).collect());
        }
        let mut out = Vec::new();
        if let Some(rep) = self.find_regular(&self.root(), level, survivors_only)? {
            out.push(rep);
        }
        let mut edited: Vec<CubeId> = Vec::new();
        for k in self.overrides.keys() {
            if k.level() == level {
                edited.push(k.clone());
            }
            if k.level() == level + 1 {
                edited.push(k.parent().unwrap());
            }
        }
        edited.sort();
        edited.dedup();
        for id in edited {
            let c = self.cube_lazy(&id)?;
            if !survivors_only || c.survivor {
                out.push(c);
            }
        }
        Ok(out)
    }

    fn find_regular(&self, c: &Cube, level: usize, survivors_only: bool) -> Result<Option<Cube>> {
        if survivors_only && !c.survivor {
            return Ok(None);
        }
        if c.level() == level {
            return Ok((self.class_key(c) == ClassKey::Level(level)).then(|| c.clone()));
        }
        // Prefer untouched subtrees; they almost always hold a regular cube.
        let slots = self.child_slots(c);
        let mut order: Vec<u32> = slots.iter().rev().copied().collect();
        order.sort_by_key(|s| !self.subtree_regular(&c.id.child(*s)));
        for s in order {
            let ch = self.child(c, s)?;
            if let Some(found) = self.find_regular(&ch, level, survivors_only)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    /// Copy with one cube's radius forced, for exercising the validator.
    pub fn with_radius_override(&self, id: &CubeId, radius: f64) -> Result<Self> {
        let mut s = self.clone();
        s.push_edit(Edit::RadiusOverride { cube: id.clone(), radius })?;
        Ok(s)
    }

    fn push_edit(&mut self, e: Edit) -> Result<()> {
        self.apply_edit(e)?;
        self.materialize()
    }

    fn apply_edit(&mut self, e: Edit) -> Result<()> {
        match &e {
            Edit::DesignateCenterChild { cube, child } => {
                if !self.apply_designation(cube, *child)? {
                    return Ok(());
                }
            }
            Edit::DistortCarpet => self.apply_distortion()?,
            Edit::RadiusOverride { cube, radius } => {
                self.cube_lazy(cube)?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::ParameterOutOfRange(format!("radius {radius} must be positive")));
                }
                self.overrides.entry(cube.clone()).or_default().radius_final = Some(*radius);
                self.manifest.push(ManifestEntry::RadiusOverride { cube: cube.clone(), radius: *radius });
            }
            Edit::Pushforward { beta } => {
                if self.spec.q != 1 {
                    return Err(Error::Unsupported("pushforward needs a one-dimensional system".into()));
                }
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(Error::ParameterOutOfRange(format!("beta {beta} not in (0,1]")));
                }
                if *beta == 1.0 {
                    return Ok(());
                }
                self.transform = Some(self.transform.unwrap_or(1.0) * beta);
                self.constants = Constants { d: self.constants.d * beta, c1: None, c2: None };
            }
        }
        self.spec.edits.push(e);
        Ok(())
    }

    fn require_untransformed(&self, what: &str) -> Result<()> {
        if self.transform.is_some() {
            return Err(Error::Unsupported(format!("{what} after a pushforward")));
        }
        Ok(())
    }

    /// Returns false when the designation is the identity.
    fn apply_designation(&mut self, id: &CubeId, slot: u32) -> Result<bool> {
        self.require_untransformed("center redesignation")?;
        let cube = self.cube_lazy(id)?;
        if !self.child_slots(&cube).contains(&slot) {
            return Err(Error::NotAChild { parent: id.clone(), child: slot });
        }
        if cube.center_child == Some(slot) {
            return Ok(false);
        }
        let ch = self.child(&cube, slot)?;
        let center = ch.region.frame.center();
        let radius = cube.radius.min(cube.region.inner_radius(&center, &self.domain()));
        {
            let o = self.overrides.entry(id.clone()).or_default();
            o.center = Some(center);
            o.radius = Some(radius);
            o.center_child = Some(slot);
        }
        if let Some(c1) = self.constants.c1 {
            self.constants.c1 = Some((3.0 * c1).max(self.c1_requirement(id)?));
        }
        self.update_c2_around(id)?;
        self.manifest.push(ManifestEntry::Designation { cube: id.clone(), child: slot, radius });
        Ok(true)
    }

    fn c1_requirement(&self, id: &CubeId) -> Result<f64> {
        let c = self.cube_lazy(id)?;
        Ok(c.region.max_dist(&c.center) / c.radius * (1.0 + 1e-9))
    }

    /// Raise the declared `C_2` so axiom IV holds for `id` with its parent and
    /// with its center child.
    fn update_c2_around(&mut self, id: &CubeId) -> Result<()> {
        let Some(mut c2) = self.constants.c2 else { return Ok(()) };
        let d = self.constants.d;
        let cube = self.cube_lazy(id)?;
        if let Some(pid) = id.parent() {
            let parent = self.cube_lazy(&pid)?;
            if parent.center_child == id.0.last().copied() {
                let a = self.alpha_at(cube.level())?;
                c2 = c2.max(axiom_iv_requirement(parent.radius, cube.radius, a, d));
            }
        }
        if let Some(s) = cube.center_child {
            let ch = self.child(&cube, s)?;
            let a = self.alpha_at(cube.level() + 1)?;
            c2 = c2.max(axiom_iv_requirement(cube.radius, ch.radius, a, d));
        }
        self.constants.c2 = Some(c2);
        Ok(())
    }

    /// At each split `n < depth`, move one child of the hole `H` of the
    /// corner-chain cube `P` (at level `n - 1`) under the kept cube `K` right of
    /// the hole. The moved child sits inside the hole, isolated from the other
    /// survivors by a gap comparable to the side of `H`.
    fn apply_distortion(&mut self) -> Result<()> {
        self.require_untransformed("distortion")?;
        if self.spec.q != 2 || !matches!(self.spec.layout, Layout::Adic { .. }) {
            return Err(Error::Unsupported("distortion needs a two-dimensional adic system".into()));
        }
        if self.spec.depth == 0 {
            return Ok(());
        }
        let c1_before = self.constants.c1;
        let mut c1_needed: f64 = 0.0;
        for n in 1..self.spec.depth {
            let a = self.mult[n];
            let a_next = self.mult[n + 1];
            if a_next < 5 {
                self.manifest.push(ManifestEntry::Skipped { split: n, base: a_next });
                continue;
            }
            let pid = CubeId(vec![0; n - 1]);
            let p = self.cube_lazy(&pid)?;
            let m = (a - 1) / 2;
            let hole_slot = (m + a * m) as u32;
            let keep_slot = (m + 1 + a * m) as u32;
            let h = self.child(&p, hole_slot)?;
            let k = self.child(&p, keep_slot)?;
            let mm = (a_next - 1) / 2;
            let off = ((a_next - 1) / 4).max(1);
            let moved_slot = (mm + off + a_next * mm) as u32;
            let moved = self.child(&h, moved_slot)?;
            let mbox = moved.region.frame;
            let hole_radius = h.radius.min(mbox.min_dist(&h.center));
            let to_slot = (a_next * a_next) as u32;
            {
                let o = self.overrides.entry(h.id.clone()).or_default();
                o.removed_slots.push(moved_slot);
                o.holes.push(mbox);
                o.radius = Some(hole_radius);
            }
            {
                let o = self.overrides.entry(k.id.clone()).or_default();
                o.adopted.push((to_slot, moved.lattice));
                o.extras.push(mbox);
            }
            c1_needed = c1_needed.max(self.c1_requirement(&k.id)?).max(self.c1_requirement(&h.id)?);
            self.update_c2_around(&h.id)?;
            self.manifest.push(ManifestEntry::Relocation {
                split: n,
                parent: pid,
                hole: h.id.clone(),
                keeper: k.id.clone(),
                from: moved.id.clone(),
                to: k.id.child(to_slot),
                hole_radius,
            });
        }
        if let Some(c1) = c1_before {
            self.constants.c1 = Some((3.0 * c1).max(c1_needed));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let cubes = self.eager.as_ref().map(|e| e.levels.iter().flatten().cloned().collect::<Vec<_>>());
        let file = SystemFile {
            space: self.space,
            alpha: self.alpha.clone(),
            constants: self.constants,
            spec: self.spec.clone(),
            manifest: self.manifest.clone(),
            cubes,
        };
        Ok(serde_json::to_value(file)?)
    }

    /// Rebuilds from the stored spec; any cube table is only a cache.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let file: SystemFile = serde_json::from_value(v.clone())?;
        Self::from_spec(file.spec)
    }
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    space: SpaceModel,
    alpha: AlphaSequence,
    constants: Constants,
    spec: SystemSpec,
    #[serde(default)]
    manifest: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cubes: Option<Vec<Cube>>,
}

/// Smallest `C_2` with `r/C_2 · α^{1/d} ≤ r' ≤ C_2 α^d r`.
pub fn axiom_iv_requirement(r_parent: f64, r_child: f64, alpha: f64, d: f64) -> f64 {
    (r_child / (alpha.powf(d) * r_parent)).max(r_parent * alpha.powf(1.0 / d) / r_child)
}

/// Generation gaps `k_n - k_{n-1} = min{g : b^g α_n ≥ 1}` for `n = 1..=depth`.
pub fn subsampled_gaps(base: u64, alpha: &AlphaSequence, depth: usize) -> Result<Vec<u32>> {
    if base < 2 {
        return Err(Error::ParameterOutOfRange(format!("dyadic base {base} must be at least 2")));
    }
    if let SequenceSpec::Constant { value } = alpha.spec() {
        if *value >= 1.0 / base as f64 {
            return Err(Error::ParameterOutOfRange(format!(
                "constant alpha {value} ≥ 1/{base} leaves no subsampling gap"
            )));
        }
    }
    let b = base as f64;
    (1..=depth)
        .map(|n| {
            let a = alpha.value(n)?;
            let mut g = 1u32;
            let mut p = b;
            while p * a < 1.0 {
                p *= b;
                g += 1;
            }
            Ok(g)
        })
        .collect()
}

pub fn build_adic_system(space: SpaceModel, bases: BaseRule, depth: usize, lazy: bool) -> Result<CubeSystem> {
    CubeSystem::from_spec(SystemSpec {
        q: space.q,
        layout: Layout::Adic { bases },
        depth,
        lazy,
        budget: DEFAULT_CUBE_BUDGET,
        edits: Vec::new(),
    })
}

pub fn build_subsampled_dyadic(
    space: SpaceModel,
    base: u64,
    alpha: AlphaSequence,
    depth: usize,
    lazy: bool,
) -> Result<CubeSystem> {
    CubeSystem::from_spec(SystemSpec {
        q: space.q,
        layout: Layout::SubsampledDyadic { base, alpha },
        depth,
        lazy,
        budget: DEFAULT_CUBE_BUDGET,
        edits: Vec::new(),
    })
}

/// Generation indices `k_0 = 0, k_1, …, k_depth` of a subsampled system.
pub fn subsampled_generations(base: u64, alpha: &AlphaSequence, depth: usize) -> Result<Vec<u32>> {
    let mut k = vec![0u32];
    for g in subsampled_gaps(base, alpha, depth)? {
        k.push(k.last().unwrap() + g);
    }
    Ok(k)
}

pub fn designate_center_child(system: &CubeSystem, cube: &CubeId, child: u32) -> Result<CubeSystem> {
    let mut s = system.clone();
    s.push_edit(Edit::DesignateCenterChild { cube: cube.clone(), child })?;
    Ok(s)
}

pub fn build_distorted_carpet(bases: BaseRule, depth: usize, lazy: bool) -> Result<CubeSystem> {
    CubeSystem::from_spec(SystemSpec {
        q: 2,
        layout: Layout::Adic { bases },
        depth,
        lazy,
        budget: DEFAULT_CUBE_BUDGET,
        edits: vec![Edit::DistortCarpet],
    })
}

pub fn pushforward_power(system: &CubeSystem, beta: f64) -> Result<CubeSystem> {
    let mut s = system.clone();
    s.push_edit(Edit::Pushforward { beta })?;
    Ok(s)
}
