//! Half-open boxes in dimension one or two, open balls, and the exact
//! predicates and volumes relating them.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    c: [f64; 2],
    dim: u8,
}

impl Point {
    pub fn new1(x: f64) -> Self {
        Self { c: [x, 0.0], dim: 1 }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self { c: [x, y], dim: 2 }
    }

    pub fn from_slice(coords: &[f64]) -> Option<Self> {
        match coords {
            [x] => Some(Self::new1(*x)),
            [x, y] => Some(Self::new2(*x, *y)),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.c[axis]
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        match self.dim {
            1 => (self.c[0] - other.c[0]).abs(),
            _ => (self.c[0] - other.c[0]).hypot(self.c[1] - other.c[1]),
        }
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::from_slice(&v).ok_or_else(|| serde::de::Error::custom("points have one or two coordinates"))
    }
}

/// Axis-aligned half-open box `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    dim: u8,
}

impl Aabb {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo: [lo, 0.0], hi: [hi, 1.0], dim: 1 }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi, dim: 2 }
    }

    pub fn unit(dim: usize) -> Self {
        match dim {
            1 => Self::interval(0.0, 1.0),
            _ => Self::rect([0.0, 0.0], [1.0, 1.0]),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        match self.dim {
            1 => self.side(0),
            _ => self.side(0) * self.side(1),
        }
    }

    pub fn center(&self) -> Point {
        let mid = |a: usize| 0.5 * (self.lo[a] + self.hi[a]);
        match self.dim {
            1 => Point::new1(mid(0)),
            _ => Point::new2(mid(0), mid(1)),
        }
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        (0..self.dim()).all(|a| self.lo[a] <= p.c[a] && p.c[a] < self.hi[a])
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..self.dim() {
            out.lo[a] = self.lo[a].max(other.lo[a]);
            out.hi[a] = self.hi[a].min(other.hi[a]).max(out.lo[a]);
        }
        out
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|a| self.lo[a] < other.hi[a] && other.lo[a] < self.hi[a])
    }

    pub fn inside(&self, other: &Aabb) -> bool {
        (0..self.dim()).all(|a| other.lo[a] <= self.lo[a] && self.hi[a] <= other.hi[a])
    }

    /// Distance from `p` to the closure of the box.
    pub fn min_dist(&self, p: &Point) -> f64 {
        let gap = |a: usize| (self.lo[a] - p.c[a]).max(p.c[a] - self.hi[a]).max(0.0);
        match self.dim {
            1 => gap(0),
            _ => gap(0).hypot(gap(1)),
        }
    }

    /// Largest distance from `p` to a point of the closure.
    pub fn max_dist(&self, p: &Point) -> f64 {
        let far = |a: usize| (p.c[a] - self.lo[a]).abs().max((self.hi[a] - p.c[a]).abs());
        match self.dim {
            1 => far(0),
            _ => far(0).hypot(far(1)),
        }
    }

    /// Closure of the box inside the open ball `B(c, r)`.
    pub fn inside_ball(&self, c: &Point, r: f64) -> bool {
        self.max_dist(c) < r
    }

    /// The box meets the open ball `B(c, r)`.
    pub fn meets_ball(&self, c: &Point, r: f64) -> bool {
        !self.is_empty() && self.min_dist(c) < r
    }

    /// Volume of `self ∩ B(c, r)`, in closed form.
    pub fn ball_intersection_volume(&self, c: &Point, r: f64) -> f64 {
        if r <= 0.0 || !self.meets_ball(c, r) {
            return 0.0;
        }
        if self.inside_ball(c, r) {
            return self.volume();
        }
        match self.dim {
            1 => {
                let lo = self.lo[0].max(c.c[0] - r);
                let hi = self.hi[0].min(c.c[0] + r);
                (hi - lo).max(0.0)
            }
            _ => {
                let x0 = self.lo[0] - c.c[0];
                let x1 = self.hi[0] - c.c[0];
                let y0 = self.lo[1] - c.c[1];
                let y1 = self.hi[1] - c.c[1];
                let v = quadrant_area(x1, y1, r) - quadrant_area(x0, y1, r) - quadrant_area(x1, y0, r)
                    + quadrant_area(x0, y0, r);
                v.clamp(0.0, self.volume())
            }
        }
    }

    /// Splits `self \ hole` into at most four disjoint boxes.
    pub fn minus(&self, hole: &Aabb) -> Vec<Aabb> {
        if !self.overlaps(hole) {
            return vec![*self];
        }
        let cut = self.intersection(hole);
        let mut out = Vec::new();
        let mut push = |b: Aabb| {
            if !b.is_empty() {
                out.push(b)
            }
        };
        match self.dim {
            1 => {
                push(Aabb::interval(self.lo[0], cut.lo[0]));
                push(Aabb::interval(cut.hi[0], self.hi[0]));
            }
            _ => {
                push(Aabb::rect(self.lo, [self.hi[0], cut.lo[1]]));
                push(Aabb::rect([self.lo[0], cut.hi[1]], self.hi));
                push(Aabb::rect([self.lo[0], cut.lo[1]], [cut.lo[0], cut.hi[1]]));
                push(Aabb::rect([cut.hi[0], cut.lo[1]], [self.hi[0], cut.hi[1]]));
            }
        }
        out
    }
}

impl Serialize for Aabb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let d = self.dim();
        let v: Vec<[f64; 2]> = (0..d).map(|a| [self.lo[a], self.hi[a]]).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Aabb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        match v.as_slice() {
            [x] => Ok(Aabb::interval(x[0], x[1])),
            [x, y] => Ok(Aabb::rect([x[0], y[0]], [x[1], y[1]])),
            _ => Err(serde::de::Error::custom("boxes have one or two axes")),
        }
    }
}

/// Signed area of `B(0, r) ∩ ([0, x] × [0, y])`, with the sign of `x·y`.
fn quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    let sign = x.signum() * y.signum();
    let (x, y) = (x.abs().min(r), y.abs().min(r));
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    if x * x + y * y <= r * r {
        return sign * x * y;
    }
    // Columns u < u_star have full height y; beyond it the arc bounds the region.
    let u_star = (r * r - y * y).max(0.0).sqrt();
    let arc = |u: f64| 0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin());
    sign * (u_star * y + arc(x) - arc(u_star))
}

/// A cube region: a frame box with optional holes and adopted extra boxes.
///
/// Plain cubes are a single box. Distorted cubes lose or gain child-sized
/// pieces, which keeps every region a finite disjoint union of boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RegionRepr")]
pub struct Region {
    pub frame: Aabb,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Aabb>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<Aabb>,
    #[serde(skip)]
    pieces: Vec<Aabb>,
}

impl Region {
    pub fn from_box(b: Aabb) -> Self {
        Self { frame: b, holes: Vec::new(), extras: Vec::new(), pieces: vec![b] }
    }

    pub fn with_changes(frame: Aabb, holes: Vec<Aabb>, extras: Vec<Aabb>) -> Self {
        let mut pieces = vec![frame];
        for h in &holes {
            pieces = pieces.iter().flat_map(|p| p.minus(h)).collect();
        }
        pieces.extend(extras.iter().copied());
        Self { frame, holes, extras, pieces }
    }

    pub fn is_plain(&self) -> bool {
        self.holes.is_empty() && self.extras.is_empty()
    }

    pub fn pieces(&self) -> &[Aabb] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn volume(&self) -> f64 {
        crate::sequence::neumaier_sum(self.pieces.iter().map(Aabb::volume))
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.pieces.iter().any(|b| b.contains_point(p))
    }

    pub fn inside_ball(&self, c: &Point, r: f64) -> bool {
        self.pieces.iter().all(|b| b.inside_ball(c, r))
    }

    pub fn meets_ball(&self, c: &Point, r: f64) -> bool {
        self.pieces.iter().any(|b| b.meets_ball(c, r))
    }

    pub fn min_dist(&self, p: &Point) -> f64 {
        self.pieces.iter().map(|b| b.min_dist(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_dist(&self, p: &Point) -> f64 {
        self.pieces.iter().map(|b| b.max_dist(p)).fold(0.0, f64::max)
    }

    pub fn ball_intersection_volume(&self, c: &Point, r: f64) -> f64 {
        self.pieces.iter().map(|b| b.ball_intersection_volume(c, r)).sum()
    }

    /// Bounding box of all pieces.
    pub fn bounds(&self) -> Aabb {
        let mut b = self.pieces[0];
        for p in &self.pieces[1..] {
            for a in 0..b.dim() {
                b.lo[a] = b.lo[a].min(p.lo[a]);
                b.hi[a] = b.hi[a].max(p.hi[a]);
            }
        }
        b
    }

    /// Largest `r` with `B(c, r) ∩ domain ⊆ self`, where `domain` is the
    /// ambient box. Faces of the frame lying on the domain boundary impose no
    /// constraint; the caller caps the result for cubes touching every face.
    pub fn inner_radius(&self, c: &Point, domain: &Aabb) -> f64 {
        if !self.frame.contains_point(c) || self.holes.iter().any(|h| h.contains_point(c)) {
            return self
                .extras
                .iter()
                .filter(|e| e.contains_point(c))
                .map(|e| face_gap(e, c, domain))
                .fold(0.0, f64::max);
        }
        let mut r = face_gap(&self.frame, c, domain);
        for h in &self.holes {
            r = r.min(h.min_dist(c));
        }
        r
    }

    /// Every point of `other` lies in `self`, checked box by box through
    /// volumes of intersections with the disjoint pieces.
    pub fn contains_region(&self, other: &Region) -> bool {
        other.pieces.iter().all(|q| {
            let covered: f64 = self.pieces.iter().map(|p| p.intersection(q).volume()).sum();
            (covered - q.volume()).abs() <= 1e-12 * q.volume().max(f64::MIN_POSITIVE)
        })
    }
}

#[derive(Deserialize)]
struct RegionRepr {
    frame: Aabb,
    #[serde(default)]
    holes: Vec<Aabb>,
    #[serde(default)]
    extras: Vec<Aabb>,
}

impl From<RegionRepr> for Region {
    fn from(r: RegionRepr) -> Self {
        Region::with_changes(r.frame, r.holes, r.extras)
    }
}

fn face_gap(b: &Aabb, c: &Point, domain: &Aabb) -> f64 {
    let mut r = f64::INFINITY;
    for a in 0..b.dim() {
        if b.lo[a] > domain.lo[a] {
            r = r.min(c.coord(a) - b.lo[a]);
        }
        if b.hi[a] < domain.hi[a] {
            r = r.min(b.hi[a] - c.coord(a));
        }
    }
    r.max(0.0)
}
