//! Dyadic boxes over a working domain, finite box covers and the Hausdorff
//! (semi-)distances between their realized unions.
//!
//! A cover is a sorted, duplicate-free set of same-depth boxes. Box `c` at
//! depth `d` on axis `i` realizes `[grid(i, d, c), grid(i, d, c + 1)]`, where
//! grid points are computed so that a point shared by two depths is the same
//! `f64` at both. Subdivision is therefore exact.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Deepest supported subdivision level (coordinates are stored as `u32`).
pub const MAX_DEPTH: u32 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cover has no boxes")]
    InvalidCover,
    #[error("invalid working domain: {0}")]
    InvalidDomain(String),
    #[error("refinement limit reached: depth {depth} exceeds maximum {max}")]
    RefinementLimit { depth: u32, max: u32 },
    #[error("covers live on different working domains")]
    DomainMismatch,
    #[error("depth mismatch: {0} vs {1}")]
    DepthMismatch(u32, u32),
    #[error("inflation radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("box coordinate {coord} out of range at depth {depth}")]
    CoordOutOfRange { coord: u32, depth: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Distance from `x` to the interval (zero inside).
    pub fn dist(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    /// Gap between two intervals (zero when they touch or overlap).
    pub fn gap(&self, other: &Interval) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Metric used on the phase space. Sup-metric balls are boxes, so inflation
/// of a cover is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Sup,
    Euclidean,
}

/// Sup-metric gap between two boxes given as interval vectors.
pub fn box_gap(a: &[Interval], b: &[Interval]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.gap(y)).fold(0.0, f64::max)
}

/// The compact working box `X = [lo, hi]` that all covers subdivide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl WorkingDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        let domain = WorkingDomain { lo, hi };
        domain.validate()?;
        Ok(domain)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.lo.is_empty() {
            return Err(GeometryError::InvalidDomain("dimension must be positive".into()));
        }
        if self.lo.len() != self.hi.len() {
            return Err(GeometryError::InvalidDomain(format!(
                "lo has {} entries, hi has {}",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(GeometryError::InvalidDomain(format!("axis {i}: need finite lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> Vec<Interval> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| Interval::new(l, h)).collect()
    }

    /// Grid point `k` of axis `axis` at `depth`; `k = 2^depth` is exactly `hi`.
    pub fn grid(&self, axis: usize, depth: u32, k: u64) -> f64 {
        let n = 1u64 << depth;
        if k >= n {
            return self.hi[axis];
        }
        let lo = self.lo[axis];
        lo + (self.hi[axis] - lo) * (k as f64 / n as f64)
    }

    pub fn box_width(&self, axis: usize, depth: u32) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (1u64 << depth) as f64
    }

    /// Largest box side at `depth` (the sup-metric box diameter).
    pub fn max_box_width(&self, depth: u32) -> f64 {
        (0..self.dimension()).map(|i| self.box_width(i, depth)).fold(0.0, f64::max)
    }

    /// Indices of boxes whose closed realization meets `[a, b]`.
    pub fn closed_range(&self, axis: usize, depth: u32, a: f64, b: f64) -> Option<(u32, u32)> {
        let n = 1u64 << depth;
        if b < self.lo[axis] || a > self.hi[axis] || a > b {
            return None;
        }
        let w = self.box_width(axis, depth);
        // first k with grid(k + 1) >= a
        let mut k0 = (((a - self.lo[axis]) / w).floor().max(0.0) as u64).min(n - 1);
        while k0 > 0 && self.grid(axis, depth, k0) >= a {
            k0 -= 1;
        }
        while k0 + 1 < n && self.grid(axis, depth, k0 + 1) < a {
            k0 += 1;
        }
        // last k with grid(k) <= b
        let mut k1 = (((b - self.lo[axis]) / w).floor().max(0.0) as u64).min(n - 1);
        while k1 + 1 < n && self.grid(axis, depth, k1 + 1) <= b {
            k1 += 1;
        }
        while k1 > 0 && self.grid(axis, depth, k1) > b {
            k1 -= 1;
        }
        (k0 <= k1).then_some((k0 as u32, k1 as u32))
    }

    /// Indices of the minimal set of boxes whose union contains `[a, b]`
    /// (clipped to the domain): boxes whose interior meets the interval, or a
    /// single box for a degenerate interval.
    pub fn minimal_range(&self, axis: usize, depth: u32, a: f64, b: f64) -> Option<(u32, u32)> {
        let (mut k0, mut k1) = self.closed_range(axis, depth, a, b)?;
        let a = a.max(self.lo[axis]);
        let b = b.min(self.hi[axis]);
        if a == b {
            // a grid point shared by two boxes: keep the upper one unless at hi
            if k0 < k1 {
                k0 = k1;
            }
            return Some((k0, k0));
        }
        if k0 < k1 && self.grid(axis, depth, k0 as u64 + 1) <= a {
            k0 += 1;
        }
        if k1 > k0 && self.grid(axis, depth, k1 as u64) >= b {
            k1 -= 1;
        }
        Some((k0, k1))
    }
}

/// A single dyadic box.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicBox {
    pub depth: u32,
    pub coords: Vec<u32>,
}

impl DyadicBox {
    pub fn new(domain: &WorkingDomain, depth: u32, coords: Vec<u32>) -> Result<Self, GeometryError> {
        check_coords(domain, depth, &coords)?;
        Ok(DyadicBox { depth, coords })
    }

    pub fn realize(&self, domain: &WorkingDomain) -> Vec<Interval> {
        realize(domain, self.depth, &self.coords)
    }
}

fn check_coords(domain: &WorkingDomain, depth: u32, coords: &[u32]) -> Result<(), GeometryError> {
    if depth > MAX_DEPTH {
        return Err(GeometryError::RefinementLimit { depth, max: MAX_DEPTH });
    }
    if coords.len() != domain.dimension() {
        return Err(GeometryError::DimensionMismatch { expected: domain.dimension(), got: coords.len() });
    }
    let n = 1u64 << depth;
    if let Some(&c) = coords.iter().find(|&&c| c as u64 >= n) {
        return Err(GeometryError::CoordOutOfRange { coord: c, depth });
    }
    Ok(())
}

fn realize(domain: &WorkingDomain, depth: u32, coords: &[u32]) -> Vec<Interval> {
    coords
        .iter()
        .enumerate()
        .map(|(axis, &c)| Interval::new(domain.grid(axis, depth, c as u64), domain.grid(axis, depth, c as u64 + 1)))
        .collect()
}

/// A nonempty set of same-depth dyadic boxes in canonical (lexicographic)
/// order. Coordinates are stored flat with stride `dimension`.
#[derive(Clone)]
pub struct BoxCover {
    domain: Arc<WorkingDomain>,
    depth: u32,
    coords: Vec<u32>,
}

impl fmt::Debug for BoxCover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoxCover")
            .field("depth", &self.depth)
            .field("len", &self.len())
            .field("hull", &self.hull())
            .finish()
    }
}

impl PartialEq for BoxCover {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth
            && self.coords == other.coords
            && (Arc::ptr_eq(&self.domain, &other.domain) || self.domain == other.domain)
    }
}

impl BoxCover {
    /// Builds a cover from flat coordinates (stride = domain dimension),
    /// sorting and deduplicating them.
    pub fn from_flat(domain: Arc<WorkingDomain>, depth: u32, flat: Vec<u32>) -> Result<Self, GeometryError> {
        let dim = domain.dimension();
        if flat.is_empty() {
            return Err(GeometryError::InvalidCover);
        }
        if flat.len() % dim != 0 {
            return Err(GeometryError::DimensionMismatch { expected: dim, got: flat.len() % dim });
        }
        for chunk in flat.chunks(dim) {
            check_coords(&domain, depth, chunk)?;
        }
        Ok(Self::from_flat_unchecked(domain, depth, flat))
    }

    pub(crate) fn from_flat_unchecked(domain: Arc<WorkingDomain>, depth: u32, mut flat: Vec<u32>) -> Self {
        let dim = domain.dimension();
        if dim == 1 {
            flat.sort_unstable();
            flat.dedup();
        } else {
            let is_sorted = flat.chunks(dim).zip(flat.chunks(dim).skip(1)).all(|(a, b)| a < b);
            if !is_sorted {
                let mut order: Vec<usize> = (0..flat.len() / dim).collect();
                order.sort_unstable_by(|&i, &j| flat[i * dim..(i + 1) * dim].cmp(&flat[j * dim..(j + 1) * dim]));
                order.dedup_by(|i, j| flat[*i * dim..(*i + 1) * dim] == flat[*j * dim..(*j + 1) * dim]);
                let mut sorted = Vec::with_capacity(order.len() * dim);
                for i in order {
                    sorted.extend_from_slice(&flat[i * dim..(i + 1) * dim]);
                }
                flat = sorted;
            }
        }
        BoxCover { domain, depth, coords: flat }
    }

    pub fn from_boxes<I>(domain: Arc<WorkingDomain>, depth: u32, boxes: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator,
        I::Item: AsRef<[u32]>,
    {
        let mut flat = Vec::new();
        for b in boxes {
            flat.extend_from_slice(b.as_ref());
        }
        Self::from_flat(domain, depth, flat)
    }

    /// Every box of the domain at `depth`.
    pub fn full(domain: Arc<WorkingDomain>, depth: u32) -> Result<Self, GeometryError> {
        if depth > MAX_DEPTH {
            return Err(GeometryError::RefinementLimit { depth, max: MAX_DEPTH });
        }
        let dim = domain.dimension();
        let n = 1u64 << depth;
        let total = n.checked_pow(dim as u32).filter(|&t| t <= u32::MAX as u64);
        let Some(total) = total else {
            return Err(GeometryError::RefinementLimit { depth, max: depth.saturating_sub(1) });
        };
        let mut flat = Vec::with_capacity(total as usize * dim);
        let mut idx = vec![0u32; dim];
        for _ in 0..total {
            flat.extend_from_slice(&idx);
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if (idx[axis] as u64) < n {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(BoxCover { domain, depth, coords: flat })
    }

    /// Minimal cover at `depth` of the region given as an interval vector
    /// (clipped to the domain). `None` if the region misses the domain.
    pub fn of_region(domain: Arc<WorkingDomain>, depth: u32, region: &[Interval]) -> Option<Self> {
        let mut flat = Vec::new();
        push_region(&domain, depth, region, &mut flat)?;
        Some(Self::from_flat_unchecked(domain, depth, flat))
    }

    /// Minimal cover at `depth` of a union of regions.
    pub fn of_regions<'a, I>(domain: Arc<WorkingDomain>, depth: u32, regions: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a [Interval]>,
    {
        let mut flat = Vec::new();
        for r in regions {
            push_region(&domain, depth, r, &mut flat);
        }
        if flat.is_empty() {
            return None;
        }
        Some(Self::from_flat_unchecked(domain, depth, flat))
    }

    pub fn domain(&self) -> &WorkingDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<WorkingDomain> {
        &self.domain
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension()
    }

    /// Always false: covers are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[u32] {
        let d = self.dimension();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn flat_coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.coords.chunks(self.dimension())
    }

    pub fn dyadic_box(&self, i: usize) -> DyadicBox {
        DyadicBox { depth: self.depth, coords: self.coords(i).to_vec() }
    }

    pub fn realize(&self, i: usize) -> Vec<Interval> {
        realize(&self.domain, self.depth, self.coords(i))
    }

    /// Sup-metric box diameter at this cover's depth.
    pub fn box_width(&self) -> f64 {
        self.domain.max_box_width(self.depth)
    }

    /// Position of a box in canonical order.
    pub fn index_of(&self, coords: &[u32]) -> Option<usize> {
        let d = self.dimension();
        if d == 1 {
            return self.coords.binary_search(&coords[0]).ok();
        }
        let n = self.len();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.coords(mid).cmp(coords) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn contains_box(&self, coords: &[u32]) -> bool {
        self.index_of(coords).is_some()
    }

    /// Bounding box of the realized union.
    pub fn hull(&self) -> Vec<Interval> {
        let d = self.dimension();
        let mut lo = vec![u32::MAX; d];
        let mut hi = vec![0u32; d];
        for c in self.iter() {
            for axis in 0..d {
                lo[axis] = lo[axis].min(c[axis]);
                hi[axis] = hi[axis].max(c[axis]);
            }
        }
        (0..d)
            .map(|axis| {
                Interval::new(
                    self.domain.grid(axis, self.depth, lo[axis] as u64),
                    self.domain.grid(axis, self.depth, hi[axis] as u64 + 1),
                )
            })
            .collect()
    }

    fn same_domain(&self, other: &BoxCover) -> Result<(), GeometryError> {
        if Arc::ptr_eq(&self.domain, &other.domain) || self.domain == other.domain {
            Ok(())
        } else {
            Err(GeometryError::DomainMismatch)
        }
    }

    fn same_depth(&self, other: &BoxCover) -> Result<(), GeometryError> {
        self.same_domain(other)?;
        if self.depth != other.depth {
            return Err(GeometryError::DepthMismatch(self.depth, other.depth));
        }
        Ok(())
    }

    /// Splits every box into its `2^dimension` children.
    pub fn subdivide(&self) -> Result<BoxCover, GeometryError> {
        let depth = self.depth + 1;
        if depth > MAX_DEPTH {
            return Err(GeometryError::RefinementLimit { depth, max: MAX_DEPTH });
        }
        let d = self.dimension();
        let mut flat = Vec::with_capacity(self.coords.len() << d);
        for c in self.iter() {
            for mask in 0..(1u32 << d) {
                for (axis, &ci) in c.iter().enumerate() {
                    flat.push(2 * ci + ((mask >> (d - 1 - axis)) & 1));
                }
            }
        }
        // children of sorted parents, emitted in mask order, are already sorted
        Ok(BoxCover { domain: self.domain.clone(), depth, coords: flat })
    }

    /// Subdivides until reaching `depth` (no-op if already there).
    pub fn refine_to(&self, depth: u32) -> Result<BoxCover, GeometryError> {
        let mut cover = self.clone();
        while cover.depth < depth {
            cover = cover.subdivide()?;
        }
        Ok(cover)
    }

    /// Parent boxes at a coarser `depth`.
    pub fn coarsen(&self, depth: u32) -> BoxCover {
        if depth >= self.depth {
            return self.clone();
        }
        let shift = self.depth - depth;
        let flat = self.coords.iter().map(|&c| c >> shift).collect();
        Self::from_flat_unchecked(self.domain.clone(), depth, flat)
    }

    /// Boxes present in both covers, or `None` if they share none.
    pub fn overlap(&self, other: &BoxCover) -> Result<Option<BoxCover>, GeometryError> {
        self.same_depth(other)?;
        let d = self.dimension();
        let mut flat = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            match self.coords(i).cmp(other.coords(j)) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    flat.extend_from_slice(self.coords(i));
                    i += 1;
                    j += 1;
                }
            }
        }
        debug_assert_eq!(flat.len() % d, 0);
        Ok((!flat.is_empty()).then(|| BoxCover { domain: self.domain.clone(), depth: self.depth, coords: flat }))
    }

    /// Number of shared boxes.
    pub fn overlap_count(&self, other: &BoxCover) -> Result<usize, GeometryError> {
        Ok(self.overlap(other)?.map_or(0, |c| c.len()))
    }

    pub fn union(&self, other: &BoxCover) -> Result<BoxCover, GeometryError> {
        self.same_depth(other)?;
        let mut flat = self.coords.clone();
        flat.extend_from_slice(&other.coords);
        Ok(Self::from_flat_unchecked(self.domain.clone(), self.depth, flat))
    }

    /// Boxes of `self` not in `other`; `None` if nothing remains.
    pub fn difference(&self, other: &BoxCover) -> Result<Option<BoxCover>, GeometryError> {
        self.same_depth(other)?;
        let mut flat = Vec::new();
        for c in self.iter() {
            if !other.contains_box(c) {
                flat.extend_from_slice(c);
            }
        }
        Ok((!flat.is_empty()).then(|| BoxCover { domain: self.domain.clone(), depth: self.depth, coords: flat }))
    }

    /// True when every box of `self` is in `other` (same depth).
    pub fn is_subset_of(&self, other: &BoxCover) -> Result<bool, GeometryError> {
        self.same_depth(other)?;
        Ok(self.iter().all(|c| other.contains_box(c)))
    }

    /// Adds all boxes within `rings` index steps (face or corner neighbours).
    pub fn grow_rings(&self, rings: u32) -> BoxCover {
        if rings == 0 {
            return self.clone();
        }
        let d = self.dimension();
        let n = 1i64 << self.depth;
        let r = rings as i64;
        let mut flat = Vec::with_capacity(self.coords.len() * (2 * rings as usize + 1).pow(d as u32));
        let mut offset = vec![-r; d];
        for c in self.iter() {
            offset.iter_mut().for_each(|o| *o = -r);
            'outer: loop {
                let inside = c.iter().zip(&offset).all(|(&ci, &o)| (0..n).contains(&(ci as i64 + o)));
                if inside {
                    flat.extend(c.iter().zip(&offset).map(|(&ci, &o)| (ci as i64 + o) as u32));
                }
                for axis in (0..d).rev() {
                    offset[axis] += 1;
                    if offset[axis] <= r {
                        continue 'outer;
                    }
                    offset[axis] = -r;
                }
                break;
            }
        }
        Self::from_flat_unchecked(self.domain.clone(), self.depth, flat)
    }

    /// Minimal same-depth cover of the closed `radius`-neighbourhood of the
    /// realized union, intersected with the domain.
    pub fn inflate(&self, radius: f64, metric: Metric) -> Result<BoxCover, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        let d = self.dimension();
        let n = 1u64 << self.depth;
        let dom = &*self.domain;
        let depth = self.depth;
        let mut flat = Vec::new();
        let mut ranges = vec![(0u32, 0u32); d];
        for c in self.iter() {
            for axis in 0..d {
                let ci = c[axis] as u64;
                let lo_edge = dom.grid(axis, depth, ci);
                let hi_edge = dom.grid(axis, depth, ci + 1);
                // a box strictly below: gap = lo_edge - grid(k + 1)
                let mut k0 = ci;
                while k0 > 0 && lo_edge - dom.grid(axis, depth, k0) < radius {
                    k0 -= 1;
                }
                let mut k1 = ci;
                while k1 + 1 < n && dom.grid(axis, depth, k1 + 1) - hi_edge < radius {
                    k1 += 1;
                }
                ranges[axis] = (k0 as u32, k1 as u32);
            }
            for_each_in_ranges(&ranges, |idx| {
                let keep = match metric {
                    Metric::Sup => true,
                    Metric::Euclidean => {
                        let sq: f64 = (0..d)
                            .map(|axis| {
                                let g = axis_gap(dom, depth, axis, c[axis], idx[axis]);
                                g * g
                            })
                            .sum();
                        sq < radius * radius
                    }
                };
                if keep {
                    flat.extend_from_slice(idx);
                }
            });
        }
        Ok(Self::from_flat_unchecked(self.domain.clone(), self.depth, flat))
    }

    /// Maximal runs of consecutive boxes as real intervals (1-D covers only).
    pub fn intervals(&self) -> Vec<Interval> {
        assert_eq!(self.dimension(), 1, "intervals() needs a 1-D cover");
        let mut out = Vec::new();
        let mut run: Option<(u32, u32)> = None;
        for &c in &self.coords {
            run = match run {
                Some((a, b)) if c == b + 1 => Some((a, c)),
                Some((a, b)) => {
                    out.push(self.run_interval(a, b));
                    Some((c, c))
                }
                None => Some((c, c)),
            };
        }
        if let Some((a, b)) = run {
            out.push(self.run_interval(a, b));
        }
        out
    }

    fn run_interval(&self, a: u32, b: u32) -> Interval {
        Interval::new(self.domain.grid(0, self.depth, a as u64), self.domain.grid(0, self.depth, b as u64 + 1))
    }
}

fn axis_gap(dom: &WorkingDomain, depth: u32, axis: usize, c: u32, k: u32) -> f64 {
    use std::cmp::Ordering::*;
    match k.cmp(&c) {
        Equal => 0.0,
        Less => dom.grid(axis, depth, c as u64) - dom.grid(axis, depth, k as u64 + 1),
        Greater => dom.grid(axis, depth, k as u64) - dom.grid(axis, depth, c as u64 + 1),
    }
}

fn push_region(domain: &WorkingDomain, depth: u32, region: &[Interval], flat: &mut Vec<u32>) -> Option<()> {
    let d = domain.dimension();
    assert_eq!(region.len(), d, "region dimension");
    let ranges: Vec<(u32, u32)> = region
        .iter()
        .enumerate()
        .map(|(axis, iv)| domain.minimal_range(axis, depth, iv.lo, iv.hi))
        .collect::<Option<_>>()?;
    for_each_in_ranges(&ranges, |idx| flat.extend_from_slice(idx));
    Some(())
}

/// Calls `f` for every coordinate vector in the product of inclusive ranges,
/// in lexicographic order.
pub(crate) fn for_each_in_ranges(ranges: &[(u32, u32)], mut f: impl FnMut(&[u32])) {
    let d = ranges.len();
    let mut idx: Vec<u32> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if idx[axis] < ranges[axis].1 {
                idx[axis] += 1;
                break;
            }
            idx[axis] = ranges[axis].0;
        }
    }
}

/// Hausdorff semi-distance `sup_{x in a} dist(x, b)` in the sup metric,
/// computed exactly from box geometry.
pub fn semi_dist(a: &BoxCover, b: &BoxCover) -> Result<f64, GeometryError> {
    a.same_domain(b)?;
    if a.dimension() == 1 {
        return Ok(semi_dist_intervals(&a.intervals(), &b.intervals()));
    }
    // The distance function to a union of grid boxes is piecewise linear on
    // an arrangement of hyperplanes `±x_i ± x_j = c` with c on the grid, so
    // its maximum over a grid box sits on the half-grid.
    let depth = a.depth.max(b.depth);
    let fine = a.refine_to(depth)?;
    let b_boxes: Vec<Vec<Interval>> = (0..b.len()).map(|j| b.realize(j)).collect();
    let d = a.dimension();
    let mut worst = 0.0f64;
    let mut point = vec![0.0; d];
    for i in 0..fine.len() {
        let bx = fine.realize(i);
        let ranges = vec![(0u32, 2u32); d];
        for_each_in_ranges(&ranges, |sel| {
            for axis in 0..d {
                let iv = bx[axis];
                point[axis] = match sel[axis] {
                    0 => iv.lo,
                    1 => 0.5 * (iv.lo + iv.hi),
                    _ => iv.hi,
                };
            }
            let dist = b_boxes.iter().map(|bb| point_box_dist(&point, bb)).fold(f64::INFINITY, f64::min);
            worst = worst.max(dist);
        });
    }
    Ok(worst)
}

fn point_box_dist(p: &[f64], b: &[Interval]) -> f64 {
    p.iter().zip(b).map(|(&x, iv)| iv.dist(x)).fold(0.0, f64::max)
}

/// Exact semi-distance between two finite unions of closed intervals.
/// Both inputs must be sorted and disjoint.
pub fn semi_dist_intervals(a: &[Interval], b: &[Interval]) -> f64 {
    let dist = |x: f64| -> f64 {
        // b is sorted; locate the first interval with hi >= x
        let k = b.partition_point(|iv| iv.hi < x);
        let right = b.get(k).map_or(f64::INFINITY, |iv| iv.dist(x));
        let left = if k > 0 { b[k - 1].dist(x) } else { f64::INFINITY };
        right.min(left)
    };
    let mut worst = 0.0f64;
    for iv in a {
        worst = worst.max(dist(iv.lo)).max(dist(iv.hi));
        // interior peaks of the distance function sit at midpoints of gaps
        let first = b.partition_point(|g| g.hi < iv.lo);
        for k in first.saturating_sub(1)..b.len().saturating_sub(1) {
            let (g0, g1) = (b[k].hi, b[k + 1].lo);
            if g0 > iv.hi {
                break;
            }
            let mid = (0.5 * (g0 + g1)).clamp(iv.lo, iv.hi);
            worst = worst.max(dist(mid));
        }
    }
    worst
}

/// Hausdorff distance `max(semi_dist(a, b), semi_dist(b, a))`.
pub fn hausdorff_dist(a: &BoxCover, b: &BoxCover) -> Result<f64, GeometryError> {
    Ok(semi_dist(a, b)?.max(semi_dist(b, a)?))
}

/// Smallest sup-metric distance between a box of `a` and a box of `b`
/// (zero when they share or touch boxes).
pub fn cover_gap(a: &BoxCover, b: &BoxCover) -> Result<f64, GeometryError> {
    a.same_domain(b)?;
    if a.dimension() == 1 {
        let (ia, ib) = (a.intervals(), b.intervals());
        let mut best = f64::INFINITY;
        let (mut i, mut j) = (0, 0);
        while i < ia.len() && j < ib.len() {
            best = best.min(ia[i].gap(&ib[j]));
            if ia[i].hi < ib[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        return Ok(best);
    }
    let bb: Vec<Vec<Interval>> = (0..b.len()).map(|j| b.realize(j)).collect();
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let ab = a.realize(i);
        for other in &bb {
            best = best.min(box_gap(&ab, other));
        }
    }
    Ok(best)
}

#[derive(Serialize, Deserialize)]
struct CoverJson {
    domain: WorkingDomain,
    depth: u32,
    boxes: Vec<Vec<u32>>,
}

impl Serialize for BoxCover {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CoverJson {
            domain: (*self.domain).clone(),
            depth: self.depth,
            boxes: self.iter().map(|c| c.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoxCover {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = CoverJson::deserialize(d)?;
        raw.domain.validate().map_err(serde::de::Error::custom)?;
        BoxCover::from_boxes(Arc::new(raw.domain), raw.depth, raw.boxes).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Arc<WorkingDomain> {
        Arc::new(WorkingDomain::interval(0.0, 1.0).unwrap())
    }

    fn cover1(domain: &Arc<WorkingDomain>, depth: u32, boxes: &[u32]) -> BoxCover {
        BoxCover::from_flat(domain.clone(), depth, boxes.to_vec()).unwrap()
    }

    #[test]
    fn subdivide_unit_interval() {
        let d = unit();
        let c = cover1(&d, 0, &[0]).subdivide().unwrap();
        assert_eq!(c.depth(), 1);
        assert_eq!(c.intervals(), vec![Interval::new(0.0, 1.0)]);
        assert_eq!(c.realize(0), vec![Interval::new(0.0, 0.5)]);
        assert_eq!(c.realize(1), vec![Interval::new(0.5, 1.0)]);
    }

    #[test]
    fn subdivide_two_dimensional_box() {
        let d = Arc::new(WorkingDomain::new(vec![-1.0, 0.0], vec![2.0, 0.3]).unwrap());
        let parent = BoxCover::from_boxes(d.clone(), 3, [[5u32, 2]]).unwrap();
        let kids = parent.subdivide().unwrap();
        assert_eq!(kids.depth(), 4);
        assert_eq!(kids.len(), 4);
        let p = parent.realize(0);
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for i in 0..kids.len() {
            for (axis, iv) in kids.realize(i).iter().enumerate() {
                lo[axis] = lo[axis].min(iv.lo);
                hi[axis] = hi[axis].max(iv.hi);
            }
        }
        for axis in 0..2 {
            assert_eq!(lo[axis], p[axis].lo);
            assert_eq!(hi[axis], p[axis].hi);
        }
        assert_eq!(kids.coarsen(3), parent);
    }

    #[test]
    fn empty_cover_rejected() {
        assert_eq!(BoxCover::from_flat(unit(), 2, vec![]).unwrap_err(), GeometryError::InvalidCover);
    }

    #[test]
    fn subdivide_past_max_depth() {
        let c = BoxCover::from_flat(unit(), MAX_DEPTH, vec![7]).unwrap();
        assert!(matches!(c.subdivide(), Err(GeometryError::RefinementLimit { .. })));
    }

    #[test]
    fn inflate_example() {
        let d = unit();
        let c = cover1(&d, 3, &[4]); // [0.5, 0.625]
        let grown = c.inflate(0.2, Metric::Sup).unwrap();
        assert_eq!(grown.flat_coords(), &[2, 3, 4, 5, 6]);
        assert_eq!(grown.intervals(), vec![Interval::new(0.25, 0.875)]);
    }

    #[test]
    fn inflate_small_radius_adds_one_ring() {
        let d = unit();
        let c = cover1(&d, 4, &[3, 4, 9]);
        let grown = c.inflate(0.01, Metric::Sup).unwrap();
        assert!(c.is_subset_of(&grown).unwrap());
        assert!(grown.is_subset_of(&c.grow_rings(1)).unwrap());
    }

    #[test]
    fn inflate_clips_at_domain_edge() {
        let d = unit();
        let c = cover1(&d, 3, &[0]);
        let grown = c.inflate(0.3, Metric::Sup).unwrap();
        assert_eq!(grown.flat_coords(), &[0, 1, 2, 3]);
    }

    #[test]
    fn inflate_euclidean_drops_corners() {
        let d = Arc::new(WorkingDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let c = BoxCover::from_boxes(d.clone(), 3, [[4u32, 4]]).unwrap();
        let sup = c.inflate(0.15, Metric::Sup).unwrap();
        let euc = c.inflate(0.15, Metric::Euclidean).unwrap();
        assert_eq!(sup.len(), 25);
        // corner boxes at offset (±2, ±2) have gap (0.125, 0.125): norm 0.177 > 0.15
        assert_eq!(euc.len(), 21);
        assert!(euc.is_subset_of(&sup).unwrap());
    }

    #[test]
    fn inflate_rejects_bad_radius() {
        let c = cover1(&unit(), 2, &[1]);
        assert!(c.inflate(0.0, Metric::Sup).is_err());
        assert!(c.inflate(f64::NAN, Metric::Sup).is_err());
    }

    #[test]
    fn overlap_examples() {
        let d = unit();
        let left = cover1(&d, 1, &[0]);
        let right = cover1(&d, 1, &[1]);
        let both = cover1(&d, 1, &[0, 1]);
        assert_eq!(left.overlap(&right).unwrap(), None);
        assert_eq!(both.overlap(&both).unwrap(), Some(both.clone()));
        assert_eq!(both.overlap(&right).unwrap(), Some(right.clone()));
        let deeper = cover1(&d, 2, &[0]);
        assert_eq!(left.overlap(&deeper).unwrap_err(), GeometryError::DepthMismatch(1, 2));
    }

    #[test]
    fn domain_mismatch() {
        let a = cover1(&unit(), 1, &[0]);
        let other = Arc::new(WorkingDomain::interval(0.0, 2.0).unwrap());
        let b = cover1(&other, 1, &[0]);
        assert_eq!(semi_dist(&a, &b).unwrap_err(), GeometryError::DomainMismatch);
        assert_eq!(hausdorff_dist(&a, &b).unwrap_err(), GeometryError::DomainMismatch);
    }

    #[test]
    fn minimal_range_handles_grid_points() {
        let d = unit();
        assert_eq!(d.minimal_range(0, 3, 0.25, 0.5), Some((2, 3)));
        assert_eq!(d.closed_range(0, 3, 0.25, 0.5), Some((1, 4)));
        assert_eq!(d.minimal_range(0, 3, 0.5, 0.5), Some((4, 4)));
        assert_eq!(d.minimal_range(0, 3, 1.0, 1.0), Some((7, 7)));
        assert_eq!(d.minimal_range(0, 3, -2.0, -1.0), None);
        assert_eq!(d.minimal_range(0, 3, -2.0, 0.1), Some((0, 0)));
    }

    #[test]
    fn grid_points_agree_across_depths() {
        let d = WorkingDomain::interval(-0.1, 0.3).unwrap();
        for depth in 0..12 {
            for k in 0..=(1u64 << depth) {
                assert_eq!(d.grid(0, depth, k), d.grid(0, depth + 1, 2 * k));
            }
        }
        assert_eq!(d.grid(0, 5, 32), 0.3);
    }

    #[test]
    fn json_round_trip() {
        let d = Arc::new(WorkingDomain::new(vec![-4.0, 0.1], vec![4.0, 0.7]).unwrap());
        let c = BoxCover::from_boxes(d, 5, [[3u32, 9], [1, 2], [3, 1]]).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"boxes\":[[1,2],[3,1],[3,9]]"), "{text}");
        let back: BoxCover = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn json_rejects_empty_and_out_of_range() {
        let empty = r#"{"domain":{"lo":[0],"hi":[1]},"depth":2,"boxes":[]}"#;
        assert!(serde_json::from_str::<BoxCover>(empty).is_err());
        let bad = r#"{"domain":{"lo":[0],"hi":[1]},"depth":2,"boxes":[[4]]}"#;
        assert!(serde_json::from_str::<BoxCover>(bad).is_err());
    }
}
