//! Parameterized set-valued maps `x ↦ F(x)` with outer image enclosures.
//!
//! Built-ins:
//! - `saturating`: `F(x) = B̄_ε(αx/(1+|x|) + β)` on the line,
//! - `merging`: the piecewise map whose two minimal sets collide at `λ = 0`,
//! - `contraction`: `F(x) = B̄_ε(Lx)`,
//! - `piecewise`: user-supplied piecewise-affine maps loaded from JSON.
//!
//! Enclosures are rounded outward by a few ulps so that the transition graph
//! built from them is an outer approximation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Interval, WorkingDomain};

/// Relative slack (per unit of domain width) tolerated when an enclosure
/// pokes out of the working domain by rounding alone.
pub const ABSORB_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported parameter {name} = {value}: {reason}")]
    UnsupportedParameter { name: String, value: f64, reason: String },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("unknown parameter {param} for model {model}")]
    UnknownParameter { model: String, param: String },
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("invalid piecewise map: {0}")]
    InvalidPiecewise(String),
    #[error("dimension mismatch: map has {map}, domain has {domain}")]
    DimensionMismatch { map: usize, domain: usize },
    #[error("image {image:?} leaves the working domain")]
    NotAbsorbing { image: Vec<Interval> },
    #[error("box {0:?} lies outside every piece of the map")]
    EmptyImage(Vec<Interval>),
    #[error("not enough samples to estimate a Lipschitz constant ({0} given, need 2)")]
    InsufficientEvidence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityClass {
    Continuous,
    UpperSemicontinuous,
}

/// Every image after `steps` iterations contains a ball of `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallGuarantee {
    pub steps: u32,
    pub radius: f64,
}

/// Lipschitz data for maps of the form `F = U ∘ f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    /// `map` bounds `f`, `inflation` bounds `U` in the Hausdorff metric.
    Declared { map: f64, inflation: f64 },
    /// Known not to be Lipschitz (e.g. discontinuous).
    NotLipschitz,
    /// Unknown; may be estimated by sampling.
    Unknown,
}

/// Outer enclosure of `F(box)`: a union of boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEnclosure {
    pub pieces: Vec<Vec<Interval>>,
}

impl ImageEnclosure {
    pub fn single(piece: Vec<Interval>) -> Self {
        ImageEnclosure { pieces: vec![piece] }
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Bounding box of all pieces. Panics on an empty enclosure.
    pub fn hull(&self) -> Vec<Interval> {
        let mut pieces = self.pieces.iter();
        let first = pieces.next().expect("enclosures are nonempty").clone();
        pieces.fold(first, |acc, p| acc.iter().zip(p).map(|(a, b)| a.hull(b)).collect())
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.pieces.iter().any(|p| p.iter().zip(x).all(|(iv, &xi)| iv.contains(xi)))
    }

    /// Clips every piece to the domain. Overshoot beyond [`ABSORB_TOL`]
    /// is reported as `NotAbsorbing`.
    pub fn clip_to(&self, domain: &WorkingDomain) -> Result<ImageEnclosure, ModelError> {
        if self.pieces.is_empty() {
            return Err(ModelError::EmptyImage(Vec::new()));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let mut clipped = Vec::with_capacity(p.len());
            for (axis, iv) in p.iter().enumerate() {
                let (lo, hi) = (domain.lo[axis], domain.hi[axis]);
                let slack = ABSORB_TOL * (hi - lo);
                if iv.lo < lo - slack || iv.hi > hi + slack {
                    return Err(ModelError::NotAbsorbing { image: p.clone() });
                }
                clipped.push(Interval::new(iv.lo.max(lo), iv.hi.min(hi)));
            }
            pieces.push(clipped);
        }
        Ok(ImageEnclosure { pieces })
    }
}

/// A set-valued map given by outer enclosures of box images.
pub trait SetValuedMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn params(&self) -> BTreeMap<String, f64>;
    fn dimension(&self) -> usize;
    fn continuity(&self) -> ContinuityClass;
    fn ball_guarantee(&self) -> Option<BallGuarantee>;
    fn lipschitz(&self) -> Lipschitz;

    /// Outer enclosure of the image of a box (not clipped to any domain).
    fn enclose(&self, b: &[Interval]) -> ImageEnclosure;

    /// Image of a single point, as a thin-box query.
    fn point_image(&self, x: &[f64]) -> ImageEnclosure {
        let thin: Vec<Interval> = x.iter().map(|&v| Interval::point(v)).collect();
        self.enclose(&thin)
    }
}

/// Encloses and clips to the domain.
pub fn enclose_in(
    map: &dyn SetValuedMap,
    b: &[Interval],
    domain: &WorkingDomain,
) -> Result<ImageEnclosure, ModelError> {
    match map.enclose(b).clip_to(domain) {
        Err(ModelError::EmptyImage(_)) => Err(ModelError::EmptyImage(b.to_vec())),
        other => other,
    }
}

/// Checks `F(X) ⊆ X` using a single enclosure of the whole domain.
pub fn check_absorbing(map: &dyn SetValuedMap, domain: &WorkingDomain) -> Result<(), ModelError> {
    if map.dimension() != domain.dimension() {
        return Err(ModelError::DimensionMismatch { map: map.dimension(), domain: domain.dimension() });
    }
    enclose_in(map, &domain.bounds(), domain).map(|_| ())
}

fn pad(x: f64, scale: f64) -> f64 {
    8.0 * f64::EPSILON * (x.abs() + scale) + f64::MIN_POSITIVE
}

fn down(x: f64, scale: f64) -> f64 {
    x - pad(x, scale)
}

fn up(x: f64, scale: f64) -> f64 {
    x + pad(x, scale)
}

fn require(params: &BTreeMap<String, f64>, key: &str) -> Result<f64, ModelError> {
    params.get(key).copied().ok_or_else(|| ModelError::MissingParameter(key.to_string()))
}

fn check_keys(model: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<(), ModelError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ModelError::UnknownParameter { model: model.into(), param: k.clone() }),
        None => Ok(()),
    }
}

fn unsupported(name: &str, value: f64, reason: &str) -> ModelError {
    ModelError::UnsupportedParameter { name: name.into(), value, reason: reason.into() }
}

/// `F_{α,β}(x) = B̄_ε(αx/(1+|x|) + β)` for `α > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatingMap {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
}

impl SaturatingMap {
    pub fn new(alpha: f64, beta: f64, eps: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(unsupported("alpha", alpha, "must be positive"));
        }
        if !beta.is_finite() {
            return Err(unsupported("beta", beta, "must be finite"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(unsupported("eps", eps, "must be positive"));
        }
        Ok(SaturatingMap { alpha, beta, eps })
    }

    /// The single-valued part `f`.
    pub fn f(&self, x: f64) -> f64 {
        self.alpha * x / (1.0 + x.abs()) + self.beta
    }

    /// Any `[-c, c]` with `c` above this bound is absorbing.
    pub fn absorbing_radius(&self) -> f64 {
        self.alpha + self.beta.abs() + self.eps
    }
}

impl SetValuedMap for SaturatingMap {
    fn name(&self) -> &str {
        "saturating"
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("alpha".into(), self.alpha), ("beta".into(), self.beta), ("eps".into(), self.eps)])
    }

    fn dimension(&self) -> usize {
        1
    }

    fn continuity(&self) -> ContinuityClass {
        ContinuityClass::Continuous
    }

    fn ball_guarantee(&self) -> Option<BallGuarantee> {
        Some(BallGuarantee { steps: 1, radius: self.eps })
    }

    fn lipschitz(&self) -> Lipschitz {
        // f'(x) = α / (1 + |x|)², largest at x = 0
        Lipschitz::Declared { map: self.alpha, inflation: 1.0 }
    }

    fn enclose(&self, b: &[Interval]) -> ImageEnclosure {
        // f is increasing on the whole line for α > 0
        let scale = self.alpha + self.beta.abs() + self.eps;
        let lo = down(self.f(b[0].lo) - self.eps, scale);
        let hi = up(self.f(b[0].hi) + self.eps, scale);
        ImageEnclosure::single(vec![Interval::new(lo, hi)])
    }
}

/// `x < 0 ↦ [x/2 − λ − 1, x/2 − λ]`, `0 ↦ [−2, 2]`, `x > 0 ↦ [x/2 + λ, x/2 + λ + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergingMap {
    pub lambda: f64,
}

impl MergingMap {
    pub fn new(lambda: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(unsupported("lambda", lambda, "must lie in [0, 1]"));
        }
        Ok(MergingMap { lambda })
    }
}

impl SetValuedMap for MergingMap {
    fn name(&self) -> &str {
        "merging"
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("lambda".into(), self.lambda)])
    }

    fn dimension(&self) -> usize {
        1
    }

    fn continuity(&self) -> ContinuityClass {
        ContinuityClass::UpperSemicontinuous
    }

    fn ball_guarantee(&self) -> Option<BallGuarantee> {
        Some(BallGuarantee { steps: 1, radius: 0.5 })
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::NotLipschitz
    }

    fn enclose(&self, b: &[Interval]) -> ImageEnclosure {
        let Interval { lo, hi } = b[0];
        let l = self.lambda;
        let s = 4.0;
        let mut pieces = Vec::new();
        if lo < 0.0 {
            let top = hi.min(0.0);
            pieces.push(vec![Interval::new(down(lo / 2.0 - l - 1.0, s), up(top / 2.0 - l, s))]);
        }
        if lo <= 0.0 && 0.0 <= hi {
            pieces.push(vec![Interval::new(-2.0, 2.0)]);
        }
        if hi > 0.0 {
            let bottom = lo.max(0.0);
            pieces.push(vec![Interval::new(down(bottom / 2.0 + l, s), up(hi / 2.0 + l + 1.0, s))]);
        }
        ImageEnclosure { pieces }
    }
}

/// `F(x) = B̄_ε(Lx)` with `0 < L < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionMap {
    pub rate: f64,
    pub eps: f64,
}

impl ContractionMap {
    pub fn new(rate: f64, eps: f64) -> Result<Self, ModelError> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(unsupported("L", rate, "must lie in (0, 1)"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(unsupported("eps", eps, "must be positive"));
        }
        Ok(ContractionMap { rate, eps })
    }
}

impl SetValuedMap for ContractionMap {
    fn name(&self) -> &str {
        "contraction"
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("L".into(), self.rate), ("eps".into(), self.eps)])
    }

    fn dimension(&self) -> usize {
        1
    }

    fn continuity(&self) -> ContinuityClass {
        ContinuityClass::Continuous
    }

    fn ball_guarantee(&self) -> Option<BallGuarantee> {
        Some(BallGuarantee { steps: 1, radius: self.eps })
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Declared { map: self.rate, inflation: 1.0 }
    }

    fn enclose(&self, b: &[Interval]) -> ImageEnclosure {
        let s = self.eps;
        let lo = down(self.rate * b[0].lo - self.eps, s);
        let hi = up(self.rate * b[0].hi + self.eps, s);
        ImageEnclosure::single(vec![Interval::new(lo, hi)])
    }
}

/// One branch of a piecewise-affine map: on the closed `guard` box,
/// `x ↦ B̄_radius(linear · x + offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub guard: WorkingDomain,
    pub linear: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub radius: f64,
}

/// User map loaded from a declarative JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineMap {
    #[serde(default = "default_piecewise_name")]
    pub name: String,
    pub pieces: Vec<AffinePiece>,
    #[serde(default = "default_piecewise_continuity")]
    pub continuity: ContinuityClass,
}

fn default_piecewise_name() -> String {
    "piecewise".into()
}

fn default_piecewise_continuity() -> ContinuityClass {
    ContinuityClass::UpperSemicontinuous
}

impl PiecewiseAffineMap {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let map: PiecewiseAffineMap =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidPiecewise(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidPiecewise(m));
        let Some(first) = self.pieces.first() else {
            return bad("no pieces".into());
        };
        let d = first.guard.dimension();
        for (k, p) in self.pieces.iter().enumerate() {
            if let Err(e) = p.guard.validate() {
                // degenerate guards (lo == hi) are allowed for point pieces
                let ok = p.guard.lo.len() == p.guard.hi.len()
                    && p.guard.lo.iter().zip(&p.guard.hi).all(|(l, h)| l <= h && l.is_finite() && h.is_finite());
                if !ok {
                    return bad(format!("piece {k}: {e}"));
                }
            }
            if p.guard.dimension() != d || p.offset.len() != d || p.linear.len() != d {
                return bad(format!("piece {k}: inconsistent dimension"));
            }
            if p.linear.iter().any(|row| row.len() != d || row.iter().any(|a| !a.is_finite())) {
                return bad(format!("piece {k}: linear part must be a {d}x{d} finite matrix"));
            }
            if !(p.radius >= 0.0 && p.radius.is_finite()) {
                return bad(format!("piece {k}: radius must be non-negative"));
            }
        }
        Ok(())
    }
}

impl SetValuedMap for PiecewiseAffineMap {
    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn dimension(&self) -> usize {
        self.pieces[0].guard.dimension()
    }

    fn continuity(&self) -> ContinuityClass {
        self.continuity
    }

    fn ball_guarantee(&self) -> Option<BallGuarantee> {
        let r = self.pieces.iter().map(|p| p.radius).fold(f64::INFINITY, f64::min);
        (r > 0.0).then_some(BallGuarantee { steps: 1, radius: r })
    }

    fn lipschitz(&self) -> Lipschitz {
        Lipschitz::Unknown
    }

    fn enclose(&self, b: &[Interval]) -> ImageEnclosure {
        let d = b.len();
        let mut pieces = Vec::new();
        for p in &self.pieces {
            let part: Option<Vec<Interval>> = (0..d)
                .map(|i| {
                    let lo = b[i].lo.max(p.guard.lo[i]);
                    let hi = b[i].hi.min(p.guard.hi[i]);
                    (lo <= hi).then(|| Interval::new(lo, hi))
                })
                .collect();
            let Some(part) = part else { continue };
            let image = (0..d)
                .map(|i| {
                    let (mut lo, mut hi, mut scale) = (p.offset[i], p.offset[i], p.offset[i].abs() + p.radius);
                    for (j, &a) in p.linear[i].iter().enumerate() {
                        let (x0, x1) = (a * part[j].lo, a * part[j].hi);
                        lo += x0.min(x1);
                        hi += x0.max(x1);
                        scale += x0.abs().max(x1.abs());
                    }
                    Interval::new(down(lo - p.radius, scale), up(hi + p.radius, scale))
                })
                .collect();
            pieces.push(image);
        }
        // empty when the box misses every guard; `clip_to` reports it
        ImageEnclosure { pieces }
    }
}

/// Result of the contraction test `L·M < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Certificate {
    /// `factor = L·M < 1`; `rigorous` is false when `L` was only estimated.
    Certified {
        factor: f64,
        rigorous: bool,
    },
    NotCertified {
        factor: Option<f64>,
    },
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certificate::Certified { .. })
    }

    pub fn factor(&self) -> Option<f64> {
        match *self {
            Certificate::Certified { factor, .. } => Some(factor),
            Certificate::NotCertified { factor } => factor,
        }
    }
}

/// Certifies `F` as a Hausdorff contraction from declared constants, or
/// estimates `L·M` from sampled difference quotients `h(F(x), F(y)) / d(x, y)`
/// (non-rigorous) when the map declares nothing.
pub fn check_contraction_certificate(
    map: &dyn SetValuedMap,
    domain: &WorkingDomain,
    samples: usize,
) -> Result<Certificate, ModelError> {
    match map.lipschitz() {
        Lipschitz::Declared { map: l, inflation: m } => {
            let factor = l * m;
            Ok(if factor < 1.0 {
                Certificate::Certified { factor, rigorous: true }
            } else {
                Certificate::NotCertified { factor: Some(factor) }
            })
        }
        Lipschitz::NotLipschitz => Ok(Certificate::NotCertified { factor: None }),
        Lipschitz::Unknown => {
            let factor = estimate_lipschitz(map, domain, samples)?;
            Ok(if factor < 1.0 {
                Certificate::Certified { factor, rigorous: false }
            } else {
                Certificate::NotCertified { factor: Some(factor) }
            })
        }
    }
}

/// Largest sampled `h(F(x), F(y)) / |x − y|` over consecutive points of a
/// Halton sequence in the domain. Multi-piece images are compared by hull.
pub fn estimate_lipschitz(map: &dyn SetValuedMap, domain: &WorkingDomain, samples: usize) -> Result<f64, ModelError> {
    if samples < 2 {
        return Err(ModelError::InsufficientEvidence(samples));
    }
    let d = domain.dimension();
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let point = |k: usize| -> Vec<f64> {
        (0..d)
            .map(|axis| {
                let u = radical_inverse(k as u64 + 1, PRIMES[axis % PRIMES.len()]);
                domain.lo[axis] + u * (domain.hi[axis] - domain.lo[axis])
            })
            .collect()
    };
    let mut best = 0.0f64;
    let mut pairs = 0usize;
    let mut prev: Option<(Vec<f64>, Vec<Interval>)> = None;
    for k in 0..samples {
        let x = point(k);
        let img = map.point_image(&x);
        if img.is_empty() {
            prev = None;
            continue;
        }
        let img = img.hull();
        let Some((prev_x, prev_img)) = prev.replace((x.clone(), img.clone())) else {
            continue;
        };
        let dx = x.iter().zip(&prev_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dx > 0.0 {
            pairs += 1;
            let dh = img
                .iter()
                .zip(&prev_img)
                .map(|(a, b)| (a.lo - b.lo).abs().max((a.hi - b.hi).abs()))
                .fold(0.0, f64::max);
            best = best.max(dh / dx);
        }
    }
    if pairs == 0 {
        return Err(ModelError::InsufficientEvidence(pairs));
    }
    Ok(best)
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// A model selected by name plus parameter values; the unit a parameter
/// sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_map: Option<PiecewiseAffineMap>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ModelSpec { name: name.into(), params: BTreeMap::new(), user_map: None }
    }

    pub fn set(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_param(&self, key: &str, value: f64) -> Self {
        self.clone().set(key, value)
    }

    pub fn piecewise(map: PiecewiseAffineMap) -> Self {
        ModelSpec { name: "piecewise".into(), params: BTreeMap::new(), user_map: Some(map) }
    }

    pub fn build(&self) -> Result<Arc<dyn SetValuedMap>, ModelError> {
        let p = &self.params;
        match self.name.as_str() {
            "saturating" => {
                check_keys("saturating", p, &["alpha", "beta", "eps"])?;
                let beta = p.get("beta").copied().unwrap_or(0.0);
                Ok(Arc::new(SaturatingMap::new(require(p, "alpha")?, beta, require(p, "eps")?)?))
            }
            "merging" => {
                check_keys("merging", p, &["lambda"])?;
                Ok(Arc::new(MergingMap::new(require(p, "lambda")?)?))
            }
            "contraction" => {
                check_keys("contraction", p, &["L", "eps"])?;
                Ok(Arc::new(ContractionMap::new(require(p, "L")?, require(p, "eps")?)?))
            }
            "piecewise" => {
                check_keys("piecewise", p, &[])?;
                let map =
                    self.user_map.clone().ok_or_else(|| ModelError::InvalidPiecewise("no map file given".into()))?;
                map.validate()?;
                Ok(Arc::new(map))
            }
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }
}
