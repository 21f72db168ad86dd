//! Outer approximations of minimal invariant sets by subdivision, plus the
//! fixed-cover iteration for certified contractions.
//!
//! The refinement loop starts from the whole domain, keeps the terminal
//! components of the (forward or dual) transition graph, subdivides them,
//! grows one ring of boxes and repeats. Components are tracked as lineages
//! from depth to depth by maximal overlap.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{hausdorff_dist, BoxCover, GeometryError, Interval, WorkingDomain, MAX_DEPTH};
use crate::graph::{
    build_graph, check_invariant, mark_entries, scc_ids, terminal_sccs, GraphError, NodeSet, TransitionGraph,
};
use crate::models::{check_contraction_certificate, enclose_in, ModelError, SetValuedMap};

/// Samples used when a contraction certificate has to be estimated.
const CERTIFICATE_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Forward,
    Dual,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Side::Forward),
            "dual" => Ok(Side::Dual),
            other => Err(format!("unknown side `{other}` (expected forward or dual)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub depth: u32,
    pub box_count: usize,
    /// Hausdorff distance to the parent cover one depth up; absent for the
    /// first record of a lineage.
    pub hausdorff_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalSetApproximation {
    pub cover: BoxCover,
    pub side: Side,
    pub depth_history: Vec<DepthRecord>,
    pub certified_forward_invariant: bool,
    /// Hausdorff steps between successive iterates of the fixed-cover
    /// iteration (contraction fast path only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contraction_steps: Vec<f64>,
}

impl MinimalSetApproximation {
    pub fn hull(&self) -> Vec<Interval> {
        self.cover.hull()
    }

    pub fn depth(&self) -> u32 {
        self.cover.depth()
    }

    pub fn last_step(&self) -> Option<f64> {
        self.depth_history.last().and_then(|r| r.hausdorff_step)
    }

    /// Largest ratio between consecutive contraction steps.
    pub fn measured_factor(&self) -> Option<f64> {
        measured_factor(&self.contraction_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimalConfig {
    pub start_depth: u32,
    pub max_depth: u32,
    pub tol: f64,
    pub side: Side,
}

impl Default for MinimalConfig {
    fn default() -> Self {
        MinimalConfig { start_depth: 6, max_depth: 12, tol: 1e-2, side: Side::Forward }
    }
}

impl MinimalConfig {
    pub fn validate(&self) -> Result<(), MinimalError> {
        if self.start_depth > self.max_depth {
            return Err(MinimalError::InvalidConfig(format!(
                "start depth {} exceeds max depth {}",
                self.start_depth, self.max_depth
            )));
        }
        if self.max_depth > MAX_DEPTH {
            return Err(GeometryError::RefinementLimit { depth: self.max_depth, max: MAX_DEPTH }.into());
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(MinimalError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinimalError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tolerance {tol} not reached by depth {depth}; returning {} partial approximations", partial.len())]
    RefinementLimit { depth: u32, tol: f64, partial: Vec<MinimalSetApproximation> },
    #[error("no terminal component at depth {0}")]
    NoMinimalSet(u32),
    #[error("map is not certified as a contraction (factor {factor:?})")]
    NotCertified { factor: Option<f64> },
    #[error("fixed-cover iteration did not settle in {iterations} steps (measured factor {factor:?})")]
    NonConvergence { iterations: usize, factor: Option<f64> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Transition graph for `side`: the forward graph, or the reversed graph
/// with entries from outside the cover marked as exits.
pub fn side_graph(map: &dyn SetValuedMap, cover: &BoxCover, side: Side) -> Result<TransitionGraph, GraphError> {
    let mut g = build_graph(map, cover)?;
    match side {
        Side::Forward => Ok(g),
        Side::Dual => {
            mark_entries(map, &mut g)?;
            Ok(g.dual())
        }
    }
}

/// Refines until consecutive covers of every lineage are within `tol`
/// (Hausdorff) and no lineage split or vanished. Hitting `max_depth`
/// first yields `RefinementLimit` carrying the partial result.
pub fn refine_minimal_sets(
    map: &dyn SetValuedMap,
    domain: Arc<WorkingDomain>,
    config: &MinimalConfig,
) -> Result<Vec<MinimalSetApproximation>, MinimalError> {
    config.validate()?;
    refine(map, domain, config, None)
}

/// Refines from `config.start_depth` to exactly `depth`, ignoring `tol`.
pub fn refine_to_depth(
    map: &dyn SetValuedMap,
    domain: Arc<WorkingDomain>,
    config: &MinimalConfig,
    depth: u32,
) -> Result<Vec<MinimalSetApproximation>, MinimalError> {
    let config = MinimalConfig { max_depth: depth, ..*config };
    config.validate()?;
    refine(map, domain, &config, Some(depth))
}

fn refine(
    map: &dyn SetValuedMap,
    domain: Arc<WorkingDomain>,
    config: &MinimalConfig,
    fixed_depth: Option<u32>,
) -> Result<Vec<MinimalSetApproximation>, MinimalError> {
    let mut depth = config.start_depth;
    let mut candidate = BoxCover::full(domain, depth)?;
    let mut lineages: Vec<MinimalSetApproximation> = Vec::new();
    loop {
        let g = side_graph(map, &candidate, config.side)?;
        let sccs = terminal_sccs(&g);
        if sccs.is_empty() {
            // a globally attracting forward set leaves nothing dual-invariant
            if config.side == Side::Dual {
                return Ok(Vec::new());
            }
            return Err(MinimalError::NoMinimalSet(depth));
        }
        let (next, settled) = advance(&lineages, &g, &sccs, config)?;
        lineages = next;
        if fixed_depth == Some(depth) {
            return Ok(lineages);
        }
        if fixed_depth.is_none() && settled {
            return Ok(lineages);
        }
        if depth >= config.max_depth {
            return Err(MinimalError::RefinementLimit { depth, tol: config.tol, partial: lineages });
        }
        let mut flat = Vec::new();
        for l in &lineages {
            flat.extend_from_slice(l.cover.flat_coords());
        }
        let union = BoxCover::from_flat_unchecked(candidate.domain_arc().clone(), depth, flat);
        candidate = union.subdivide()?.grow_rings(1);
        depth += 1;
    }
}

// Matches the terminal components of `g` to the previous lineages. Returns
// the new lineages and whether the refinement has settled.
fn advance(
    parents: &[MinimalSetApproximation],
    g: &TransitionGraph,
    sccs: &[NodeSet],
    config: &MinimalConfig,
) -> Result<(Vec<MinimalSetApproximation>, bool), MinimalError> {
    let depth = g.cover().depth();
    let mut children_per_parent = vec![0usize; parents.len()];
    // consecutive covers can coincide by accident on a coarse grid
    let mut settled = !parents.is_empty() && g.cover().box_width() < config.tol;
    let mut out = Vec::with_capacity(sccs.len());
    for scc in sccs {
        let cover = g.cover_of(scc).expect("terminal components are nonempty");
        let certified = check_invariant(g, scc).is_ok();
        let parent = best_parent(parents, &cover)?;
        let record = |step| DepthRecord { depth, box_count: cover.len(), hausdorff_step: step };
        let history = match parent {
            Some((p, h)) => {
                children_per_parent[p] += 1;
                settled &= h < config.tol;
                let mut hist = parents[p].depth_history.clone();
                hist.push(record(Some(h)));
                hist
            }
            None => {
                settled = false;
                vec![record(None)]
            }
        };
        out.push(MinimalSetApproximation {
            cover,
            side: config.side,
            depth_history: history,
            certified_forward_invariant: certified,
            contraction_steps: Vec::new(),
        });
    }
    settled &= children_per_parent.iter().all(|&c| c == 1);
    Ok((out, settled))
}

// Maximal overlap after coarsening, then smaller Hausdorff distance, then
// the earlier (lexicographically smaller) parent.
fn best_parent(parents: &[MinimalSetApproximation], child: &BoxCover) -> Result<Option<(usize, f64)>, MinimalError> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, p) in parents.iter().enumerate() {
        let coarse = child.coarsen(p.cover.depth());
        let overlap = coarse.overlap_count(&p.cover)?;
        if overlap == 0 {
            continue;
        }
        let h = hausdorff_dist(&p.cover, child)?;
        let better = match best {
            None => true,
            Some((_, o, bh)) => overlap > o || (overlap == o && h < bh),
        };
        if better {
            best = Some((i, overlap, h));
        }
    }
    Ok(best.map(|(i, _, h)| (i, h)))
}

/// Fixed cover of the cover-level image map at `depth`, iterated from the
/// whole domain. Requires a contraction certificate.
pub fn contract_to_fixed_cover(
    map: &dyn SetValuedMap,
    domain: Arc<WorkingDomain>,
    depth: u32,
    max_iters: usize,
) -> Result<MinimalSetApproximation, MinimalError> {
    let cert = check_contraction_certificate(map, &domain, CERTIFICATE_SAMPLES)?;
    if !cert.is_certified() {
        return Err(MinimalError::NotCertified { factor: cert.factor() });
    }
    contract_from(map, &BoxCover::full(domain, depth)?, max_iters)
}

/// Iterates `C ↦ cover(F(C))` from `seed` until the cover repeats, then
/// tightens the result to the terminal component of the box-level image
/// relation inside it. The grid-level map can have several nested fixed
/// covers; the terminal component is the least one and does not depend on
/// the seed.
pub fn contract_from(
    map: &dyn SetValuedMap,
    seed: &BoxCover,
    max_iters: usize,
) -> Result<MinimalSetApproximation, MinimalError> {
    let mut current = seed.clone();
    let mut steps = Vec::new();
    for _ in 0..max_iters {
        let next = image_cover(map, &current)?;
        if next == current {
            let Some(current) = least_fixed_cover(map, &current)? else {
                return Err(MinimalError::NonConvergence { iterations: steps.len(), factor: measured_factor(&steps) });
            };
            let g = build_graph(map, &current)?;
            let certified = check_invariant(&g, &g.all_nodes()).is_ok();
            return Ok(MinimalSetApproximation {
                depth_history: vec![DepthRecord {
                    depth: current.depth(),
                    box_count: current.len(),
                    hausdorff_step: steps.last().copied(),
                }],
                cover: current,
                side: Side::Forward,
                certified_forward_invariant: certified,
                contraction_steps: steps,
            });
        }
        steps.push(hausdorff_dist(&current, &next)?);
        current = next;
    }
    Err(MinimalError::NonConvergence { iterations: max_iters, factor: measured_factor(&steps) })
}

fn least_fixed_cover(map: &dyn SetValuedMap, fixed: &BoxCover) -> Result<Option<BoxCover>, MinimalError> {
    let domain = fixed.domain();
    let adjacency: Vec<Vec<u32>> = (0..fixed.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<u32>, MinimalError> {
            let img = enclose_in(map, &fixed.realize(i), domain)?;
            let hit =
                BoxCover::of_regions(fixed.domain_arc().clone(), fixed.depth(), img.pieces.iter().map(Vec::as_slice));
            Ok(hit
                .iter()
                .flat_map(|c| c.iter().filter_map(|b| fixed.index_of(b).map(|j| j as u32)).collect::<Vec<_>>())
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let g = TransitionGraph::from_adjacency(fixed.clone(), adjacency)?;
    match terminal_sccs(&g).as_slice() {
        [only] => Ok(g.cover_of(only)),
        // several invariant pieces: not a contraction after all
        _ => Ok(None),
    }
}

/// Minimal same-depth cover of the union of the box images of `cover`.
pub fn image_cover(map: &dyn SetValuedMap, cover: &BoxCover) -> Result<BoxCover, MinimalError> {
    let domain = cover.domain();
    let pieces: Vec<Vec<Vec<Interval>>> = (0..cover.len())
        .into_par_iter()
        .map(|i| enclose_in(map, &cover.realize(i), domain).map(|img| img.pieces))
        .collect::<Result<_, _>>()?;
    let regions = pieces.iter().flatten().map(Vec::as_slice);
    BoxCover::of_regions(cover.domain_arc().clone(), cover.depth(), regions)
        .ok_or_else(|| ModelError::EmptyImage(cover.hull()).into())
}

fn measured_factor(steps: &[f64]) -> Option<f64> {
    steps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Minimality {
    Minimal,
    /// Terminal components of the restriction, as nodes of the full graph.
    SplitsInto(Vec<NodeSet>),
}

/// Whether a forward-invariant node set is minimal, i.e. a single strongly
/// connected component of its restriction.
pub fn check_minimality(graph: &TransitionGraph, m: &NodeSet) -> Result<Minimality, GraphError> {
    check_invariant(graph, m)?;
    let (sub, ids) = graph.induced(m)?;
    let (_, count) = scc_ids(&sub);
    if count == 1 {
        return Ok(Minimality::Minimal);
    }
    let parts = terminal_sccs(&sub).into_iter().map(|s| s.iter().map(|v| ids[v as usize]).collect()).collect();
    Ok(Minimality::SplitsInto(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ContractionMap, MergingMap, SaturatingMap};

    fn line(lo: f64, hi: f64) -> Arc<WorkingDomain> {
        Arc::new(WorkingDomain::interval(lo, hi).unwrap())
    }

    fn near(hull: Interval, lo: f64, hi: f64, tol: f64) -> bool {
        (hull.lo - lo).abs() <= tol && (hull.hi - hi).abs() <= tol
    }

    // Fixed points of the extremal maps for alpha = 2, beta = 0, eps = 0.1 on
    // x > 0: x = 2x/(1+x) -/+ 0.1, i.e. x^2 - (1 -/+ 0.1)x -/+ 0.1 = 0.
    fn sat_oracle() -> (f64, f64, f64) {
        let lower = (0.9 + (0.81f64 - 0.4).sqrt()) / 2.0;
        let upper = (1.1 + (1.21f64 + 0.4).sqrt()) / 2.0;
        let r = (0.9 - (0.81f64 - 0.4).sqrt()) / 2.0;
        (lower, upper, r)
    }

    #[test]
    fn contraction_refinement_converges() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let cfg = MinimalConfig { start_depth: 2, max_depth: 12, tol: 0.02, side: Side::Forward };
        let out = refine_minimal_sets(&m, line(-1.0, 1.0), &cfg).unwrap();
        assert_eq!(out.len(), 1);
        let a = &out[0];
        let bw = a.cover.box_width();
        assert!(near(a.hull()[0], -0.2, 0.2, bw), "{:?}", a.hull());
        assert!(a.certified_forward_invariant);
        assert!(a.last_step().unwrap() < 0.02);
    }

    #[test]
    fn saturating_forward_and_dual() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let (lower, upper, r) = sat_oracle();
        let cfg = MinimalConfig { start_depth: 6, ..Default::default() };
        let fwd = refine_to_depth(&m, line(-4.0, 4.0), &cfg, 10).unwrap();
        assert_eq!(fwd.len(), 2);
        let bw = fwd[0].cover.box_width();
        assert!(near(fwd[0].hull()[0], -upper, -lower, bw), "{:?}", fwd[0].hull());
        assert!(near(fwd[1].hull()[0], lower, upper, bw), "{:?}", fwd[1].hull());
        assert!(fwd.iter().all(|a| a.certified_forward_invariant));
        assert_eq!(fwd[0].depth_history.len(), 5);

        let dual_cfg = MinimalConfig { side: Side::Dual, ..cfg };
        let dual = refine_to_depth(&m, line(-4.0, 4.0), &dual_cfg, 10).unwrap();
        assert_eq!(dual.len(), 1);
        assert!(near(dual[0].hull()[0], -r, r, bw), "{:?}", dual[0].hull());
    }

    #[test]
    fn globally_attracting_set_has_no_dual_set() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let cfg = MinimalConfig { start_depth: 4, side: Side::Dual, ..Default::default() };
        assert!(refine_to_depth(&m, line(-1.0, 1.0), &cfg, 6).unwrap().is_empty());
    }

    #[test]
    fn merging_two_sets() {
        let m = MergingMap::new(0.5).unwrap();
        let cfg = MinimalConfig { start_depth: 4, ..Default::default() };
        let out = refine_to_depth(&m, line(-4.0, 4.0), &cfg, 8).unwrap();
        assert_eq!(out.len(), 2);
        let bw = out[0].cover.box_width();
        assert!(near(out[0].hull()[0], -3.0, -1.0, bw), "{:?}", out[0].hull());
        assert!(near(out[1].hull()[0], 1.0, 3.0, bw), "{:?}", out[1].hull());
    }

    #[test]
    fn refinement_limit_keeps_partial_result() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let cfg = MinimalConfig { start_depth: 4, max_depth: 6, tol: 1e-6, side: Side::Forward };
        match refine_minimal_sets(&m, line(-4.0, 4.0), &cfg) {
            Err(MinimalError::RefinementLimit { depth: 6, partial, .. }) => {
                assert_eq!(partial.len(), 2);
                assert!(partial.iter().all(|a| a.certified_forward_invariant));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_config_rejected() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let cfg = MinimalConfig { start_depth: 8, max_depth: 4, ..Default::default() };
        assert!(matches!(refine_minimal_sets(&m, line(-1.0, 1.0), &cfg), Err(MinimalError::InvalidConfig(_))));
        let cfg = MinimalConfig { tol: 0.0, ..Default::default() };
        assert!(matches!(refine_minimal_sets(&m, line(-1.0, 1.0), &cfg), Err(MinimalError::InvalidConfig(_))));
    }

    #[test]
    fn fixed_cover_of_contraction() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let dom = line(-1.0, 1.0);
        let a = contract_to_fixed_cover(&m, dom.clone(), 8, 100).unwrap();
        let bw = a.cover.box_width();
        assert_eq!(a.hull()[0], Interval::new(-0.203125, 0.203125));
        assert!(near(a.hull()[0], -0.2, 0.2, bw));
        assert!(a.certified_forward_invariant);
        for w in a.contraction_steps.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + bw, "{:?}", a.contraction_steps);
        }
        let seed = BoxCover::of_region(dom, 8, &[Interval::new(0.9, 1.0)]).unwrap();
        let b = contract_from(&m, &seed, 100).unwrap();
        assert_eq!(a.cover, b.cover);
    }

    #[test]
    fn contraction_needs_certificate() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let err = contract_to_fixed_cover(&m, line(-4.0, 4.0), 6, 50).unwrap_err();
        assert_eq!(err, MinimalError::NotCertified { factor: Some(2.0) });
    }

    #[test]
    fn minimality_checks() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let g = build_graph(&m, &BoxCover::full(line(-4.0, 4.0), 8).unwrap()).unwrap();
        let sccs = terminal_sccs(&g);
        assert_eq!(sccs.len(), 2);
        assert_eq!(check_minimality(&g, &sccs[1]).unwrap(), Minimality::Minimal);
        let both = sccs[0].union(&sccs[1]);
        assert_eq!(check_minimality(&g, &both).unwrap(), Minimality::SplitsInto(sccs.clone()));
        let single =
            TransitionGraph::from_adjacency(BoxCover::full(line(0.0, 1.0), 0).unwrap(), vec![vec![0]]).unwrap();
        assert_eq!(check_minimality(&single, &single.all_nodes()).unwrap(), Minimality::Minimal);
    }
}
