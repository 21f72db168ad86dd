//! Parameter sweeps of minimal-set approximations and classification of
//! what happens between neighbouring parameter values.
//!
//! Transitions are graded from cover-level evidence against thresholds
//! measured in box widths. The classifier detects the discontinuity
//! signatures of a bifurcation (explosion, appearance); it does not
//! construct conjugacies, so a `continuous` verdict is evidence only.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cover_gap, semi_dist, BoxCover, GeometryError, WorkingDomain};
use crate::graph::{build_graph, check_invariant, dual_set, DualSet, GraphError};
use crate::minimal::{refine_to_depth, MinimalConfig, MinimalError, MinimalSetApproximation};
use crate::models::{ModelError, ModelSpec, SetValuedMap};

pub const REPORT_NOTE: &str = "Transitions are classified from cover-level discontinuity signatures \
(one-sided explosion, isolated appearance) with the thresholds below; no conjugacy between \
parameter values is constructed, so 'continuous' means no signature was detected.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error(transparent)]
    Minimal(#[from] MinimalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("samples were refined to different depths ({0} and {1})")]
    DepthMismatch(u32, u32),
    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),
    #[error("empty bracket [{0}, {1}]")]
    EmptyBracket(f64, f64),
    #[error("no {kind} between the bracket ends ({lo_count} vs {hi_count} minimal sets)")]
    NoEvent { kind: TransitionKind, lo_count: usize, hi_count: usize },
    #[error("{kind} lost during bisection; sub-brackets [{}, {}] and [{}, {}]", left.0, left.1, right.0, right.1)]
    EventLost { kind: TransitionKind, left: (f64, f64), right: (f64, f64) },
    #[error("the set attracts the whole cover; its dual set is empty")]
    GloballyAttractive,
    #[error("approximation is not forward invariant")]
    NotInvariant,
}

/// Classifier thresholds, in box widths of the compared covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub continuity: f64,
    pub explosion: f64,
    pub delta: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { continuity: 3.0, explosion: 10.0, delta: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Continuous,
    Explosion,
    Appearance,
    Disappearance,
    MergeCandidate,
}

impl std::fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TransitionKind::Continuous => "continuous",
            TransitionKind::Explosion => "explosion",
            TransitionKind::Appearance => "appearance",
            TransitionKind::Disappearance => "disappearance",
            TransitionKind::MergeCandidate => "merge_candidate",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TransitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "continuous" => TransitionKind::Continuous,
            "explosion" => TransitionKind::Explosion,
            "appearance" => TransitionKind::Appearance,
            "disappearance" => TransitionKind::Disappearance,
            "merge_candidate" => TransitionKind::MergeCandidate,
            other => return Err(format!("unknown transition kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    /// `dist(prev, next)`, over the union of each side's covers.
    pub semi_forward: Option<f64>,
    /// `dist(next, prev)`.
    pub semi_backward: Option<f64>,
    /// Some prev box coincides with some next box.
    pub overlap: bool,
    /// Smaller side contained in the larger up to the continuity threshold
    /// while the larger exceeds it by more than the explosion threshold.
    pub one_sided: bool,
    /// Smallest gap between the covers on the side with several sets.
    pub mutual_gap: Option<f64>,
    /// A 1:1 match whose distance exceeds the continuity threshold without
    /// the one-sided signature.
    pub beyond_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub kind: TransitionKind,
    pub from_param: f64,
    pub to_param: f64,
    /// Indices into the approximations of the earlier sample.
    pub prev: Vec<usize>,
    /// Indices into the approximations of the later sample.
    pub next: Vec<usize>,
    pub evidence: Evidence,
    /// Absolute width of the matching window.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub param: f64,
    pub approximations: Vec<MinimalSetApproximation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Sample {
    pub fn count(&self) -> usize {
        self.approximations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub kind: TransitionKind,
    pub depth: u32,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub note: String,
    pub model: ModelSpec,
    pub param_name: String,
    pub domain: WorkingDomain,
    pub minimal: MinimalConfig,
    pub thresholds: Thresholds,
    pub samples: Vec<Sample>,
    pub transitions: Vec<TransitionEvent>,
    #[serde(default)]
    pub brackets: Vec<Bracket>,
}

/// Evenly spaced grid with `steps` points from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Minimal sets at one parameter value, refined to `minimal.max_depth`.
pub fn sample_at(
    spec: &ModelSpec,
    param: &str,
    value: f64,
    domain: &Arc<WorkingDomain>,
    minimal: &MinimalConfig,
) -> Result<Sample, ContinuationError> {
    let map = spec.with_param(param, value).build()?;
    let approximations = refine_to_depth(map.as_ref(), domain.clone(), minimal, minimal.max_depth)?;
    Ok(Sample { param: value, approximations, error: None })
}

/// Runs the refinement at every grid value (concurrently) and classifies
/// each adjacent pair of successful samples. Failing grid values are kept
/// with their error message.
pub fn sweep(
    spec: &ModelSpec,
    param: &str,
    grid: &[f64],
    domain: Arc<WorkingDomain>,
    minimal: &MinimalConfig,
    thresholds: &Thresholds,
) -> Result<ContinuationReport, ContinuationError> {
    if grid.is_empty() {
        return Err(ContinuationError::InvalidGrid("no parameter values".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ContinuationError::InvalidGrid("values must be finite and strictly increasing".into()));
    }
    minimal.validate()?;
    let samples: Vec<Sample> = grid
        .par_iter()
        .map(|&v| {
            sample_at(spec, param, v, &domain, minimal).unwrap_or_else(|e| Sample {
                param: v,
                approximations: Vec::new(),
                error: Some(e.to_string()),
            })
        })
        .collect();
    let mut transitions = Vec::new();
    for w in samples.windows(2) {
        if w[0].error.is_none() && w[1].error.is_none() {
            transitions.extend(classify_transition(&w[0], &w[1], thresholds)?);
        }
    }
    Ok(ContinuationReport {
        note: REPORT_NOTE.into(),
        model: spec.clone(),
        param_name: param.into(),
        domain: domain.as_ref().clone(),
        minimal: *minimal,
        thresholds: *thresholds,
        samples,
        transitions,
        brackets: Vec::new(),
    })
}

fn common_depth(prev: &Sample, next: &Sample) -> Result<Option<u32>, ContinuationError> {
    let mut depth = None;
    for a in prev.approximations.iter().chain(&next.approximations) {
        match depth {
            None => depth = Some(a.depth()),
            Some(d) if d != a.depth() => return Err(ContinuationError::DepthMismatch(d, a.depth())),
            _ => {}
        }
    }
    Ok(depth)
}

fn union(covers: &[&BoxCover]) -> Result<BoxCover, GeometryError> {
    let mut acc = covers[0].clone();
    for c in &covers[1..] {
        acc = acc.union(c)?;
    }
    Ok(acc)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Classifies the change between two samples refined to the same depth.
/// Covers are related when their gap is at most `delta` box widths; every
/// connected group of related covers yields exactly one event.
pub fn classify_transition(
    prev: &Sample,
    next: &Sample,
    thresholds: &Thresholds,
) -> Result<Vec<TransitionEvent>, ContinuationError> {
    if common_depth(prev, next)?.is_none() {
        return Ok(Vec::new());
    }
    let bw = prev.approximations.iter().chain(&next.approximations).next().map(|a| a.cover.box_width()).unwrap_or(0.0);
    let delta = thresholds.delta * bw;
    let p = prev.count();
    let n = next.count();
    let mut gap = vec![vec![0.0; n]; p];
    let mut overlap = vec![vec![0usize; n]; p];
    for i in 0..p {
        for j in 0..n {
            let (a, b) = (&prev.approximations[i].cover, &next.approximations[j].cover);
            gap[i][j] = cover_gap(a, b)?;
            overlap[i][j] = a.overlap_count(b)?;
        }
    }

    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    if p > 0 && n > 0 {
        // components of the relation "gap <= delta"
        let mut uf: Vec<usize> = (0..p + n).collect();
        for i in 0..p {
            for j in 0..n {
                if gap[i][j] <= delta {
                    let (a, b) = (find(&mut uf, i), find(&mut uf, p + j));
                    uf[a.max(b)] = a.min(b);
                }
            }
        }
        let mut comps: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for x in 0..p + n {
            let r = find(&mut uf, x);
            let e = comps.entry(r).or_default();
            if x < p {
                e.0.push(x);
            } else {
                e.1.push(x - p);
            }
        }
        for (_, (ps, ns)) in comps {
            if ps.len() > 1 && ns.len() > 1 {
                groups.extend(split_many_to_many(&ps, &ns, &gap, &overlap));
            } else {
                groups.push((ps, ns));
            }
        }
    } else {
        groups.extend((0..p).map(|i| (vec![i], vec![])));
        groups.extend((0..n).map(|j| (vec![], vec![j])));
    }

    let mut events = Vec::with_capacity(groups.len());
    for (ps, ns) in groups {
        let mut evidence = Evidence::default();
        let kind = if ns.is_empty() {
            TransitionKind::Disappearance
        } else if ps.is_empty() {
            TransitionKind::Appearance
        } else {
            let pc: Vec<&BoxCover> = ps.iter().map(|&i| &prev.approximations[i].cover).collect();
            let nc: Vec<&BoxCover> = ns.iter().map(|&j| &next.approximations[j].cover).collect();
            let (pu, nu) = (union(&pc)?, union(&nc)?);
            let sf = semi_dist(&pu, &nu)?;
            let sb = semi_dist(&nu, &pu)?;
            evidence.semi_forward = Some(sf);
            evidence.semi_backward = Some(sb);
            evidence.overlap = ps.iter().any(|&i| ns.iter().any(|&j| overlap[i][j] > 0));
            let cont = thresholds.continuity * bw;
            let expl = thresholds.explosion * bw;
            evidence.one_sided = (sf <= cont && sb > expl) || (sb <= cont && sf > expl);
            if ps.len() == 1 && ns.len() == 1 {
                if sf.max(sb) <= cont {
                    TransitionKind::Continuous
                } else if evidence.one_sided {
                    TransitionKind::Explosion
                } else {
                    evidence.beyond_threshold = true;
                    TransitionKind::Continuous
                }
            } else {
                let many = if pc.len() > 1 { &pc } else { &nc };
                let mut mutual = f64::INFINITY;
                for a in 0..many.len() {
                    for b in a + 1..many.len() {
                        mutual = mutual.min(cover_gap(many[a], many[b])?);
                    }
                }
                evidence.mutual_gap = Some(mutual);
                if mutual <= delta {
                    TransitionKind::MergeCandidate
                } else {
                    TransitionKind::Explosion
                }
            }
        };
        events.push(TransitionEvent {
            kind,
            from_param: prev.param,
            to_param: next.param,
            prev: ps,
            next: ns,
            evidence,
            delta,
        });
    }
    let key = |e: &TransitionEvent| {
        (e.prev.first().copied().unwrap_or(usize::MAX), e.next.first().copied().unwrap_or(usize::MAX))
    };
    events.sort_by_key(key);
    Ok(events)
}

// Greedy pairing by maximal overlap (ties: smaller gap, then lower
// indices); leftovers join the group of their best related partner.
fn split_many_to_many(
    ps: &[usize],
    ns: &[usize],
    gap: &[Vec<f64>],
    overlap: &[Vec<usize>],
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &i in ps {
        for &j in ns {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|&(i, j), &(k, l)| {
        overlap[k][l].cmp(&overlap[i][j]).then(gap[i][j].total_cmp(&gap[k][l])).then((i, j).cmp(&(k, l)))
    });
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut group_of_prev: BTreeMap<usize, usize> = BTreeMap::new();
    let mut group_of_next: BTreeMap<usize, usize> = BTreeMap::new();
    for &(i, j) in &pairs {
        if !group_of_prev.contains_key(&i) && !group_of_next.contains_key(&j) {
            group_of_prev.insert(i, groups.len());
            group_of_next.insert(j, groups.len());
            groups.push((vec![i], vec![j]));
        }
    }
    for &(i, j) in &pairs {
        if !group_of_prev.contains_key(&i) {
            let g = group_of_next[&j];
            groups[g].0.push(i);
            group_of_prev.insert(i, g);
        }
        if !group_of_next.contains_key(&j) {
            let g = group_of_prev[&i];
            groups[g].1.push(j);
            group_of_next.insert(j, g);
        }
    }
    for g in &mut groups {
        g.0.sort_unstable();
        g.1.sort_unstable();
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BracketConfig {
    pub tol_param: f64,
    /// Refinement settings; `start_depth` is the depth of the first probes.
    pub minimal: MinimalConfig,
    /// Add one depth per halving, up to `depth_cap`.
    pub adaptive: bool,
    pub depth_cap: u32,
}

impl Default for BracketConfig {
    fn default() -> Self {
        BracketConfig {
            tol_param: 1e-3,
            minimal: MinimalConfig { start_depth: 10, max_depth: 10, ..Default::default() },
            adaptive: true,
            depth_cap: 14,
        }
    }
}

/// Finest scan used to locate a sub-bracket when both ends have the same
/// number of minimal sets (e.g. one set appears while another vanishes).
const MAX_SCAN_LEVEL: u32 = 4;

/// Bisects `[lo, hi]` on the number of minimal sets until the bracket is
/// at most `tol_param` wide, then confirms that `kind` is among the events
/// classified between the two final ends.
///
/// When both ends have equal counts, successively finer grids are scanned
/// for the first adjacent pair whose counts differ and whose classification
/// contains `kind`; bisection continues inside that pair.
#[allow(clippy::too_many_arguments)]
pub fn bracket_bifurcation(
    spec: &ModelSpec,
    param: &str,
    lo: f64,
    hi: f64,
    kind: TransitionKind,
    domain: Arc<WorkingDomain>,
    config: &BracketConfig,
    thresholds: &Thresholds,
) -> Result<Bracket, ContinuationError> {
    if !(lo < hi) {
        return Err(ContinuationError::EmptyBracket(lo, hi));
    }
    if !(config.tol_param > 0.0) {
        return Err(ContinuationError::InvalidGrid(format!("tol_param must be positive, got {}", config.tol_param)));
    }
    let start = config.minimal.start_depth;
    let cap = config.depth_cap.max(start);
    let mut probes = 0;
    let mut probe = |value: f64, depth: u32| {
        probes += 1;
        let cfg = MinimalConfig { max_depth: depth, ..config.minimal };
        sample_at(spec, param, value, &domain, &cfg)
    };

    let first = probe(lo, start)?;
    let last = probe(hi, start)?;
    let (lo_count, hi_count) = (first.count(), last.count());
    let (mut lo, mut hi, mut hi_count) = (lo, hi, hi_count);
    if lo_count == hi_count {
        let mut found = None;
        'scan: for level in 1..=MAX_SCAN_LEVEL {
            let grid = linspace(lo, hi, (1 << level) + 1);
            let mut samples = vec![first.clone()];
            for &v in &grid[1..grid.len() - 1] {
                samples.push(probe(v, start)?);
            }
            samples.push(last.clone());
            for w in samples.windows(2) {
                if w[0].count() != w[1].count()
                    && classify_transition(&w[0], &w[1], thresholds)?.iter().any(|e| e.kind == kind)
                {
                    found = Some((w[0].param, w[1].param, w[1].count()));
                    break 'scan;
                }
            }
        }
        match found {
            Some((a, b, c)) => (lo, hi, hi_count) = (a, b, c),
            None => return Err(ContinuationError::NoEvent { kind, lo_count, hi_count }),
        }
    }

    let mut depth = start;
    while hi - lo > config.tol_param {
        if config.adaptive {
            depth = (depth + 1).min(cap);
        }
        let mid = lo + (hi - lo) / 2.0;
        if probe(mid, depth)?.count() == hi_count {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = probe(lo, depth)?;
    let b = probe(hi, depth)?;
    let found = classify_transition(&a, &b, thresholds)?.iter().any(|e| e.kind == kind);
    if !found {
        let mid = lo + (hi - lo) / 2.0;
        return Err(ContinuationError::EventLost { kind, left: (lo, mid), right: (mid, hi) });
    }
    Ok(Bracket { lo, hi, kind, depth, probes })
}

/// Smallest box-to-box distance between `m` and its dual set, computed on
/// the full cover at `m`'s depth. Vanishes (up to a box) at bifurcations.
pub fn dual_gap(map: &dyn SetValuedMap, m: &MinimalSetApproximation) -> Result<f64, ContinuationError> {
    let full = BoxCover::full(m.cover.domain_arc().clone(), m.depth())?;
    let g = build_graph(map, &full)?;
    let nodes = g.nodes_of(&m.cover)?;
    if check_invariant(&g, &nodes).is_err() {
        return Err(ContinuationError::NotInvariant);
    }
    match dual_set(&g, &nodes)? {
        DualSet::GloballyAttractive => Err(ContinuationError::GloballyAttractive),
        DualSet::Set(s) => {
            let dual = g.cover_of(&s).expect("non-global dual set is nonempty");
            Ok(cover_gap(&m.cover, &dual)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    record: &'a str,
    param: f64,
    to_param: Option<f64>,
    index: String,
    kind: String,
    lo: Option<f64>,
    hi: Option<f64>,
    box_count: Option<usize>,
    depth: Option<u32>,
}

impl ContinuationReport {
    /// One row per (parameter, approximation) with hull endpoints of the
    /// first axis, then one row per transition.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            for (i, a) in s.approximations.iter().enumerate() {
                let hull = a.hull()[0];
                w.serialize(CsvRow {
                    record: "lineage",
                    param: s.param,
                    to_param: None,
                    index: i.to_string(),
                    kind: format!("{:?}", a.side).to_lowercase(),
                    lo: Some(hull.lo),
                    hi: Some(hull.hi),
                    box_count: Some(a.cover.len()),
                    depth: Some(a.depth()),
                })?;
            }
        }
        for t in &self.transitions {
            let idx = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            w.serialize(CsvRow {
                record: "transition",
                param: t.from_param,
                to_param: Some(t.to_param),
                index: format!("{}>{}", idx(&t.prev), idx(&t.next)),
                kind: t.kind.to_string(),
                lo: None,
                hi: None,
                box_count: None,
                depth: None,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn events(&self, kind: TransitionKind) -> impl Iterator<Item = &TransitionEvent> {
        self.transitions.iter().filter(move |t| t.kind == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Interval;
    use crate::minimal::Side;
    use crate::models::ContractionMap;

    fn line(lo: f64, hi: f64) -> Arc<WorkingDomain> {
        Arc::new(WorkingDomain::interval(lo, hi).unwrap())
    }

    fn approx(dom: &Arc<WorkingDomain>, depth: u32, lo: f64, hi: f64) -> MinimalSetApproximation {
        MinimalSetApproximation {
            cover: BoxCover::of_region(dom.clone(), depth, &[Interval::new(lo, hi)]).unwrap(),
            side: Side::Forward,
            depth_history: Vec::new(),
            certified_forward_invariant: true,
            contraction_steps: Vec::new(),
        }
    }

    fn sample(param: f64, approximations: Vec<MinimalSetApproximation>) -> Sample {
        Sample { param, approximations, error: None }
    }

    #[test]
    fn identical_samples_are_continuous() {
        let dom = line(-4.0, 4.0);
        let s = sample(0.0, vec![approx(&dom, 8, -1.2, -0.8), approx(&dom, 8, 0.8, 1.2)]);
        let ev = classify_transition(&s, &s, &Thresholds::default()).unwrap();
        assert_eq!(ev.len(), 2);
        for (k, e) in ev.iter().enumerate() {
            assert_eq!(e.kind, TransitionKind::Continuous);
            assert_eq!((e.prev.clone(), e.next.clone()), (vec![k], vec![k]));
            assert_eq!(e.evidence.semi_forward, Some(0.0));
        }
    }

    #[test]
    fn two_sets_into_one_is_explosion() {
        let dom = line(-4.0, 4.0);
        let prev = sample(1.74, vec![approx(&dom, 10, -1.18, -0.77), approx(&dom, 10, 0.77, 1.18)]);
        let next = sample(1.73, vec![approx(&dom, 10, -1.18, 1.18)]);
        let ev = classify_transition(&prev, &next, &Thresholds::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, TransitionKind::Explosion);
        assert!(ev[0].evidence.one_sided);
        assert_eq!(ev[0].prev, vec![0, 1]);
    }

    #[test]
    fn nearby_pair_is_merge_candidate() {
        let dom = line(-4.0, 4.0);
        let prev = sample(0.0, vec![approx(&dom, 8, -2.0, 2.0)]);
        let next = sample(0.025, vec![approx(&dom, 8, -2.05, -0.05), approx(&dom, 8, 0.05, 2.05)]);
        let ev = classify_transition(&prev, &next, &Thresholds::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, TransitionKind::MergeCandidate);
    }

    #[test]
    fn isolated_new_set_appears() {
        let dom = line(-4.0, 4.0);
        let prev = sample(-0.08, vec![approx(&dom, 10, -1.3, -0.9)]);
        let next = sample(-0.07, vec![approx(&dom, 10, -1.3, -0.9), approx(&dom, 10, 0.4, 1.0)]);
        let ev = classify_transition(&prev, &next, &Thresholds::default()).unwrap();
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![TransitionKind::Continuous, TransitionKind::Appearance]);
        let back = classify_transition(&next, &prev, &Thresholds::default()).unwrap();
        assert!(back.iter().any(|e| e.kind == TransitionKind::Disappearance));
    }

    #[test]
    fn large_shift_is_flagged() {
        let dom = line(-4.0, 4.0);
        let prev = sample(0.0, vec![approx(&dom, 8, 0.0, 0.5)]);
        let next = sample(1.0, vec![approx(&dom, 8, 0.1, 0.6)]);
        let ev = classify_transition(&prev, &next, &Thresholds::default()).unwrap();
        assert_eq!(ev[0].kind, TransitionKind::Continuous);
        assert!(ev[0].evidence.beyond_threshold);
    }

    #[test]
    fn depth_mismatch() {
        let dom = line(-4.0, 4.0);
        let prev = sample(0.0, vec![approx(&dom, 8, 0.0, 0.5)]);
        let next = sample(1.0, vec![approx(&dom, 9, 0.0, 0.5)]);
        assert_eq!(
            classify_transition(&prev, &next, &Thresholds::default()),
            Err(ContinuationError::DepthMismatch(8, 9))
        );
    }

    #[test]
    fn many_to_many_pairs_by_overlap() {
        let dom = line(-4.0, 4.0);
        let prev = sample(0.0, vec![approx(&dom, 8, -1.0, -0.1), approx(&dom, 8, 0.0, 1.0)]);
        let next = sample(0.1, vec![approx(&dom, 8, -1.0, -0.1), approx(&dom, 8, 0.0, 1.0)]);
        let ev = classify_transition(&prev, &next, &Thresholds::default()).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.kind == TransitionKind::Continuous && e.prev == e.next));
    }

    #[test]
    fn single_point_sweep_has_no_transitions() {
        let spec = ModelSpec::new("contraction").set("L", 0.5).set("eps", 0.1);
        let cfg = MinimalConfig { start_depth: 3, max_depth: 6, ..Default::default() };
        let r = sweep(&spec, "eps", &[0.1], line(-1.0, 1.0), &cfg, &Thresholds::default()).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert!(r.transitions.is_empty());
        assert!(sweep(&spec, "eps", &[0.2, 0.1], line(-1.0, 1.0), &cfg, &Thresholds::default()).is_err());
    }

    #[test]
    fn sweep_records_failures() {
        let spec = ModelSpec::new("contraction").set("L", 0.5).set("eps", 0.1);
        let cfg = MinimalConfig { start_depth: 3, max_depth: 5, ..Default::default() };
        // eps = 0.9 pushes images out of [-1, 1]
        let r = sweep(&spec, "eps", &[0.1, 0.9], line(-1.0, 1.0), &cfg, &Thresholds::default()).unwrap();
        assert!(r.samples[1].error.is_some());
        assert!(r.transitions.is_empty());
    }

    #[test]
    fn empty_bracket_rejected() {
        let spec = ModelSpec::new("saturating").set("alpha", 2.0).set("eps", 0.1);
        let err = bracket_bifurcation(
            &spec,
            "alpha",
            1.7,
            1.7,
            TransitionKind::Explosion,
            line(-4.0, 4.0),
            &BracketConfig::default(),
            &Thresholds::default(),
        )
        .unwrap_err();
        assert_eq!(err, ContinuationError::EmptyBracket(1.7, 1.7));
    }

    #[test]
    fn contraction_gap_is_global() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let a = crate::minimal::contract_to_fixed_cover(&m, line(-1.0, 1.0), 6, 100).unwrap();
        assert_eq!(dual_gap(&m, &a), Err(ContinuationError::GloballyAttractive));
    }

    #[test]
    fn csv_has_lineage_and_transition_rows() {
        let dom = line(-4.0, 4.0);
        let s0 = sample(0.0, vec![approx(&dom, 8, 0.0, 0.5)]);
        let s1 = sample(1.0, vec![approx(&dom, 8, 0.0, 0.5)]);
        let transitions = classify_transition(&s0, &s1, &Thresholds::default()).unwrap();
        let report = ContinuationReport {
            note: REPORT_NOTE.into(),
            model: ModelSpec::new("merging").set("lambda", 0.0),
            param_name: "lambda".into(),
            domain: dom.as_ref().clone(),
            minimal: MinimalConfig::default(),
            thresholds: Thresholds::default(),
            samples: vec![s0, s1],
            transitions,
            brackets: Vec::new(),
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "record,param,to_param,index,kind,lo,hi,box_count,depth");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("transition,0.0,1.0,0>0,continuous"));
    }

    #[test]
    fn linspace_hits_both_ends() {
        let g = linspace(1.6, 1.9, 31);
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 1.6);
        assert_eq!(g[30], 1.9);
        assert!((g[13] - 1.73).abs() < 1e-12);
    }
}
