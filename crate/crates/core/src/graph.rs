//! Box-transition graphs of a set-valued map over a cover.
//!
//! Node `b` has an edge to `b'` iff the enclosure of `F(b)` meets the closed
//! box `b'` (touching faces count). Reversing every edge gives the graph of
//! the dual map `F*(ξ) = {x : ξ ∈ F(x)}`.
//!
//! When the graph is built on a partial cover, nodes whose image reaches
//! boxes outside the cover are flagged as exits; such nodes never belong to
//! a terminal component.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{for_each_in_ranges, BoxCover, DyadicBox, GeometryError, Interval, WorkingDomain};
use crate::models::{enclose_in, ModelError, SetValuedMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("image of box {coords:?} leaves the working domain: {image:?}")]
    NotAbsorbing { coords: Vec<u32>, image: Vec<Interval> },
    #[error("map dimension {map} does not match cover dimension {cover}")]
    DimensionMismatch { map: usize, cover: usize },
    #[error("node set must be nonempty")]
    EmptySeed,
    #[error("node set is not forward invariant: node {node} escapes")]
    NotInvariant { node: u32 },
    #[error("node {0} is not in the graph")]
    InvalidNode(u32),
    #[error("box {0:?} is not in the graph's cover")]
    NotInCover(Vec<u32>),
}

/// Sorted, duplicate-free node indices of one graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct NodeSet(Vec<u32>);

impl NodeSet {
    pub fn new(mut nodes: Vec<u32>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        NodeSet(nodes)
    }

    fn from_mask(mask: &[bool]) -> Self {
        NodeSet((0..mask.len() as u32).filter(|&i| mask[i as usize]).collect())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: u32) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.iter().all(|&n| other.contains(n))
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.iter().all(|&n| !other.contains(n))
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet::new(self.0.iter().chain(&other.0).copied().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.0 {
            m[i as usize] = true;
        }
        m
    }
}

impl FromIterator<u32> for NodeSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        NodeSet::new(iter.into_iter().collect())
    }
}

/// How far `reachable` follows edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steps {
    Bounded(u32),
    Unbounded,
}

/// Result of [`dual_set`].
#[derive(Debug, Clone, PartialEq)]
pub enum DualSet {
    Set(NodeSet),
    /// `A(M)` is the whole cover, so the dual set is empty.
    GloballyAttractive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    cover: BoxCover,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    exits: Vec<bool>,
    // exits of the reversed graph; kept so that dual(dual(g)) == g
    entries: Vec<bool>,
}

/// Builds the transition graph of `map` on `cover`. Images are clipped to
/// the working domain; images leaving it signal `NotAbsorbing`.
pub fn build_graph(map: &dyn SetValuedMap, cover: &BoxCover) -> Result<TransitionGraph, GraphError> {
    if map.dimension() != cover.dimension() {
        return Err(GraphError::DimensionMismatch { map: map.dimension(), cover: cover.dimension() });
    }
    let rows: Vec<(Vec<u32>, bool)> =
        (0..cover.len()).into_par_iter().map(|i| successors(map, cover, i)).collect::<Result<_, _>>()?;
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let mut targets = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
    let mut exits = Vec::with_capacity(rows.len());
    for (row, exit) in rows {
        targets.extend(row);
        offsets.push(targets.len());
        exits.push(exit);
    }
    let n = cover.len();
    Ok(TransitionGraph { cover: cover.clone(), offsets, targets, exits, entries: vec![false; n] })
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    cover: BoxCover,
    edges: Vec<(u32, u32)>,
    #[serde(default)]
    exits: Vec<u32>,
    #[serde(default)]
    entries: Vec<u32>,
}

fn flagged(flags: &[bool]) -> Vec<u32> {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i as u32).collect()
}

impl Serialize for TransitionGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson {
            cover: self.cover.clone(),
            edges: self.edges().collect(),
            exits: flagged(&self.exits),
            entries: flagged(&self.entries),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = GraphJson::deserialize(d)?;
        let n = raw.cover.len();
        let mut adjacency = vec![Vec::new(); n];
        for (v, w) in raw.edges {
            adjacency.get_mut(v as usize).ok_or_else(|| D::Error::custom(GraphError::InvalidNode(v)))?.push(w);
        }
        let mut g = TransitionGraph::from_adjacency(raw.cover, adjacency).map_err(D::Error::custom)?;
        for (list, flags) in [(raw.exits, &mut g.exits), (raw.entries, &mut g.entries)] {
            for v in list {
                *flags.get_mut(v as usize).ok_or_else(|| D::Error::custom(GraphError::InvalidNode(v)))? = true;
            }
        }
        Ok(g)
    }
}

fn image_ranges(
    map: &dyn SetValuedMap,
    domain: &WorkingDomain,
    depth: u32,
    coords: &[u32],
    b: &[Interval],
) -> Result<Vec<Vec<(u32, u32)>>, GraphError> {
    let image = enclose_in(map, b, domain).map_err(|e| match e {
        ModelError::NotAbsorbing { image } => GraphError::NotAbsorbing { coords: coords.to_vec(), image },
        other => GraphError::Model(other),
    })?;
    Ok(image
        .pieces
        .iter()
        .filter_map(|piece| {
            piece
                .iter()
                .enumerate()
                .map(|(axis, iv)| domain.closed_range(axis, depth, iv.lo, iv.hi))
                .collect::<Option<Vec<_>>>()
        })
        .collect())
}

// Calls `hit(a, b)` for each run `a..b` of cover indices met by `ranges`;
// returns true when some grid box in `ranges` is not in the cover.
fn cover_hits(cover: &BoxCover, ranges: &[(u32, u32)], mut hit: impl FnMut(usize, usize)) -> bool {
    if cover.dimension() == 1 {
        let flat = cover.flat_coords();
        let (k0, k1) = ranges[0];
        let a = flat.partition_point(|&c| c < k0);
        let b = flat.partition_point(|&c| c <= k1);
        if b > a {
            hit(a, b);
        }
        b - a < (k1 - k0 + 1) as usize
    } else {
        let mut missed = false;
        for_each_in_ranges(ranges, |c| match cover.index_of(c) {
            Some(j) => hit(j, j + 1),
            None => missed = true,
        });
        missed
    }
}

fn successors(map: &dyn SetValuedMap, cover: &BoxCover, i: usize) -> Result<(Vec<u32>, bool), GraphError> {
    let b = cover.realize(i);
    let mut out = Vec::new();
    let mut exit = false;
    for ranges in image_ranges(map, cover.domain(), cover.depth(), cover.coords(i), &b)? {
        exit |= cover_hits(cover, &ranges, |a, b| out.extend(a as u32..b as u32));
    }
    out.sort_unstable();
    out.dedup();
    Ok((out, exit))
}

/// Flags every node hit by the image of a domain box outside the graph's
/// cover. Such nodes are exits of the dual graph, so dual terminal
/// components found on a partial cover are genuine.
pub fn mark_entries(map: &dyn SetValuedMap, graph: &mut TransitionGraph) -> Result<(), GraphError> {
    let cover = &graph.cover;
    let domain = cover.domain();
    let depth = cover.depth();
    let side = 1u32 << depth;
    let d = cover.dimension();
    let runs: Vec<Vec<(usize, usize)>> = (0..side)
        .into_par_iter()
        .map(|k0| {
            let mut ranges = vec![(0, side - 1); d];
            ranges[0] = (k0, k0);
            let mut runs = Vec::new();
            let mut err = None;
            for_each_in_ranges(&ranges, |c| {
                if err.is_some() || cover.contains_box(c) {
                    return;
                }
                let b = DyadicBox { depth, coords: c.to_vec() }.realize(domain);
                match image_ranges(map, domain, depth, c, &b) {
                    Ok(pieces) => {
                        for r in pieces {
                            cover_hits(cover, &r, |a, b| runs.push((a, b)));
                        }
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(runs),
            }
        })
        .collect::<Result<_, _>>()?;
    let n = graph.node_count();
    let mut diff = vec![0i64; n + 1];
    for (a, b) in runs.into_iter().flatten() {
        diff[a] += 1;
        diff[b] -= 1;
    }
    let mut acc = 0;
    for (v, entry) in graph.entries.iter_mut().enumerate() {
        acc += diff[v];
        *entry = acc > 0;
    }
    Ok(())
}

impl TransitionGraph {
    /// Assembles a graph from explicit adjacency lists (mainly for tests).
    pub fn from_adjacency(cover: BoxCover, adjacency: Vec<Vec<u32>>) -> Result<Self, GraphError> {
        let n = cover.len();
        assert_eq!(adjacency.len(), n, "one adjacency row per cover box");
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        for mut row in adjacency {
            row.sort_unstable();
            row.dedup();
            if let Some(&bad) = row.iter().find(|&&j| j as usize >= n) {
                return Err(GraphError::InvalidNode(bad));
            }
            targets.extend(row);
            offsets.push(targets.len());
        }
        Ok(TransitionGraph { cover, offsets, targets, exits: vec![false; n], entries: vec![false; n] })
    }

    pub fn cover(&self) -> &BoxCover {
        &self.cover
    }

    pub fn node_count(&self) -> usize {
        self.cover.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, node: u32) -> &[u32] {
        let v = node as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// True when the image of `node` reaches boxes outside the cover.
    pub fn is_exit(&self, node: u32) -> bool {
        self.exits[node as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count() as u32).flat_map(move |v| self.successors(v).iter().map(move |&w| (v, w)))
    }

    pub fn all_nodes(&self) -> NodeSet {
        NodeSet((0..self.node_count() as u32).collect())
    }

    /// Boxes of a node set as a cover; `None` for the empty set.
    pub fn cover_of(&self, nodes: &NodeSet) -> Option<BoxCover> {
        if nodes.is_empty() {
            return None;
        }
        let mut flat = Vec::with_capacity(nodes.len() * self.cover.dimension());
        for v in nodes.iter() {
            flat.extend_from_slice(self.cover.coords(v as usize));
        }
        Some(BoxCover::from_flat_unchecked(self.cover.domain_arc().clone(), self.cover.depth(), flat))
    }

    /// Node indices of a same-depth cover; every box must be a node.
    pub fn nodes_of(&self, cover: &BoxCover) -> Result<NodeSet, GraphError> {
        if cover.depth() != self.cover.depth() {
            return Err(GeometryError::DepthMismatch(cover.depth(), self.cover.depth()).into());
        }
        if cover.domain() != self.cover.domain() {
            return Err(GeometryError::DomainMismatch.into());
        }
        cover
            .iter()
            .map(|c| self.cover.index_of(c).map(|i| i as u32).ok_or_else(|| GraphError::NotInCover(c.to_vec())))
            .collect::<Result<Vec<_>, _>>()
            .map(NodeSet::new)
    }

    /// The same cover with every edge reversed.
    pub fn dual(&self) -> TransitionGraph {
        let n = self.node_count();
        let mut counts = vec![0usize; n + 1];
        for &w in &self.targets {
            counts[w as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut targets = vec![0u32; self.targets.len()];
        for v in 0..n as u32 {
            for &w in self.successors(v) {
                targets[fill[w as usize]] = v;
                fill[w as usize] += 1;
            }
        }
        TransitionGraph {
            cover: self.cover.clone(),
            offsets,
            targets,
            exits: self.entries.clone(),
            entries: self.exits.clone(),
        }
    }

    /// Nodes of the cover within one index step (face or corner) of `set`,
    /// including `set` itself.
    pub fn ring(&self, set: &NodeSet) -> NodeSet {
        let Some(cover) = self.cover_of(set) else {
            return NodeSet::default();
        };
        let grown = cover.grow_rings(1);
        grown.iter().filter_map(|c| self.cover.index_of(c).map(|i| i as u32)).collect()
    }

    /// Subgraph induced by `nodes`, together with the original index of
    /// each new node. Edges leaving `nodes` turn into exit flags.
    pub fn induced(&self, nodes: &NodeSet) -> Result<(TransitionGraph, Vec<u32>), GraphError> {
        self.check_nodes(nodes)?;
        let cover = self.cover_of(nodes).ok_or(GraphError::EmptySeed)?;
        let index = |v: u32| nodes.as_slice().binary_search(&v).ok().map(|i| i as u32);
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut exits = Vec::with_capacity(nodes.len());
        let inside = nodes.mask(self.node_count());
        let mut entered = vec![false; self.node_count()];
        for (v, w) in self.edges() {
            if !inside[v as usize] && inside[w as usize] {
                entered[w as usize] = true;
            }
        }
        let mut entries = Vec::with_capacity(nodes.len());
        for v in nodes.iter() {
            let mut exit = self.is_exit(v);
            for &w in self.successors(v) {
                match index(w) {
                    Some(j) => targets.push(j),
                    None => exit = true,
                }
            }
            offsets.push(targets.len());
            exits.push(exit);
            entries.push(self.entries[v as usize] || entered[v as usize]);
        }
        let g = TransitionGraph { cover, offsets, targets, exits, entries };
        Ok((g, nodes.as_slice().to_vec()))
    }

    /// Edge list, one `i -> j` per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (v, w) in self.edges() {
            let _ = writeln!(out, "{v} -> {w}");
        }
        out
    }

    /// Parses an edge list produced by [`to_edge_list`](Self::to_edge_list).
    pub fn from_edge_list(cover: BoxCover, text: &str) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); cover.len()];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (a, b) = line.split_once("->").ok_or(GraphError::InvalidNode(u32::MAX))?;
            let v: u32 = a.trim().parse().map_err(|_| GraphError::InvalidNode(u32::MAX))?;
            let w: u32 = b.trim().parse().map_err(|_| GraphError::InvalidNode(u32::MAX))?;
            adjacency.get_mut(v as usize).ok_or(GraphError::InvalidNode(v))?.push(w);
        }
        Self::from_adjacency(cover, adjacency)
    }

    fn check_nodes(&self, set: &NodeSet) -> Result<(), GraphError> {
        match set.iter().find(|&v| v as usize >= self.node_count()) {
            Some(v) => Err(GraphError::InvalidNode(v)),
            None => Ok(()),
        }
    }
}

/// Nodes reached by walks of length `0..=steps` from `seed`.
pub fn reachable(graph: &TransitionGraph, seed: &NodeSet, steps: Steps) -> Result<NodeSet, GraphError> {
    if seed.is_empty() {
        return Err(GraphError::EmptySeed);
    }
    graph.check_nodes(seed)?;
    let limit = match steps {
        Steps::Bounded(k) => k,
        Steps::Unbounded => u32::MAX,
    };
    let mut seen = seed.mask(graph.node_count());
    let mut frontier: Vec<u32> = seed.as_slice().to_vec();
    let mut t = 0;
    while !frontier.is_empty() && t < limit {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in graph.successors(v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    next.push(w);
                }
            }
        }
        frontier = next;
        t += 1;
    }
    Ok(NodeSet::from_mask(&seen))
}

/// Nodes reached by walks of length exactly `steps`: the discrete `Φ(steps, seed)`.
pub fn image(graph: &TransitionGraph, seed: &NodeSet, steps: u32) -> Result<NodeSet, GraphError> {
    if seed.is_empty() {
        return Err(GraphError::EmptySeed);
    }
    graph.check_nodes(seed)?;
    let n = graph.node_count();
    let mut current = seed.clone();
    for _ in 0..steps {
        let mut mask = vec![false; n];
        for v in current.iter() {
            for &w in graph.successors(v) {
                mask[w as usize] = true;
            }
        }
        current = NodeSet::from_mask(&mask);
        if current.is_empty() {
            break;
        }
    }
    Ok(current)
}

/// Strongly connected components (iterative Tarjan). Returns the component
/// id of every node and the number of components; ids are assigned in
/// reverse topological order (sinks first).
pub fn scc_ids(graph: &TransitionGraph) -> (Vec<u32>, usize) {
    const UNSEEN: u32 = u32::MAX;
    let n = graph.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut comp = vec![UNSEEN; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut calls: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;

    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        calls.push((root, graph.offsets[root as usize]));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut pos)) = calls.last_mut() {
            let vi = v as usize;
            if *pos < graph.offsets[vi + 1] {
                let w = graph.targets[*pos];
                *pos += 1;
                let wi = w as usize;
                if index[wi] == UNSEEN {
                    index[wi] = next_index;
                    low[wi] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    calls.push((w, graph.offsets[wi]));
                } else if on_stack[wi] {
                    low[vi] = low[vi].min(index[wi]);
                }
                continue;
            }
            calls.pop();
            if low[vi] == index[vi] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w as usize] = false;
                    comp[w as usize] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
            if let Some(&(parent, _)) = calls.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[vi]);
            }
        }
    }
    (comp, next_comp as usize)
}

struct Components {
    ids: Vec<u32>,
    members: Vec<Vec<u32>>,
    cyclic: Vec<bool>,
    terminal: Vec<bool>,
}

fn components(graph: &TransitionGraph) -> Components {
    let (ids, count) = scc_ids(graph);
    let mut members = vec![Vec::new(); count];
    for (v, &c) in ids.iter().enumerate() {
        members[c as usize].push(v as u32);
    }
    let mut cyclic = vec![false; count];
    let mut terminal = vec![true; count];
    for v in 0..graph.node_count() as u32 {
        let c = ids[v as usize] as usize;
        if graph.is_exit(v) {
            terminal[c] = false;
        }
        for &w in graph.successors(v) {
            if ids[w as usize] as usize == c {
                cyclic[c] = true;
            } else {
                terminal[c] = false;
            }
        }
    }
    Components { ids, members, cyclic, terminal }
}

/// Strongly connected components that carry a cycle and have no edge (or
/// exit) leaving them: the discrete witnesses of minimal invariant sets.
/// Sorted by smallest node.
pub fn terminal_sccs(graph: &TransitionGraph) -> Vec<NodeSet> {
    let comps = components(graph);
    let mut out: Vec<NodeSet> = comps
        .members
        .into_iter()
        .enumerate()
        .filter(|(c, _)| comps.cyclic[*c] && comps.terminal[*c])
        .map(|(_, m)| NodeSet::new(m))
        .collect();
    out.sort();
    out
}

/// Nodes visited by arbitrarily long walks from `seed`: everything reachable
/// from a cycle that is itself reachable from `seed`.
pub fn omega_limit(graph: &TransitionGraph, seed: &NodeSet) -> Result<NodeSet, GraphError> {
    let reach = reachable(graph, seed, Steps::Unbounded)?;
    let comps = components(graph);
    let cyclic_nodes: NodeSet = reach.iter().filter(|&v| comps.cyclic[comps.ids[v as usize] as usize]).collect();
    if cyclic_nodes.is_empty() {
        // every walk dies: nothing survives forever
        return Ok(NodeSet::default());
    }
    reachable(graph, &cyclic_nodes, Steps::Unbounded)
}

/// Errors unless `m` is nonempty and no edge or exit leaves it.
pub fn check_invariant(graph: &TransitionGraph, m: &NodeSet) -> Result<(), GraphError> {
    if m.is_empty() {
        return Err(GraphError::EmptySeed);
    }
    graph.check_nodes(m)?;
    for v in m.iter() {
        if graph.is_exit(v) || graph.successors(v).iter().any(|&w| !m.contains(w)) {
            return Err(GraphError::NotInvariant { node: v });
        }
    }
    Ok(())
}

/// Nodes that cannot reach a terminal component outside `m`, an exit or a
/// dead end. Transient cycles (spurious self-loops of the outer
/// approximation) do not disqualify a node: every way out of them still
/// leads to `m`.
pub fn domain_of_attraction(graph: &TransitionGraph, m: &NodeSet) -> Result<NodeSet, GraphError> {
    check_invariant(graph, m)?;
    let comps = components(graph);
    let n = graph.node_count();
    let in_m = m.mask(n);
    let bad: NodeSet = (0..n as u32)
        .filter(|&v| {
            let c = comps.ids[v as usize] as usize;
            (comps.cyclic[c] && comps.terminal[c] && !in_m[v as usize])
                || graph.is_exit(v)
                || graph.successors(v).is_empty()
        })
        .collect();
    let attracted = if bad.is_empty() {
        graph.all_nodes()
    } else {
        let doomed = reachable(&graph.dual(), &bad, Steps::Unbounded)?;
        let mask = doomed.mask(n);
        (0..n as u32).filter(|&v| !mask[v as usize]).collect()
    };
    Ok(attracted)
}

/// Nodes of `A(m)` whose whole forward orbit stays one box ring away from
/// the boundary of `A(m)`.
pub fn robust_domain(graph: &TransitionGraph, m: &NodeSet) -> Result<NodeSet, GraphError> {
    let basin = domain_of_attraction(graph, m)?;
    let n = graph.node_count();
    let in_basin = basin.mask(n);
    let boundary: NodeSet = basin
        .iter()
        .filter(|&v| {
            let single = NodeSet(vec![v]);
            graph.ring(&single).iter().any(|w| !in_basin[w as usize])
        })
        .collect();
    if boundary.is_empty() {
        return Ok(basin);
    }
    let touching = reachable(&graph.dual(), &boundary, Steps::Unbounded)?.mask(n);
    Ok(basin.iter().filter(|&v| !touching[v as usize]).collect())
}

/// The dual set `M* = X \ A₋(M)`, or `GloballyAttractive` when `A(M)` is
/// the whole cover.
pub fn dual_set(graph: &TransitionGraph, m: &NodeSet) -> Result<DualSet, GraphError> {
    let basin = domain_of_attraction(graph, m)?;
    if basin.len() == graph.node_count() {
        return Ok(DualSet::GloballyAttractive);
    }
    let robust = robust_domain(graph, m)?.mask(graph.node_count());
    Ok(DualSet::Set((0..graph.node_count() as u32).filter(|&v| !robust[v as usize]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WorkingDomain;
    use crate::models::{ContractionMap, MergingMap, SaturatingMap};
    use std::sync::Arc;

    fn line(lo: f64, hi: f64) -> Arc<WorkingDomain> {
        Arc::new(WorkingDomain::interval(lo, hi).unwrap())
    }

    fn chain(adjacency: Vec<Vec<u32>>) -> TransitionGraph {
        let n = adjacency.len() as u32;
        let cover = BoxCover::from_flat(line(0.0, 1.0), 6, (0..n).collect()).unwrap();
        TransitionGraph::from_adjacency(cover, adjacency).unwrap()
    }

    fn node_at(g: &TransitionGraph, x: f64) -> u32 {
        (0..g.node_count())
            .find(|&i| {
                let b = g.cover().realize(i)[0];
                b.lo <= x && x < b.hi
            })
            .unwrap() as u32
    }

    #[test]
    fn contraction_single_box_self_loop() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let cover = BoxCover::full(line(-1.0, 1.0), 0).unwrap();
        let g = build_graph(&m, &cover).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 0)]);
        assert_eq!(g.dual(), g);
        assert_eq!(terminal_sccs(&g), vec![NodeSet::new(vec![0])]);
    }

    #[test]
    fn saturating_fixed_point_box_has_self_loop() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let g = build_graph(&m, &BoxCover::full(line(-4.0, 4.0), 6).unwrap()).unwrap();
        let v = node_at(&g, 1.0);
        assert!(g.successors(v).contains(&v));
    }

    #[test]
    fn json_round_trip_keeps_exit_flags() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let full = BoxCover::full(line(-4.0, 4.0), 5).unwrap();
        let g = build_graph(&m, &full).unwrap();
        let (sub, _) = g.induced(&NodeSet::new((4..20).collect())).unwrap();
        for graph in [g, sub.clone(), sub.dual()] {
            let text = serde_json::to_string(&graph).unwrap();
            assert_eq!(serde_json::from_str::<TransitionGraph>(&text).unwrap(), graph);
        }
        let bad = r#"{"cover":{"domain":{"lo":[0.0],"hi":[1.0]},"depth":1,"boxes":[[0]]},"edges":[[0,3]]}"#;
        assert!(serde_json::from_str::<TransitionGraph>(bad).is_err());
    }

    #[test]
    fn merging_zero_box_feeds_both_sides() {
        let m = MergingMap::new(0.5).unwrap();
        let g = build_graph(&m, &BoxCover::full(line(-4.0, 4.0), 4).unwrap()).unwrap();
        // 0 is a grid point: both adjacent boxes contain it
        for v in [node_at(&g, -0.1), node_at(&g, 0.0)] {
            let hit = g.cover_of(&NodeSet::new(g.successors(v).to_vec())).unwrap();
            let hull = hit.hull()[0];
            assert!(hull.lo <= -2.0 && hull.hi >= 2.0, "{hull}");
        }
    }

    #[test]
    fn not_absorbing_reports_box() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let err = build_graph(&m, &BoxCover::full(line(-1.0, 1.0), 3).unwrap()).unwrap_err();
        assert!(matches!(err, GraphError::NotAbsorbing { .. }), "{err:?}");
    }

    #[test]
    fn dual_is_an_involution() {
        let g = chain(vec![vec![1, 2], vec![2], vec![0, 3], vec![3]]);
        let d = g.dual();
        assert_eq!(d.successors(2), &[0, 1]);
        assert_eq!(d.dual(), g);
    }

    #[test]
    fn reachable_and_image() {
        let g = chain(vec![vec![1], vec![2], vec![3], vec![3]]);
        let s = NodeSet::new(vec![0]);
        assert_eq!(reachable(&g, &s, Steps::Bounded(1)).unwrap(), NodeSet::new(vec![0, 1]));
        assert_eq!(image(&g, &s, 1).unwrap(), NodeSet::new(vec![1]));
        assert_eq!(image(&g, &s, 5).unwrap(), NodeSet::new(vec![3]));
        assert_eq!(reachable(&g, &s, Steps::Unbounded).unwrap(), g.all_nodes());
        let t = NodeSet::new(vec![3]);
        assert_eq!(reachable(&g, &t, Steps::Unbounded).unwrap(), t);
        assert_eq!(reachable(&g, &NodeSet::default(), Steps::Unbounded), Err(GraphError::EmptySeed));
    }

    #[test]
    fn terminal_components() {
        // 0 <-> 1 -> 2 <-> 3, 4 -> 4, 5 dead end
        let g = chain(vec![vec![1], vec![0, 2], vec![3], vec![2], vec![4], vec![]]);
        assert_eq!(terminal_sccs(&g), vec![NodeSet::new(vec![2, 3]), NodeSet::new(vec![4])]);
    }

    #[test]
    fn omega_limit_of_chain() {
        let g = chain(vec![vec![1], vec![2], vec![3], vec![3]]);
        assert_eq!(omega_limit(&g, &NodeSet::new(vec![0])).unwrap(), NodeSet::new(vec![3]));
        let h = chain(vec![vec![1], vec![0, 2], vec![3], vec![2]]);
        // the cycle {0,1} feeds {2,3}
        assert_eq!(omega_limit(&h, &NodeSet::new(vec![0])).unwrap(), h.all_nodes());
    }

    #[test]
    fn basin_excludes_nodes_feeding_other_cycles() {
        // 0 -> {1, 3}; 1 -> 2 -> 2; 3 -> 4 -> 4
        let g = chain(vec![vec![1, 3], vec![2], vec![2], vec![4], vec![4]]);
        let m = NodeSet::new(vec![2]);
        assert_eq!(domain_of_attraction(&g, &m).unwrap(), NodeSet::new(vec![1, 2]));
        assert_eq!(domain_of_attraction(&g, &NodeSet::new(vec![1])), Err(GraphError::NotInvariant { node: 1 }));
    }

    #[test]
    fn contraction_is_globally_attractive() {
        let m = ContractionMap::new(0.5, 0.1).unwrap();
        let g = build_graph(&m, &BoxCover::full(line(-1.0, 1.0), 6).unwrap()).unwrap();
        let sccs = terminal_sccs(&g);
        assert_eq!(sccs.len(), 1);
        assert_eq!(domain_of_attraction(&g, &sccs[0]).unwrap(), g.all_nodes());
        assert_eq!(robust_domain(&g, &sccs[0]).unwrap(), g.all_nodes());
        assert_eq!(dual_set(&g, &sccs[0]).unwrap(), DualSet::GloballyAttractive);
    }

    #[test]
    fn merging_zero_box_in_dual_set() {
        let m = MergingMap::new(0.5).unwrap();
        let g = build_graph(&m, &BoxCover::full(line(-4.0, 4.0), 6).unwrap()).unwrap();
        let sccs = terminal_sccs(&g);
        assert_eq!(sccs.len(), 2);
        let left = &sccs[0];
        let basin = domain_of_attraction(&g, left).unwrap();
        let zero = [node_at(&g, -0.01), node_at(&g, 0.0)];
        assert!(zero.iter().all(|&z| !basin.contains(z)));
        let DualSet::Set(dual) = dual_set(&g, left).unwrap() else { panic!() };
        assert!(zero.iter().all(|&z| dual.contains(z)));
        // everything right of zero is in the dual set
        assert!((zero[1]..g.node_count() as u32).all(|v| dual.contains(v)));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = chain(vec![vec![1, 2], vec![2], vec![0], vec![3]]);
        let text = g.to_edge_list();
        assert_eq!(text, "0 -> 1\n0 -> 2\n1 -> 2\n2 -> 0\n3 -> 3\n");
        assert_eq!(TransitionGraph::from_edge_list(g.cover().clone(), &text).unwrap(), g);
    }

    #[test]
    fn entries_block_spurious_dual_components() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let dom = line(-4.0, 4.0);
        let full = BoxCover::full(dom.clone(), 6).unwrap();
        // boxes around the right attractor only
        let part = BoxCover::of_region(dom, 6, &[Interval::new(0.6, 1.4)]).unwrap();
        let mut g = build_graph(&m, &part).unwrap();
        assert!(!terminal_sccs(&g.dual()).is_empty());
        mark_entries(&m, &mut g).unwrap();
        assert!(terminal_sccs(&g.dual()).is_empty());
        // the full cover has no entries to mark
        let mut h = build_graph(&m, &full).unwrap();
        let before = h.clone();
        mark_entries(&m, &mut h).unwrap();
        assert_eq!(h, before);
    }

    #[test]
    fn induced_subgraph() {
        // 0 -> 1 -> 2 -> 1, 3 -> 2
        let g = chain(vec![vec![1], vec![2], vec![1], vec![2]]);
        let (h, map) = g.induced(&NodeSet::new(vec![1, 2])).unwrap();
        assert_eq!(map, vec![1, 2]);
        assert_eq!(h.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        assert!(!h.is_exit(0) && !h.is_exit(1));
        // both have predecessors outside the subset
        assert!(h.dual().is_exit(0) && h.dual().is_exit(1));
        let (k, _) = g.induced(&NodeSet::new(vec![0, 1])).unwrap();
        assert!(k.is_exit(1));
    }

    #[test]
    fn partial_cover_flags_exits() {
        let m = SaturatingMap::new(2.0, 0.0, 0.1).unwrap();
        let dom = line(-4.0, 4.0);
        let full = BoxCover::full(dom.clone(), 6).unwrap();
        let g = build_graph(&m, &full).unwrap();
        let v = node_at(&g, 1.0) as usize;
        let lone = BoxCover::from_boxes(dom, 6, [full.coords(v)]).unwrap();
        let h = build_graph(&m, &lone).unwrap();
        assert!(h.is_exit(0));
        assert!(terminal_sccs(&h).is_empty());
    }
}
