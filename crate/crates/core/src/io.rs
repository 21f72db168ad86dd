//! JSON documents and SVG rendering.
//!
//! Floats are written with 17 significant digits so that every value reads
//! back to the same bits. Inputs are recognised by shape; see
//! [`parse_document`].

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;
use thiserror::Error;

use crate::continuation::{ContinuationReport, TransitionKind};
use crate::geometry::BoxCover;
use crate::graph::TransitionGraph;
use crate::minimal::{MinimalSetApproximation, Side};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unrecognised document: {0}")]
    UnknownSchema(String),
    #[error("nothing to plot")]
    Empty,
}

/// Output of the `dual` command: a forward minimal set and its dual set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualOutput {
    pub minimal: MinimalSetApproximation,
    /// `None` when the minimal set attracts the whole cover.
    pub dual_set: Option<BoxCover>,
    pub globally_attractive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Cover(BoxCover),
    Approximations(Vec<MinimalSetApproximation>),
    Dual(Box<DualOutput>),
    Graph(Box<TransitionGraph>),
    Report(Box<ContinuationReport>),
}

struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

/// Compact JSON with 17 significant digits per float, newline-terminated.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, IoError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn has(v: &Value, keys: &[&str]) -> bool {
    keys.iter().all(|k| v.get(k).is_some())
}

fn schema<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T, IoError> {
    serde_json::from_value(v).map_err(|e| IoError::UnknownSchema(format!("{what}: {e}")))
}

/// Recognises covers, lists of approximations, dual results, graphs and
/// continuation reports.
pub fn parse_document(text: &str) -> Result<Document, IoError> {
    let v: Value = serde_json::from_str(text)?;
    if has(&v, &["samples", "transitions"]) {
        return Ok(Document::Report(Box::new(schema(v, "report")?)));
    }
    if has(&v, &["cover", "edges"]) {
        return Ok(Document::Graph(Box::new(schema(v, "graph")?)));
    }
    if has(&v, &["minimal", "globally_attractive"]) {
        return Ok(Document::Dual(Box::new(schema(v, "dual result")?)));
    }
    if has(&v, &["domain", "depth", "boxes"]) {
        return Ok(Document::Cover(schema(v, "cover")?));
    }
    if has(&v, &["cover", "side"]) {
        return Ok(Document::Approximations(vec![schema(v, "approximation")?]));
    }
    if let Value::Array(items) = &v {
        if items.iter().all(|it| has(it, &["cover", "side"])) {
            return Ok(Document::Approximations(schema(v, "approximations")?));
        }
    }
    Err(IoError::UnknownSchema("expected a cover, approximations, dual result, graph or report".into()))
}

const WIDTH: f64 = 800.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;

fn side_colour(side: Side) -> &'static str {
    match side {
        Side::Forward => "#1f77b4",
        Side::Dual => "#d62728",
    }
}

fn kind_colour(kind: TransitionKind) -> &'static str {
    match kind {
        TransitionKind::Continuous => "#7f7f7f",
        TransitionKind::Explosion => "#ff7f0e",
        TransitionKind::Appearance => "#2ca02c",
        TransitionKind::Disappearance => "#9467bd",
        TransitionKind::MergeCandidate => "#8c564b",
    }
}

// Linear map from [lo, hi] onto [a, b].
#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Scale { lo, hi, a, b }
    }

    fn at(&self, x: f64) -> f64 {
        self.a + (x - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

struct Svg {
    body: String,
    height: f64,
}

impl Svg {
    fn new(height: f64) -> Self {
        Svg { body: String::new(), height }
    }

    fn rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, fill: &str, opacity: f64) {
        let (x, w) = (x0.min(x1), (x1 - x0).abs().max(0.5));
        let (y, h) = (y0.min(y1), (y1 - y0).abs().max(0.5));
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" fill-opacity="{opacity:.2}"/>"#
        );
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, stroke: &str, dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{s}</text>"#);
    }

    fn axes(&mut self, xs: Scale, ys: Scale, xlabel: &str, ylabel: &str) {
        let (bottom, top) = (ys.a, ys.b);
        self.line(xs.a, bottom, xs.b, bottom, "black", false);
        self.line(xs.a, bottom, xs.a, top, "black", false);
        self.text(xs.a, bottom + 16.0, "start", &format!("{:.4}", xs.lo));
        self.text(xs.b, bottom + 16.0, "end", &format!("{:.4}", xs.hi));
        self.text((xs.a + xs.b) / 2.0, bottom + 32.0, "middle", xlabel);
        self.text(xs.a - 4.0, bottom, "end", &format!("{:.4}", ys.lo));
        self.text(xs.a - 4.0, top + 10.0, "end", &format!("{:.4}", ys.hi));
        self.text(xs.a - 4.0, (top + bottom) / 2.0, "end", ylabel);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{:.0}\" \
             font-family=\"sans-serif\" font-size=\"11\">\n{}</svg>\n",
            self.height, self.body
        )
    }
}

// Maximal runs of the projection of `cover` onto `axis`.
fn axis_runs(cover: &BoxCover, axis: usize) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = (0..cover.len())
        .map(|i| {
            let iv = cover.realize(i)[axis];
            (iv.lo, iv.hi)
        })
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in spans {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Covers as horizontal bars (1-D, one row per cover) or filled boxes (2-D
/// and up, projected onto the first two axes).
pub fn render_covers(covers: &[(&BoxCover, Side)]) -> Result<String, IoError> {
    let Some((first, _)) = covers.first() else {
        return Err(IoError::Empty);
    };
    let bounds = first.domain().bounds();
    let plot_w = WIDTH - LEFT - RIGHT;
    if first.dimension() == 1 {
        let row = 24.0;
        let height = TOP + BOTTOM + row * covers.len() as f64;
        let mut svg = Svg::new(height);
        let xs = Scale::new(bounds[0].lo, bounds[0].hi, LEFT, LEFT + plot_w);
        let ys = Scale::new(0.0, 1.0, height - BOTTOM, TOP);
        for (k, (cover, side)) in covers.iter().enumerate() {
            let y0 = TOP + row * k as f64 + 4.0;
            for (lo, hi) in axis_runs(cover, 0) {
                svg.rect(xs.at(lo), xs.at(hi), y0, y0 + row - 8.0, side_colour(*side), 0.8);
            }
        }
        svg.axes(xs, ys, "x", "");
        return Ok(svg.finish());
    }
    let plot_h = 500.0;
    let mut svg = Svg::new(TOP + BOTTOM + plot_h);
    let xs = Scale::new(bounds[0].lo, bounds[0].hi, LEFT, LEFT + plot_w);
    let ys = Scale::new(bounds[1].lo, bounds[1].hi, TOP + plot_h, TOP);
    for (cover, side) in covers {
        for i in 0..cover.len() {
            let b = cover.realize(i);
            svg.rect(xs.at(b[0].lo), xs.at(b[0].hi), ys.at(b[1].lo), ys.at(b[1].hi), side_colour(*side), 0.6);
        }
    }
    svg.axes(xs, ys, "x0", "x1");
    Ok(svg.finish())
}

/// Bifurcation diagram: for each sample, the extent of every minimal set
/// along the first axis; non-continuous transitions as dashed markers and
/// brackets as shaded bands. Several reports (e.g. forward and dual sweeps
/// of the same range) are overlaid.
pub fn render_reports(reports: &[&ContinuationReport]) -> Result<String, IoError> {
    let params: Vec<f64> = reports.iter().flat_map(|r| r.samples.iter().map(|s| s.param)).collect();
    if params.is_empty() {
        return Err(IoError::Empty);
    }
    let (pmin, pmax) = params.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let mut sorted = params.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let spacing = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let half = if spacing.is_finite() { spacing * 0.4 } else { 0.5 };

    let bounds = reports[0].domain.bounds();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = 400.0;
    let mut svg = Svg::new(TOP + BOTTOM + plot_h);
    let xs = Scale::new(pmin - half, pmax + half, LEFT, LEFT + plot_w);
    let ys = Scale::new(bounds[0].lo, bounds[0].hi, TOP + plot_h, TOP);

    for r in reports {
        for b in &r.brackets {
            svg.rect(xs.at(b.lo), xs.at(b.hi), TOP, TOP + plot_h, kind_colour(b.kind), 0.25);
        }
    }
    for r in reports {
        for s in &r.samples {
            for m in &s.approximations {
                for (lo, hi) in axis_runs(&m.cover, 0) {
                    svg.rect(
                        xs.at(s.param - half),
                        xs.at(s.param + half),
                        ys.at(lo),
                        ys.at(hi),
                        side_colour(m.side),
                        0.8,
                    );
                }
            }
        }
    }
    let markers = reports.iter().flat_map(|r| r.transitions.iter()).filter(|e| e.kind != TransitionKind::Continuous);
    for (k, e) in markers.enumerate() {
        let x = xs.at((e.from_param + e.to_param) / 2.0);
        svg.line(x, TOP, x, TOP + plot_h, kind_colour(e.kind), true);
        // stagger labels so neighbouring markers stay readable
        svg.text(x + 2.0, TOP + 10.0 + 12.0 * (k % 4) as f64, "start", &e.kind.to_string());
    }
    let name = reports.iter().map(|r| r.param_name.as_str()).next().unwrap_or("");
    svg.axes(xs, ys, name, "x");
    Ok(svg.finish())
}

/// Renders any parsed document; reports are overlaid, everything else is
/// drawn as covers.
pub fn render_documents(docs: &[Document]) -> Result<String, IoError> {
    let reports: Vec<&ContinuationReport> = docs
        .iter()
        .filter_map(|d| match d {
            Document::Report(r) => Some(&**r),
            _ => None,
        })
        .collect();
    if !reports.is_empty() {
        if reports.len() != docs.len() {
            return Err(IoError::UnknownSchema("reports cannot be plotted together with covers".into()));
        }
        return render_reports(&reports);
    }
    let mut covers: Vec<(&BoxCover, Side)> = Vec::new();
    for d in docs {
        match d {
            Document::Cover(c) => covers.push((c, Side::Forward)),
            Document::Graph(g) => covers.push((g.cover(), Side::Forward)),
            Document::Approximations(ms) => covers.extend(ms.iter().map(|m| (&m.cover, m.side))),
            Document::Dual(d) => {
                covers.push((&d.minimal.cover, Side::Forward));
                covers.extend(d.dual_set.iter().map(|c| (c, Side::Dual)));
            }
            Document::Report(_) => unreachable!(),
        }
    }
    if covers.iter().any(|(c, _)| c.dimension() != covers[0].0.dimension()) {
        return Err(IoError::UnknownSchema("covers of different dimensions".into()));
    }
    render_covers(&covers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WorkingDomain;
    use std::sync::Arc;

    fn cover(lo: f64, hi: f64, depth: u32, boxes: Vec<u32>) -> BoxCover {
        BoxCover::from_flat(Arc::new(WorkingDomain::interval(lo, hi).unwrap()), depth, boxes).unwrap()
    }

    #[test]
    fn floats_keep_their_bits() {
        let values = [0.1, -0.0, 1.0 / 3.0, 1.7324555320336759, f64::MIN_POSITIVE, 5e-324, 1e300];
        let text = to_json(&values).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn recognises_shapes() {
        let c = cover(-4.0, 4.0, 3, vec![1, 2, 5]);
        let text = to_json(&c).unwrap();
        assert_eq!(parse_document(&text).unwrap(), Document::Cover(c));
        assert!(matches!(parse_document("{\"foo\": 1}"), Err(IoError::UnknownSchema(_))));
        assert!(matches!(parse_document("[1, 2]"), Err(IoError::UnknownSchema(_))));
        assert!(matches!(parse_document("{"), Err(IoError::Json(_))));
        // right shape, wrong contents
        let bad = r#"{"domain":{"lo":[0.0],"hi":[1.0]},"depth":1,"boxes":[[7]]}"#;
        assert!(matches!(parse_document(bad), Err(IoError::UnknownSchema(_))));
    }

    #[test]
    fn single_interval_is_one_rect() {
        let c = cover(-4.0, 4.0, 4, vec![3, 4, 5, 6]);
        let svg = render_covers(&[(&c, Side::Forward)]).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(svg, render_covers(&[(&c, Side::Forward)]).unwrap());
        let two = cover(-4.0, 4.0, 4, vec![1, 2, 9]);
        assert_eq!(render_covers(&[(&two, Side::Dual)]).unwrap().matches("<rect").count(), 2);
    }

    #[test]
    fn planar_boxes_are_drawn_individually() {
        let d = Arc::new(WorkingDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let c = BoxCover::from_boxes(d, 2, vec![vec![0, 0], vec![1, 0], vec![3, 3]]).unwrap();
        assert_eq!(render_covers(&[(&c, Side::Forward)]).unwrap().matches("<rect").count(), 3);
    }
}
