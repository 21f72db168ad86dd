mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use setdyn::continuation::{bracket_bifurcation, dual_gap, linspace, sweep, BracketConfig, ContinuationError};
use setdyn::geometry::{BoxCover, WorkingDomain};
use setdyn::graph::{build_graph, dual_set, DualSet};
use setdyn::io::{parse_document, render_documents, to_json, DualOutput, IoError};
use setdyn::minimal::{
    contract_to_fixed_cover, refine_minimal_sets, refine_to_depth, MinimalConfig, MinimalError,
    MinimalSetApproximation, Side,
};
use setdyn::models::{check_contraction_certificate, ModelSpec, PiecewiseAffineMap, SetValuedMap};

use config::{Flags, RunConfig};

const CONTRACTION_ITERS: usize = 10_000;
const CERTIFICATE_SAMPLES: usize = 512;

#[derive(Parser)]
#[command(name = "setdyn", version, about = "Minimal invariant sets and their bifurcations on box covers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outer approximations of the minimal invariant sets
    Minimal(Flags),
    /// Parameter sweep with transition classification
    Continuation(Flags),
    /// Bisect a parameter range down to one transition
    Bracket(Flags),
    /// Distance between a minimal set and its dual set
    Gap(Flags),
    /// Dual set (complement of the robust domain) of a minimal set
    Dual(Flags),
    /// Render covers or reports as SVG
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Schema(String),
    Partial(String),
    Lost(String),
    Error(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Schema(_) => 65,
            Failure::Partial(_) => 2,
            Failure::Lost(_) => 3,
            Failure::Error(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Schema(m) | Failure::Partial(m) | Failure::Lost(m) | Failure::Error(m) => m,
        }
    }
}

fn err(e: impl std::fmt::Display) -> Failure {
    Failure::Error(e.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("setdyn: {}", e.message());
        return ExitCode::from(e.code());
    }
    let outcome = match &cli.command {
        Command::Minimal(f) => load(f).and_then(|c| cmd_minimal(&c)),
        Command::Continuation(f) => load(f).and_then(|c| cmd_continuation(&c)),
        Command::Bracket(f) => load(f).and_then(|c| cmd_bracket(&c)),
        Command::Gap(f) => load(f).and_then(|c| cmd_gap(&c)),
        Command::Dual(f) => load(f).and_then(|c| cmd_dual(&c)),
        Command::Plot { inputs, out } => cmd_plot(inputs, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("setdyn: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn init_threads() -> Outcome {
    let Ok(raw) = std::env::var("SETDYN_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().map_err(|_| Failure::Usage(format!("SETDYN_THREADS must be a count, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(err)?;
    }
    Ok(())
}

fn load(flags: &Flags) -> Result<RunConfig, Failure> {
    let base = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    Ok(base.apply(flags))
}

fn model_spec(c: &RunConfig) -> Result<ModelSpec, Failure> {
    let name = match (&c.model, &c.user_map) {
        (Some(name), _) => name.clone(),
        (None, Some(_)) => "piecewise".to_string(),
        (None, None) => return Err(Failure::Usage("--model is required".into())),
    };
    let mut spec = ModelSpec::new(name);
    spec.params = c.set.clone();
    if let Some(path) = &c.user_map {
        let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        spec.user_map = Some(PiecewiseAffineMap::from_json(&text).map_err(err)?);
    }
    Ok(spec)
}

fn domain(c: &RunConfig, spec: &ModelSpec) -> Result<Arc<WorkingDomain>, Failure> {
    let pairs = match (&c.domain, spec.name.as_str()) {
        (Some(d), _) => d.clone(),
        (None, "saturating" | "merging") => vec![[-4.0, 4.0]],
        (None, "contraction") => vec![[-1.0, 1.0]],
        (None, _) => return Err(Failure::Usage("--domain is required for this model".into())),
    };
    let (lo, hi) = pairs.iter().map(|p| (p[0], p[1])).unzip();
    WorkingDomain::new(lo, hi).map(Arc::new).map_err(|e| Failure::Usage(e.to_string()))
}

fn minimal_config(c: &RunConfig, start: u32, max: u32) -> Result<MinimalConfig, Failure> {
    let d = MinimalConfig::default();
    let cfg = MinimalConfig {
        start_depth: c.depth_start.unwrap_or(start),
        max_depth: c.depth_max.unwrap_or(max),
        tol: c.tol.unwrap_or(d.tol),
        side: c.side.unwrap_or_default(),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| err(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: serde::Serialize + ?Sized>(path: Option<&Path>, value: &T) -> Outcome {
    emit(path, &to_json(value).map_err(err)?)
}

fn cmd_minimal(c: &RunConfig) -> Outcome {
    let spec = model_spec(c)?;
    let domain = domain(c, &spec)?;
    let cfg = minimal_config(c, 6, 12)?;
    let map = spec.build().map_err(err)?;
    let out = c.out.as_deref();
    if cfg.side == Side::Forward {
        let cert = check_contraction_certificate(map.as_ref(), &domain, CERTIFICATE_SAMPLES).map_err(err)?;
        if cert.is_certified() {
            let m = contract_to_fixed_cover(map.as_ref(), domain, cfg.max_depth, CONTRACTION_ITERS).map_err(err)?;
            return emit_json(out, &[m]);
        }
    }
    match refine_minimal_sets(map.as_ref(), domain, &cfg) {
        Ok(sets) => emit_json(out, &sets),
        Err(MinimalError::RefinementLimit { depth, tol, partial }) => {
            emit_json(out, &partial)?;
            Err(Failure::Partial(format!("tolerance {tol} not reached by depth {depth}; partial covers written")))
        }
        Err(e) => Err(err(e)),
    }
}

fn require_param(c: &RunConfig) -> Result<(String, [f64; 2]), Failure> {
    let param = c.param.clone().ok_or_else(|| Failure::Usage("--param is required".into()))?;
    let range = c.range.ok_or_else(|| Failure::Usage("--range is required".into()))?;
    if !(range[0] < range[1]) {
        return Err(Failure::Usage(format!("empty range {}:{}", range[0], range[1])));
    }
    Ok((param, range))
}

fn cmd_continuation(c: &RunConfig) -> Outcome {
    let spec = model_spec(c)?;
    let domain = domain(c, &spec)?;
    let (param, range) = require_param(c)?;
    let steps = c.steps.unwrap_or(21);
    if steps < 2 {
        return Err(Failure::Usage("--steps must be at least 2".into()));
    }
    let cfg = minimal_config(c, 6, 10)?;
    let report =
        sweep(&spec, &param, &linspace(range[0], range[1], steps), domain, &cfg, &c.thresholds()).map_err(err)?;
    for s in report.samples.iter().filter(|s| s.error.is_some()) {
        eprintln!("setdyn: {param} = {}: {}", s.param, s.error.as_deref().unwrap_or_default());
    }
    if let Some(path) = &c.csv {
        let file = fs::File::create(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        report.write_csv(file).map_err(err)?;
    }
    emit_json(c.report.as_deref().or(c.out.as_deref()), &report)
}

fn cmd_bracket(c: &RunConfig) -> Outcome {
    let spec = model_spec(c)?;
    let domain = domain(c, &spec)?;
    let (param, range) = require_param(c)?;
    let kind = c.kind.ok_or_else(|| Failure::Usage("--kind is required".into()))?;
    let d = BracketConfig::default();
    let start = c.depth_start.unwrap_or(d.minimal.start_depth);
    let cap = c.depth_max.unwrap_or(d.depth_cap);
    if cap < start {
        return Err(Failure::Usage(format!("--depth-max {cap} is below --depth-start {start}")));
    }
    let config = BracketConfig {
        tol_param: c.tol_param.unwrap_or(d.tol_param),
        minimal: MinimalConfig {
            start_depth: start,
            max_depth: start,
            tol: c.tol.unwrap_or(d.minimal.tol),
            side: c.side.unwrap_or_default(),
        },
        adaptive: true,
        depth_cap: cap,
    };
    match bracket_bifurcation(&spec, &param, range[0], range[1], kind, domain, &config, &c.thresholds()) {
        Ok(b) => {
            println!("{} {}", b.lo, b.hi);
            if let Some(path) = &c.out {
                emit_json(Some(path), &b)?;
            }
            Ok(())
        }
        Err(ContinuationError::EventLost { kind, left, right }) => {
            println!("{} {}", left.0, left.1);
            println!("{} {}", right.0, right.1);
            Err(Failure::Lost(format!("{kind} lost during bisection; both halves printed")))
        }
        Err(e) => Err(err(e)),
    }
}

// Forward minimal sets at exactly `depth-max`, and the one picked by `--index`.
fn pick_minimal(c: &RunConfig) -> Result<(Arc<dyn SetValuedMap>, MinimalSetApproximation), Failure> {
    let spec = model_spec(c)?;
    let domain = domain(c, &spec)?;
    let cfg = MinimalConfig { side: Side::Forward, ..minimal_config(c, 6, 10)? };
    let map = spec.build().map_err(err)?;
    let sets = refine_to_depth(map.as_ref(), domain, &cfg, cfg.max_depth).map_err(err)?;
    let index = c.index.unwrap_or(0);
    let count = sets.len();
    let m = sets
        .into_iter()
        .nth(index)
        .ok_or_else(|| err(format!("--index {index} out of range ({count} minimal sets)")))?;
    Ok((map, m))
}

fn cmd_gap(c: &RunConfig) -> Outcome {
    let (map, m) = pick_minimal(c)?;
    let gap = dual_gap(map.as_ref(), &m).map_err(err)?;
    println!("{gap}");
    if let Some(path) = &c.out {
        let record = serde_json::json!({
            "gap": gap,
            "depth": m.depth(),
            "box_width": m.cover.box_width(),
            "index": c.index.unwrap_or(0),
        });
        emit_json(Some(path), &record)?;
    }
    Ok(())
}

fn cmd_dual(c: &RunConfig) -> Outcome {
    let (map, m) = pick_minimal(c)?;
    let full = BoxCover::full(m.cover.domain_arc().clone(), m.depth()).map_err(err)?;
    let g = build_graph(map.as_ref(), &full).map_err(err)?;
    let nodes = g.nodes_of(&m.cover).map_err(err)?;
    let dual = dual_set(&g, &nodes).map_err(err)?;
    let (dual_set, globally_attractive) = match dual {
        DualSet::Set(s) => (g.cover_of(&s), false),
        DualSet::GloballyAttractive => (None, true),
    };
    if let Some(path) = &c.graph {
        emit_json(Some(path), &g)?;
    }
    emit_json(c.out.as_deref(), &DualOutput { minimal: m, dual_set, globally_attractive })
}

fn cmd_plot(inputs: &[PathBuf], out: Option<&Path>) -> Outcome {
    let mut docs = Vec::new();
    for path in inputs {
        let text = fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let doc = parse_document(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
        docs.push(doc);
    }
    let svg = render_documents(&docs).map_err(|e| match e {
        IoError::UnknownSchema(_) => Failure::Schema(e.to_string()),
        other => err(other),
    })?;
    emit(out, &svg)
}
