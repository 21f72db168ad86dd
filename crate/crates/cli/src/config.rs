//! Run configuration: the union of all command flags, loadable from a JSON
//! file whose keys are the flag names. Flags given on the command line
//! override the file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use setdyn::continuation::{Thresholds, TransitionKind};
use setdyn::minimal::Side;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_map: Option<PathBuf>,
    /// One `[lo, hi]` pair per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_start: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explosion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TransitionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
}

fn pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    let (a, b) = (num(a)?, num(b)?);
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(format!("need finite lo < hi, got `{s}`"));
    }
    Ok([a, b])
}

/// Per-axis bounds as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainArg(pub Vec<[f64; 2]>);

fn domain(s: &str) -> Result<DomainArg, String> {
    s.split(',').map(pair).collect::<Result<_, _>>().map(DomainArg)
}

fn assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("bad value for {k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Flags shared by the computing commands.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with any of these flags as keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// saturating, merging, contraction or piecewise
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter, repeatable: --set alpha=2
    #[arg(long = "set", value_parser = assignment)]
    pub set: Vec<(String, f64)>,
    /// JSON description of a piecewise-affine map
    #[arg(long)]
    pub user_map: Option<PathBuf>,
    /// Working domain lo:hi, comma separated per axis
    #[arg(long, value_parser = domain, allow_hyphen_values = true)]
    pub domain: Option<DomainArg>,
    #[arg(long)]
    pub side: Option<Side>,
    #[arg(long)]
    pub depth_start: Option<u32>,
    #[arg(long)]
    pub depth_max: Option<u32>,
    /// Hausdorff tolerance of the refinement
    #[arg(long)]
    pub tol: Option<f64>,
    /// Continuity threshold in box widths
    #[arg(long)]
    pub continuity: Option<f64>,
    /// Explosion threshold in box widths
    #[arg(long)]
    pub explosion: Option<f64>,
    /// Matching window in box widths
    #[arg(long)]
    pub delta: Option<f64>,
    /// Parameter to vary
    #[arg(long)]
    pub param: Option<String>,
    /// Parameter range lo:hi
    #[arg(long, value_parser = pair, allow_hyphen_values = true)]
    pub range: Option<[f64; 2]>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub kind: Option<TransitionKind>,
    #[arg(long)]
    pub tol_param: Option<f64>,
    /// Which forward minimal set (in order of position)
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the transition graph as JSON
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

impl RunConfig {
    /// Overlays every flag that was given on top of `self`.
    pub fn apply(mut self, f: &Flags) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if f.$field.is_some() { self.$field = f.$field.clone(); })*
            };
        }
        take!(
            model,
            user_map,
            side,
            depth_start,
            depth_max,
            tol,
            continuity,
            explosion,
            delta,
            param,
            range,
            steps,
            kind,
            tol_param,
            index,
            out,
            report,
            csv,
            graph
        );
        if let Some(d) = &f.domain {
            self.domain = Some(d.0.clone());
        }
        for (k, v) in &f.set {
            self.set.insert(k.clone(), *v);
        }
        self
    }

    pub fn thresholds(&self) -> Thresholds {
        let d = Thresholds::default();
        Thresholds {
            continuity: self.continuity.unwrap_or(d.continuity),
            explosion: self.explosion.unwrap_or(d.explosion),
            delta: self.delta.unwrap_or(d.delta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        RunConfig {
            model: Some("saturating".into()),
            set: [("alpha".to_string(), 1.7324555320336759), ("eps".to_string(), 0.1)].into(),
            domain: Some(vec![[-4.0, 4.0]]),
            side: Some(Side::Dual),
            depth_max: Some(12),
            tol: Some(1e-2 / 3.0),
            delta: Some(5.0),
            range: Some([-0.2, 0.1]),
            kind: Some(TransitionKind::MergeCandidate),
            out: Some("covers.json".into()),
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let text = setdyn::io::to_json(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tol.unwrap().to_bits(), c.tol.unwrap().to_bits());
        assert_eq!(setdyn::io::to_json(&back).unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"depth-maximum": 3}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let flags = Flags { depth_max: Some(8), set: vec![("alpha".into(), 2.0)], ..Default::default() };
        let c = sample().apply(&flags);
        assert_eq!(c.depth_max, Some(8));
        assert_eq!(c.set["alpha"], 2.0);
        assert_eq!(c.set["eps"], 0.1);
        assert_eq!(c.side, Some(Side::Dual));
    }

    #[test]
    fn parses_ranges() {
        assert_eq!(pair("-0.2:0.1").unwrap(), [-0.2, 0.1]);
        assert!(pair("1:1").is_err());
        assert!(pair("1").is_err());
        assert_eq!(domain("-1:1,0:2").unwrap().0, vec![[-1.0, 1.0], [0.0, 2.0]]);
        assert_eq!(assignment("L=0.5").unwrap(), ("L".into(), 0.5));
    }
}
