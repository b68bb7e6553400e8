//! Run configuration: TOML with a `version = 1` header.
//!
//! Parsing happens in two passes. The raw pass is plain serde and rejects
//! unknown keys; the validation pass builds the library objects and reports
//! every failure with the line of the offending key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use pklap_core::lattice::{ExponentRule, ExponentSeq, WeightRule, WeightSeq};
use pklap_core::nonlinearity::{
    make_decay_family, make_growth_family, make_remark2_family, make_single_site_family, CustomFamily,
    Direction, PiecewiseLinear,
};
use pklap_core::solver::{LadderBoxes, SolverConfig};
use pklap_core::{LatticeVector, NonlinearFamily, Problem};
use serde::{Deserialize, Serialize};

pub const VERSION: i64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.reason),
            None => write!(f, "{}: {}", self.field, self.reason),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub struct ConfigError(pub Vec<Issue>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Raw layer

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub version: Option<i64>,
    pub problem: Option<ProblemBlock>,
    pub family: Option<FamilyBlock>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub vector: Option<VectorBlock>,
    #[serde(default)]
    pub check: CheckBlock,
    #[serde(default)]
    pub certify: CertifyBlock,
    #[serde(default)]
    pub solve: SolveBlock,
    #[serde(default)]
    pub ladder: LadderBlock,
    #[serde(default)]
    pub ricceri: RicceriBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_radius() -> u64 {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub exponent: ExponentRule,
    pub a: WeightRule,
    pub b: WeightRule,
    #[serde(default = "default_radius")]
    pub audit_radius: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    Zero,
    Decay,
    Growth,
    SingleSite,
    Remark2,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBlock {
    pub id: FamilyId,
    pub q: Option<f64>,
    pub k0: Option<i64>,
    /// Keep only tents `m <= max_index`.
    pub max_index: Option<u32>,
    /// For families without a built-in direction.
    pub direction: Option<Direction>,
    /// Custom curves: site -> `[[t, f(t)], ...]`.
    pub sites: Option<BTreeMap<String, PiecewiseLinear>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorBlock {
    pub offset: i64,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSource {
    /// Gaps between consecutive tents.
    Gaps,
    /// The tents' own supports (fails by design).
    Supports,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Intervals {
    Named(IntervalSource),
    Explicit(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckBlock {
    pub sites: (i64, i64),
    pub f2_bound: f64,
    pub intervals: Intervals,
    /// Rungs whose intervals are audited, and the `m` range for the
    /// growth-condition estimate.
    pub rungs: (u32, u32),
    pub samples: usize,
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self {
            sites: (-5, 40),
            f2_bound: 1.0,
            intervals: Intervals::Named(IntervalSource::Gaps),
            rungs: (1, 4),
            samples: pklap_core::nonlinearity::audit::DEFAULT_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyBlock {
    pub sites: (i64, i64),
    /// Spike heights to try; tent right ends when absent.
    pub heights: Option<Vec<f64>>,
    /// Right ends tried per site when `heights` is absent.
    pub per_site: usize,
}

impl Default for CertifyBlock {
    fn default() -> Self {
        Self {
            sites: (1, 3),
            heights: None,
            per_site: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveBlock {
    pub n: u32,
}

impl Default for SolveBlock {
    fn default() -> Self {
        Self { n: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderBlock {
    pub rungs: (u32, u32),
    /// `[[d'_n, c'_n], ...]`; tent gaps when absent.
    pub boxes: Option<Vec<(f64, f64)>>,
}

impl Default for LadderBlock {
    fn default() -> Self {
        Self {
            rungs: (1, 3),
            boxes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RicceriBlock {
    pub m: (u32, u32),
}

impl Default for RicceriBlock {
    fn default() -> Self {
        Self { m: (1, 4) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Validated layer

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub problem: Problem,
    pub family: NonlinearFamily,
    pub direction: Direction,
    pub vector: Option<LatticeVector>,
    pub boxes: LadderBoxes,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (or of the section header when
/// `key` is empty). Top-level keys use an empty section.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h.trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn issue(text: &str, section: &str, key: &str, reason: impl fmt::Display) -> Issue {
    let field = match (section, key) {
        ("", k) => k.to_string(),
        (s, "") => s.to_string(),
        (s, k) => format!("{s}.{k}"),
    };
    Issue {
        line: locate(text, section, key).or_else(|| locate(text, section, "")),
        field,
        reason: reason.to_string(),
    }
}

fn from_toml_error(text: &str, e: &toml::de::Error) -> Issue {
    let (line, field) = match e.span() {
        Some(span) => {
            let snippet = &text[span.start.min(text.len())..span.end.min(text.len())];
            let key = snippet.split('=').next().unwrap_or("").trim().trim_matches(['[', ']']);
            (Some(line_of(text, span.start)), key.to_string())
        }
        None => (None, String::new()),
    };
    Issue {
        line,
        field: if field.is_empty() { "config".into() } else { field },
        reason: e.message().to_string(),
    }
}

fn ordered<T: PartialOrd + fmt::Display>(text: &str, section: &str, key: &str, r: (T, T), issues: &mut Vec<Issue>) {
    if r.0 > r.1 {
        issues.push(issue(text, section, key, format!("range start {} exceeds end {}", r.0, r.1)));
    }
}

fn build_family(raw: &FamilyBlock, problem: &Problem, text: &str) -> Result<NonlinearFamily, Issue> {
    let (pm, pp) = (problem.pminus(), problem.pplus());
    let q = || raw.q.ok_or_else(|| issue(text, "family", "", "missing field `q`"));
    let located = |e: pklap_core::nonlinearity::FamilyError| issue(text, "family", "q", e);
    let fam = match raw.id {
        FamilyId::Zero => NonlinearFamily::Zero,
        FamilyId::Decay => make_decay_family(q()?, pm, pp).map_err(located)?,
        FamilyId::Growth => make_growth_family(q()?, pm, pp).map_err(located)?,
        FamilyId::SingleSite => {
            let k0 = raw.k0.ok_or_else(|| issue(text, "family", "", "missing field `k0`"))?;
            make_single_site_family(k0, q()?, pm, pp).map_err(located)?
        }
        FamilyId::Remark2 => make_remark2_family(q()?, pm, pp, problem.alpha()).map_err(located)?,
        FamilyId::Custom => {
            let tables = raw
                .sites
                .as_ref()
                .ok_or_else(|| issue(text, "family", "", "custom family needs a `sites` table"))?;
            let mut sites = BTreeMap::new();
            for (k, curve) in tables {
                let k: i64 = k
                    .parse()
                    .map_err(|_| issue(text, "family.sites", k, "site keys must be integers"))?;
                sites.insert(k, curve.clone());
            }
            NonlinearFamily::Custom(CustomFamily { sites })
        }
    };
    Ok(match raw.max_index {
        Some(m) => fam.truncated(m),
        None => fam,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError(vec![from_toml_error(text, &e)]))?;
    validate(raw, text)
}

fn validate(raw: RawConfig, text: &str) -> Result<RunConfig, ConfigError> {
    let mut issues = Vec::new();
    let Some(pb) = raw.problem.as_ref() else {
        issues.push(Issue {
            line: None,
            field: "problem".into(),
            reason: "missing problem block".into(),
        });
        if raw.version.is_none() {
            issues.push(issue(text, "", "version", format!("missing version header `version = {VERSION}`")));
        }
        return Err(ConfigError(issues));
    };
    match raw.version {
        Some(VERSION) => {}
        Some(v) => issues.push(issue(text, "", "version", format!("unsupported version {v} (expected {VERSION})"))),
        None => issues.push(issue(text, "", "version", format!("missing version header `version = {VERSION}`"))),
    }

    let problem = ExponentSeq::new(pb.exponent.clone())
        .map_err(|e| issue(text, "problem", "exponent", e))
        .and_then(|exps| {
            Problem::new(exps, WeightSeq::new(pb.a.clone(), pb.b.clone()), pb.audit_radius)
                .map_err(|e| issue(text, "problem", "", e))
        });
    let problem = match problem {
        Ok(p) => Some(p),
        Err(i) => {
            issues.push(i);
            None
        }
    };

    let family = match (&problem, &raw.family) {
        (Some(p), Some(fb)) => match build_family(fb, p, text) {
            Ok(f) => Some(f),
            Err(i) => {
                issues.push(i);
                None
            }
        },
        (_, None) => Some(NonlinearFamily::Zero),
        (None, Some(_)) => None,
    };

    if let Err(e) = raw.solver.validate() {
        issues.push(issue(text, "solver", "", e));
    }

    let vector = raw.vector.as_ref().and_then(|v| match LatticeVector::new(v.offset, v.values.clone()) {
        Ok(u) => Some(u),
        Err(e) => {
            issues.push(issue(text, "vector", "values", e));
            None
        }
    });

    ordered(text, "check", "sites", raw.check.sites, &mut issues);
    ordered(text, "check", "rungs", raw.check.rungs, &mut issues);
    ordered(text, "certify", "sites", raw.certify.sites, &mut issues);
    ordered(text, "ladder", "rungs", raw.ladder.rungs, &mut issues);
    ordered(text, "ricceri", "m", raw.ricceri.m, &mut issues);
    if raw.check.rungs.0 == 0 || raw.ladder.rungs.0 == 0 || raw.ricceri.m.0 == 0 || raw.solve.n == 0 {
        issues.push(Issue {
            line: None,
            field: "rungs".into(),
            reason: "rung and tent indices start at 1".into(),
        });
    }
    if !(raw.check.f2_bound > 0.0 && raw.check.f2_bound.is_finite()) {
        issues.push(issue(text, "check", "f2_bound", "must be positive and finite"));
    }
    if let Some(boxes) = &raw.ladder.boxes {
        for (i, &(d, c)) in boxes.iter().enumerate() {
            if !(c > 0.0 && c < d && d.is_finite()) {
                issues.push(issue(text, "ladder", "boxes", format!("box {}: need 0 < c' = {c} < d' = {d}", i + 1)));
            }
        }
    }

    let direction = family
        .as_ref()
        .and_then(|f| f.direction())
        .or(raw.family.as_ref().and_then(|f| f.direction))
        .unwrap_or(Direction::Zero);

    if !issues.is_empty() {
        return Err(ConfigError(issues));
    }
    let boxes = match &raw.ladder.boxes {
        Some(b) => LadderBoxes::Explicit { boxes: b.clone() },
        None => LadderBoxes::TentGaps,
    };
    Ok(RunConfig {
        problem: problem.expect("checked above"),
        family: family.expect("checked above"),
        direction,
        vector,
        boxes,
        raw,
    })
}

// ---------------------------------------------------------------------------
// Presets

pub const PRESETS: [(&str, &str); 4] = [
    ("decay", include_str!("../presets/decay.toml")),
    ("growth", include_str!("../presets/growth.toml")),
    ("single_site", include_str!("../presets/single_site.toml")),
    ("remark2", include_str!("../presets/remark2.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
