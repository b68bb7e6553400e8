//! One function per subcommand. Each returns the artifacts to write and a
//! summary built from the same values that go into the JSON.

use pklap_core::energy::{
    energy_j, grad_on, ricceri_sequence, tent_levels, CertificateKind, EnergyError,
};
use pklap_core::lattice::{luxemburg_norm, modular, Alpha, LatticeError, NormKind};
use pklap_core::logdomain::LogReal;
use pklap_core::nonlinearity::audit::{
    check_f1, check_f2, check_sign_intervals, estimate_f4, shifted_lower_bound, spike_condition_scan, F1Report,
    F2Report, F4Points, F4Report, ShiftedLowerBound, SignIntervals, SignReport, SpikeGrid, SpikeScan,
};
use pklap_core::nonlinearity::{FamilyError, TentLaw};
use pklap_core::report::{self, format_log};
use pklap_core::solver::{rung_boxes, solution_ladder, solve_rung, SolutionRecord, SolverError};
use pklap_core::LatticeVector;
use serde::Serialize;

use crate::config::{IntervalSource, Intervals, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub struct Options {
    pub log_domain: bool,
    pub emit_plot_data: bool,
    pub full_vectors: bool,
}

pub struct Outcome {
    /// `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub summary: String,
    pub ok: bool,
}

fn json<T: Serialize>(command: &str, data: &T) -> Result<(String, String), CommandError> {
    Ok((format!("{command}.json"), report::to_json(command, data)?))
}

fn num(x: f64, o: &Options) -> String {
    if o.log_domain {
        format_log(LogReal::from_f64(x), true)
    } else {
        format!("{x:e}")
    }
}

/// Aligns a CSV document into columns for the terminal.
fn table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn vector(cfg: &RunConfig, command: &str) -> Result<LatticeVector, CommandError> {
    cfg.vector
        .clone()
        .ok_or_else(|| CommandError::Config(format!("`{command}` needs a [vector] block")))
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct NormReport {
    offset: i64,
    len: usize,
    modular_e: f64,
    modular_lpk: f64,
    norm_e: f64,
    norm_lpk: f64,
    sup_norm: f64,
    alpha: Alpha,
    /// `sup|u_k| <= α‖u‖_E`.
    embedding_holds: bool,
}

pub fn norm(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let u = vector(cfg, "norm")?;
    let prob = &cfg.problem;
    let r = NormReport {
        offset: u.offset(),
        len: u.len(),
        modular_e: modular(&u, prob, NormKind::E)?,
        modular_lpk: modular(&u, prob, NormKind::Lpk)?,
        norm_e: luxemburg_norm(&u, prob, NormKind::E)?,
        norm_lpk: luxemburg_norm(&u, prob, NormKind::Lpk)?,
        sup_norm: u.sup_norm(),
        alpha: prob.alpha_info(),
        embedding_holds: false,
    };
    let r = NormReport {
        embedding_holds: r.sup_norm <= r.alpha.value * r.norm_e * (1.0 + 1e-12),
        ..r
    };
    let summary = format!(
        "rho_E {}  rho_lpk {}\nnorm_E {}  norm_lpk {}\nsup {}  alpha {}  embedding {}\n",
        num(r.modular_e, o),
        num(r.modular_lpk, o),
        num(r.norm_e, o),
        num(r.norm_lpk, o),
        num(r.sup_norm, o),
        num(r.alpha.value, o),
        if r.embedding_holds { "holds" } else { "VIOLATED" },
    );
    Ok(Outcome {
        files: vec![json("norm", &r)?],
        summary,
        ok: r.embedding_holds,
    })
}

#[derive(Serialize)]
struct EnergyReport {
    phi: f64,
    psi: f64,
    j: f64,
    residual_sup: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient: Option<LatticeVector>,
}

pub fn energy(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let u = vector(cfg, "energy")?;
    let e = energy_j(&u, &cfg.problem, &cfg.family)?;
    let w = u.window().expect("vectors are nonempty");
    let g = grad_on(&u, &cfg.problem, Some(&cfg.family), (w.start() - 1)..=(w.end() + 1))?;
    let r = EnergyReport {
        phi: e.phi,
        psi: e.psi,
        j: e.j,
        residual_sup: g.sup_norm(),
        gradient: o.full_vectors.then_some(g),
    };
    let summary = format!(
        "Phi {}  Psi {}  J {}\nsup |grad J| {}\n",
        num(r.phi, o),
        num(r.psi, o),
        num(r.j, o),
        num(r.residual_sup, o)
    );
    Ok(Outcome {
        files: vec![json("energy", &r)?],
        summary,
        ok: true,
    })
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CheckReport {
    f1: F1Report,
    f2: F2Report,
    intervals: Vec<(LogReal, LogReal)>,
    sign: SignReport,
    growth: Option<F4Report>,
    shifted_bound: Option<ShiftedLowerBound>,
    pass: bool,
}

pub fn check(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let c = &cfg.raw.check;
    let fam = &cfg.family;
    let sites = c.sites.0..=c.sites.1;
    let rungs = c.rungs.0..=c.rungs.1;
    let f1 = check_f1(fam, sites.clone());
    let f2 = check_f2(fam, c.f2_bound, sites.clone(), c.samples);
    let intervals = match (&c.intervals, fam.tents()) {
        (Intervals::Explicit(v), _) => SignIntervals::from_f64(v, cfg.direction)?,
        (Intervals::Named(IntervalSource::Gaps), Some(t)) => SignIntervals::gaps(t, rungs.clone())?,
        (Intervals::Named(IntervalSource::Supports), Some(t)) => SignIntervals::supports(t, rungs.clone())?,
        (Intervals::Named(_), None) => {
            return Err(CommandError::Config(
                "named intervals need a tent family; give [check] intervals explicitly".into(),
            ))
        }
    };
    let sign = check_sign_intervals(fam, &intervals, sites, c.samples);
    let growth = match fam.tents() {
        Some(_) => Some(estimate_f4(fam, &cfg.problem, cfg.direction, rungs.clone(), &F4Points::TentLeftEnds)?),
        None => None,
    };
    let shifted_bound = fam
        .tents()
        .filter(|t| matches!(t.law, TentLaw::Remark2 { .. }))
        .map(|t| shifted_lower_bound(t, &cfg.problem, rungs.clone()));
    let pass = f1.ok && sign.ok && shifted_bound.as_ref().is_none_or(|s| s.holds);

    let mut s = String::new();
    s += &format!("continuity: {} (max relative jump {})\n", ok_str(f1.ok), num(f1.max_jump, o));
    s += &format!(
        "sum of max|f_k| on [-{b}, {b}]: {}{}\n",
        format_log(f2.sum_estimate, o.log_domain),
        if f2.exact { "" } else { " (sampled)" },
        b = c.f2_bound
    );
    s += &format!("sign on {} intervals: {}", intervals.intervals().len(), ok_str(sign.ok));
    if let Some(w) = &sign.worst {
        s += &format!(
            " - worst f_{}({}) = {} on interval {}",
            w.k,
            format_log(w.t, o.log_domain),
            format_log(w.value, o.log_domain),
            w.interval + 1
        );
    }
    s.push('\n');
    if let Some(g) = &growth {
        s += &format!(
            "growth ratio running min {} vs threshold {}: {}\n",
            format_log(g.liminf_estimate, o.log_domain),
            num(g.threshold, o),
            if g.below_threshold { "below" } else { "not below" }
        );
    }
    if let Some(b) = &shifted_bound {
        s += &format!("shifted lower bound {}: {}\n", num(b.bound, o), ok_str(b.holds));
    }
    let r = CheckReport {
        f1,
        f2,
        intervals: intervals.intervals().to_vec(),
        sign,
        growth,
        shifted_bound,
        pass,
    };
    Ok(Outcome {
        files: vec![json("check", &r)?],
        summary: s,
        ok: pass,
    })
}

fn ok_str(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CertifyReport {
    scan: SpikeScan,
    verified: Vec<bool>,
}

pub fn certify(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let c = &cfg.raw.certify;
    let grid = match &c.heights {
        Some(h) => SpikeGrid::Explicit(h.clone()),
        None => SpikeGrid::RightEndsFirst(c.per_site),
    };
    let scan = spike_condition_scan(
        &cfg.family,
        &cfg.problem,
        cfg.direction,
        c.sites.0..=c.sites.1,
        &grid,
        CertificateKind::Step4Spike,
    )?;
    let verified = scan
        .certificates()
        .map(|cert| cert.verify(&cfg.problem, &cfg.family))
        .collect::<Result<Vec<_>, _>>()?;
    let ok = !verified.is_empty() && verified.iter().all(|&v| v);
    let csv = report::certificates_csv(&scan, o.log_domain);
    let summary = format!(
        "{}{} certificate(s), {} verified\n",
        table(&csv),
        verified.len(),
        verified.iter().filter(|&&v| v).count()
    );
    let r = CertifyReport { scan, verified };
    Ok(Outcome {
        files: vec![json("certify", &r)?, ("certify.csv".into(), csv)],
        summary,
        ok,
    })
}

// ---------------------------------------------------------------------------

fn passed(r: &SolutionRecord) -> bool {
    matches!(report::verdict(r), "pass" | "certified")
}

fn record_outcome(
    command: &str,
    records: Vec<SolutionRecord>,
    o: &Options,
) -> Result<Outcome, CommandError> {
    let ok = records.iter().all(passed);
    let csv = report::ladder_csv(&records, o.log_domain);
    let mut files = Vec::new();
    if o.emit_plot_data {
        files.push(("profile.csv".into(), report::profile_csv(&records)));
        files.push(("norms.csv".into(), report::norms_csv(&records, o.log_domain)));
    }
    let mut summary = table(&csv);
    for r in &records {
        if let Some(note) = &r.note {
            summary += &format!("rung {}: {note}\n", r.n);
        }
        for c in r.verification.iter().flat_map(|v| v.failures()) {
            summary += &format!("rung {}: check {} failed\n", r.n, c.name);
        }
    }
    let records: Vec<SolutionRecord> = records
        .into_iter()
        .map(|mut r| {
            if !o.full_vectors {
                r.u = None;
            }
            r
        })
        .collect();
    files.insert(0, json(command, &records)?);
    files.insert(1, (format!("{command}.csv"), csv));
    Ok(Outcome { files, summary, ok })
}

pub fn solve(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let n = cfg.raw.solve.n;
    let rung = rung_boxes(&cfg.family, &cfg.boxes, n..=n)?.remove(0);
    let rec = solve_rung(&cfg.problem, &cfg.family, &rung, &cfg.raw.solver)?;
    record_outcome("solve", vec![rec], o)
}

pub fn ladder(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let (a, b) = cfg.raw.ladder.rungs;
    let rungs = rung_boxes(&cfg.family, &cfg.boxes, a..=b)?;
    let records = solution_ladder(&cfg.problem, &cfg.family, &rungs, &cfg.raw.solver)?;
    record_outcome("ladder", records, o)
}

pub fn ricceri(cfg: &RunConfig, o: &Options) -> Result<Outcome, CommandError> {
    let (a, b) = cfg.raw.ricceri.m;
    let tents = cfg
        .family
        .tents()
        .ok_or_else(|| CommandError::Config("`ricceri` needs a tent family for its levels c_m".into()))?;
    let rep = ricceri_sequence(&cfg.problem, &cfg.family, cfg.direction, &tent_levels(tents, a..=b));
    let csv = report::ricceri_csv(&rep, o.log_domain);
    Ok(Outcome {
        summary: table(&csv),
        ok: rep.verdict(),
        files: vec![json("ricceri", &rep)?, ("ricceri.csv".into(), csv)],
    })
}
