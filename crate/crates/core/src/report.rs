//! JSON and CSV output with fixed schemas and column orders.

use serde::Serialize;

use crate::energy::{Certificate, RicceriReport};
use crate::logdomain::{LogReal, Sign};
use crate::nonlinearity::audit::SpikeScan;
use crate::solver::{RungMode, SolutionRecord};

pub const SCHEMA: &str = "pklap-report/1";

pub const LADDER_COLUMNS: [&str; 7] = ["n", "K", "J", "norm_E", "sup_norm", "residual_sup", "verdict"];
pub const RICCERI_COLUMNS: [&str; 5] = ["m", "r_m", "phi_bound", "delta_estimate", "verdict"];
pub const CERTIFICATE_COLUMNS: [&str; 5] = ["k", "t", "ratio", "energy", "kind"];

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema: &'static str,
    pub command: &'a str,
    pub data: &'a T,
}

/// Pretty JSON wrapped in the versioned envelope. Field order follows the
/// type definitions, so equal inputs give byte-identical output.
pub fn to_json<T: Serialize>(command: &str, data: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema: SCHEMA,
        command,
        data,
    })?;
    s.push('\n');
    Ok(s)
}

/// A number as text: plain decimal when it is an ordinary float and
/// `log_domain` is off, otherwise `±2^e`.
pub fn format_log(x: LogReal, log_domain: bool) -> String {
    match (log_domain, x.to_f64_checked()) {
        (false, Some(v)) => format!("{v:e}"),
        _ => match x.sign() {
            Sign::Zero => "0".into(),
            Sign::Positive => format!("2^{}", x.log2_abs()),
            Sign::Negative => format!("-2^{}", x.log2_abs()),
        },
    }
}

/// Plain floats are printed from the stored `f64`, so CSV text matches the
/// JSON field exactly.
fn format_opt(x: Option<f64>, log_domain: bool) -> String {
    match x {
        None => String::new(),
        Some(v) if !log_domain => format!("{v:e}"),
        Some(v) => format_log(LogReal::from_f64(v), true),
    }
}

fn format_energy(r: &SolutionRecord, log_domain: bool) -> String {
    match r.j_value {
        Some(j) if !log_domain => format!("{j:e}"),
        _ => format_log(r.energy, log_domain),
    }
}

pub fn verdict(r: &SolutionRecord) -> &'static str {
    match (r.mode, r.verification.as_ref().map(|v| v.pass)) {
        (RungMode::Failed, _) => "failed",
        // u = 0 never passes the energy check; say why
        (RungMode::Numeric, _) if r.trivial => "trivial",
        (RungMode::CertificateOnly, Some(true)) => "certified",
        (_, Some(true)) => "pass",
        _ => "fail",
    }
}

fn write_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn ladder_csv(records: &[SolutionRecord], log_domain: bool) -> String {
    write_csv(
        &LADDER_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.halfwidth.map_or_else(String::new, |k| k.to_string()),
                format_energy(r, log_domain),
                format_opt(r.norm_e, log_domain),
                format_opt(r.sup_norm, log_domain),
                format_opt(r.residual_sup, log_domain),
                verdict(r).to_string(),
            ]
        }),
    )
}

pub fn ricceri_csv(report: &RicceriReport, log_domain: bool) -> String {
    write_csv(
        &RICCERI_COLUMNS,
        report.rows.iter().map(|r| {
            vec![
                r.m.to_string(),
                format_log(r.r_m, log_domain),
                format_log(r.phi_bound, log_domain),
                format_log(r.delta_estimate, log_domain),
                if r.verdict() { "delta<1: yes" } else { "delta<1: no" }.to_string(),
            ]
        }),
    )
}

fn kind_name(c: &Certificate) -> String {
    serde_json::to_value(c.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn certificates_csv(scan: &SpikeScan, log_domain: bool) -> String {
    write_csv(
        &CERTIFICATE_COLUMNS,
        scan.hits.iter().map(|h| {
            vec![
                h.k.to_string(),
                format_log(h.t, log_domain),
                format_log(h.ratio, log_domain),
                h.certificate.map_or_else(|| "indeterminate".into(), |c| format_log(c.energy, log_domain)),
                h.certificate.map_or_else(String::new, |c| kind_name(&c)),
            ]
        }),
    )
}

/// `(n, k, u_k)` for every numeric rung.
pub fn profile_csv(records: &[SolutionRecord]) -> String {
    write_csv(
        &["n", "k", "u_k"],
        records.iter().flat_map(|r| {
            r.u.iter()
                .flat_map(|u| u.iter().map(|(k, x)| vec![r.n.to_string(), k.to_string(), format!("{x:e}")]))
                .collect::<Vec<_>>()
        }),
    )
}

/// `(n, ‖u^n‖_E, J)` per rung; certificate-only rungs leave the norm blank.
pub fn norms_csv(records: &[SolutionRecord], log_domain: bool) -> String {
    write_csv(
        &["n", "norm_E", "J"],
        records.iter().map(|r| {
            vec![
                r.n.to_string(),
                format_opt(r.norm_e, log_domain),
                format_energy(r, log_domain),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_formatting() {
        assert_eq!(format_log(LogReal::from_f64(-0.5), false), "-5e-1");
        assert_eq!(format_log(LogReal::pow2(1500.0), false), "2^1500");
        assert_eq!(format_log(LogReal::from_f64(0.25), true), "2^-2");
        assert_eq!(format_log(LogReal::ZERO, true), "0");
    }

    #[test]
    fn envelope_carries_schema() {
        let s = to_json("norm", &1.5f64).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["data"], 1.5);
    }
}
