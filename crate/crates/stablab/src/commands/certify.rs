//! `certify`: empirical constants plus every approximate-smoothness check.

use anyhow::Result;
use serde::Serialize;
use stablab_core::smoothness::{
    self, CheckParams, PairSampler, PropertyReport, SmoothnessCertificate, UpdateMode,
};
use stablab_core::ConstantsRecord;

use super::{Invocation, Outcome};
use crate::config::{CertifySection, ExperimentConfig};
use crate::io;

const INEXACT_INNER: &str =
    "inner maximization is approximate (PGD); gradients are Danskin directions at an approximate maximizer, not certified subgradients";

#[derive(Serialize)]
struct CertificateFile<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    constants: &'a ConstantsRecord,
    certificate: &'a SmoothnessCertificate,
    reports: &'a [PropertyReport],
    skipped: &'a [String],
    /// Set when the inner maximization is iterative: the Danskin direction
    /// is then only an approximate subgradient.
    #[serde(skip_serializing_if = "Option::is_none")]
    caveat: Option<&'static str>,
    passed: bool,
    timestamp: u64,
}

pub fn run(inv: &Invocation) -> Result<Outcome> {
    let cfg = &inv.config;
    let obj = cfg.objective()?;
    let section = cfg.certify.clone().unwrap_or_default();
    let mut sampler = PairSampler::new(&obj, cfg.seed)
        .with_mode(section.mode)
        .with_distribution(cfg.distribution(&obj));
    if let Some(r) = section.ball_radius {
        sampler = sampler.with_ball_radius(r);
    }
    let certificate = smoothness::estimate_constants_with(&sampler, section.pairs, section.beta_policy)?;
    let (reports, skipped) = checks(&sampler, &section)?;

    let mut out = Outcome::default();
    out.check(
        certificate.consistent(),
        format!("sampled pairs exceed the declared constants by {}", certificate.max_violation),
    );
    for r in &reports {
        out.check(
            r.passed(),
            format!(
                "{}: {} of {} pairs violated (worst slack {})",
                smoothness::property_name(r.property),
                r.violation_count,
                r.pairs_tested,
                r.worst_slack
            ),
        );
    }
    let path = io::output_path(&inv.prefix, ".certificate.json");
    io::write_json(
        &path,
        &CertificateFile {
            command: "certify",
            config: cfg,
            constants: obj.constants(),
            certificate: &certificate,
            reports: &reports,
            skipped: &skipped,
            caveat: (!obj.exact_inner()).then_some(INEXACT_INNER),
            passed: out.passed(),
            timestamp: io::timestamp(),
        },
    )?;
    out.files.push(path);
    Ok(out)
}

/// Runs the lemma checks that apply to the objective; returns the reports and
/// a note for every check that was skipped.
fn checks(sampler: &PairSampler<'_>, section: &CertifySection) -> Result<(Vec<PropertyReport>, Vec<String>)> {
    let obj = sampler.objective();
    let c = obj.constants();
    let n = section.pairs;
    let mut reports = vec![smoothness::check_descent(sampler, n, c.beta, c.eta)?];
    let mut skipped = Vec::new();
    if obj.is_convex() {
        reports.push(smoothness::check_cocoercive(sampler, n, c.beta, c.eta)?);
    } else {
        skipped.push("cocoercive: family is not convex".to_string());
    }
    let alphas = if section.alphas.is_empty() {
        vec![if c.beta > 0.0 { 1.0 / c.beta } else { 1.0 }]
    } else {
        section.alphas.clone()
    };
    let params = CheckParams { beta: c.beta, eta: c.eta, alpha: None, gamma: c.gamma };
    for &alpha in &alphas {
        reports.push(smoothness::check_update_expansiveness(sampler, n, alpha, UpdateMode::General, Some(params))?);
        let small = c.beta == 0.0 || alpha <= 1.0 / c.beta;
        if obj.is_convex() && small {
            reports.push(smoothness::check_update_expansiveness(sampler, n, alpha, UpdateMode::Convex, Some(params))?);
            if obj.strong_convexity().is_some() {
                reports.push(smoothness::check_update_expansiveness(
                    sampler,
                    n,
                    alpha,
                    UpdateMode::Strongly,
                    Some(params),
                )?);
            } else {
                skipped.push(format!("contractive_strongly at alpha={alpha}: no strong convexity"));
            }
        } else {
            skipped.push(format!("expansive_convex/contractive_strongly at alpha={alpha}: needs a convex family and alpha <= 1/beta"));
        }
    }
    Ok((reports, skipped))
}
