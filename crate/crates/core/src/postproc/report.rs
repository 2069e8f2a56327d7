//! Full post-processing pass: gauge optimization, CPTP projection of every
//! channel, then error-generator decomposition.

use serde::{Deserialize, Serialize};

use super::cptp::{cptp_project_with, CptpOptions};
use super::gauge::{gauge_optimize, GaugeOptions};
use super::lbfgs::StopReason;
use super::taxonomy::{infidelity_report, Contribution, ErrorGeneratorDecomposition};
use crate::error::Result;
use crate::gateset::{GateSetDocument, NoisyGateSet};
use crate::pauli::Ptm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessOptions {
    pub gauge: GaugeOptions,
    pub cptp: CptpOptions,
    /// Number of leading contributions kept per channel.
    pub top_k: usize,
}

impl Default for PostprocessOptions {
    fn default() -> Self {
        PostprocessOptions {
            gauge: GaugeOptions::default(),
            cptp: CptpOptions::default(),
            top_k: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    /// Gate label, `E` or `rho`.
    pub channel: String,
    pub eps_ent: f64,
    /// Noise PTM, row-major.
    pub matrix: Vec<Vec<f64>>,
    pub cptp_correction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_j_sq: Option<f64>,
    #[serde(default)]
    pub top: Vec<Contribution>,
    #[serde(default)]
    pub negative: Vec<Contribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<ErrorGeneratorDecomposition>,
    /// Why the decomposition is missing, if it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ChannelReport {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.decomposition
            .as_ref()?
            .iter()
            .find(|c| c.label.to_string() == label)
            .map(|c| c.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub gateset: GateSetDocument,
    pub gauge_objective: f64,
    pub gauge_reason: StopReason,
    pub channels: Vec<ChannelReport>,
}

impl Snapshot {
    pub fn channel(&self, name: &str) -> Option<&ChannelReport> {
        self.channels.iter().find(|c| c.channel == name)
    }
}

fn channel_report(name: String, noise: &Ptm, correction: f64, top_k: usize) -> ChannelReport {
    let m = noise.matrix();
    let matrix = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    let mut report = ChannelReport {
        channel: name,
        eps_ent: 1.0 - noise.entanglement_fidelity(),
        matrix,
        cptp_correction: correction,
        eps_j: None,
        theta_j_sq: None,
        top: Vec::new(),
        negative: Vec::new(),
        decomposition: None,
        error: None,
    };
    match infidelity_report(noise) {
        Ok(r) => {
            report.eps_j = Some(r.eps_j);
            report.theta_j_sq = Some(r.theta_j_sq);
            report.top = r.top(top_k).to_vec();
            report.negative = r.negative;
            report.decomposition = Some(r.decomposition);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Post-processes a copy of `estimate` against `target`.
pub fn postprocess(estimate: &NoisyGateSet, target: &NoisyGateSet, options: &PostprocessOptions) -> Result<Snapshot> {
    let gauged = gauge_optimize(estimate, target, &options.gauge)?;
    let gs = &gauged.gateset;
    let mut gate_noise = Vec::new();
    let mut corrections = Vec::new();
    for g in gs.gates() {
        let p = cptp_project_with(&g.noise, &options.cptp);
        corrections.push(p.correction_norm);
        gate_noise.push(p.ptm);
    }
    let effect = cptp_project_with(gs.effect_noise(), &options.cptp);
    let prep = cptp_project_with(gs.prep_noise(), &options.cptp);
    let projected = gs.with_noise(gate_noise, effect.ptm.clone(), prep.ptm.clone())?;
    let mut channels = Vec::new();
    for (g, c) in projected.gates().iter().zip(&corrections) {
        channels.push(channel_report(g.label.to_string(), &g.noise, *c, options.top_k));
    }
    channels.push(channel_report("E".into(), projected.effect_noise(), effect.correction_norm, options.top_k));
    channels.push(channel_report("rho".into(), projected.prep_noise(), prep.correction_norm, options.top_k));
    Ok(Snapshot {
        gateset: projected.to_document(),
        gauge_objective: gauged.objective,
        gauge_reason: gauged.reason,
        channels,
    })
}

/// CSV rows `(channel, label, class, coefficient, contribution)`.
pub fn snapshot_csv(s: &Snapshot) -> String {
    let mut out = String::from("channel,label,class,coefficient,contribution\n");
    for c in &s.channels {
        if let Some(d) = &c.decomposition {
            for r in super::taxonomy::decomposition_table(d) {
                out.push_str(&format!(
                    "{},{},{},{:e},{:e}\n",
                    c.channel, r.label, r.class, r.coefficient, r.contribution
                ));
            }
        }
    }
    out
}
