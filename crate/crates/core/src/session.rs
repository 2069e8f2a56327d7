//! Online analysis sessions: ordered ingestion, periodic post-processing on
//! a copy of the estimate, reports and checkpoint round trips.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bayes::{Estimator, EstimatorConfig, GaussianState, UpdateSummary};
use crate::bootstrap::{bootstrap, BootstrapConfig};
use crate::checkpoint;
use crate::error::{FbtError, Result};
use crate::gateset::{ideal_two_qubit_gateset, GateSetDocument, NoisyGateSet, TwoQubitGate};
use crate::postproc::report::{postprocess, PostprocessOptions, Snapshot};
use crate::records::ObservationRecord;

pub const SESSION_SCHEMA: &str = "fbt.session.v1";
pub const REPORT_SCHEMA: &str = "fbt.report.v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Booting,
    Live,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Gate set whose ideal part anchors the model; the ideal CZ set when
    /// absent.
    pub gateset: Option<GateSetDocument>,
    pub bootstrap: BootstrapConfig,
    pub estimator: EstimatorConfig,
    pub postprocess: PostprocessOptions,
    /// Post-process every this many updates; 0 disables.
    pub snapshot_interval: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            gateset: None,
            bootstrap: BootstrapConfig::default(),
            estimator: EstimatorConfig::default(),
            postprocess: PostprocessOptions::default(),
            snapshot_interval: 100,
        }
    }
}

impl SessionConfig {
    /// Parses the configured gate set and returns its ideal part.
    pub fn base(&self) -> Result<NoisyGateSet> {
        Ok(match &self.gateset {
            Some(doc) => NoisyGateSet::from_document(doc)?.ideal(),
            None => ideal_two_qubit_gateset(TwoQubitGate::Cz),
        })
    }

    /// Runs the configured bootstrap. Full warm boots read the checkpoint
    /// named in the config.
    pub fn boot_state(&self, base: &NoisyGateSet) -> Result<GaussianState> {
        let previous = match &self.bootstrap {
            BootstrapConfig::FullWarm(c) => {
                let path = c.checkpoint.as_ref().ok_or_else(|| {
                    FbtError::InvalidConfig("full warm boot needs a checkpoint path".into())
                })?;
                Some(checkpoint::load(Path::new(path))?.estimator.into_state())
            }
            _ => None,
        };
        bootstrap(base, &self.bootstrap, previous.as_ref())
    }
}

/// Post-processing output taken after `update` updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub update: u64,
    /// Timestamp of the last applied record.
    pub t: f64,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfidelityPoint {
    pub update: u64,
    pub t: f64,
    pub eps_ent: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: u64,
    pub shots: u64,
    pub first_t: Option<f64>,
    pub last_t: Option<f64>,
    /// Mean of observed minus predicted.
    pub residual_mean: f64,
    /// Standard error of that mean.
    pub residual_se: f64,
}

impl IngestStats {
    fn from_history(history: &[UpdateSummary], shots: u64) -> Self {
        let n = history.len();
        let r: Vec<f64> = history.iter().map(|h| h.observed - h.predicted).collect();
        let mean = r.iter().sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 {
            r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        IngestStats {
            records: n as u64,
            shots,
            first_t: history.first().map(|h| h.t),
            last_t: history.last().map(|h| h.t),
            residual_mean: mean,
            residual_se: (var / n.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub schema: String,
    pub id: String,
    pub status: SessionStatus,
    pub update_count: u64,
    /// Interval-triggered snapshots so far.
    pub snapshot_count: u64,
    /// Latest snapshot; before the first interval this is the boot-time
    /// view of the prior mean (`update` 0).
    pub snapshot: Option<SnapshotRecord>,
    pub infidelity: Vec<InfidelityPoint>,
    pub stats: IngestStats,
}

/// Session metadata stored in the checkpoint header.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionMeta {
    schema: String,
    id: String,
    config: SessionConfig,
    status: SessionStatus,
    history: Vec<UpdateSummary>,
    shots: u64,
    snapshot_count: u64,
    latest: Option<SnapshotRecord>,
    infidelity: Vec<InfidelityPoint>,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    config: SessionConfig,
    base: NoisyGateSet,
    status: SessionStatus,
    estimator: Option<Estimator>,
    history: Vec<UpdateSummary>,
    shots: u64,
    snapshot_count: u64,
    latest: Option<Arc<SnapshotRecord>>,
    infidelity: Vec<InfidelityPoint>,
}

impl Session {
    /// Session in the booting state. Call [`Session::start`] with the boot
    /// result, or use [`Session::create`].
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Result<Self> {
        let base = config.base()?;
        if let BootstrapConfig::FullWarm(c) = &config.bootstrap {
            if c.checkpoint.is_none() {
                return Err(FbtError::InvalidConfig("full warm boot needs a checkpoint path".into()));
            }
        }
        Ok(Session {
            id: id.into(),
            config,
            base,
            status: SessionStatus::Booting,
            estimator: None,
            history: Vec::new(),
            shots: 0,
            snapshot_count: 0,
            latest: None,
            infidelity: Vec::new(),
        })
    }

    /// Creates and boots synchronously.
    pub fn create(id: impl Into<String>, config: SessionConfig) -> Result<Self> {
        let mut s = Session::new(id, config)?;
        let state = s.config.boot_state(&s.base)?;
        s.start(state)?;
        Ok(s)
    }

    /// Installs the booted prior and goes live.
    pub fn start(&mut self, state: GaussianState) -> Result<()> {
        if self.status != SessionStatus::Booting {
            return Err(FbtError::InvalidConfig(format!("session `{}` is not booting", self.id)));
        }
        let est = Estimator::new(&self.base, state, self.config.estimator.clone())?;
        self.history.clear();
        let snapshot = postprocess(&est.mean_gateset()?, &self.base, &self.config.postprocess)?;
        self.latest = Some(Arc::new(SnapshotRecord {
            update: est.state().update_count,
            t: 0.0,
            snapshot,
        }));
        self.estimator = Some(est);
        self.status = SessionStatus::Live;
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn base(&self) -> &NoisyGateSet {
        &self.base
    }

    pub fn estimator(&self) -> Option<&Estimator> {
        self.estimator.as_ref()
    }

    pub fn history(&self) -> &[UpdateSummary] {
        &self.history
    }

    pub fn update_count(&self) -> u64 {
        self.estimator.as_ref().map_or(0, |e| e.state().update_count)
    }

    pub fn snapshot_count(&self) -> u64 {
        self.snapshot_count
    }

    pub fn latest_snapshot(&self) -> Option<Arc<SnapshotRecord>> {
        self.latest.clone()
    }

    pub fn close(&mut self) {
        self.status = SessionStatus::Closed;
    }

    /// Applies `records` in order. All records are validated before any is
    /// applied. Every `snapshot_interval`-th update post-processes a copy of
    /// the posterior mean.
    pub fn submit(&mut self, records: &[ObservationRecord]) -> Result<Vec<UpdateSummary>> {
        match self.status {
            SessionStatus::Live => {}
            SessionStatus::Booting => {
                return Err(FbtError::InvalidConfig(format!("session `{}` is still booting", self.id)))
            }
            SessionStatus::Closed => {
                return Err(FbtError::InvalidConfig(format!("session `{}` is closed", self.id)))
            }
        }
        for (i, r) in records.iter().enumerate() {
            r.validate().map_err(|e| match e {
                FbtError::Field { path, message } => FbtError::Field {
                    path: format!("records[{i}].{path}"),
                    message,
                },
                other => other,
            })?;
        }
        let interval = self.config.snapshot_interval;
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            let est = self.estimator.as_mut().expect("live session has an estimator");
            let summary = est.update(r)?;
            self.history.push(summary.clone());
            self.shots += r.shots as u64;
            let count = est.state().update_count;
            if interval > 0 && count % interval == 0 {
                self.take_snapshot(r.t)?;
            }
            out.push(summary);
        }
        Ok(out)
    }

    fn take_snapshot(&mut self, t: f64) -> Result<()> {
        let est = self.estimator.as_ref().expect("live session has an estimator");
        let mean = est.mean_gateset()?;
        let snapshot = postprocess(&mean, &self.base, &self.config.postprocess)?;
        let update = est.state().update_count;
        self.infidelity.push(InfidelityPoint {
            update,
            t,
            eps_ent: snapshot
                .channels
                .iter()
                .map(|c| (c.channel.clone(), c.eps_ent))
                .collect(),
        });
        self.latest = Some(Arc::new(SnapshotRecord { update, t, snapshot }));
        self.snapshot_count += 1;
        tracing::debug!(session = %self.id, update, "snapshot taken");
        Ok(())
    }

    pub fn report(&self) -> SessionReport {
        SessionReport {
            schema: REPORT_SCHEMA.into(),
            id: self.id.clone(),
            status: self.status,
            update_count: self.update_count(),
            snapshot_count: self.snapshot_count,
            snapshot: self.latest.as_deref().cloned(),
            infidelity: self.infidelity.clone(),
            stats: IngestStats::from_history(&self.history, self.shots),
        }
    }

    fn meta(&self) -> SessionMeta {
        SessionMeta {
            schema: SESSION_SCHEMA.into(),
            id: self.id.clone(),
            config: self.config.clone(),
            status: self.status,
            history: self.history.clone(),
            shots: self.shots,
            snapshot_count: self.snapshot_count,
            latest: self.latest.as_deref().cloned(),
            infidelity: self.infidelity.clone(),
        }
    }

    /// Writes the estimator with the session metadata embedded.
    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        let est = self.estimator.as_ref().ok_or_else(|| {
            FbtError::InvalidConfig(format!("session `{}` has no estimator yet", self.id))
        })?;
        checkpoint::save(path, est, serde_json::to_value(self.meta())?)
    }

    /// Restores a session written by [`Session::checkpoint`].
    pub fn restore(path: &Path) -> Result<Self> {
        let ckpt = checkpoint::load(path)?;
        let meta: SessionMeta = serde_json::from_value(ckpt.extra)
            .map_err(|e| FbtError::Format(format!("checkpoint carries no session metadata: {e}")))?;
        if meta.schema != SESSION_SCHEMA {
            return Err(FbtError::Format(format!("unsupported session schema `{}`", meta.schema)));
        }
        let est = ckpt.estimator;
        if meta.history.len() as u64 != est.state().update_count {
            return Err(FbtError::Format(format!(
                "history has {} entries for {} updates",
                meta.history.len(),
                est.state().update_count
            )));
        }
        let base = meta.config.base()?;
        est.state().registry().check(&base)?;
        Ok(Session {
            id: meta.id,
            config: meta.config,
            base,
            status: meta.status,
            estimator: Some(est),
            history: meta.history,
            shots: meta.shots,
            snapshot_count: meta.snapshot_count,
            latest: meta.latest.map(Arc::new),
            infidelity: meta.infidelity,
        })
    }
}
