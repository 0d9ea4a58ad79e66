//! Run reports: session outcomes, balances, metered costs, provider drop
//! log, key-agreement evidence, and the audit checklist every scenario is
//! held to. The serialized report carries key fingerprints only; raw session
//! keys stay in the in-memory outcome for tests.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::agent::SessionRecord;
use crate::crypto::SessionKey;
use crate::scenario::config::Expectation;
use crate::scenario::trace::TraceBlock;
use crate::Protocol;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Gas measured for an equivalent contract deployed on an EVM testbed,
/// shown beside the simulator's metered costs for orientation. The scales
/// are unrelated; nothing asserts equality. The richer functions cost more
/// on both meters because they carry and store strictly more data.
pub const EVM_REFERENCE_GAS: [(&str, u64); 5] = [
    ("requestS", 123_186),
    ("request1", 128_218),
    ("request2", 253_488),
    ("authorize1", 57_950),
    ("authorize2", 63_746),
];

pub fn evm_reference_gas(function: &str) -> Option<u64> {
    EVM_REFERENCE_GAS
        .iter()
        .find(|(name, _)| *name == function)
        .map(|(_, gas)| *gas)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub name: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub adversary: String,
    pub sessions: Vec<SessionSummary>,
    pub probe: ProbeOutcome,
    pub balances: BTreeMap<String, u64>,
    pub escrow_remaining: u64,
    pub provider_earned: u64,
    pub conservation: ConservationCheck,
    pub costs: Vec<CostLine>,
    pub acp_drops: Vec<String>,
    pub key_agreement: Vec<KeyAgreementLine>,
    pub audits: AuditReport,
    pub channel_trace: Vec<String>,
}

/// The observable triple for the adversary-targeted (last) session, plus
/// its failure reason if any.
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub struct ProbeOutcome {
    pub key_emitted: bool,
    pub provider_paid: bool,
    pub completed: bool,
}

impl ProbeOutcome {
    pub fn as_triple(&self) -> (bool, bool, bool) {
        (self.key_emitted, self.provider_paid, self.completed)
    }

    pub fn matches(&self, expect: &Expectation) -> bool {
        self.key_emitted == expect.key_emitted
            && self.provider_paid == expect.provider_paid
            && self.completed == expect.completed
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionSummary {
    pub user: String,
    pub resource: String,
    pub state: String,
    pub deposit: u64,
    pub refunded: u64,
    pub token: Option<String>,
    pub session_key_fingerprint: Option<String>,
    pub reclaim_attempts: Vec<String>,
    pub dispute_evidence: Option<String>,
}

impl SessionSummary {
    pub fn from_record(user: &str, record: &SessionRecord) -> Self {
        SessionSummary {
            user: user.to_string(),
            resource: record.uri_resource.to_string(),
            state: format!("{:?}", record.state),
            deposit: record.deposit,
            refunded: record.refunded,
            token: record.onchain_token.as_ref().map(hex::encode),
            session_key_fingerprint: record
                .session_key
                .as_ref()
                .map(|sk| sk.fingerprint().to_string()),
            reclaim_attempts: record
                .reclaim_attempts
                .iter()
                .map(|(height, outcome)| format!("height={height}: {outcome}"))
                .collect(),
            dispute_evidence: record.dispute_evidence.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub struct ConservationCheck {
    pub funded: u64,
    pub final_total: u64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CostLine {
    pub function: String,
    pub calls: u64,
    pub cost_per_call: u64,
    /// EVM-side measurement for the same function, where one exists.
    pub evm_reference_gas: Option<u64>,
}

/// Session-key fingerprints from the three independent derivations.
#[derive(Clone, Debug, Serialize)]
pub struct KeyAgreementLine {
    pub session: usize,
    pub user: Option<String>,
    pub thing: Option<String>,
    pub acp: Option<String>,
    pub agree: bool,
}

/// Raw keys behind a [`KeyAgreementLine`]; never serialized.
#[derive(Clone, Debug, Default)]
pub struct KeyAgreementCheck {
    pub user: Option<SessionKey>,
    pub thing: Option<SessionKey>,
    pub acp: Option<SessionKey>,
}

impl KeyAgreementCheck {
    /// True when every captured derivation is bitwise identical (and at
    /// least two sides were captured).
    pub fn agree(&self) -> bool {
        let keys: Vec<&SessionKey> = [&self.user, &self.thing, &self.acp]
            .into_iter()
            .flatten()
            .collect();
        keys.len() >= 2 && keys.windows(2).all(|w| w[0] == w[1])
    }

    pub fn to_line(&self, session: usize) -> KeyAgreementLine {
        let fp = |sk: &Option<SessionKey>| sk.as_ref().map(|k| k.fingerprint().to_string());
        KeyAgreementLine {
            session,
            user: fp(&self.user),
            thing: fp(&self.thing),
            acp: fp(&self.acp),
            agree: self.agree(),
        }
    }
}

/// Checks every run is audited against, independent of the scenario's own
/// expectations.
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub struct AuditReport {
    /// Total currency after the run equals total funded.
    pub conservation: bool,
    /// Every KEY event names a user that was on the allow-list.
    pub policy_soundness: bool,
    /// Every authorize call answers a DEPOSIT event observed earlier.
    pub authorize_preceded_by_deposit: bool,
    /// No transaction was ever signed by a device (devices hold no ledger
    /// keys; all senders are accounted for).
    pub no_thing_senders: bool,
    /// No session key appears in plaintext in any on-ledger field.
    pub no_plaintext_session_keys: bool,
    /// Every deposit ended in exactly one of: provider, user, still escrowed.
    pub escrow_settled_exactly_once: bool,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.conservation
            && self.policy_soundness
            && self.authorize_preceded_by_deposit
            && self.no_thing_senders
            && self.no_plaintext_session_keys
            && self.escrow_settled_exactly_once
    }
}

/// Everything a run produces: the serializable report, the block trace, and
/// the full in-memory session records for assertions.
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub trace: Vec<TraceBlock>,
    pub sessions: Vec<SessionRecord>,
    pub key_agreement: Vec<KeyAgreementCheck>,
}

impl ScenarioOutcome {
    pub fn write_trace(&self, path: &std::path::Path) -> Result<(), super::trace::TraceError> {
        super::trace::write_trace(path, &self.trace)
    }

    /// Whether the run holds up: audits pass and, if the config declared an
    /// expected triple, the probe matched it.
    pub fn expectations_hold(&self, expect: Option<&Expectation>) -> bool {
        self.report.audits.all_pass()
            && expect.map_or(true, |expect| self.report.probe.matches(expect))
    }
}
