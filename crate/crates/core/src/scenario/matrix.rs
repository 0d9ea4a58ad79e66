//! The protocol-by-adversary failure matrix. The expected outcome triples
//! are a checked-in fixture; a matrix run executes every cell and compares.
//!
//! Triple semantics, for the adversary-targeted session only:
//! `(KEY event emitted, provider paid, session completed)`.
//!
//! The fixture encodes what each construction is supposed to buy:
//! the straw man releases payment with no device verification, so a fake
//! device (or a tampered token) still gets the provider paid; the first
//! construction lets the provider drop those deposits before authorizing;
//! the second construction additionally makes the contract itself refuse
//! the key release when the challenge proof does not match.

use serde::Serialize;

use crate::scenario::adversary::{AdversarySpec, TamperField};
use crate::scenario::config::{Expectation, OrderSpec, ScenarioConfig, UserSpec};
use crate::scenario::report::ScenarioOutcome;
use crate::scenario::runner;
use crate::Protocol;

/// Expected outcome for one (protocol, adversary) cell.
#[derive(Clone, Debug, Serialize)]
pub struct MatrixExpectation {
    pub protocol: Protocol,
    pub adversary: AdversarySpec,
    pub key_emitted: bool,
    pub provider_paid: bool,
    pub completed: bool,
}

impl MatrixExpectation {
    pub fn triple(&self) -> (bool, bool, bool) {
        (self.key_emitted, self.provider_paid, self.completed)
    }

    pub fn as_expectation(&self) -> Expectation {
        Expectation {
            key_emitted: self.key_emitted,
            provider_paid: self.provider_paid,
            completed: self.completed,
        }
    }
}

/// Every adversary the matrix runs under a protocol, tamper fields expanded.
pub fn adversaries_for(protocol: Protocol) -> Vec<AdversarySpec> {
    let mut out = vec![
        AdversarySpec::None,
        AdversarySpec::FakeThing,
        AdversarySpec::UnauthorizedUser,
        AdversarySpec::IdentityLie,
    ];
    for field in TamperField::ALL {
        if field.applies_to(protocol) {
            out.push(AdversarySpec::Tamper {
                field,
                position: field.default_position(),
            });
        }
    }
    out.push(AdversarySpec::ReplayToken);
    out.push(AdversarySpec::RogueAcp);
    out
}

/// The checked-in fixture: expected triples for every cell.
pub fn expected_matrix() -> Vec<MatrixExpectation> {
    let mut out = Vec::new();
    for protocol in Protocol::ALL {
        for adversary in adversaries_for(protocol) {
            let (key_emitted, provider_paid, completed) = expected_triple(protocol, &adversary);
            out.push(MatrixExpectation {
                protocol,
                adversary,
                key_emitted,
                provider_paid,
                completed,
            });
        }
    }
    out
}

fn expected_triple(protocol: Protocol, adversary: &AdversarySpec) -> (bool, bool, bool) {
    use AdversarySpec::*;
    match adversary {
        None => (true, true, true),
        // the straw man pays without any check; the user only finds out when
        // the device cannot speak the delivered key
        FakeThing => match protocol {
            Protocol::S => (true, true, false),
            _ => (false, false, false),
        },
        UnauthorizedUser => (false, false, false),
        // the key is released and paid for, but sealed to the registered
        // encryption key the attacker does not hold
        IdentityLie => (true, true, false),
        ReplayToken => (false, false, false),
        RogueAcp => (false, false, false),
        Tamper { field, .. } => match field {
            // a corrupted token desynchronizes the derived keys; only the
            // straw man still pays
            TamperField::ThingToken | TamperField::TxToken => match protocol {
                Protocol::S => (true, true, false),
                _ => (false, false, false),
            },
            TamperField::ThingHmacToken | TamperField::TxHmacToken => (false, false, false),
            TamperField::ThingChallengeResponse
            | TamperField::TxHiddenChallenge
            | TamperField::TxChallenge => (false, false, false),
            // the key was already released and paid before the encrypted
            // exchange; corruption there only kills the session
            TamperField::OrderCiphertext | TamperField::ReceiptCiphertext => (true, true, false),
        },
    }
}

/// Scenario config for one matrix cell.
pub fn scenario_for(protocol: Protocol, adversary: &AdversarySpec, seed: u64) -> ScenarioConfig {
    let mut config = ScenarioConfig::coffee_honest(protocol, seed);
    config.name = format!("matrix-{protocol}-{}", adversary.label());
    config.adversary = *adversary;
    match adversary {
        AdversarySpec::UnauthorizedUser => {
            config.users[0].authorized = false;
        }
        AdversarySpec::ReplayToken => {
            // an honest session to observe, then the replaying second user
            config.users.push(UserSpec {
                name: "mallory".into(),
                funding: crate::scenario::config::DEFAULT_USER_FUNDING,
                authorized: true,
            });
            config.orders.push(OrderSpec {
                user: "mallory".into(),
                resource: config.orders[0].resource.clone(),
                payload: "coffee,sugar=0".into(),
                deposit: Option::None,
            });
        }
        _ => {}
    }
    let (key_emitted, provider_paid, completed) = expected_triple(protocol, adversary);
    config.expect = Some(Expectation {
        key_emitted,
        provider_paid,
        completed,
    });
    config
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixCell {
    pub protocol: Protocol,
    pub adversary: String,
    pub expected: (bool, bool, bool),
    pub actual: (bool, bool, bool),
    pub conservation_ok: bool,
    pub audits_ok: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MatrixReport {
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|cell| cell.pass)
    }

    /// Plain-text table for the CLI.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<9} {:<32} {:<14} {:<14} {}\n",
            "protocol", "adversary", "expected", "actual", "result"
        ));
        for cell in &self.cells {
            let fmt = |(key, paid, done): (bool, bool, bool)| {
                format!(
                    "{}{}{}",
                    if key { "K" } else { "-" },
                    if paid { "P" } else { "-" },
                    if done { "C" } else { "-" }
                )
            };
            out.push_str(&format!(
                "{:<9} {:<32} {:<14} {:<14} {}\n",
                cell.protocol.to_string(),
                cell.adversary,
                fmt(cell.expected),
                fmt(cell.actual),
                if cell.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Filter by adversary kind token: `NONE`, `FAKE_THING`, `TAMPER`, ...
/// `TAMPER` selects every tamper field.
fn kind_token(adversary: &AdversarySpec) -> &'static str {
    match adversary {
        AdversarySpec::None => "NONE",
        AdversarySpec::FakeThing => "FAKE_THING",
        AdversarySpec::UnauthorizedUser => "UNAUTHORIZED_USER",
        AdversarySpec::IdentityLie => "IDENTITY_LIE",
        AdversarySpec::Tamper { .. } => "TAMPER",
        AdversarySpec::ReplayToken => "REPLAY_TOKEN",
        AdversarySpec::RogueAcp => "ROGUE_ACP",
    }
}

/// Run the matrix for the given protocols, optionally restricted to some
/// adversary kinds. Each cell runs its own isolated ledger; outcomes are
/// compared against the fixture.
pub fn run_matrix(
    protocols: &[Protocol],
    adversary_filter: Option<&[String]>,
) -> (MatrixReport, Vec<ScenarioOutcome>) {
    let mut report = MatrixReport::default();
    let mut outcomes = Vec::new();
    let mut seed = 11_000u64;
    for expectation in expected_matrix() {
        if !protocols.contains(&expectation.protocol) {
            continue;
        }
        if let Some(filter) = adversary_filter {
            let token = kind_token(&expectation.adversary);
            if !filter.iter().any(|f| f.eq_ignore_ascii_case(token)) {
                continue;
            }
        }
        seed += 1;
        let config = scenario_for(expectation.protocol, &expectation.adversary, seed);
        let outcome = runner::run(&config).expect("matrix configs are valid");
        let actual = outcome.report.probe.as_triple();
        let conservation_ok = outcome.report.conservation.ok;
        let audits_ok = outcome.report.audits.all_pass();
        report.cells.push(MatrixCell {
            protocol: expectation.protocol,
            adversary: expectation.adversary.label(),
            expected: expectation.triple(),
            actual,
            conservation_ok,
            audits_ok,
            pass: actual == expectation.triple() && conservation_ok && audits_ok,
        });
        outcomes.push(outcome);
    }
    (report, outcomes)
}
