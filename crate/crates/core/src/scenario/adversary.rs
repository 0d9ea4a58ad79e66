//! Adversary models the harness can inject. Exactly one per scenario; the
//! final order of the roster is the probe session the adversary targets.

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::contract::build_authorize_call;
use crate::crypto::LedgerKeyPair;
use crate::ledger::{EventFilter, EventKind, Ledger, Subscription, Transaction};
use crate::Protocol;

/// Message fields a tamper adversary can flip a byte in, either on the
/// direct user-device channel or among the request transaction arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TamperField {
    #[serde(rename = "thing.token")]
    ThingToken,
    #[serde(rename = "thing.hmac_token")]
    ThingHmacToken,
    #[serde(rename = "thing.challenge_response")]
    ThingChallengeResponse,
    #[serde(rename = "tx.token")]
    TxToken,
    #[serde(rename = "tx.hmac_token")]
    TxHmacToken,
    #[serde(rename = "tx.hidden_challenge")]
    TxHiddenChallenge,
    #[serde(rename = "tx.challenge")]
    TxChallenge,
    #[serde(rename = "order.ciphertext")]
    OrderCiphertext,
    #[serde(rename = "receipt.ciphertext")]
    ReceiptCiphertext,
}

impl TamperField {
    pub const ALL: [TamperField; 9] = [
        TamperField::ThingToken,
        TamperField::ThingHmacToken,
        TamperField::ThingChallengeResponse,
        TamperField::TxToken,
        TamperField::TxHmacToken,
        TamperField::TxHiddenChallenge,
        TamperField::TxChallenge,
        TamperField::OrderCiphertext,
        TamperField::ReceiptCiphertext,
    ];

    /// Whether the field exists in the given protocol's messages.
    pub fn applies_to(&self, protocol: Protocol) -> bool {
        match self {
            TamperField::ThingToken
            | TamperField::TxToken
            | TamperField::OrderCiphertext
            | TamperField::ReceiptCiphertext => true,
            TamperField::ThingHmacToken | TamperField::TxHmacToken => protocol != Protocol::S,
            TamperField::ThingChallengeResponse
            | TamperField::TxHiddenChallenge
            | TamperField::TxChallenge => protocol == Protocol::Two,
        }
    }

    /// Canonical byte position for matrix runs: inside the token nonce so
    /// the device id and counter stay parseable, position zero elsewhere.
    pub fn default_position(&self) -> usize {
        match self {
            TamperField::ThingToken | TamperField::TxToken => crate::crypto::TOKEN_LEN - 1,
            _ => 0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TamperField::ThingToken => "thing.token",
            TamperField::ThingHmacToken => "thing.hmac_token",
            TamperField::ThingChallengeResponse => "thing.challenge_response",
            TamperField::TxToken => "tx.token",
            TamperField::TxHmacToken => "tx.hmac_token",
            TamperField::TxHiddenChallenge => "tx.hidden_challenge",
            TamperField::TxChallenge => "tx.challenge",
            TamperField::OrderCiphertext => "order.ciphertext",
            TamperField::ReceiptCiphertext => "receipt.ciphertext",
        }
    }
}

impl std::fmt::Display for TamperField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The adversary for a scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AdversarySpec {
    /// Everyone honest.
    #[default]
    #[serde(rename = "NONE")]
    None,
    /// The device at the configured resource holds a garbage shared key: it
    /// mimics the message formats but cannot derive the provider's session
    /// key.
    #[serde(rename = "FAKE_THING")]
    FakeThing,
    /// The probe user is kept off the policy allow-list.
    #[serde(rename = "UNAUTHORIZED_USER")]
    UnauthorizedUser,
    /// The attacker signs with a leaked allow-listed ledger key but owns a
    /// different encryption key, so the released key is sealed to a key pair
    /// the attacker does not hold.
    #[serde(rename = "IDENTITY_LIE")]
    IdentityLie,
    /// Flip one byte of one named field in flight.
    #[serde(rename = "TAMPER")]
    Tamper { field: TamperField, position: usize },
    /// The last roster user re-deposits a token observed in an earlier
    /// completed session instead of contacting the device.
    #[serde(rename = "REPLAY_TOKEN")]
    ReplayToken,
    /// A stranger races to call authorize while the real provider stays
    /// silent.
    #[serde(rename = "ROGUE_ACP")]
    RogueAcp,
}

impl AdversarySpec {
    /// Stable label used in matrix tables and reports.
    pub fn label(&self) -> String {
        match self {
            AdversarySpec::None => "NONE".into(),
            AdversarySpec::FakeThing => "FAKE_THING".into(),
            AdversarySpec::UnauthorizedUser => "UNAUTHORIZED_USER".into(),
            AdversarySpec::IdentityLie => "IDENTITY_LIE".into(),
            AdversarySpec::Tamper { field, .. } => format!("TAMPER({field})"),
            AdversarySpec::ReplayToken => "REPLAY_TOKEN".into(),
            AdversarySpec::RogueAcp => "ROGUE_ACP".into(),
        }
    }
}

/// Flip one byte in place; positions beyond the end clamp to the last byte.
pub fn flip_byte(bytes: &mut [u8], position: usize) {
    if bytes.is_empty() {
        return;
    }
    let i = position.min(bytes.len() - 1);
    bytes[i] ^= 0x01;
}

/// The rogue authorizer: watches deposits and answers them with forged
/// authorize calls from an unregistered address. Every attempt must revert
/// at the contract's caller check.
pub struct RogueAcp {
    keys: LedgerKeyPair,
    subscription: Subscription,
    rng: ChaCha20Rng,
}

impl RogueAcp {
    pub fn new(keys: LedgerKeyPair, ledger: &Ledger, rng: ChaCha20Rng) -> Self {
        RogueAcp {
            keys,
            subscription: ledger.subscribe(EventFilter {
                kind: Some(EventKind::Deposit),
                contract: None,
            }),
            rng,
        }
    }

    pub fn address(&self) -> crate::crypto::Address {
        self.keys.address()
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.keys.public_bytes()
    }

    pub fn step(&mut self, ledger: &Ledger) -> Vec<Transaction> {
        let events = self.subscription.poll(ledger);
        let mut out = Vec::new();
        let mut sequence = ledger.next_sequence(&self.keys.address());
        for event in events {
            let protocol = match event.args.len() {
                5 => Protocol::S,
                6 => Protocol::One,
                8 => Protocol::Two,
                _ => continue,
            };
            let Ok(p_user): Result<[u8; 32], _> = event.args[0].as_slice().try_into() else {
                continue;
            };
            let uri_resource = match String::from_utf8(event.args[3].clone()) {
                Ok(s) => crate::ledger::Uri(s),
                Err(_) => continue,
            };
            // forged sealed key and, for the second construction, a forged
            // challenge proof; the caller check fires before either matters
            let mut forged_box = vec![0u8; 32 + 24 + 48];
            self.rng.fill_bytes(&mut forged_box);
            let forged_proof = crate::crypto::hash(&forged_box);
            let call = build_authorize_call(
                protocol,
                &p_user,
                &event.args[1],
                &uri_resource,
                &forged_box,
                (protocol == Protocol::Two).then_some(&forged_proof),
            );
            out.push(Transaction::sign(
                &self.keys,
                event.contract.clone(),
                call,
                0,
                sequence,
            ));
            sequence += 1;
        }
        out
    }
}
