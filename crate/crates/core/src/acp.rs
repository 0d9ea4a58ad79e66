//! The access-control provider. Watches DEPOSIT events, authenticates users
//! against address allow-lists, verifies device legitimacy from the token
//! digest, derives the session key, and answers with signed authorize
//! transactions carrying the key sealed to the user's registered encryption
//! key.
//!
//! Rejections never touch the ledger: a deposit that fails any check is
//! dropped with a reason code and the user's remedy is `reclaim_deposit`.
//! The provider knows nothing about what the devices actually do; its
//! decisions depend only on the policy, the token, and the digests.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::build_authorize_call;
use crate::crypto::{
    self, Address, Challenge, Digest, LedgerKeyPair, SessionKey, SharedKey, Token,
};
use crate::ledger::{EventFilter, EventKind, EventRecord, Ledger, Subscription, Transaction, Uri};
use crate::Protocol;

/// Why a DEPOSIT event was dropped instead of authorized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Sender address not in the policy's allow-list.
    Policy,
    /// Token counter not strictly greater than the last one seen.
    Replay,
    /// Device digest check failed: `hmac(sk, token)` mismatch.
    ThingAuth,
    /// Token names a device this provider has no key for.
    UnknownThing,
    /// Token bytes do not parse.
    MalformedToken,
    /// Event arity or field lengths are wrong.
    MalformedEvent,
}

/// One dropped deposit, kept for reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropRecord {
    pub reason: DropReason,
    pub user: Option<Address>,
    pub token: Vec<u8>,
    pub block_height: u64,
}

/// Authorization this provider issued, kept in memory for audits. The
/// session key itself never appears in any serialized output.
#[derive(Clone, Debug)]
pub struct AuthorizedRecord {
    pub user: Address,
    pub token: Vec<u8>,
    pub session_key: SessionKey,
}

/// Allow-list for one policy uri: ledger address plus the encryption key the
/// session key will be sealed to.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolicyRecord {
    pub allowed: BTreeMap<Address, [u8; 32]>,
}

struct ThingRegistration {
    shared_key: SharedKey,
    last_counter: Option<u64>,
}

pub struct Acp {
    keys: LedgerKeyPair,
    policies: BTreeMap<Uri, PolicyRecord>,
    things: BTreeMap<[u8; 16], ThingRegistration>,
    subscription: Subscription,
    drops: Vec<DropRecord>,
    authorized: Vec<AuthorizedRecord>,
    rng: ChaCha20Rng,
}

impl Acp {
    pub fn new(keys: LedgerKeyPair, ledger: &Ledger, rng: ChaCha20Rng) -> Self {
        let subscription = ledger.subscribe(EventFilter {
            kind: Some(EventKind::Deposit),
            contract: None,
        });
        Acp {
            keys,
            policies: BTreeMap::new(),
            things: BTreeMap::new(),
            subscription,
            drops: Vec::new(),
            authorized: Vec::new(),
            rng,
        }
    }

    pub fn address(&self) -> Address {
        self.keys.address()
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.keys.public_bytes()
    }

    pub fn add_policy(&mut self, uri_policy: Uri, record: PolicyRecord) {
        self.policies.insert(uri_policy, record);
    }

    pub fn allow_user(&mut self, uri_policy: &Uri, address: Address, enc_public: [u8; 32]) {
        self.policies
            .entry(uri_policy.clone())
            .or_default()
            .allowed
            .insert(address, enc_public);
    }

    pub fn register_thing(&mut self, thing_id: [u8; 16], shared_key: SharedKey) {
        self.things.insert(
            thing_id,
            ThingRegistration {
                shared_key,
                last_counter: None,
            },
        );
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }

    pub fn authorized(&self) -> &[AuthorizedRecord] {
        &self.authorized
    }

    /// `hmac(sk, challenge)`: the proof only a session-key holder can make,
    /// which the contract hashes and compares against the hidden challenge.
    pub fn compute_challenge_proof(sk: &SessionKey, challenge: &Challenge) -> Digest {
        crypto::hmac(sk.as_bytes(), &challenge.0).expect("session key is non-empty")
    }

    /// Poll the event subscription and produce signed authorize transactions
    /// for every deposit that survives the checks.
    pub fn step(&mut self, ledger: &Ledger) -> Vec<Transaction> {
        let events = self.subscription.poll(ledger);
        let mut out = Vec::new();
        let mut sequence = ledger.next_sequence(&self.address());
        for event in events {
            if let Some(tx) = self.on_deposit_event(&event, sequence) {
                sequence += 1;
                out.push(tx);
            }
        }
        out
    }

    /// The authorization pipeline for one DEPOSIT event:
    /// policy check, replay check, session-key derivation, device
    /// verification (protocols 1 and 2), then seal-and-sign.
    fn on_deposit_event(&mut self, event: &EventRecord, sequence: u64) -> Option<Transaction> {
        let Some(deposit) = DepositFields::parse(event) else {
            self.drops.push(DropRecord {
                reason: DropReason::MalformedEvent,
                user: None,
                token: Vec::new(),
                block_height: event.block_height,
            });
            return None;
        };

        let policy = self.policies.get(&deposit.uri_policy)?; // not ours: ignore silently

        let user_address = crypto::address_of(&deposit.p_user);
        let drop = |reason: DropReason, drops: &mut Vec<DropRecord>| {
            drops.push(DropRecord {
                reason,
                user: Some(user_address),
                token: deposit.token_bytes.clone(),
                block_height: event.block_height,
            });
        };

        // (a) user authentication: exact address match in the allow-list;
        // the key on file is what the session key gets sealed to
        let Some(registered_enc_public) = policy.allowed.get(&user_address).copied() else {
            drop(DropReason::Policy, &mut self.drops);
            return None;
        };

        let Ok(token) = Token::from_bytes(&deposit.token_bytes) else {
            drop(DropReason::MalformedToken, &mut self.drops);
            return None;
        };

        let Some(registration) = self.things.get(&token.thing_id) else {
            drop(DropReason::UnknownThing, &mut self.drops);
            return None;
        };

        // (b) anti-replay: counters must strictly increase per device
        if let Some(last) = registration.last_counter {
            if token.counter <= last {
                drop(DropReason::Replay, &mut self.drops);
                return None;
            }
        }

        // (c) both sides of the protocol derive the same key from the token
        let session_key = crypto::derive_session_key(&registration.shared_key, &token);

        // (d) device legitimacy: recompute hmac(sk, token) and compare
        if let Some(claimed) = deposit.hmac_token {
            let expected = crypto::hmac(session_key.as_bytes(), &deposit.token_bytes)
                .expect("session key is non-empty");
            if claimed != expected {
                drop(DropReason::ThingAuth, &mut self.drops);
                return None;
            }
        }

        // (e) seal the session key to the user's registered encryption key
        let sealed = crypto::seal_asym(
            &mut self.rng,
            &registered_enc_public,
            session_key.as_bytes(),
        )
        .expect("registered encryption keys are valid curve points");

        // (f) answer with the authorize variant the deposit calls for
        let protocol = deposit.protocol;
        let hmac_challenge = deposit
            .challenge
            .map(|raw| Self::compute_challenge_proof(&session_key, &Challenge(raw)));
        let call = build_authorize_call(
            protocol,
            &deposit.p_user,
            &deposit.token_bytes,
            &deposit.uri_resource,
            &sealed.to_bytes(),
            hmac_challenge.as_ref(),
        );

        self.things.get_mut(&token.thing_id).unwrap().last_counter = Some(token.counter);
        self.authorized.push(AuthorizedRecord {
            user: user_address,
            token: deposit.token_bytes.clone(),
            session_key,
        });

        Some(Transaction::sign(
            &self.keys,
            event.contract.clone(),
            call,
            0,
            sequence,
        ))
    }
}

/// DEPOSIT event fields, decoded by arity: 5 args for the straw man, 6 with
/// the device digest, 8 with the hidden challenge and the raw challenge.
struct DepositFields {
    protocol: Protocol,
    p_user: [u8; 32],
    token_bytes: Vec<u8>,
    uri_policy: Uri,
    uri_resource: Uri,
    hmac_token: Option<Digest>,
    challenge: Option<[u8; 32]>,
}

impl DepositFields {
    fn parse(event: &EventRecord) -> Option<Self> {
        let protocol = match event.args.len() {
            5 => Protocol::S,
            6 => Protocol::One,
            8 => Protocol::Two,
            _ => return None,
        };
        let p_user: [u8; 32] = event.args[0].as_slice().try_into().ok()?;
        let token_bytes = event.args[1].clone();
        let uri_policy = Uri(String::from_utf8(event.args[2].clone()).ok()?);
        let uri_resource = Uri(String::from_utf8(event.args[3].clone()).ok()?);
        let hmac_token = match protocol {
            Protocol::S => None,
            _ => Some(Digest::from_slice(&event.args[5])?),
        };
        let challenge = match protocol {
            Protocol::Two => Some(event.args[7].as_slice().try_into().ok()?),
            _ => None,
        };
        Some(DepositFields {
            protocol,
            p_user,
            token_bytes,
            uri_policy,
            uri_resource,
            hmac_token,
            challenge,
        })
    }
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad hex field {field}: {value}")]
    BadHex { field: &'static str, value: String },
}

/// On-disk policy file: policy uri to allow-list entries.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(transparent)]
pub struct PolicyFile(pub BTreeMap<String, Vec<PolicyEntry>>);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PolicyEntry {
    pub address: String,
    pub enc_public_key: String,
}

impl PolicyFile {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    /// Decode into policy records keyed by policy uri.
    pub fn decode(&self) -> Result<BTreeMap<Uri, PolicyRecord>, FileError> {
        let mut out = BTreeMap::new();
        for (uri, entries) in &self.0 {
            let mut record = PolicyRecord::default();
            for entry in entries {
                let address = hex::decode(&entry.address)
                    .ok()
                    .and_then(|b| Address::from_slice(&b))
                    .ok_or(FileError::BadHex {
                        field: "address",
                        value: entry.address.clone(),
                    })?;
                let enc: [u8; 32] = hex::decode(&entry.enc_public_key)
                    .ok()
                    .and_then(|b| b.try_into().ok())
                    .ok_or(FileError::BadHex {
                        field: "enc_public_key",
                        value: entry.enc_public_key.clone(),
                    })?;
                record.allowed.insert(address, enc);
            }
            out.insert(Uri::new(uri.clone()), record);
        }
        Ok(out)
    }
}

/// On-disk device registration file: hex device id to hex shared key.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(transparent)]
pub struct ThingKeyFile(pub BTreeMap<String, String>);

impl ThingKeyFile {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn decode(&self) -> Result<BTreeMap<[u8; 16], SharedKey>, FileError> {
        let mut out = BTreeMap::new();
        for (id_hex, key_hex) in &self.0 {
            let id: [u8; 16] = hex::decode(id_hex)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or(FileError::BadHex {
                    field: "thing_id",
                    value: id_hex.clone(),
                })?;
            let key: [u8; 32] = hex::decode(key_hex)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or(FileError::BadHex {
                    field: "shared_key",
                    value: key_hex.clone(),
                })?;
            out.insert(id, SharedKey(key));
        }
        Ok(out)
    }
}
