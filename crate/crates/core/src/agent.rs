//! The user's side of a session: ask the device for a token, deposit with
//! the access contract, wait for the KEY event, unseal the session key, and
//! run the encrypted order/receipt exchange.
//!
//! The agent drives everything through a [`SessionEnv`], which the scenario
//! harness implements by wiring the ledger, the provider, the device channel,
//! and any configured adversary behind it. That keeps the session state
//! machine here and the orchestration (and interference) elsewhere.

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::contract::{build_reclaim_call, build_request_call};
use crate::crypto::{
    self, Address, Challenge, Digest, EncKeyPair, LedgerKeyPair, SealedBox, SessionKey,
};
use crate::ledger::{Call, EventRecord, LedgerError, Receipt, Transaction, TxStatus, Uri};
use crate::thing::ThingResponse;
use crate::Protocol;

/// Session lifecycle; transitions move strictly forward.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SessionState {
    RequestedThing,
    Deposited,
    Keyed,
    Completed,
    Failed(FailureReason),
}

impl SessionState {
    fn rank(&self) -> u8 {
        match self {
            SessionState::RequestedThing => 0,
            SessionState::Deposited => 1,
            SessionState::Keyed => 2,
            SessionState::Completed => 3,
            SessionState::Failed(_) => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FailureReason {
    DepositRejected(String),
    TimeoutNoKey,
    KeyUnsealFailed,
    ThingChannelFailed(String),
}

/// Everything that happened in one session, for reports and assertions.
#[derive(Clone, Debug)]
pub struct SessionRecord {
    pub protocol: Protocol,
    pub uri_resource: Uri,
    pub deposit: u64,
    pub state: SessionState,
    /// Token as received from the device over the direct channel.
    pub thing_token: Option<Vec<u8>>,
    /// Token as committed on the ledger (authoritative from the DEPOSIT event).
    pub onchain_token: Option<Vec<u8>>,
    pub challenge: Option<Challenge>,
    pub session_key: Option<SessionKey>,
    pub deposited_height: Option<u64>,
    pub key_event_height: Option<u64>,
    /// Amount returned by a successful reclaim.
    pub refunded: u64,
    pub reclaim_attempts: Vec<(u64, String)>,
    /// Receipt-open failures are recorded here; the ledger history is the
    /// user's evidence if it comes to a dispute.
    pub dispute_evidence: Option<String>,
}

impl SessionRecord {
    fn new(protocol: Protocol, uri_resource: Uri, deposit: u64) -> Self {
        SessionRecord {
            protocol,
            uri_resource,
            deposit,
            state: SessionState::RequestedThing,
            thing_token: None,
            onchain_token: None,
            challenge: None,
            session_key: None,
            deposited_height: None,
            key_event_height: None,
            refunded: 0,
            reclaim_attempts: Vec::new(),
            dispute_evidence: None,
        }
    }

    fn advance(&mut self, next: SessionState) {
        debug_assert!(
            next.rank() > self.state.rank(),
            "session states only move forward: {:?} -> {:?}",
            self.state,
            next
        );
        self.state = next;
    }

    pub fn completed(&self) -> bool {
        self.state == SessionState::Completed
    }
}

/// The world as the agent sees it. Implemented by the scenario harness;
/// adversaries live behind these methods.
pub trait SessionEnv {
    /// Direct-channel resource request to the device.
    fn request_resource(
        &mut self,
        uri_resource: &Uri,
        protocol: Protocol,
        challenge: Option<&Challenge>,
    ) -> Result<ThingResponse, String>;

    /// Direct-channel encrypted order; returns the sealed receipt.
    fn order_exchange(
        &mut self,
        token_bytes: &[u8],
        sealed_order: crypto::SealedMessage,
    ) -> Result<crypto::SealedMessage, String>;

    /// Hook between composing and signing the request call. The honest
    /// environment returns it unchanged.
    fn transform_request_call(&mut self, call: Call) -> Call {
        call
    }

    fn submit_tx(&mut self, tx: Transaction) -> Result<Receipt, LedgerError>;

    /// Let the rest of the world act and the chain grow by one block.
    fn advance_block(&mut self);

    fn height(&self) -> u64;

    /// KEY event for this user and token, if one has been emitted.
    fn find_key_event(&self, contract: &Uri, p_user: &[u8; 32], token: &[u8])
        -> Option<EventRecord>;

    fn next_sequence(&self, address: &Address) -> u64;
}

/// Inputs for the deposit transaction: either distilled from a live device
/// response or replayed from an observed DEPOSIT event.
#[derive(Clone, Debug)]
pub struct RequestMaterial {
    pub contract_uri: Uri,
    pub token_bytes: Vec<u8>,
    pub hmac_token: Option<Digest>,
    pub hidden_challenge: Option<Digest>,
    pub challenge: Option<[u8; 32]>,
}

impl RequestMaterial {
    pub fn from_response(response: &ThingResponse, challenge: Option<&Challenge>) -> Self {
        RequestMaterial {
            contract_uri: response.contract_uri.clone(),
            token_bytes: response.token.canonical_bytes().to_vec(),
            hmac_token: response.hmac_token,
            hidden_challenge: response.challenge_response,
            challenge: challenge.map(|c| c.0),
        }
    }
}

/// Session parameters the harness resolves from scenario configuration.
#[derive(Clone, Debug)]
pub struct SessionParams {
    pub uri_resource: Uri,
    pub protocol: Protocol,
    pub deposit: u64,
    pub order_payload: Vec<u8>,
    /// Blocks to wait for the KEY event after the deposit landed.
    pub key_wait_blocks: u64,
    /// The contract's reclaim timeout, for the refund path.
    pub timeout_blocks: u64,
}

pub struct UserAgent {
    pub name: String,
    ledger_keys: LedgerKeyPair,
    enc_keys: EncKeyPair,
    rng: ChaCha20Rng,
}

impl UserAgent {
    pub fn new(
        name: impl Into<String>,
        ledger_keys: LedgerKeyPair,
        enc_keys: EncKeyPair,
        rng: ChaCha20Rng,
    ) -> Self {
        UserAgent {
            name: name.into(),
            ledger_keys,
            enc_keys,
            rng,
        }
    }

    pub fn address(&self) -> Address {
        self.ledger_keys.address()
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.ledger_keys.public_bytes()
    }

    pub fn enc_public_bytes(&self) -> [u8; 32] {
        self.enc_keys.public_bytes()
    }

    /// The full message sequence: device request, deposit, key wait,
    /// encrypted order. Terminal state is `Completed` exactly when the
    /// sealed receipt opened correctly.
    pub fn run_session(&mut self, env: &mut impl SessionEnv, params: SessionParams) -> SessionRecord {
        let mut record = SessionRecord::new(params.protocol, params.uri_resource.clone(), params.deposit);

        let challenge = match params.protocol {
            Protocol::Two => Some(Challenge::generate(&mut self.rng)),
            _ => None,
        };
        record.challenge = challenge;

        let response =
            match env.request_resource(&params.uri_resource, params.protocol, challenge.as_ref()) {
                Ok(response) => response,
                Err(reason) => {
                    record.advance(SessionState::Failed(FailureReason::ThingChannelFailed(reason)));
                    return record;
                }
            };
        record.thing_token = Some(response.token.canonical_bytes().to_vec());

        let material = RequestMaterial::from_response(&response, challenge.as_ref());
        self.run_with_material(env, params, material, record)
    }

    /// Deposit-and-onward path with explicit request material; the replay
    /// adversary enters here with fields lifted from someone else's event.
    pub fn run_session_with_material(
        &mut self,
        env: &mut impl SessionEnv,
        params: SessionParams,
        material: RequestMaterial,
    ) -> SessionRecord {
        let mut record = SessionRecord::new(params.protocol, params.uri_resource.clone(), params.deposit);
        record.challenge = material.challenge.map(Challenge);
        self.run_with_material(env, params, material, record)
    }

    fn run_with_material(
        &mut self,
        env: &mut impl SessionEnv,
        params: SessionParams,
        material: RequestMaterial,
        mut record: SessionRecord,
    ) -> SessionRecord {
        let call = build_request_call(
            params.protocol,
            &material.token_bytes,
            &params.uri_resource,
            material.hmac_token.as_ref(),
            material.hidden_challenge.as_ref(),
            material.challenge.as_ref(),
            &self.enc_keys.public_bytes(),
        );
        let call = env.transform_request_call(call);
        let tx = Transaction::sign(
            &self.ledger_keys,
            material.contract_uri.clone(),
            call,
            params.deposit,
            env.next_sequence(&self.address()),
        );

        let receipt = match env.submit_tx(tx) {
            Ok(receipt) => receipt,
            Err(err) => {
                record.advance(SessionState::Failed(FailureReason::DepositRejected(
                    err.to_string(),
                )));
                return record;
            }
        };
        match &receipt.status {
            TxStatus::Success => {}
            TxStatus::Reverted(reason) => {
                record.advance(SessionState::Failed(FailureReason::DepositRejected(
                    reason.clone(),
                )));
                return record;
            }
        }

        // the DEPOSIT event's token is what the contract keyed the escrow on
        let onchain_token = receipt
            .events
            .first()
            .map(|ev| ev.args[1].clone())
            .unwrap_or_else(|| material.token_bytes.clone());
        record.onchain_token = Some(onchain_token.clone());
        record.deposited_height = Some(receipt.block_height);
        record.advance(SessionState::Deposited);

        let session_key = match self.await_key(
            env,
            &material.contract_uri,
            &onchain_token,
            receipt.block_height,
            params.key_wait_blocks,
        ) {
            Ok((session_key, height)) => {
                record.key_event_height = Some(height);
                session_key
            }
            Err(reason) => {
                if matches!(reason, FailureReason::TimeoutNoKey) {
                    self.reclaim(env, &material.contract_uri, &onchain_token, &params, &mut record);
                }
                record.advance(SessionState::Failed(reason));
                return record;
            }
        };
        record.session_key = Some(session_key.clone());
        record.advance(SessionState::Keyed);

        let sealed_order = crypto::seal_sym(&mut self.rng, &session_key, &params.order_payload);
        let sealed_receipt = match env.order_exchange(&onchain_token, sealed_order) {
            Ok(sealed) => sealed,
            Err(reason) => {
                record.advance(SessionState::Failed(FailureReason::ThingChannelFailed(reason)));
                return record;
            }
        };
        match crypto::open_sym(&session_key, &sealed_receipt) {
            Ok(_receipt_payload) => {
                record.advance(SessionState::Completed);
            }
            Err(_) => {
                record.dispute_evidence =
                    Some("receipt did not open under the delivered session key".into());
                record.advance(SessionState::Failed(FailureReason::ThingChannelFailed(
                    "receipt failed to open".into(),
                )));
            }
        }
        record
    }

    /// Watch for a KEY event addressed to this user carrying this token,
    /// unsealing the session key with the agent's encryption key.
    fn await_key(
        &mut self,
        env: &mut impl SessionEnv,
        contract: &Uri,
        token: &[u8],
        deposited_height: u64,
        wait_blocks: u64,
    ) -> Result<(SessionKey, u64), FailureReason> {
        let deadline = deposited_height + wait_blocks;
        loop {
            if let Some(event) = env.find_key_event(contract, &self.public_bytes(), token) {
                let sealed = SealedBox::from_bytes(&event.args[3])
                    .map_err(|_| FailureReason::KeyUnsealFailed)?;
                let plain = crypto::open_asym(&self.enc_keys, &sealed)
                    .map_err(|_| FailureReason::KeyUnsealFailed)?;
                let bytes: [u8; 32] = plain
                    .try_into()
                    .map_err(|_| FailureReason::KeyUnsealFailed)?;
                return Ok((SessionKey::from_bytes(bytes), event.block_height));
            }
            if env.height() >= deadline {
                return Err(FailureReason::TimeoutNoKey);
            }
            env.advance_block();
        }
    }

    /// Refund path after a timeout: one eager attempt (normally answered
    /// with TooEarly), then ticking until the contract deadline passes.
    fn reclaim(
        &mut self,
        env: &mut impl SessionEnv,
        contract: &Uri,
        token: &[u8],
        params: &SessionParams,
        record: &mut SessionRecord,
    ) {
        let created = record.deposited_height.expect("reclaim follows a deposit");
        let deadline = created + params.timeout_blocks;

        // eager attempt surfaces TooEarly while the window is still open
        if env.height() < deadline {
            if self.try_reclaim(env, contract, token, params, record) {
                return;
            }
            while env.height() < deadline {
                env.advance_block();
            }
        }
        self.try_reclaim(env, contract, token, params, record);
    }

    fn try_reclaim(
        &self,
        env: &mut impl SessionEnv,
        contract: &Uri,
        token: &[u8],
        params: &SessionParams,
        record: &mut SessionRecord,
    ) -> bool {
        let tx = Transaction::sign(
            &self.ledger_keys,
            contract.clone(),
            build_reclaim_call(token, &params.uri_resource),
            0,
            env.next_sequence(&self.address()),
        );
        let height = env.height();
        match env.submit_tx(tx) {
            Ok(receipt) => match receipt.status {
                TxStatus::Success => {
                    record.refunded = record.deposit;
                    record.reclaim_attempts.push((height, "refunded".into()));
                    true
                }
                TxStatus::Reverted(reason) => {
                    record.reclaim_attempts.push((height, reason));
                    false
                }
            },
            Err(err) => {
                record.reclaim_attempts.push((height, err.to_string()));
                false
            }
        }
    }
}
