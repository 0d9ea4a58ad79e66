//! The access contract: resource registry, deposit escrow, three request
//! variants, two authorize variants, and DEPOSIT/KEY event emission.
//!
//! # Call ABI
//!
//! Arguments are positional byte strings inside [`Call::args`]; the orders
//! below are normative for traces and events.
//!
//! ```text
//! register_resource(uri_resource, uri_policy, acp_address[20], base_cost[8 be], grants)
//!     grants = concat of (user_address[20] || count[8 be])
//! requestS(token[40], uri_resource, user_enc_public[32])                       value = deposit
//! request1(token[40], uri_resource, hmac_token[32], user_enc_public[32])
//! request2(token[40], uri_resource, hmac_token[32], hidden_challenge[32],
//!          challenge[32], user_enc_public[32])
//! authorize1(p_user[32], token[40], uri_resource, sealed_sk)
//! authorize2(p_user[32], token[40], uri_resource, sealed_sk, hmac_challenge[32])
//! reclaim_deposit(token[40], uri_resource)
//! ```
//!
//! Events:
//!
//! ```text
//! DEPOSIT(p_user[32], token[40], uri_policy, uri_resource, user_enc_public[32]
//!         [, hmac_token[32]] [, hidden_challenge[32], challenge[32]])
//! KEY(p_user[32], token[40], uri_resource, sealed_sk)
//! ```
//!
//! The deposit is escrowed under a `(user_address, hash(token))` key; it ends
//! in exactly one of three places: the provider (owner) after a KEY event,
//! back with the user after `reclaim_deposit`, or still in escrow. Token keys
//! are never forgotten once seen, so a settled token can never be requested
//! again by the same user.
//!
//! Free credits make the effective cost zero while credits remain. A credit
//! is only consumed when the matching authorize lands, so a denied or expired
//! request burns nothing; pending zero-deposit requests hold a reservation to
//! stop one credit from covering two requests at once.

use std::any::Any;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{self, Address, Digest, TOKEN_LEN};
use crate::ledger::{
    Call, CallContext, CallEffects, Contract, ContractRevert, EventDraft, EventKind, Uri,
};
use crate::Protocol;

/// Default number of blocks a deposit stays locked before the user may
/// reclaim it.
pub const DEFAULT_TIMEOUT_BLOCKS: u64 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("NotOwner")]
    NotOwner,
    #[error("DuplicateResource")]
    DuplicateResource,
    #[error("UnknownResource")]
    UnknownResource,
    #[error("InsufficientDeposit: required {required}, provided {provided}")]
    InsufficientDeposit { required: u64, provided: u64 },
    #[error("DuplicateToken")]
    DuplicateToken,
    #[error("NotACP")]
    NotAcp,
    #[error("NoPendingRequest")]
    NoPendingRequest,
    #[error("ChallengeMismatch")]
    ChallengeMismatch,
    #[error("TooEarly: reclaimable at height {reclaimable_at}")]
    TooEarly { reclaimable_at: u64 },
    #[error("NotRequester")]
    NotRequester,
    #[error("AlreadyAuthorized")]
    AlreadyAuthorized,
    #[error("BadCall: {0}")]
    BadCall(String),
}

impl ContractError {
    /// Stable code used as the on-ledger revert reason.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::NotOwner => "NotOwner",
            ContractError::DuplicateResource => "DuplicateResource",
            ContractError::UnknownResource => "UnknownResource",
            ContractError::InsufficientDeposit { .. } => "InsufficientDeposit",
            ContractError::DuplicateToken => "DuplicateToken",
            ContractError::NotAcp => "NotACP",
            ContractError::NoPendingRequest => "NoPendingRequest",
            ContractError::ChallengeMismatch => "ChallengeMismatch",
            ContractError::TooEarly { .. } => "TooEarly",
            ContractError::NotRequester => "NotRequester",
            ContractError::AlreadyAuthorized => "AlreadyAuthorized",
            ContractError::BadCall(_) => "BadCall",
        }
    }
}

/// A registered resource: one policy, one ACP, one price.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceRecord {
    pub uri_policy: Uri,
    pub acp_address: Address,
    pub base_cost: u64,
    pub free_credits: BTreeMap<Address, u32>,
    /// Credits promised to still-pending zero-deposit requests.
    reserved: BTreeMap<Address, u32>,
}

impl ResourceRecord {
    fn credits_available(&self, user: &Address) -> u32 {
        let have = self.free_credits.get(user).copied().unwrap_or(0);
        let held = self.reserved.get(user).copied().unwrap_or(0);
        have.saturating_sub(held)
    }
}

/// Escrow record for one outstanding request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingRequest {
    pub user_address: Address,
    pub user_enc_public: [u8; 32],
    pub token: Vec<u8>,
    pub uri_resource: Uri,
    pub deposit: u64,
    pub hmac_token: Option<Digest>,
    pub hidden_challenge: Option<Digest>,
    pub created_at_height: u64,
    pub credit_reserved: bool,
}

/// Lifecycle of a `(user, token)` key. Settled entries are kept forever so
/// duplicate tokens are rejected across the whole contract lifetime.
#[derive(Clone, Debug, PartialEq, Eq)]
enum RequestSlot {
    Pending(PendingRequest),
    Authorized,
    Reclaimed,
}

/// The contract state machine. All methods are pure state transitions; money
/// movement is expressed as payouts the host ledger applies atomically.
#[derive(Clone)]
pub struct AccessContract {
    owner: Address,
    timeout_blocks: u64,
    resources: BTreeMap<Uri, ResourceRecord>,
    requests: BTreeMap<(Address, Digest), RequestSlot>,
}

fn words(len: usize) -> u64 {
    (len as u64).div_ceil(32)
}

impl AccessContract {
    /// The deployer is the service provider: registration is owner-gated and
    /// authorized deposits pay out to the owner.
    pub fn new(owner: Address, timeout_blocks: u64) -> Self {
        AccessContract {
            owner,
            timeout_blocks,
            resources: BTreeMap::new(),
            requests: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> Address {
        self.owner
    }

    pub fn timeout_blocks(&self) -> u64 {
        self.timeout_blocks
    }

    pub fn resource(&self, uri: &Uri) -> Option<&ResourceRecord> {
        self.resources.get(uri)
    }

    /// What the next request from `user` would have to deposit.
    pub fn effective_cost(&self, user: &Address, uri: &Uri) -> Option<u64> {
        let resource = self.resources.get(uri)?;
        Some(if resource.credits_available(user) > 0 {
            0
        } else {
            resource.base_cost
        })
    }

    pub fn pending_request(&self, user: &Address, token: &[u8]) -> Option<&PendingRequest> {
        match self.requests.get(&(*user, crypto::hash(token))) {
            Some(RequestSlot::Pending(pending)) => Some(pending),
            _ => None,
        }
    }

    pub fn register_resource(
        &mut self,
        caller: Address,
        uri_resource: Uri,
        uri_policy: Uri,
        acp_address: Address,
        base_cost: u64,
        free_credit_grants: BTreeMap<Address, u32>,
    ) -> Result<u64, ContractError> {
        if caller != self.owner {
            return Err(ContractError::NotOwner);
        }
        if self.resources.contains_key(&uri_resource) {
            return Err(ContractError::DuplicateResource);
        }
        let written = words(uri_resource.as_bytes().len())
            + words(uri_policy.as_bytes().len())
            + 2 // acp address + base cost
            + free_credit_grants.len() as u64;
        self.resources.insert(
            uri_resource,
            ResourceRecord {
                uri_policy,
                acp_address,
                base_cost,
                free_credits: free_credit_grants,
                reserved: BTreeMap::new(),
            },
        );
        Ok(written)
    }

    /// Common body of the three request variants. Verifies the deposit,
    /// stores the pending request, and emits the DEPOSIT event; the variant
    /// decides which verification fields ride along.
    #[allow(clippy::too_many_arguments)]
    fn handle_request(
        &mut self,
        sender: Address,
        sender_public_key: [u8; 32],
        value: u64,
        block_height: u64,
        token: &[u8],
        uri_resource: &Uri,
        hmac_token: Option<Digest>,
        hidden_challenge: Option<Digest>,
        challenge: Option<[u8; 32]>,
        user_enc_public: [u8; 32],
    ) -> Result<(EventDraft, u64), ContractError> {
        if token.len() != TOKEN_LEN {
            return Err(ContractError::BadCall(format!(
                "token must be {TOKEN_LEN} bytes, got {}",
                token.len()
            )));
        }
        let resource = self
            .resources
            .get_mut(uri_resource)
            .ok_or(ContractError::UnknownResource)?;

        let key = (sender, crypto::hash(token));
        if self.requests.contains_key(&key) {
            return Err(ContractError::DuplicateToken);
        }

        let use_credit = resource.credits_available(&sender) > 0;
        let required = if use_credit { 0 } else { resource.base_cost };
        if value < required {
            return Err(ContractError::InsufficientDeposit {
                required,
                provided: value,
            });
        }
        if use_credit {
            *resource.reserved.entry(sender).or_insert(0) += 1;
        }

        let pending = PendingRequest {
            user_address: sender,
            user_enc_public,
            token: token.to_vec(),
            uri_resource: uri_resource.clone(),
            deposit: value,
            hmac_token,
            hidden_challenge,
            created_at_height: block_height,
            credit_reserved: use_credit,
        };

        let mut args: Vec<Vec<u8>> = vec![
            sender_public_key.to_vec(),
            token.to_vec(),
            resource.uri_policy.as_bytes().to_vec(),
            uri_resource.as_bytes().to_vec(),
            user_enc_public.to_vec(),
        ];
        let mut written = words(TOKEN_LEN) + 5; // token + fixed pending fields
        if let Some(digest) = hmac_token {
            args.push(digest.to_vec());
            written += 1;
        }
        if let Some(digest) = hidden_challenge {
            args.push(digest.to_vec());
            written += 1;
        }
        if let Some(raw) = challenge {
            args.push(raw.to_vec());
            written += 1;
        }

        self.requests.insert(key, RequestSlot::Pending(pending));

        Ok((
            EventDraft {
                kind: EventKind::Deposit,
                args,
            },
            written,
        ))
    }

    /// Key release shared by `authorize1` and `authorize2`. Only the
    /// registered ACP of the resource may call it; on success the escrowed
    /// deposit pays out to the owner and the KEY event carries the sealed
    /// session key.
    #[allow(clippy::too_many_arguments)]
    fn handle_authorize(
        &mut self,
        caller: Address,
        p_user: [u8; 32],
        token: &[u8],
        uri_resource: &Uri,
        sealed_sk: &[u8],
        hmac_challenge: Option<Digest>,
    ) -> Result<(EventDraft, Vec<(Address, u64)>, u64), ContractError> {
        let resource = self
            .resources
            .get_mut(uri_resource)
            .ok_or(ContractError::UnknownResource)?;
        if caller != resource.acp_address {
            return Err(ContractError::NotAcp);
        }

        let user_address = crypto::address_of(&p_user);
        let key = (user_address, crypto::hash(token));
        let slot = self
            .requests
            .get(&key)
            .ok_or(ContractError::NoPendingRequest)?;
        let pending = match slot {
            RequestSlot::Pending(pending) => pending.clone(),
            _ => return Err(ContractError::NoPendingRequest),
        };

        if let Some(proof) = hmac_challenge {
            // second construction: the contract itself checks the
            // device-provider relationship before paying out
            let expected = pending
                .hidden_challenge
                .ok_or_else(|| ContractError::BadCall("request carried no hidden challenge".into()))?;
            if crypto::hash(proof.as_bytes()) != expected {
                return Err(ContractError::ChallengeMismatch);
            }
        }

        if pending.credit_reserved {
            let credits = resource.free_credits.entry(user_address).or_insert(0);
            *credits = credits.saturating_sub(1);
            let reserved = resource.reserved.entry(user_address).or_insert(0);
            *reserved = reserved.saturating_sub(1);
        }

        self.requests.insert(key, RequestSlot::Authorized);

        let payouts = if pending.deposit > 0 {
            vec![(self.owner, pending.deposit)]
        } else {
            Vec::new()
        };

        Ok((
            EventDraft {
                kind: EventKind::Key,
                args: vec![
                    p_user.to_vec(),
                    token.to_vec(),
                    uri_resource.as_bytes().to_vec(),
                    sealed_sk.to_vec(),
                ],
            },
            payouts,
            2, // slot transition + credit bookkeeping
        ))
    }

    fn handle_reclaim(
        &mut self,
        caller: Address,
        block_height: u64,
        token: &[u8],
        uri_resource: &Uri,
    ) -> Result<(Vec<(Address, u64)>, u64), ContractError> {
        let resource = self
            .resources
            .get_mut(uri_resource)
            .ok_or(ContractError::UnknownResource)?;

        let key = (caller, crypto::hash(token));
        match self.requests.get(&key) {
            Some(RequestSlot::Pending(pending)) => {
                let reclaimable_at = pending.created_at_height + self.timeout_blocks;
                if block_height < reclaimable_at {
                    return Err(ContractError::TooEarly { reclaimable_at });
                }
                let pending = pending.clone();
                if pending.credit_reserved {
                    let reserved = resource.reserved.entry(caller).or_insert(0);
                    *reserved = reserved.saturating_sub(1);
                }
                self.requests.insert(key, RequestSlot::Reclaimed);
                let payouts = if pending.deposit > 0 {
                    vec![(caller, pending.deposit)]
                } else {
                    Vec::new()
                };
                Ok((payouts, 1))
            }
            Some(RequestSlot::Authorized) => Err(ContractError::AlreadyAuthorized),
            // nothing pending under this caller's key (never requested,
            // already reclaimed, or someone else's token)
            _ => Err(ContractError::NotRequester),
        }
    }

    fn dispatch(&mut self, ctx: &CallContext, call: &Call) -> Result<CallEffects, ContractError> {
        match call.function.as_str() {
            "register_resource" => {
                let [uri_resource, uri_policy, acp, cost, grants] = expect_args::<5>(call)?;
                let written = self.register_resource(
                    ctx.sender,
                    decode_uri(uri_resource)?,
                    decode_uri(uri_policy)?,
                    decode_address(acp)?,
                    decode_u64(cost)?,
                    decode_grants(grants)?,
                )?;
                Ok(CallEffects {
                    events: Vec::new(),
                    payouts: Vec::new(),
                    storage_words: written,
                })
            }
            "requestS" => {
                let [token, uri, enc_public] = expect_args::<3>(call)?;
                let (event, written) = self.handle_request(
                    ctx.sender,
                    ctx.sender_public_key,
                    ctx.value,
                    ctx.block_height,
                    token,
                    &decode_uri(uri)?,
                    None,
                    None,
                    None,
                    decode_key32(enc_public)?,
                )?;
                Ok(effects_with_event(event, written))
            }
            "request1" => {
                let [token, uri, hmac_token, enc_public] = expect_args::<4>(call)?;
                let (event, written) = self.handle_request(
                    ctx.sender,
                    ctx.sender_public_key,
                    ctx.value,
                    ctx.block_height,
                    token,
                    &decode_uri(uri)?,
                    Some(decode_digest(hmac_token)?),
                    None,
                    None,
                    decode_key32(enc_public)?,
                )?;
                Ok(effects_with_event(event, written))
            }
            "request2" => {
                let [token, uri, hmac_token, hidden, challenge, enc_public] =
                    expect_args::<6>(call)?;
                let (event, written) = self.handle_request(
                    ctx.sender,
                    ctx.sender_public_key,
                    ctx.value,
                    ctx.block_height,
                    token,
                    &decode_uri(uri)?,
                    Some(decode_digest(hmac_token)?),
                    Some(decode_digest(hidden)?),
                    Some(decode_key32(challenge)?),
                    decode_key32(enc_public)?,
                )?;
                Ok(effects_with_event(event, written))
            }
            "authorize1" => {
                let [p_user, token, uri, sealed_sk] = expect_args::<4>(call)?;
                let (event, payouts, written) = self.handle_authorize(
                    ctx.sender,
                    decode_key32(p_user)?,
                    token,
                    &decode_uri(uri)?,
                    sealed_sk,
                    None,
                )?;
                Ok(CallEffects {
                    events: vec![event],
                    payouts,
                    storage_words: written,
                })
            }
            "authorize2" => {
                let [p_user, token, uri, sealed_sk, hmac_challenge] = expect_args::<5>(call)?;
                let (event, payouts, written) = self.handle_authorize(
                    ctx.sender,
                    decode_key32(p_user)?,
                    token,
                    &decode_uri(uri)?,
                    sealed_sk,
                    Some(decode_digest(hmac_challenge)?),
                )?;
                Ok(CallEffects {
                    events: vec![event],
                    payouts,
                    storage_words: written,
                })
            }
            "reclaim_deposit" => {
                let [token, uri] = expect_args::<2>(call)?;
                let (payouts, written) =
                    self.handle_reclaim(ctx.sender, ctx.block_height, token, &decode_uri(uri)?)?;
                Ok(CallEffects {
                    events: Vec::new(),
                    payouts,
                    storage_words: written,
                })
            }
            other => Err(ContractError::BadCall(format!("no such function {other:?}"))),
        }
    }
}

fn effects_with_event(event: EventDraft, storage_words: u64) -> CallEffects {
    CallEffects {
        events: vec![event],
        payouts: Vec::new(),
        storage_words,
    }
}

impl Contract for AccessContract {
    fn call(&mut self, ctx: &CallContext, call: &Call) -> Result<CallEffects, ContractRevert> {
        self.dispatch(ctx, call)
            .map_err(|e| ContractRevert(e.code().to_string()))
    }

    fn clone_box(&self) -> Box<dyn Contract> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Build the request call for a protocol variant; arg order matches the ABI.
pub fn build_request_call(
    protocol: Protocol,
    token: &[u8],
    uri_resource: &Uri,
    hmac_token: Option<&Digest>,
    hidden_challenge: Option<&Digest>,
    challenge: Option<&[u8; 32]>,
    user_enc_public: &[u8; 32],
) -> Call {
    let mut args: Vec<Vec<u8>> = vec![token.to_vec(), uri_resource.as_bytes().to_vec()];
    match protocol {
        Protocol::S => {}
        Protocol::One => {
            args.push(hmac_token.expect("protocol 1 request needs hmac_token").to_vec());
        }
        Protocol::Two => {
            args.push(hmac_token.expect("protocol 2 request needs hmac_token").to_vec());
            args.push(
                hidden_challenge
                    .expect("protocol 2 request needs hidden_challenge")
                    .to_vec(),
            );
            args.push(challenge.expect("protocol 2 request needs challenge").to_vec());
        }
    }
    args.push(user_enc_public.to_vec());
    Call::new(protocol.request_function(), args)
}

/// Build the authorize call for a protocol variant.
pub fn build_authorize_call(
    protocol: Protocol,
    p_user: &[u8; 32],
    token: &[u8],
    uri_resource: &Uri,
    sealed_sk: &[u8],
    hmac_challenge: Option<&Digest>,
) -> Call {
    let mut args: Vec<Vec<u8>> = vec![
        p_user.to_vec(),
        token.to_vec(),
        uri_resource.as_bytes().to_vec(),
        sealed_sk.to_vec(),
    ];
    if protocol == Protocol::Two {
        args.push(
            hmac_challenge
                .expect("protocol 2 authorize needs hmac_challenge")
                .to_vec(),
        );
    }
    Call::new(protocol.authorize_function(), args)
}

pub fn build_reclaim_call(token: &[u8], uri_resource: &Uri) -> Call {
    Call::new(
        "reclaim_deposit",
        vec![token.to_vec(), uri_resource.as_bytes().to_vec()],
    )
}

pub fn build_register_call(
    uri_resource: &Uri,
    uri_policy: &Uri,
    acp_address: &Address,
    base_cost: u64,
    grants: &BTreeMap<Address, u32>,
) -> Call {
    let mut blob = Vec::with_capacity(grants.len() * 28);
    for (address, count) in grants {
        blob.extend_from_slice(address.as_bytes());
        blob.extend_from_slice(&(*count as u64).to_be_bytes());
    }
    Call::new(
        "register_resource",
        vec![
            uri_resource.as_bytes().to_vec(),
            uri_policy.as_bytes().to_vec(),
            acp_address.as_bytes().to_vec(),
            base_cost.to_be_bytes().to_vec(),
            blob,
        ],
    )
}

fn expect_args<const N: usize>(call: &Call) -> Result<[&[u8]; N], ContractError> {
    if call.args.len() != N {
        return Err(ContractError::BadCall(format!(
            "{} expects {N} args, got {}",
            call.function,
            call.args.len()
        )));
    }
    let mut out = [&[] as &[u8]; N];
    for (slot, arg) in out.iter_mut().zip(&call.args) {
        *slot = arg.as_slice();
    }
    Ok(out)
}

fn decode_uri(bytes: &[u8]) -> Result<Uri, ContractError> {
    String::from_utf8(bytes.to_vec())
        .map(Uri)
        .map_err(|_| ContractError::BadCall("uri is not utf-8".into()))
}

fn decode_address(bytes: &[u8]) -> Result<Address, ContractError> {
    Address::from_slice(bytes).ok_or_else(|| ContractError::BadCall("address must be 20 bytes".into()))
}

fn decode_key32(bytes: &[u8]) -> Result<[u8; 32], ContractError> {
    bytes
        .try_into()
        .map_err(|_| ContractError::BadCall("expected 32 bytes".into()))
}

fn decode_digest(bytes: &[u8]) -> Result<Digest, ContractError> {
    Digest::from_slice(bytes).ok_or_else(|| ContractError::BadCall("digest must be 32 bytes".into()))
}

fn decode_u64(bytes: &[u8]) -> Result<u64, ContractError> {
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| ContractError::BadCall("expected 8-byte big-endian integer".into()))?;
    Ok(u64::from_be_bytes(arr))
}

fn decode_grants(bytes: &[u8]) -> Result<BTreeMap<Address, u32>, ContractError> {
    if bytes.len() % 28 != 0 {
        return Err(ContractError::BadCall(
            "grants blob must be a multiple of 28 bytes".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for chunk in bytes.chunks_exact(28) {
        let address = decode_address(&chunk[..20])?;
        let count = decode_u64(&chunk[20..])? as u32;
        out.insert(address, count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_session_key, hmac, SharedKey, Token};

    const HEIGHT: u64 = 5;
    const USER_PK: [u8; 32] = [0x10; 32];
    const OTHER_PK: [u8; 32] = [0x40; 32];

    fn addr(tag: u8) -> Address {
        Address([tag; 20])
    }

    fn user_addr() -> Address {
        crypto::address_of(&USER_PK)
    }

    fn other_addr() -> Address {
        crypto::address_of(&OTHER_PK)
    }

    fn token_bytes(counter: u64) -> Vec<u8> {
        Token {
            thing_id: [0xAA; 16],
            counter,
            nonce: [0xBB; 16],
        }
        .canonical_bytes()
        .to_vec()
    }

    fn registered() -> (AccessContract, Uri, Uri) {
        let mut contract = AccessContract::new(addr(1), DEFAULT_TIMEOUT_BLOCKS);
        let resource = Uri::new("thing://kitchen/coffee");
        let policy = Uri::new("policy://company-a");
        contract
            .register_resource(
                addr(1),
                resource.clone(),
                policy.clone(),
                addr(2),
                10,
                BTreeMap::new(),
            )
            .unwrap();
        (contract, resource, policy)
    }

    fn request_s(
        contract: &mut AccessContract,
        user_pk: [u8; 32],
        value: u64,
        counter: u64,
        uri: &Uri,
    ) -> Result<(EventDraft, u64), ContractError> {
        contract.handle_request(
            crypto::address_of(&user_pk),
            user_pk,
            value,
            HEIGHT,
            &token_bytes(counter),
            uri,
            None,
            None,
            None,
            [0x20; 32],
        )
    }

    #[test]
    fn register_then_request_succeeds() {
        let (mut contract, resource, policy) = registered();
        let (event, _) = request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        assert_eq!(event.kind, EventKind::Deposit);
        // DEPOSIT arg order: p_user, token, uri_policy, uri_resource, enc key
        assert_eq!(event.args[0], vec![0x10; 32]);
        assert_eq!(event.args[1], token_bytes(1));
        assert_eq!(event.args[2], policy.as_bytes().to_vec());
        assert_eq!(event.args[3], resource.as_bytes().to_vec());
        assert_eq!(event.args[4], vec![0x20; 32]);
        assert!(contract.pending_request(&user_addr(), &token_bytes(1)).is_some());
    }

    #[test]
    fn register_twice_is_rejected() {
        let (mut contract, resource, policy) = registered();
        assert_eq!(
            contract.register_resource(addr(1), resource, policy, addr(2), 10, BTreeMap::new()),
            Err(ContractError::DuplicateResource)
        );
    }

    #[test]
    fn register_requires_owner() {
        let mut contract = AccessContract::new(addr(1), DEFAULT_TIMEOUT_BLOCKS);
        assert_eq!(
            contract.register_resource(
                addr(9),
                Uri::new("r"),
                Uri::new("p"),
                addr(2),
                1,
                BTreeMap::new()
            ),
            Err(ContractError::NotOwner)
        );
    }

    #[test]
    fn insufficient_deposit_is_rejected() {
        let (mut contract, resource, _) = registered();
        assert_eq!(
            request_s(&mut contract, USER_PK, 9, 1, &resource),
            Err(ContractError::InsufficientDeposit {
                required: 10,
                provided: 9
            })
        );
        assert!(contract.pending_request(&user_addr(), &token_bytes(1)).is_none());
    }

    #[test]
    fn unknown_resource_is_rejected() {
        let (mut contract, _, _) = registered();
        assert_eq!(
            request_s(&mut contract, USER_PK, 10, 1, &Uri::new("thing://nowhere")),
            Err(ContractError::UnknownResource)
        );
    }

    #[test]
    fn duplicate_token_is_rejected_even_after_settlement() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        assert_eq!(
            request_s(&mut contract, USER_PK, 10, 1, &resource),
            Err(ContractError::DuplicateToken)
        );

        // settle via authorize, then try the same token again
        contract
            .handle_authorize(addr(2), USER_PK, &token_bytes(1), &resource, b"sealed", None)
            .unwrap();
        assert_eq!(
            request_s(&mut contract, USER_PK, 10, 1, &resource),
            Err(ContractError::DuplicateToken)
        );

        // a different user may still use their own token stream
        assert!(request_s(&mut contract, OTHER_PK, 10, 1, &resource).is_ok());
    }

    #[test]
    fn authorize_pays_owner_and_clears_request() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        let (event, payouts, _) = contract
            .handle_authorize(addr(2), USER_PK, &token_bytes(1), &resource, b"sealed", None)
            .unwrap();
        assert_eq!(event.kind, EventKind::Key);
        assert_eq!(event.args[0], vec![0x10; 32]);
        assert_eq!(event.args[1], token_bytes(1));
        assert_eq!(event.args[2], resource.as_bytes().to_vec());
        assert_eq!(event.args[3], b"sealed".to_vec());
        assert_eq!(payouts, vec![(addr(1), 10)]);
        assert!(contract.pending_request(&user_addr(), &token_bytes(1)).is_none());
    }

    #[test]
    fn authorize_requires_registered_acp() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        assert_eq!(
            contract.handle_authorize(
                addr(9),
                USER_PK,
                &token_bytes(1),
                &resource,
                b"sealed",
                None
            ),
            Err(ContractError::NotAcp)
        );
        // state unchanged: the real ACP can still authorize
        assert!(contract.pending_request(&user_addr(), &token_bytes(1)).is_some());
    }

    #[test]
    fn second_authorize_finds_nothing_pending() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        contract
            .handle_authorize(addr(2), USER_PK, &token_bytes(1), &resource, b"s", None)
            .unwrap();
        assert_eq!(
            contract.handle_authorize(addr(2), USER_PK, &token_bytes(1), &resource, b"s", None),
            Err(ContractError::NoPendingRequest)
        );
    }

    /// Full second-construction check against independently computed digests.
    #[test]
    fn authorize2_verifies_hidden_challenge() {
        let (mut contract, resource, _) = registered();
        let shared = SharedKey([0x11; 32]);
        let token = Token::from_bytes(&token_bytes(1)).unwrap();
        let sk = derive_session_key(&shared, &token);
        let challenge = [0x44; 32];
        let proof = hmac(sk.as_bytes(), &challenge).unwrap();
        let hidden = crypto::hash(proof.as_bytes());

        contract
            .handle_request(
                user_addr(),
                USER_PK,
                10,
                HEIGHT,
                &token_bytes(1),
                &resource,
                Some(hmac(sk.as_bytes(), &token_bytes(1)).unwrap()),
                Some(hidden),
                Some(challenge),
                [0x20; 32],
            )
            .unwrap();

        // wrong proof first: payment stays escrowed, request stays pending
        let wrong = hmac(sk.as_bytes(), &[0u8; 32]).unwrap();
        assert_eq!(
            contract.handle_authorize(
                addr(2),
                USER_PK,
                &token_bytes(1),
                &resource,
                b"sealed",
                Some(wrong)
            ),
            Err(ContractError::ChallengeMismatch)
        );
        assert!(contract.pending_request(&user_addr(), &token_bytes(1)).is_some());

        // correct proof releases key and payment
        let (_, payouts, _) = contract
            .handle_authorize(
                addr(2),
                USER_PK,
                &token_bytes(1),
                &resource,
                b"sealed",
                Some(proof),
            )
            .unwrap();
        assert_eq!(payouts, vec![(addr(1), 10)]);
    }

    #[test]
    fn reclaim_respects_timeout_and_ownership() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();

        // too early: created at HEIGHT, timeout 20
        assert_eq!(
            contract.handle_reclaim(user_addr(), HEIGHT + 1, &token_bytes(1), &resource),
            Err(ContractError::TooEarly {
                reclaimable_at: HEIGHT + DEFAULT_TIMEOUT_BLOCKS
            })
        );

        // someone else cannot reclaim
        assert_eq!(
            contract.handle_reclaim(other_addr(), HEIGHT + 30, &token_bytes(1), &resource),
            Err(ContractError::NotRequester)
        );

        // full refund at the deadline
        let (payouts, _) = contract
            .handle_reclaim(user_addr(), HEIGHT + DEFAULT_TIMEOUT_BLOCKS, &token_bytes(1), &resource)
            .unwrap();
        assert_eq!(payouts, vec![(user_addr(), 10)]);

        // a second reclaim finds nothing of the caller's
        assert_eq!(
            contract.handle_reclaim(user_addr(), HEIGHT + 40, &token_bytes(1), &resource),
            Err(ContractError::NotRequester)
        );
    }

    #[test]
    fn reclaim_after_authorize_reports_already_authorized() {
        let (mut contract, resource, _) = registered();
        request_s(&mut contract, USER_PK, 10, 1, &resource).unwrap();
        contract
            .handle_authorize(addr(2), USER_PK, &token_bytes(1), &resource, b"s", None)
            .unwrap();
        assert_eq!(
            contract.handle_reclaim(user_addr(), HEIGHT + 100, &token_bytes(1), &resource),
            Err(ContractError::AlreadyAuthorized)
        );
    }

    #[test]
    fn free_credits_zero_the_cost_and_burn_on_authorize() {
        let mut contract = AccessContract::new(addr(1), DEFAULT_TIMEOUT_BLOCKS);
        let resource = Uri::new("thing://kitchen/coffee");
        let mut grants = BTreeMap::new();
        grants.insert(user_addr(), 3u32);
        contract
            .register_resource(
                addr(1),
                resource.clone(),
                Uri::new("policy://company-a"),
                addr(2),
                10,
                grants,
            )
            .unwrap();

        for counter in 1..=3u64 {
            assert_eq!(contract.effective_cost(&user_addr(), &resource), Some(0));
            request_s(&mut contract, USER_PK, 0, counter, &resource).unwrap();
            let (_, payouts, _) = contract
                .handle_authorize(
                    addr(2),
                    [0x10; 32],
                    &token_bytes(counter),
                    &resource,
                    b"s",
                    None,
                )
                .unwrap();
            assert!(payouts.is_empty(), "free order must transfer nothing");
        }

        // credits exhausted: fourth order pays the base cost
        assert_eq!(contract.effective_cost(&user_addr(), &resource), Some(10));
        assert_eq!(
            request_s(&mut contract, USER_PK, 0, 4, &resource),
            Err(ContractError::InsufficientDeposit {
                required: 10,
                provided: 0
            })
        );
        request_s(&mut contract, USER_PK, 10, 4, &resource).unwrap();
        let (_, payouts, _) = contract
            .handle_authorize(addr(2), USER_PK, &token_bytes(4), &resource, b"s", None)
            .unwrap();
        assert_eq!(payouts, vec![(addr(1), 10)]);
    }

    #[test]
    fn denied_request_burns_no_credit() {
        let mut contract = AccessContract::new(addr(1), DEFAULT_TIMEOUT_BLOCKS);
        let resource = Uri::new("thing://kitchen/coffee");
        let mut grants = BTreeMap::new();
        grants.insert(user_addr(), 1u32);
        contract
            .register_resource(
                addr(1),
                resource.clone(),
                Uri::new("policy://company-a"),
                addr(2),
                10,
                grants,
            )
            .unwrap();

        // zero-deposit request reserves the only credit...
        request_s(&mut contract, USER_PK, 0, 1, &resource).unwrap();
        // ...so a concurrent second request must pay full price
        assert_eq!(contract.effective_cost(&user_addr(), &resource), Some(10));

        // the ACP never answers; after the timeout the user reclaims
        contract
            .handle_reclaim(user_addr(), HEIGHT + DEFAULT_TIMEOUT_BLOCKS, &token_bytes(1), &resource)
            .unwrap();

        // the credit is intact again
        assert_eq!(contract.effective_cost(&user_addr(), &resource), Some(0));
        assert_eq!(
            contract.resource(&resource).unwrap().free_credits[&user_addr()],
            1
        );
    }

    #[test]
    fn call_dispatch_matches_typed_api() {
        let (mut contract, resource, _) = registered();
        let ctx = CallContext {
            sender: user_addr(),
            sender_public_key: USER_PK,
            value: 10,
            block_height: HEIGHT,
            escrow_balance: 10,
        };
        let call = build_request_call(
            Protocol::S,
            &token_bytes(1),
            &resource,
            None,
            None,
            None,
            &[0x20; 32],
        );
        let effects = contract.dispatch(&ctx, &call).unwrap();
        assert_eq!(effects.events.len(), 1);
        assert_eq!(effects.events[0].args.len(), 5);

        // malformed calls revert with BadCall
        let bad = Call::new("requestS", vec![vec![1, 2, 3]]);
        assert!(matches!(
            contract.dispatch(&ctx, &bad),
            Err(ContractError::BadCall(_))
        ));
        let unknown = Call::new("nope", vec![]);
        assert!(matches!(
            contract.dispatch(&ctx, &unknown),
            Err(ContractError::BadCall(_))
        ));
    }

    #[test]
    fn request_event_arity_grows_with_protocol() {
        let (mut contract, resource, _) = registered();
        let digest = crypto::hash(b"x");
        let ctx = |value| CallContext {
            sender: user_addr(),
            sender_public_key: USER_PK,
            value,
            block_height: HEIGHT,
            escrow_balance: value,
        };

        let s = contract
            .dispatch(
                &ctx(10),
                &build_request_call(Protocol::S, &token_bytes(1), &resource, None, None, None, &[0x20; 32]),
            )
            .unwrap();
        let one = contract
            .dispatch(
                &ctx(10),
                &build_request_call(
                    Protocol::One,
                    &token_bytes(2),
                    &resource,
                    Some(&digest),
                    None,
                    None,
                    &[0x20; 32],
                ),
            )
            .unwrap();
        let two = contract
            .dispatch(
                &ctx(10),
                &build_request_call(
                    Protocol::Two,
                    &token_bytes(3),
                    &resource,
                    Some(&digest),
                    Some(&digest),
                    Some(&[0x44; 32]),
                    &[0x20; 32],
                ),
            )
            .unwrap();
        assert_eq!(s.events[0].args.len(), 5);
        assert_eq!(one.events[0].args.len(), 6);
        assert_eq!(two.events[0].args.len(), 8);
        // richer requests write more storage
        assert!(s.storage_words < one.storage_words);
        assert!(one.storage_words < two.storage_words);
    }
}
