//! Wires the actors to the ledger and drives the configured sessions. The
//! adversary targets the last order (the probe); everything an acceptance
//! check needs is collected into the outcome while the run happens.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::acp::Acp;
use crate::agent::{RequestMaterial, SessionEnv, SessionParams, UserAgent};
use crate::contract::{build_register_call, AccessContract};
use crate::crypto::{self, Address, Challenge, Digest, EncKeyPair, LedgerKeyPair, SessionKey, SharedKey, Token};
use crate::ledger::{
    Call, EventKind, EventRecord, Ledger, LedgerError, Receipt, Transaction, TxStatus, Uri,
};
use crate::scenario::adversary::{flip_byte, AdversarySpec, RogueAcp, TamperField};
use crate::scenario::config::{ConfigError, ScenarioConfig};
use crate::scenario::report::{
    evm_reference_gas, AuditReport, ConservationCheck, CostLine, KeyAgreementCheck,
    ProbeOutcome, ScenarioOutcome, ScenarioReport, SessionSummary, REPORT_SCHEMA_VERSION,
};
use crate::scenario::trace;
use crate::thing::{Thing, ThingResponse};
use crate::Protocol;

/// Run one scenario to completion.
pub fn run(config: &ScenarioConfig) -> Result<ScenarioOutcome, ConfigError> {
    config.validate()?;

    // Key material is drawn from the master rng in a fixed roster order, so
    // one seed pins every key, nonce, token, and challenge in the run.
    let mut master = ChaCha20Rng::seed_from_u64(config.seed);
    let owner_keys = LedgerKeyPair::generate(&mut master);
    let acp_keys = LedgerKeyPair::generate(&mut master);
    let acp_rng = ChaCha20Rng::from_seed(draw(&mut master));

    struct UserSetup {
        ledger_keys: LedgerKeyPair,
        enc_keys: EncKeyPair,
        agent_rng: ChaCha20Rng,
        funding: u64,
        authorized: bool,
    }
    let mut users: BTreeMap<String, UserSetup> = BTreeMap::new();
    for spec in &config.users {
        let ledger_keys = LedgerKeyPair::generate(&mut master);
        let enc_keys = EncKeyPair::generate(&mut master);
        let agent_rng = ChaCha20Rng::from_seed(draw(&mut master));
        users.insert(
            spec.name.clone(),
            UserSetup {
                ledger_keys,
                enc_keys,
                agent_rng,
                funding: spec.funding,
                authorized: spec.authorized,
            },
        );
    }

    struct ThingSetup {
        thing_id: [u8; 16],
        shared_key: SharedKey,
        rng: ChaCha20Rng,
    }
    let mut thing_setups: BTreeMap<String, ThingSetup> = BTreeMap::new();
    for spec in &config.things {
        let thing_id: [u8; 16] = match &spec.thing_id {
            Some(hex_id) => hex::decode(hex_id)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| ConfigError::BadThingId(hex_id.clone()))?,
            None => crypto::hash(spec.name.as_bytes()).0[..16].try_into().unwrap(),
        };
        let shared_key = SharedKey(draw(&mut master));
        let rng = ChaCha20Rng::from_seed(draw(&mut master));
        thing_setups.insert(
            spec.name.clone(),
            ThingSetup {
                thing_id,
                shared_key,
                rng,
            },
        );
    }

    // adversary key material
    let fake_thing_key = matches!(config.adversary, AdversarySpec::FakeThing)
        .then(|| SharedKey(draw(&mut master)));
    let rogue_setup = matches!(config.adversary, AdversarySpec::RogueAcp).then(|| {
        (
            LedgerKeyPair::generate(&mut master),
            ChaCha20Rng::from_seed(draw(&mut master)),
        )
    });
    let identity_lie_setup = matches!(config.adversary, AdversarySpec::IdentityLie).then(|| {
        (
            EncKeyPair::generate(&mut master),
            ChaCha20Rng::from_seed(draw(&mut master)),
        )
    });

    // ledger, accounts, funding
    let mut ledger = Ledger::new();
    ledger.create_account(&owner_keys.public_bytes());
    ledger.create_account(&acp_keys.public_bytes());
    let mut funded_total = 0u64;
    let mut known_senders: BTreeSet<Address> = BTreeSet::new();
    known_senders.insert(owner_keys.address());
    known_senders.insert(acp_keys.address());
    for setup in users.values() {
        let address = ledger.create_account(&setup.ledger_keys.public_bytes());
        ledger.fund(address, setup.funding).expect("account exists");
        funded_total += setup.funding;
        known_senders.insert(address);
    }
    if let Some((rogue_keys, _)) = &rogue_setup {
        ledger.create_account(&rogue_keys.public_bytes());
        known_senders.insert(rogue_keys.address());
    }

    // contract deployment and resource registration
    let contract_uri = Uri::new(config.contract_uri.clone());
    let escrow_address = ledger.deploy_contract(
        contract_uri.clone(),
        Box::new(AccessContract::new(owner_keys.address(), config.timeout_blocks)),
    );
    for resource in &config.resources {
        let grants: BTreeMap<Address, u32> = resource
            .free_credits
            .iter()
            .map(|(name, count)| (users[name].ledger_keys.address(), *count))
            .collect();
        let call = build_register_call(
            &Uri::new(resource.uri.clone()),
            &Uri::new(config.acp.policy_uri.clone()),
            &acp_keys.address(),
            resource.base_cost,
            &grants,
        );
        let tx = Transaction::sign(
            &owner_keys,
            contract_uri.clone(),
            call,
            0,
            ledger.next_sequence(&owner_keys.address()),
        );
        let receipt = ledger.submit(tx).expect("owner registration submits");
        assert!(
            receipt.status.is_success(),
            "resource registration reverted: {:?}",
            receipt.status
        );
    }

    // provider: policies and device keys (always the real keys)
    let probe_order = config.orders.last().expect("validated non-empty");
    let policy_uri = Uri::new(config.acp.policy_uri.clone());
    let owner_address = owner_keys.address();
    let acp_address = acp_keys.address();
    let mut acp = Acp::new(acp_keys, &ledger, acp_rng);
    let mut allowed: BTreeMap<Address, [u8; 32]> = BTreeMap::new();
    for (name, setup) in &users {
        let barred = matches!(config.adversary, AdversarySpec::UnauthorizedUser)
            && *name == probe_order.user;
        if setup.authorized && !barred {
            acp.allow_user(
                &policy_uri,
                setup.ledger_keys.address(),
                setup.enc_keys.public_bytes(),
            );
            allowed.insert(setup.ledger_keys.address(), setup.enc_keys.public_bytes());
        }
    }
    for setup in thing_setups.values() {
        acp.register_thing(setup.thing_id, setup.shared_key.clone());
    }

    // resource -> serving thing
    let resource_thing: BTreeMap<String, String> = config
        .resources
        .iter()
        .map(|r| (r.uri.clone(), r.thing.clone()))
        .collect();
    let probe_thing_name = resource_thing[&probe_order.resource].clone();

    // device actors; a fake device mimics the real one's identity but holds
    // a key the provider never issued
    let mut things: BTreeMap<String, Thing> = BTreeMap::new();
    for (name, setup) in thing_setups {
        let served: Vec<(Uri, Uri)> = config
            .resources
            .iter()
            .filter(|r| r.thing == name)
            .map(|r| (Uri::new(r.uri.clone()), contract_uri.clone()))
            .collect();
        let key = match &fake_thing_key {
            Some(fake) if name == probe_thing_name => fake.clone(),
            _ => setup.shared_key.clone(),
        };
        things.insert(name, Thing::new(setup.thing_id, key, served, setup.rng));
    }

    // user agents, plus the identity-lie attacker holding the victim's
    // ledger key but their own encryption key
    let mut agents: BTreeMap<String, UserAgent> = BTreeMap::new();
    for (name, setup) in &mut users {
        agents.insert(
            name.clone(),
            UserAgent::new(
                name.clone(),
                setup.ledger_keys.clone(),
                setup.enc_keys.clone(),
                std::mem::replace(&mut setup.agent_rng, ChaCha20Rng::seed_from_u64(0)),
            ),
        );
    }
    let mut attacker = identity_lie_setup.map(|(enc_keys, rng)| {
        UserAgent::new(
            format!("attacker(as {})", probe_order.user),
            users[&probe_order.user].ledger_keys.clone(),
            enc_keys,
            rng,
        )
    });
    let mut rogue = rogue_setup.map(|(keys, rng)| RogueAcp::new(keys, &ledger, rng));

    let acp_silent = config.acp.silent || matches!(config.adversary, AdversarySpec::RogueAcp);
    let baseline_supply = ledger.total_supply();
    debug_assert_eq!(baseline_supply, funded_total);

    // sessions
    let mut sessions = Vec::new();
    let mut session_users: Vec<String> = Vec::new();
    let mut key_checks: Vec<KeyAgreementCheck> = Vec::new();
    let mut channel_trace: Vec<String> = Vec::new();
    let mut provider_before_probe = 0;

    for (i, order) in config.orders.iter().enumerate() {
        let is_probe = i + 1 == config.orders.len();
        let resource_uri = Uri::new(order.resource.clone());
        let thing_name = &resource_thing[&order.resource];

        let user_address = users[&order.user].ledger_keys.address();
        let deposit = match order.deposit {
            Some(deposit) => deposit,
            None => ledger
                .view_contract::<AccessContract, _>(&contract_uri, |c| {
                    c.effective_cost(&user_address, &resource_uri)
                })
                .flatten()
                .expect("resource registered above"),
        };
        let params = SessionParams {
            uri_resource: resource_uri,
            protocol: config.protocol,
            deposit,
            order_payload: order.payload.clone().into_bytes(),
            key_wait_blocks: config.key_wait_blocks(),
            timeout_blocks: config.timeout_blocks,
        };

        if is_probe {
            provider_before_probe = ledger.balance(&owner_address).expect("owner account");
        }

        let mut thing_sk: Option<SessionKey> = None;
        let record = {
            let mut env = Env {
                ledger: &mut ledger,
                acp: &mut acp,
                acp_silent,
                rogue: rogue.as_mut(),
                thing: things.get_mut(thing_name).expect("validated thing name"),
                tamper: match (is_probe, &config.adversary) {
                    (true, AdversarySpec::Tamper { field, position }) => Some((*field, *position)),
                    _ => None,
                },
                protocol: config.protocol,
                channel_trace: &mut channel_trace,
                thing_sk: &mut thing_sk,
            };
            if is_probe && matches!(config.adversary, AdversarySpec::ReplayToken) {
                let material = replay_material(env.ledger);
                env.channel_trace.push(format!(
                    "{}: replaying observed token {}",
                    order.user,
                    hex::encode(&material.token_bytes)
                ));
                agents
                    .get_mut(&order.user)
                    .expect("validated user name")
                    .run_session_with_material(&mut env, params, material)
            } else if is_probe && attacker.is_some() {
                attacker.as_mut().unwrap().run_session(&mut env, params)
            } else {
                agents
                    .get_mut(&order.user)
                    .expect("validated user name")
                    .run_session(&mut env, params)
            }
        };

        let acp_sk = record
            .onchain_token
            .as_ref()
            .and_then(|token| acp.authorized().iter().rev().find(|r| &r.token == token))
            .map(|r| r.session_key.clone());
        key_checks.push(KeyAgreementCheck {
            user: record.session_key.clone(),
            thing: thing_sk,
            acp: acp_sk,
        });
        session_users.push(if is_probe && attacker.is_some() {
            attacker.as_ref().unwrap().name.clone()
        } else {
            order.user.clone()
        });
        sessions.push(record);
    }

    // probe triple; a KEY event counts only if it is addressed to the probe
    // sender and carries the probe's token (a replayed token may share bytes
    // with an earlier session's)
    let probe_record = sessions.last().expect("at least one order");
    let probe_public_key = users[&probe_order.user].ledger_keys.public_bytes().to_vec();
    let key_emitted = probe_record.onchain_token.as_ref().is_some_and(|token| {
        ledger.events().iter().any(|ev| {
            ev.kind == EventKind::Key
                && ev.args.first() == Some(&probe_public_key)
                && ev.args.get(1) == Some(token)
        })
    });
    let provider_paid =
        ledger.balance(&owner_address).expect("owner account") > provider_before_probe;
    let probe = ProbeOutcome {
        key_emitted,
        provider_paid,
        completed: probe_record.completed(),
    };

    // balances by actor name
    let mut balances: BTreeMap<String, u64> = BTreeMap::new();
    for (name, setup) in &users {
        balances.insert(
            name.clone(),
            ledger.balance(&setup.ledger_keys.address()).unwrap_or(0),
        );
    }
    balances.insert(
        config.acp.name.clone(),
        ledger.balance(&acp_address).unwrap_or(0),
    );
    balances.insert(
        "provider".into(),
        ledger.balance(&owner_address).unwrap_or(0),
    );
    balances.insert("escrow".into(), ledger.balance(&escrow_address).unwrap_or(0));
    if let Some(rogue) = &rogue {
        balances.insert("rogue".into(), ledger.balance(&rogue.address()).unwrap_or(0));
    }

    // metered costs per function
    let mut cost_groups: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for block in ledger.blocks() {
        if let Some(tx) = &block.transaction {
            let entry = cost_groups.entry(tx.call.function.clone()).or_insert((0, 0));
            entry.0 += 1;
            entry.1 = entry.1.max(block.cost);
        }
    }
    let costs: Vec<CostLine> = cost_groups
        .into_iter()
        .map(|(function, (calls, cost_per_call))| CostLine {
            evm_reference_gas: evm_reference_gas(&function),
            function,
            calls,
            cost_per_call,
        })
        .collect();

    let all_session_keys: Vec<SessionKey> = key_checks
        .iter()
        .flat_map(|c| [c.user.clone(), c.thing.clone(), c.acp.clone()])
        .flatten()
        .collect();
    let audits = compute_audits(
        &ledger,
        &contract_uri,
        &allowed,
        &known_senders,
        &all_session_keys,
        funded_total,
        escrow_address,
    );

    let conservation = ConservationCheck {
        funded: funded_total,
        final_total: ledger.total_supply(),
        ok: audits.conservation,
    };

    let report = ScenarioReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: config.name.clone(),
        protocol: config.protocol,
        seed: config.seed,
        adversary: config.adversary.label(),
        sessions: session_users
            .iter()
            .zip(&sessions)
            .map(|(user, record)| SessionSummary::from_record(user, record))
            .collect(),
        probe,
        escrow_remaining: balances["escrow"],
        provider_earned: balances["provider"],
        balances,
        conservation,
        costs,
        acp_drops: acp
            .drops()
            .iter()
            .map(|d| {
                format!(
                    "height={} reason={:?} token={}",
                    d.block_height,
                    d.reason,
                    hex::encode(&d.token)
                )
            })
            .collect(),
        key_agreement: key_checks
            .iter()
            .enumerate()
            .map(|(i, check)| check.to_line(i))
            .collect(),
        audits,
        channel_trace,
    };

    Ok(ScenarioOutcome {
        report,
        trace: trace::to_trace(ledger.blocks()),
        sessions,
        key_agreement: key_checks,
    })
}

fn draw(rng: &mut ChaCha20Rng) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    bytes
}

/// Request material lifted verbatim from the earliest DEPOSIT event: what a
/// replay attacker reads off the public log.
fn replay_material(ledger: &Ledger) -> RequestMaterial {
    let event = ledger
        .events()
        .iter()
        .find(|ev| ev.kind == EventKind::Deposit)
        .expect("replay scenarios run an honest session first");
    RequestMaterial {
        contract_uri: event.contract.clone(),
        token_bytes: event.args[1].clone(),
        hmac_token: event.args.get(5).and_then(|a| Digest::from_slice(a)),
        hidden_challenge: (event.args.len() == 8)
            .then(|| Digest::from_slice(&event.args[6]))
            .flatten(),
        challenge: (event.args.len() == 8)
            .then(|| event.args[7].as_slice().try_into().ok())
            .flatten(),
    }
}

/// The harness-side world the agent talks to: the device channel (with the
/// tamper adversary in the middle), the ledger, and block progression that
/// lets the provider (or the rogue) act.
struct Env<'a> {
    ledger: &'a mut Ledger,
    acp: &'a mut Acp,
    acp_silent: bool,
    rogue: Option<&'a mut RogueAcp>,
    thing: &'a mut Thing,
    tamper: Option<(TamperField, usize)>,
    protocol: Protocol,
    channel_trace: &'a mut Vec<String>,
    thing_sk: &'a mut Option<SessionKey>,
}

impl Env<'_> {
    fn note_tamper(&mut self, field: TamperField, position: usize) {
        self.channel_trace
            .push(format!("tamper: flipped byte {position} of {field}"));
    }

    fn tamper_for(&self, wanted: TamperField) -> Option<usize> {
        match self.tamper {
            Some((field, position)) if field == wanted => Some(position),
            _ => None,
        }
    }
}

impl SessionEnv for Env<'_> {
    fn request_resource(
        &mut self,
        uri_resource: &Uri,
        protocol: Protocol,
        challenge: Option<&Challenge>,
    ) -> Result<ThingResponse, String> {
        self.channel_trace
            .push(format!("user->thing: request {uri_resource} protocol={protocol}"));
        let mut response = match self.thing.handle_request(uri_resource, protocol, challenge) {
            Ok(response) => response,
            Err(err) => {
                self.channel_trace.push(format!("thing->user: error {err}"));
                return Err(err.to_string());
            }
        };

        // capture the device-side key before any in-flight interference
        *self.thing_sk = self
            .thing
            .cached_session_key(&response.token.canonical_bytes())
            .cloned();

        if let Some(position) = self.tamper_for(TamperField::ThingToken) {
            let mut bytes = response.token.canonical_bytes().to_vec();
            flip_byte(&mut bytes, position);
            response.token = Token::from_bytes(&bytes).expect("length unchanged");
            self.note_tamper(TamperField::ThingToken, position);
        }
        if let Some(position) = self.tamper_for(TamperField::ThingHmacToken) {
            if let Some(digest) = response.hmac_token.as_mut() {
                flip_byte(&mut digest.0, position);
                self.note_tamper(TamperField::ThingHmacToken, position);
            }
        }
        if let Some(position) = self.tamper_for(TamperField::ThingChallengeResponse) {
            if let Some(digest) = response.challenge_response.as_mut() {
                flip_byte(&mut digest.0, position);
                self.note_tamper(TamperField::ThingChallengeResponse, position);
            }
        }

        self.channel_trace.push(format!(
            "thing->user: token={} contract={}",
            hex::encode(response.token.canonical_bytes()),
            response.contract_uri
        ));
        Ok(response)
    }

    fn order_exchange(
        &mut self,
        token_bytes: &[u8],
        sealed_order: crypto::SealedMessage,
    ) -> Result<crypto::SealedMessage, String> {
        let mut sealed_order = sealed_order;
        if let Some(position) = self.tamper_for(TamperField::OrderCiphertext) {
            flip_byte(&mut sealed_order.ciphertext, position);
            self.note_tamper(TamperField::OrderCiphertext, position);
        }
        self.channel_trace.push(format!(
            "user->thing: sealed order ({} bytes)",
            sealed_order.ciphertext.len()
        ));

        let mut sealed_receipt = match self.thing.handle_encrypted_request(token_bytes, &sealed_order)
        {
            Ok(receipt) => receipt,
            Err(err) => {
                self.channel_trace.push(format!("thing->user: abort {err}"));
                return Err(err.to_string());
            }
        };
        if let Some(position) = self.tamper_for(TamperField::ReceiptCiphertext) {
            flip_byte(&mut sealed_receipt.ciphertext, position);
            self.note_tamper(TamperField::ReceiptCiphertext, position);
        }
        self.channel_trace.push(format!(
            "thing->user: sealed receipt ({} bytes)",
            sealed_receipt.ciphertext.len()
        ));
        Ok(sealed_receipt)
    }

    fn transform_request_call(&mut self, mut call: Call) -> Call {
        let tampers = [
            (TamperField::TxToken, Some(0usize)),
            (
                TamperField::TxHmacToken,
                (self.protocol != Protocol::S).then_some(2),
            ),
            (
                TamperField::TxHiddenChallenge,
                (self.protocol == Protocol::Two).then_some(3),
            ),
            (
                TamperField::TxChallenge,
                (self.protocol == Protocol::Two).then_some(4),
            ),
        ];
        for (field, index) in tampers {
            if let (Some(position), Some(index)) = (self.tamper_for(field), index) {
                flip_byte(&mut call.args[index], position);
                self.note_tamper(field, position);
            }
        }
        call
    }

    fn submit_tx(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        self.ledger.submit(tx)
    }

    fn advance_block(&mut self) {
        let mut produced = false;
        if !self.acp_silent {
            for tx in self.acp.step(self.ledger) {
                let _ = self.ledger.submit(tx);
                produced = true;
            }
        }
        if let Some(rogue) = self.rogue.as_deref_mut() {
            for tx in rogue.step(self.ledger) {
                let _ = self.ledger.submit(tx);
                produced = true;
            }
        }
        if !produced {
            self.ledger.tick();
        }
    }

    fn height(&self) -> u64 {
        self.ledger.height()
    }

    fn find_key_event(
        &self,
        contract: &Uri,
        p_user: &[u8; 32],
        token: &[u8],
    ) -> Option<EventRecord> {
        self.ledger
            .events()
            .iter()
            .find(|ev| {
                ev.kind == EventKind::Key
                    && ev.contract == *contract
                    && ev.args.len() >= 4
                    && ev.args[0] == p_user
                    && ev.args[1] == token
            })
            .cloned()
    }

    fn next_sequence(&self, address: &Address) -> u64 {
        self.ledger.next_sequence(address)
    }
}

#[allow(clippy::too_many_arguments)]
fn compute_audits(
    ledger: &Ledger,
    contract_uri: &Uri,
    allowed: &BTreeMap<Address, [u8; 32]>,
    known_senders: &BTreeSet<Address>,
    session_keys: &[SessionKey],
    funded_total: u64,
    escrow_address: Address,
) -> AuditReport {
    let conservation = ledger.total_supply() == funded_total;

    // every KEY event's subject was allow-listed
    let policy_soundness = ledger
        .events()
        .iter()
        .filter(|ev| ev.kind == EventKind::Key)
        .all(|ev| {
            ev.args
                .first()
                .and_then(|a| <[u8; 32]>::try_from(a.as_slice()).ok())
                .map(|p_user| allowed.contains_key(&crypto::address_of(&p_user)))
                .unwrap_or(false)
        });

    // every successful authorize answers an earlier deposit
    let authorize_preceded_by_deposit = ledger
        .blocks()
        .iter()
        .filter(|block| {
            block
                .transaction
                .as_ref()
                .is_some_and(|tx| tx.call.function.starts_with("authorize"))
                && block.status == Some(TxStatus::Success)
        })
        .all(|block| {
            let tx = block.transaction.as_ref().unwrap();
            ledger.events().iter().any(|ev| {
                ev.kind == EventKind::Deposit
                    && ev.block_height < block.height
                    && ev.args.first() == tx.call.args.first()
                    && ev.args.get(1) == tx.call.args.get(1)
            })
        });

    // devices hold no ledger keys; every sender is a known non-device actor
    let no_thing_senders = ledger
        .blocks()
        .iter()
        .filter_map(|block| block.transaction.as_ref())
        .all(|tx| known_senders.contains(&tx.sender));

    // no session key in plaintext anywhere on the ledger
    let no_plaintext_session_keys = session_keys.iter().all(|sk| {
        let needle = sk.as_bytes();
        let tx_args = ledger
            .blocks()
            .iter()
            .filter_map(|b| b.transaction.as_ref())
            .flat_map(|tx| tx.call.args.iter());
        let event_args = ledger.events().iter().flat_map(|ev| ev.args.iter());
        !tx_args.chain(event_args).any(|field| contains(field, needle))
    });

    // each deposit settled exactly one way, and still-pending deposits add
    // up to the remaining escrow
    let mut pending_sum = 0u64;
    let mut escrow_settled_exactly_once = true;
    for event in ledger
        .events()
        .iter()
        .filter(|ev| ev.kind == EventKind::Deposit)
    {
        let Some(p_user) = event
            .args
            .first()
            .and_then(|a| <[u8; 32]>::try_from(a.as_slice()).ok())
        else {
            escrow_settled_exactly_once = false;
            continue;
        };
        let user = crypto::address_of(&p_user);
        let token = &event.args[1];

        let paid = ledger.events().iter().any(|ev| {
            ev.kind == EventKind::Key && ev.args.first() == event.args.first() && &ev.args[1] == token
        });
        let refunded = ledger.blocks().iter().any(|block| {
            block.status == Some(TxStatus::Success)
                && block.transaction.as_ref().is_some_and(|tx| {
                    tx.call.function == "reclaim_deposit"
                        && tx.sender == user
                        && tx.call.args.first() == Some(token)
                })
        });
        let pending_deposit = ledger
            .view_contract::<AccessContract, _>(contract_uri, |c| {
                c.pending_request(&user, token).map(|p| p.deposit)
            })
            .flatten();

        let outcomes = usize::from(paid) + usize::from(refunded) + usize::from(pending_deposit.is_some());
        if outcomes != 1 {
            escrow_settled_exactly_once = false;
        }
        pending_sum += pending_deposit.unwrap_or(0);
    }
    if ledger.balance(&escrow_address) != Some(pending_sum) {
        escrow_settled_exactly_once = false;
    }

    AuditReport {
        conservation,
        policy_soundness,
        authorize_preceded_by_deposit,
        no_thing_senders,
        no_plaintext_session_keys,
        escrow_settled_exactly_once,
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}
