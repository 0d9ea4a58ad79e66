//! Deterministic in-process ledger: accounts, an append-only block log,
//! atomic contract invocation, ordered event broadcast, and a simplified
//! cost meter.
//!
//! One submission produces at most one block; empty "tick" blocks advance
//! the height so contract timeouts can elapse while actors stay silent.
//! All state lives in ordered maps, so identical submission sequences yield
//! bit-identical logs.
//!
//! Cost metering is `21000 + 16 * calldata_bytes + 20000 * storage_words`.
//! Costs are attributed to the sender and reported in receipts and traces;
//! they are never deducted from balances, so currency conservation holds
//! exactly across any run.

use std::any::Any;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::{self, Address, Digest};

/// Base cost charged for any transaction.
pub const COST_BASE: u64 = 21_000;
/// Cost per byte of encoded calldata.
pub const COST_PER_CALLDATA_BYTE: u64 = 16;
/// Cost per 32-byte word newly written to contract storage.
pub const COST_PER_STORAGE_WORD: u64 = 20_000;

/// Identifier for resources, policies, and contracts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Uri(pub String);

impl Uri {
    pub fn new(s: impl Into<String>) -> Self {
        Uri(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl std::fmt::Display for Uri {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Uri {
    fn from(s: &str) -> Self {
        Uri(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("unknown contract {0}")]
    UnknownContract(Uri),
    #[error("bad signature")]
    BadSignature,
    #[error("bad sequence number: expected {expected}, got {got}")]
    BadSequence { expected: u64, got: u64 },
    #[error("insufficient balance: need {needed}, have {available}")]
    InsufficientBalance { needed: u64, available: u64 },
}

/// An account: address plus balance. Contract accounts have no public key
/// and hold the contract's escrow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Account {
    pub address: Address,
    pub public_key: Option<[u8; 32]>,
    pub balance: u64,
}

/// A function call carried inside a transaction. The canonical encoding
/// `name(hex_arg,hex_arg,...)` is what the cost meter measures and what
/// traces display.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Call {
    pub function: String,
    pub args: Vec<Vec<u8>>,
}

impl Call {
    pub fn new(function: impl Into<String>, args: Vec<Vec<u8>>) -> Self {
        Call {
            function: function.into(),
            args,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = String::with_capacity(self.function.len() + 2 + self.args.len() * 65);
        out.push_str(&self.function);
        out.push('(');
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&hex::encode(arg));
        }
        out.push(')');
        out.into_bytes()
    }
}

/// A signed transaction targeting one contract function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub sender_public_key: [u8; 32],
    pub target: Uri,
    pub call: Call,
    pub value: u64,
    pub sequence: u64,
    pub signature: [u8; 64],
}

impl Transaction {
    /// Build and sign a transaction with the sender's ledger key pair.
    pub fn sign(
        keys: &crypto::LedgerKeyPair,
        target: Uri,
        call: Call,
        value: u64,
        sequence: u64,
    ) -> Self {
        let sender = keys.address();
        let sender_public_key = keys.public_bytes();
        let bytes = Self::signing_bytes(&sender_public_key, &target, &call, value, sequence);
        let signature = keys.sign(&bytes);
        Transaction {
            sender,
            sender_public_key,
            target,
            call,
            value,
            sequence,
            signature,
        }
    }

    fn signing_bytes(
        sender_public_key: &[u8; 32],
        target: &Uri,
        call: &Call,
        value: u64,
        sequence: u64,
    ) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"TXv1");
        out.extend_from_slice(sender_public_key);
        push_field(&mut out, target.as_bytes());
        push_field(&mut out, call.function.as_bytes());
        out.extend_from_slice(&(call.args.len() as u32).to_be_bytes());
        for arg in &call.args {
            push_field(&mut out, arg);
        }
        out.extend_from_slice(&value.to_be_bytes());
        out.extend_from_slice(&sequence.to_be_bytes());
        out
    }

    pub fn verify(&self) -> bool {
        if crypto::address_of(&self.sender_public_key) != self.sender {
            return false;
        }
        let bytes = Self::signing_bytes(
            &self.sender_public_key,
            &self.target,
            &self.call,
            self.value,
            self.sequence,
        );
        crypto::verify_signature(&self.sender_public_key, &bytes, &self.signature)
    }

    pub fn id(&self) -> Digest {
        let mut bytes = Self::signing_bytes(
            &self.sender_public_key,
            &self.target,
            &self.call,
            self.value,
            self.sequence,
        );
        bytes.extend_from_slice(&self.signature);
        crypto::hash(&bytes)
    }
}

fn push_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

/// Event kinds the access contract emits.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum EventKind {
    Deposit,
    Key,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Deposit => "DEPOSIT",
            EventKind::Key => "KEY",
        })
    }
}

/// An event as recorded in the log: ordered byte arguments plus position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub contract: Uri,
    pub args: Vec<Vec<u8>>,
    pub block_height: u64,
    pub tx_id: Digest,
    pub index_in_block: u32,
}

/// Event payload a contract hands back to the ledger for recording.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventDraft {
    pub kind: EventKind,
    pub args: Vec<Vec<u8>>,
}

/// Terminal status of an executed transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Success,
    Reverted(String),
}

impl TxStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

/// What the submitter gets back: status, emitted events, metered cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: Digest,
    pub block_height: u64,
    pub status: TxStatus,
    pub events: Vec<EventRecord>,
    pub cost: u64,
}

/// One block: at most one transaction plus the events it emitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub transaction: Option<Transaction>,
    pub status: Option<TxStatus>,
    pub cost: u64,
    pub events: Vec<EventRecord>,
}

/// Execution context passed to a contract call.
pub struct CallContext {
    pub sender: Address,
    pub sender_public_key: [u8; 32],
    pub value: u64,
    pub block_height: u64,
    /// Contract escrow balance after the attached value was credited.
    pub escrow_balance: u64,
}

/// State changes a successful call requests: events to record, payouts from
/// the contract's escrow, and the number of storage words written (metering).
#[derive(Default)]
pub struct CallEffects {
    pub events: Vec<EventDraft>,
    pub payouts: Vec<(Address, u64)>,
    pub storage_words: u64,
}

/// Revert reason surfaced in receipts and traces. Contracts map their typed
/// errors to a stable code string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractRevert(pub String);

/// A contract hosted by the ledger. Calls must be deterministic; the ledger
/// snapshots the contract before each call and restores it on revert.
pub trait Contract {
    fn call(&mut self, ctx: &CallContext, call: &Call) -> Result<CallEffects, ContractRevert>;
    fn clone_box(&self) -> Box<dyn Contract>;
    fn as_any(&self) -> &dyn Any;
}

struct ContractSlot {
    address: Address,
    contract: Box<dyn Contract>,
}

/// Filter for event subscriptions.
#[derive(Clone, Debug, Default)]
pub struct EventFilter {
    pub kind: Option<EventKind>,
    pub contract: Option<Uri>,
}

impl EventFilter {
    pub fn matches(&self, ev: &EventRecord) -> bool {
        self.kind.map_or(true, |k| k == ev.kind)
            && self.contract.as_ref().map_or(true, |c| *c == ev.contract)
    }
}

/// Cursor over the immutable event log. Replays from genesis, delivers each
/// matching event exactly once per subscription, in block order.
#[derive(Clone, Debug)]
pub struct Subscription {
    filter: EventFilter,
    cursor: usize,
}

impl Subscription {
    pub fn poll(&mut self, ledger: &Ledger) -> Vec<EventRecord> {
        let mut out = Vec::new();
        while self.cursor < ledger.events.len() {
            let ev = &ledger.events[self.cursor];
            self.cursor += 1;
            if self.filter.matches(ev) {
                out.push(ev.clone());
            }
        }
        out
    }
}

/// The ledger simulator.
pub struct Ledger {
    accounts: BTreeMap<Address, Account>,
    contracts: BTreeMap<Uri, ContractSlot>,
    blocks: Vec<Block>,
    events: Vec<EventRecord>,
    sequences: BTreeMap<Address, u64>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            contracts: BTreeMap::new(),
            blocks: Vec::new(),
            events: Vec::new(),
            sequences: BTreeMap::new(),
        }
    }

    /// Create an account for a ledger public key. Idempotent: the same key
    /// always maps to the same address.
    pub fn create_account(&mut self, public_key: &[u8; 32]) -> Address {
        let address = crypto::address_of(public_key);
        self.accounts.entry(address).or_insert(Account {
            address,
            public_key: Some(*public_key),
            balance: 0,
        });
        address
    }

    /// Credit an account. This is the only way currency enters the system.
    pub fn fund(&mut self, address: Address, amount: u64) -> Result<u64, LedgerError> {
        let account = self
            .accounts
            .get_mut(&address)
            .ok_or(LedgerError::UnknownAccount(address))?;
        account.balance += amount;
        Ok(account.balance)
    }

    pub fn balance(&self, address: &Address) -> Option<u64> {
        self.accounts.get(address).map(|a| a.balance)
    }

    /// Sum of every balance, including contract escrow accounts.
    pub fn total_supply(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    /// Host a contract at `uri`; its escrow account address is derived from
    /// the uri. Returns the escrow address.
    pub fn deploy_contract(&mut self, uri: Uri, contract: Box<dyn Contract>) -> Address {
        let digest = crypto::hash(uri.as_bytes());
        let address = Address(digest.0[12..].try_into().unwrap());
        self.accounts.entry(address).or_insert(Account {
            address,
            public_key: None,
            balance: 0,
        });
        self.contracts.insert(uri, ContractSlot { address, contract });
        address
    }

    pub fn contract_address(&self, uri: &Uri) -> Option<Address> {
        self.contracts.get(uri).map(|slot| slot.address)
    }

    /// Read-only view of a hosted contract's state (off-ledger query).
    pub fn view_contract<C: Contract + 'static, T>(
        &self,
        uri: &Uri,
        f: impl FnOnce(&C) -> T,
    ) -> Option<T> {
        self.contracts
            .get(uri)
            .and_then(|slot| slot.contract.as_any().downcast_ref::<C>())
            .map(f)
    }

    /// Next sequence number expected from a sender.
    pub fn next_sequence(&self, address: &Address) -> u64 {
        self.sequences.get(address).copied().unwrap_or(0)
    }

    /// Height the next block will get.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn subscribe(&self, filter: EventFilter) -> Subscription {
        Subscription { filter, cursor: 0 }
    }

    /// Append an empty block. Models unrelated network activity so that
    /// block-height timeouts can pass.
    pub fn tick(&mut self) -> u64 {
        let height = self.height();
        self.blocks.push(Block {
            height,
            transaction: None,
            status: None,
            cost: 0,
            events: Vec::new(),
        });
        height
    }

    /// Validate, execute, and record a transaction. Rejected transactions
    /// (bad signature, bad sequence, insufficient balance) leave no block;
    /// reverted calls are recorded with every state change rolled back and
    /// the attached value returned.
    pub fn submit(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        if !self.contracts.contains_key(&tx.target) {
            return Err(LedgerError::UnknownContract(tx.target.clone()));
        }
        if !self.accounts.contains_key(&tx.sender) {
            return Err(LedgerError::UnknownAccount(tx.sender));
        }
        if !tx.verify() {
            return Err(LedgerError::BadSignature);
        }
        let expected = self.next_sequence(&tx.sender);
        if tx.sequence != expected {
            return Err(LedgerError::BadSequence {
                expected,
                got: tx.sequence,
            });
        }
        let sender_balance = self.accounts[&tx.sender].balance;
        if sender_balance < tx.value {
            return Err(LedgerError::InsufficientBalance {
                needed: tx.value,
                available: sender_balance,
            });
        }

        // the transaction is on-chain from here on
        self.sequences.insert(tx.sender, expected + 1);
        let height = self.height();
        let tx_id = tx.id();
        let calldata_len = tx.call.encode().len() as u64;
        let contract_address = self.contracts[&tx.target].address;

        // move the attached value into escrow before execution
        self.accounts.get_mut(&tx.sender).unwrap().balance -= tx.value;
        self.accounts.get_mut(&contract_address).unwrap().balance += tx.value;

        let escrow_balance = self.accounts[&contract_address].balance;
        let ctx = CallContext {
            sender: tx.sender,
            sender_public_key: tx.sender_public_key,
            value: tx.value,
            block_height: height,
            escrow_balance,
        };

        let slot = self.contracts.get_mut(&tx.target).unwrap();
        let snapshot = slot.contract.clone_box();
        let mut outcome = slot.contract.call(&ctx, &tx.call);

        // overdrawing escrow is a contract bug; treat as revert
        if let Ok(effects) = &outcome {
            let paid: u64 = effects.payouts.iter().map(|(_, amount)| amount).sum();
            if paid > escrow_balance {
                outcome = Err(ContractRevert("EscrowOverdraw".into()));
            }
        }

        let (status, events, cost) = match outcome {
            Ok(effects) => {
                let cost = COST_BASE
                    + COST_PER_CALLDATA_BYTE * calldata_len
                    + COST_PER_STORAGE_WORD * effects.storage_words;
                for (to, amount) in &effects.payouts {
                    self.accounts.get_mut(&contract_address).unwrap().balance -= amount;
                    self.accounts
                        .entry(*to)
                        .or_insert(Account {
                            address: *to,
                            public_key: None,
                            balance: 0,
                        })
                        .balance += amount;
                }
                let mut records = Vec::new();
                for (i, draft) in effects.events.into_iter().enumerate() {
                    let record = EventRecord {
                        kind: draft.kind,
                        contract: tx.target.clone(),
                        args: draft.args,
                        block_height: height,
                        tx_id,
                        index_in_block: i as u32,
                    };
                    self.events.push(record.clone());
                    records.push(record);
                }
                (TxStatus::Success, records, cost)
            }
            Err(revert) => {
                // roll back contract state and return the attached value
                let slot = self.contracts.get_mut(&tx.target).unwrap();
                slot.contract = snapshot;
                self.accounts.get_mut(&contract_address).unwrap().balance -= tx.value;
                self.accounts.get_mut(&tx.sender).unwrap().balance += tx.value;
                let cost = COST_BASE + COST_PER_CALLDATA_BYTE * calldata_len;
                (TxStatus::Reverted(revert.0), Vec::new(), cost)
            }
        };

        self.blocks.push(Block {
            height,
            transaction: Some(tx),
            status: Some(status.clone()),
            cost,
            events: events.clone(),
        });

        Ok(Receipt {
            tx_id,
            block_height: height,
            status,
            events,
            cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::LedgerKeyPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Minimal contract for ledger-level tests: `store` writes words and
    /// emits an event, `pay` sends escrow to an address, `fail` reverts
    /// after attempting a state change.
    #[derive(Clone, Default)]
    struct Counter {
        stored: u64,
    }

    impl Contract for Counter {
        fn call(&mut self, ctx: &CallContext, call: &Call) -> Result<CallEffects, ContractRevert> {
            match call.function.as_str() {
                "store" => {
                    self.stored += 1;
                    Ok(CallEffects {
                        events: vec![EventDraft {
                            kind: EventKind::Deposit,
                            args: vec![self.stored.to_be_bytes().to_vec()],
                        }],
                        payouts: Vec::new(),
                        storage_words: 1,
                    })
                }
                "pay" => {
                    let to = Address::from_slice(&call.args[0]).unwrap();
                    let amount = u64::from_be_bytes(call.args[1][..8].try_into().unwrap());
                    Ok(CallEffects {
                        events: Vec::new(),
                        payouts: vec![(to, amount)],
                        storage_words: 0,
                    })
                }
                "fail" => {
                    self.stored += 100; // must be rolled back
                    Err(ContractRevert("Boom".into()))
                }
                "overdraw" => Ok(CallEffects {
                    events: Vec::new(),
                    payouts: vec![(ctx.sender, ctx.escrow_balance + 1)],
                    storage_words: 0,
                }),
                other => Err(ContractRevert(format!("NoSuchFunction:{other}"))),
            }
        }

        fn clone_box(&self) -> Box<dyn Contract> {
            Box::new(self.clone())
        }

        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    fn setup() -> (Ledger, LedgerKeyPair, Uri) {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let keys = LedgerKeyPair::generate(&mut rng);
        let mut ledger = Ledger::new();
        ledger.create_account(&keys.public_bytes());
        ledger.fund(keys.address(), 1_000).unwrap();
        let uri = Uri::new("contract://counter");
        ledger.deploy_contract(uri.clone(), Box::new(Counter::default()));
        (ledger, keys, uri)
    }

    fn call_tx(
        keys: &LedgerKeyPair,
        ledger: &Ledger,
        uri: &Uri,
        call: Call,
        value: u64,
    ) -> Transaction {
        Transaction::sign(
            keys,
            uri.clone(),
            call,
            value,
            ledger.next_sequence(&keys.address()),
        )
    }

    #[test]
    fn create_account_is_idempotent() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let keys = LedgerKeyPair::generate(&mut rng);
        let mut ledger = Ledger::new();
        let a = ledger.create_account(&keys.public_bytes());
        ledger.fund(a, 5).unwrap();
        let b = ledger.create_account(&keys.public_bytes());
        assert_eq!(a, b);
        assert_eq!(ledger.balance(&a), Some(5));
    }

    #[test]
    fn funding_is_additive() {
        let (mut ledger, keys, _) = setup();
        let addr = keys.address();
        assert_eq!(ledger.fund(addr, 0).unwrap(), 1_000);
        ledger.fund(addr, 100).unwrap();
        assert_eq!(ledger.fund(addr, 50).unwrap(), 1_150);
        let phantom = Address([9; 20]);
        assert_eq!(
            ledger.fund(phantom, 1),
            Err(LedgerError::UnknownAccount(phantom))
        );
    }

    #[test]
    fn bad_signature_leaves_no_block() {
        let (mut ledger, keys, uri) = setup();
        let mut tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        tx.signature[0] ^= 1;
        assert_eq!(ledger.submit(tx), Err(LedgerError::BadSignature));
        assert!(ledger.blocks().is_empty());
    }

    #[test]
    fn sequence_must_increase() {
        let (mut ledger, keys, uri) = setup();
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        ledger.submit(tx.clone()).unwrap();
        // same sequence again
        let replayed = tx;
        assert_eq!(
            ledger.submit(replayed),
            Err(LedgerError::BadSequence { expected: 1, got: 0 })
        );
    }

    #[test]
    fn value_moves_into_escrow_and_revert_returns_it() {
        let (mut ledger, keys, uri) = setup();
        let escrow = ledger.contract_address(&uri).unwrap();

        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 100);
        let receipt = ledger.submit(tx).unwrap();
        assert!(receipt.status.is_success());
        assert_eq!(ledger.balance(&keys.address()), Some(900));
        assert_eq!(ledger.balance(&escrow), Some(100));

        let tx = call_tx(&keys, &ledger, &uri, Call::new("fail", vec![]), 100);
        let receipt = ledger.submit(tx).unwrap();
        assert_eq!(receipt.status, TxStatus::Reverted("Boom".into()));
        assert_eq!(ledger.balance(&keys.address()), Some(900));
        assert_eq!(ledger.balance(&escrow), Some(100));

        // contract state rolled back: next store event says 2, not 102
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        let receipt = ledger.submit(tx).unwrap();
        assert_eq!(receipt.events[0].args[0], 2u64.to_be_bytes().to_vec());
    }

    #[test]
    fn payouts_leave_supply_constant() {
        let (mut ledger, keys, uri) = setup();
        let before = ledger.total_supply();
        let to = Address([7; 20]);
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 60);
        ledger.submit(tx).unwrap();
        let args = vec![to.as_bytes().to_vec(), 60u64.to_be_bytes().to_vec()];
        let tx = call_tx(&keys, &ledger, &uri, Call::new("pay", args), 0);
        ledger.submit(tx).unwrap();
        assert_eq!(ledger.balance(&to), Some(60));
        assert_eq!(ledger.total_supply(), before);
    }

    #[test]
    fn escrow_overdraw_reverts() {
        let (mut ledger, keys, uri) = setup();
        let tx = call_tx(&keys, &ledger, &uri, Call::new("overdraw", vec![]), 10);
        let receipt = ledger.submit(tx).unwrap();
        assert_eq!(receipt.status, TxStatus::Reverted("EscrowOverdraw".into()));
        assert_eq!(ledger.balance(&keys.address()), Some(1_000));
    }

    #[test]
    fn insufficient_balance_is_rejected() {
        let (mut ledger, keys, uri) = setup();
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 5_000);
        assert_eq!(
            ledger.submit(tx),
            Err(LedgerError::InsufficientBalance {
                needed: 5_000,
                available: 1_000
            })
        );
        assert!(ledger.blocks().is_empty());
    }

    #[test]
    fn subscriptions_replay_and_filter() {
        let (mut ledger, keys, uri) = setup();
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        ledger.submit(tx).unwrap();

        // subscribing after the event still delivers it (replay from genesis)
        let mut all = ledger.subscribe(EventFilter::default());
        let mut deposits = ledger.subscribe(EventFilter {
            kind: Some(EventKind::Deposit),
            contract: Some(uri.clone()),
        });
        let mut keys_only = ledger.subscribe(EventFilter {
            kind: Some(EventKind::Key),
            contract: None,
        });

        let a = all.poll(&ledger);
        let b = deposits.poll(&ledger);
        assert_eq!(a.len(), 1);
        assert_eq!(a, b); // both subscribers see the same event at the same position
        assert!(keys_only.poll(&ledger).is_empty());

        // exactly-once: a second poll is empty
        assert!(all.poll(&ledger).is_empty());

        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        ledger.submit(tx).unwrap();
        assert_eq!(all.poll(&ledger).len(), 1);
    }

    #[test]
    fn deterministic_replay_is_bit_exact() {
        let run = || {
            let (mut ledger, keys, uri) = setup();
            for value in [0u64, 10, 0, 3] {
                let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), value);
                ledger.submit(tx).unwrap();
            }
            ledger.tick();
            format!("{:?}", ledger.blocks())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn blocks_are_contiguous_and_immutable() {
        let (mut ledger, keys, uri) = setup();
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        ledger.submit(tx).unwrap();
        ledger.tick();
        let snapshot = format!("{:?}", ledger.blocks()[0]);
        let tx = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        ledger.submit(tx).unwrap();
        assert_eq!(format!("{:?}", ledger.blocks()[0]), snapshot);
        for (i, block) in ledger.blocks().iter().enumerate() {
            assert_eq!(block.height, i as u64);
        }
    }

    #[test]
    fn cost_meter_tracks_calldata_and_storage() {
        let (mut ledger, keys, uri) = setup();
        let small = call_tx(&keys, &ledger, &uri, Call::new("store", vec![]), 0);
        let small_len = small.call.encode().len() as u64;
        let receipt = ledger.submit(small).unwrap();
        assert_eq!(
            receipt.cost,
            COST_BASE + COST_PER_CALLDATA_BYTE * small_len + COST_PER_STORAGE_WORD
        );

        let big = call_tx(
            &keys,
            &ledger,
            &uri,
            Call::new("store", vec![vec![0xab; 32]]),
            0,
        );
        let big_len = big.call.encode().len() as u64;
        assert!(big_len > small_len);
        let receipt2 = ledger.submit(big).unwrap();
        assert!(receipt2.cost > receipt.cost);
    }
}
