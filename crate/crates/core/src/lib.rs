//! tollgate: ledger-mediated access control, session-key agreement, and
//! escrowed payments for devices that never touch the ledger themselves.
//!
//! A user asks a device for a resource and receives a fresh token; the user
//! deposits payment with an on-ledger access contract, quoting that token;
//! the access-control provider (ACP) watches the contract's DEPOSIT events,
//! authenticates the user, derives the session key from the token and the
//! secret it shares with the device, and answers on-ledger with the key
//! sealed to the user's encryption key. Releasing the key releases the
//! escrowed payment to the provider. The device stays completely offline:
//! it can recompute the same session key locally from its own token.
//!
//! Three protocol variants trade verification strength for cost:
//!
//! * [`Protocol::S`] - the straw man: deposit and key release with no device
//!   verification; payment happens even if the device was an impostor.
//! * [`Protocol::One`] - the request carries the device's keyed digest of the
//!   token, letting the ACP verify device legitimacy before paying.
//! * [`Protocol::Two`] - the user additionally challenges the device; the
//!   contract itself verifies the device-ACP relationship before releasing
//!   key and payment.

pub mod acp;
pub mod agent;
pub mod contract;
pub mod crypto;
pub mod ledger;
pub mod scenario;
pub mod thing;

pub use crypto::{Address, Challenge, Digest, SessionKey, SharedKey, Token};
pub use ledger::{Ledger, Receipt, Transaction, Uri};

use serde::{Deserialize, Serialize};

/// Which of the three protocol variants a session runs.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    /// Straw man: no device verification before payment.
    S,
    /// First construction: ACP-side device verification via `hmac(sk, token)`.
    One,
    /// Second construction: contract-side verification via a hidden challenge.
    Two,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::S, Protocol::One, Protocol::Two];

    /// Contract function implementing the deposit request for this variant.
    pub fn request_function(&self) -> &'static str {
        match self {
            Protocol::S => "requestS",
            Protocol::One => "request1",
            Protocol::Two => "request2",
        }
    }

    /// Contract function implementing the key release for this variant.
    /// The straw man and the first construction share `authorize1`.
    pub fn authorize_function(&self) -> &'static str {
        match self {
            Protocol::S | Protocol::One => "authorize1",
            Protocol::Two => "authorize2",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::S => "S",
            Protocol::One => "1",
            Protocol::Two => "2",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" => Ok(Protocol::S),
            "1" => Ok(Protocol::One),
            "2" => Ok(Protocol::Two),
            other => Err(format!("unknown protocol variant {other:?} (expected S, 1 or 2)")),
        }
    }
}
