//! The device actor. Serves resources over a direct channel, issues fresh
//! tokens, computes the verification digests the protocols carry, and
//! answers orders encrypted under the per-token session key.
//!
//! The device knows nothing about the ledger: it holds no ledger keys, signs
//! no transactions, and this module deliberately imports nothing from the
//! ledger machinery. Everything it needs is the secret it shares with its
//! access-control provider and a monotonic counter.

use std::collections::VecDeque;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::crypto::{
    self, derive_session_key, Challenge, CryptoError, Digest, SealedMessage, SessionKey,
    SharedKey, Token, TOKEN_LEN,
};
use crate::ledger::Uri;
use crate::Protocol;

/// Outstanding tokens kept in memory; oldest entries are evicted first.
pub const TOKEN_CACHE_CAPACITY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThingError {
    #[error("unknown resource {0}")]
    UnknownResource(Uri),
    #[error("protocol 2 requires a challenge")]
    MissingChallenge,
    #[error("unknown or expired token")]
    UnknownToken,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// What the device sends back over the direct channel: a fresh token, the
/// contract that guards the resource, and per-protocol verification digests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThingResponse {
    pub token: Token,
    pub contract_uri: Uri,
    /// `hmac(sk, token)` - protocols 1 and 2.
    pub hmac_token: Option<Digest>,
    /// `hash(hmac(sk, challenge))` - protocol 2.
    pub challenge_response: Option<Digest>,
}

struct CachedToken {
    token_bytes: [u8; TOKEN_LEN],
    session_key: SessionKey,
}

/// A single device with one shared key (one ACP handles all its resources).
pub struct Thing {
    thing_id: [u8; 16],
    shared_key: SharedKey,
    counter: u64,
    resources: Vec<(Uri, Uri)>, // resource uri -> guarding contract uri
    cache: VecDeque<CachedToken>,
    rng: ChaCha20Rng,
}

impl Thing {
    pub fn new(
        thing_id: [u8; 16],
        shared_key: SharedKey,
        resources: impl IntoIterator<Item = (Uri, Uri)>,
        rng: ChaCha20Rng,
    ) -> Self {
        Thing {
            thing_id,
            shared_key,
            counter: 0,
            resources: resources.into_iter().collect(),
            cache: VecDeque::new(),
            rng,
        }
    }

    pub fn thing_id(&self) -> [u8; 16] {
        self.thing_id
    }

    /// Session key currently cached for a token, if any. Used by the harness
    /// to check three-way key agreement; the device never transmits this.
    pub fn cached_session_key(&self, token_bytes: &[u8]) -> Option<&SessionKey> {
        self.cache
            .iter()
            .find(|entry| entry.token_bytes[..] == *token_bytes)
            .map(|entry| &entry.session_key)
    }

    /// Answer a resource request: mint a fresh token, derive and cache its
    /// session key, and fill in the digests the protocol variant needs.
    pub fn handle_request(
        &mut self,
        uri_resource: &Uri,
        protocol: Protocol,
        challenge: Option<&Challenge>,
    ) -> Result<ThingResponse, ThingError> {
        let contract_uri = self
            .resources
            .iter()
            .find(|(resource, _)| resource == uri_resource)
            .map(|(_, contract)| contract.clone())
            .ok_or_else(|| ThingError::UnknownResource(uri_resource.clone()))?;

        if protocol == Protocol::Two && challenge.is_none() {
            return Err(ThingError::MissingChallenge);
        }

        self.counter += 1;
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let token = Token {
            thing_id: self.thing_id,
            counter: self.counter,
            nonce,
        };

        let session_key = derive_session_key(&self.shared_key, &token);
        let token_bytes = token.canonical_bytes();

        let hmac_token = match protocol {
            Protocol::S => None,
            Protocol::One | Protocol::Two => Some(
                crypto::hmac(session_key.as_bytes(), &token_bytes)
                    .expect("session key is non-empty"),
            ),
        };
        let challenge_response = match (protocol, challenge) {
            (Protocol::Two, Some(challenge)) => {
                let inner = crypto::hmac(session_key.as_bytes(), &challenge.0)
                    .expect("session key is non-empty");
                Some(crypto::hash(inner.as_bytes()))
            }
            _ => None,
        };

        if self.cache.len() == TOKEN_CACHE_CAPACITY {
            self.cache.pop_front();
        }
        self.cache.push_back(CachedToken {
            token_bytes,
            session_key,
        });

        Ok(ThingResponse {
            token,
            contract_uri,
            hmac_token,
            challenge_response,
        })
    }

    /// Open an order sealed under a token's session key and answer with a
    /// receipt sealed under the same key. The token is spent on success:
    /// one completed exchange per token.
    pub fn handle_encrypted_request(
        &mut self,
        token_bytes: &[u8],
        sealed_order: &SealedMessage,
    ) -> Result<SealedMessage, ThingError> {
        let position = self
            .cache
            .iter()
            .position(|entry| entry.token_bytes[..] == *token_bytes)
            .ok_or(ThingError::UnknownToken)?;

        let order = {
            let entry = &self.cache[position];
            crypto::open_sym(&entry.session_key, sealed_order)?
        };

        let mut receipt = b"receipt:".to_vec();
        receipt.extend_from_slice(&order);

        let entry = self.cache.remove(position).expect("position is in range");
        Ok(crypto::seal_sym(&mut self.rng, &entry.session_key, &receipt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn coffee_thing(seed: u64) -> Thing {
        Thing::new(
            [0xAA; 16],
            SharedKey([0x11; 32]),
            [(
                Uri::new("thing://kitchen/coffee"),
                Uri::new("contract://access"),
            )],
            ChaCha20Rng::seed_from_u64(seed),
        )
    }

    #[test]
    fn straw_man_response_has_token_and_contract_only() {
        let mut thing = coffee_thing(1);
        let response = thing
            .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::S, None)
            .unwrap();
        assert_eq!(response.contract_uri, Uri::new("contract://access"));
        assert_eq!(response.token.counter, 1);
        assert!(response.hmac_token.is_none());
        assert!(response.challenge_response.is_none());
    }

    #[test]
    fn protocol_one_adds_token_digest() {
        let mut thing = coffee_thing(2);
        let response = thing
            .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::One, None)
            .unwrap();
        let sk = derive_session_key(&SharedKey([0x11; 32]), &response.token);
        let expected = crypto::hmac(sk.as_bytes(), &response.token.canonical_bytes()).unwrap();
        assert_eq!(response.hmac_token, Some(expected));
    }

    #[test]
    fn protocol_two_answers_the_challenge() {
        let mut thing = coffee_thing(3);
        let challenge = Challenge([0x44; 32]);
        let response = thing
            .handle_request(
                &Uri::new("thing://kitchen/coffee"),
                Protocol::Two,
                Some(&challenge),
            )
            .unwrap();
        let sk = derive_session_key(&SharedKey([0x11; 32]), &response.token);
        let inner = crypto::hmac(sk.as_bytes(), &challenge.0).unwrap();
        assert_eq!(response.challenge_response, Some(crypto::hash(inner.as_bytes())));
        assert!(response.hmac_token.is_some());
    }

    #[test]
    fn protocol_two_requires_a_challenge() {
        let mut thing = coffee_thing(4);
        assert_eq!(
            thing.handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::Two, None),
            Err(ThingError::MissingChallenge)
        );
    }

    #[test]
    fn unknown_resource_is_refused() {
        let mut thing = coffee_thing(5);
        assert!(matches!(
            thing.handle_request(&Uri::new("thing://kitchen/tea"), Protocol::S, None),
            Err(ThingError::UnknownResource(_))
        ));
    }

    #[test]
    fn tokens_are_fresh_with_increasing_counters() {
        let mut thing = coffee_thing(6);
        let mut seen = std::collections::BTreeSet::new();
        let mut last_counter = 0;
        for _ in 0..10 {
            let response = thing
                .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::S, None)
                .unwrap();
            assert!(response.token.counter > last_counter);
            last_counter = response.token.counter;
            assert!(seen.insert(response.token.canonical_bytes().to_vec()));
        }
    }

    #[test]
    fn order_and_receipt_round_trip() {
        let mut thing = coffee_thing(7);
        let mut user_rng = ChaCha20Rng::seed_from_u64(70);
        let response = thing
            .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::S, None)
            .unwrap();
        let token_bytes = response.token.canonical_bytes();
        let sk = thing.cached_session_key(&token_bytes).unwrap().clone();

        let order = crypto::seal_sym(&mut user_rng, &sk, b"coffee,sugar=1");
        let sealed_receipt = thing.handle_encrypted_request(&token_bytes, &order).unwrap();
        let receipt = crypto::open_sym(&sk, &sealed_receipt).unwrap();
        assert_eq!(receipt, b"receipt:coffee,sugar=1");

        // one completed exchange per token
        let again = crypto::seal_sym(&mut user_rng, &sk, b"coffee");
        assert_eq!(
            thing.handle_encrypted_request(&token_bytes, &again),
            Err(ThingError::UnknownToken)
        );
    }

    #[test]
    fn wrong_session_key_cannot_talk_to_the_device() {
        let mut thing = coffee_thing(8);
        let mut user_rng = ChaCha20Rng::seed_from_u64(80);
        let response = thing
            .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::S, None)
            .unwrap();
        let token_bytes = response.token.canonical_bytes();

        let wrong_sk = SessionKey::from_bytes([0xEE; 32]);
        let order = crypto::seal_sym(&mut user_rng, &wrong_sk, b"coffee");
        assert_eq!(
            thing.handle_encrypted_request(&token_bytes, &order),
            Err(ThingError::Crypto(CryptoError::DecryptionFailure))
        );
        // the token survives a failed attempt
        assert!(thing.cached_session_key(&token_bytes).is_some());
    }

    #[test]
    fn unknown_token_is_refused() {
        let mut thing = coffee_thing(9);
        let mut user_rng = ChaCha20Rng::seed_from_u64(90);
        let sk = SessionKey::from_bytes([0x01; 32]);
        let order = crypto::seal_sym(&mut user_rng, &sk, b"coffee");
        assert_eq!(
            thing.handle_encrypted_request(&[0u8; TOKEN_LEN], &order),
            Err(ThingError::UnknownToken)
        );
    }

    #[test]
    fn cache_evicts_oldest_beyond_capacity() {
        let mut thing = coffee_thing(10);
        let uri = Uri::new("thing://kitchen/coffee");
        let first = thing.handle_request(&uri, Protocol::S, None).unwrap();
        for _ in 0..TOKEN_CACHE_CAPACITY {
            thing.handle_request(&uri, Protocol::S, None).unwrap();
        }
        assert!(thing
            .cached_session_key(&first.token.canonical_bytes())
            .is_none());
        assert_eq!(thing.cache.len(), TOKEN_CACHE_CAPACITY);
    }

    #[test]
    fn device_side_key_matches_provider_derivation() {
        let mut thing = coffee_thing(11);
        let response = thing
            .handle_request(&Uri::new("thing://kitchen/coffee"), Protocol::One, None)
            .unwrap();
        // provider side: same shared key, token parsed from raw bytes
        let provider_sk = crypto::derive_session_key_bytes(
            &SharedKey([0x11; 32]),
            &response.token.canonical_bytes(),
        )
        .unwrap();
        assert_eq!(
            thing.cached_session_key(&response.token.canonical_bytes()),
            Some(&provider_sk)
        );
    }
}
