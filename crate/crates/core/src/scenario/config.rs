//! Scenario configuration: the actor roster, resource registrations, the
//! adversary, and optional outcome expectations. A config plus a seed fully
//! determines a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::adversary::{AdversarySpec, TamperField};
use crate::Protocol;

pub const DEFAULT_BASE_COST: u64 = 5;
pub const DEFAULT_USER_FUNDING: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("scenario needs at least one order")]
    NoOrders,
    #[error("duplicate actor name {0:?}")]
    DuplicateName(String),
    #[error("order references unknown user {0:?}")]
    UnknownUser(String),
    #[error("order references unknown resource {0:?}")]
    UnknownResource(String),
    #[error("resource {resource:?} references unknown thing {thing:?}")]
    UnknownThing { resource: String, thing: String },
    #[error("free credit grant references unknown user {0:?}")]
    UnknownGrantee(String),
    #[error("tamper field {field} does not exist under protocol {protocol}")]
    InapplicableTamper {
        field: TamperField,
        protocol: Protocol,
    },
    #[error("adversary {0} needs a second authorized user to act as the attacker")]
    NeedsAttacker(String),
    #[error("thing id must be 16 bytes of hex, got {0:?}")]
    BadThingId(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct UserSpec {
    pub name: String,
    #[serde(default = "default_funding")]
    pub funding: u64,
    /// Whether the user's address goes on the policy allow-list.
    #[serde(default = "default_true")]
    pub authorized: bool,
}

fn default_funding() -> u64 {
    DEFAULT_USER_FUNDING
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ThingSpec {
    pub name: String,
    /// 16 bytes of hex; derived from the name when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thing_id: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct AcpSpec {
    pub name: String,
    pub policy_uri: String,
    /// A silent provider never answers deposits; users fall back to reclaim.
    #[serde(default)]
    pub silent: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ResourceSpec {
    pub uri: String,
    /// Which thing serves this resource.
    pub thing: String,
    #[serde(default = "default_base_cost")]
    pub base_cost: u64,
    /// Free orders per user name, consumed only on authorization.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub free_credits: BTreeMap<String, u32>,
}

fn default_base_cost() -> u64 {
    DEFAULT_BASE_COST
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct OrderSpec {
    pub user: String,
    pub resource: String,
    #[serde(default = "default_payload")]
    pub payload: String,
    /// Deposit override; when omitted the effective cost is queried from
    /// the contract and sent exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deposit: Option<u64>,
}

fn default_payload() -> String {
    "coffee,sugar=1".into()
}

/// Outcome triple a scenario may declare; `run` exits non-zero on mismatch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Expectation {
    pub key_emitted: bool,
    pub provider_paid: bool,
    pub completed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub protocol: Protocol,
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout_blocks: u64,
    /// Blocks the user waits for a KEY event; defaults to timeout - 2 so a
    /// reclaim is always still possible after giving up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_wait_blocks: Option<u64>,
    #[serde(default = "default_contract_uri")]
    pub contract_uri: String,
    pub users: Vec<UserSpec>,
    pub things: Vec<ThingSpec>,
    pub acp: AcpSpec,
    pub resources: Vec<ResourceSpec>,
    pub orders: Vec<OrderSpec>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

fn default_timeout() -> u64 {
    crate::contract::DEFAULT_TIMEOUT_BLOCKS
}

fn default_contract_uri() -> String {
    "contract://access".into()
}

impl ScenarioConfig {
    pub fn key_wait_blocks(&self) -> u64 {
        self.key_wait_blocks
            .unwrap_or_else(|| self.timeout_blocks.saturating_sub(2))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        let config: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ConfigError::Io(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.orders.is_empty() {
            return Err(ConfigError::NoOrders);
        }

        let mut names = std::collections::BTreeSet::new();
        for name in self
            .users
            .iter()
            .map(|u| &u.name)
            .chain(self.things.iter().map(|t| &t.name))
            .chain(std::iter::once(&self.acp.name))
        {
            if !names.insert(name.clone()) {
                return Err(ConfigError::DuplicateName(name.clone()));
            }
        }

        let user_names: std::collections::BTreeSet<_> =
            self.users.iter().map(|u| u.name.as_str()).collect();
        let thing_names: std::collections::BTreeSet<_> =
            self.things.iter().map(|t| t.name.as_str()).collect();
        let resource_uris: std::collections::BTreeSet<_> =
            self.resources.iter().map(|r| r.uri.as_str()).collect();

        for resource in &self.resources {
            if !thing_names.contains(resource.thing.as_str()) {
                return Err(ConfigError::UnknownThing {
                    resource: resource.uri.clone(),
                    thing: resource.thing.clone(),
                });
            }
            for grantee in resource.free_credits.keys() {
                if !user_names.contains(grantee.as_str()) {
                    return Err(ConfigError::UnknownGrantee(grantee.clone()));
                }
            }
        }
        for order in &self.orders {
            if !user_names.contains(order.user.as_str()) {
                return Err(ConfigError::UnknownUser(order.user.clone()));
            }
            if !resource_uris.contains(order.resource.as_str()) {
                return Err(ConfigError::UnknownResource(order.resource.clone()));
            }
        }

        for thing in &self.things {
            if let Some(id) = &thing.thing_id {
                let ok = hex::decode(id).map(|b| b.len() == 16).unwrap_or(false);
                if !ok {
                    return Err(ConfigError::BadThingId(id.clone()));
                }
            }
        }

        match &self.adversary {
            AdversarySpec::Tamper { field, .. } => {
                if !field.applies_to(self.protocol) {
                    return Err(ConfigError::InapplicableTamper {
                        field: *field,
                        protocol: self.protocol,
                    });
                }
            }
            AdversarySpec::ReplayToken => {
                // the last user replays; someone else must have a session to steal
                let attacker = &self.orders.last().unwrap().user;
                let victim_exists = self
                    .orders
                    .iter()
                    .take(self.orders.len() - 1)
                    .any(|o| &o.user != attacker);
                let replayer_authorized = self
                    .users
                    .iter()
                    .any(|u| &u.name == attacker && u.authorized);
                if !victim_exists || !replayer_authorized {
                    return Err(ConfigError::NeedsAttacker("REPLAY_TOKEN".into()));
                }
            }
            _ => {}
        }

        Ok(())
    }

    /// The honest smart-coffee-machine scenario: one authorized employee,
    /// one machine, one provider.
    pub fn coffee_honest(protocol: Protocol, seed: u64) -> Self {
        ScenarioConfig {
            name: format!("coffee-honest-{protocol}"),
            protocol,
            seed,
            timeout_blocks: default_timeout(),
            key_wait_blocks: None,
            contract_uri: default_contract_uri(),
            users: vec![UserSpec {
                name: "alice".into(),
                funding: DEFAULT_USER_FUNDING,
                authorized: true,
            }],
            things: vec![ThingSpec {
                name: "machine".into(),
                thing_id: None,
            }],
            acp: AcpSpec {
                name: "company-a".into(),
                policy_uri: "policy://company-a".into(),
                silent: false,
            },
            resources: vec![ResourceSpec {
                uri: "thing://kitchen/coffee".into(),
                thing: "machine".into(),
                base_cost: DEFAULT_BASE_COST,
                free_credits: BTreeMap::new(),
            }],
            orders: vec![OrderSpec {
                user: "alice".into(),
                resource: "thing://kitchen/coffee".into(),
                payload: default_payload(),
                deposit: None,
            }],
            adversary: AdversarySpec::None,
            expect: Some(Expectation {
                key_emitted: true,
                provider_paid: true,
                completed: true,
            }),
        }
    }

    /// The free-cups variant: three free orders, then one at full price.
    pub fn coffee_free_credits(protocol: Protocol, seed: u64) -> Self {
        let mut config = Self::coffee_honest(protocol, seed);
        config.name = format!("coffee-free-credits-{protocol}");
        config.resources[0]
            .free_credits
            .insert("alice".into(), 3);
        let order = config.orders[0].clone();
        config.orders = vec![order.clone(), order.clone(), order.clone(), order];
        config
    }

    /// Provider never answers; the user reclaims the deposit after the
    /// timeout.
    pub fn silent_acp(protocol: Protocol, seed: u64) -> Self {
        let mut config = Self::coffee_honest(protocol, seed);
        config.name = format!("silent-acp-{protocol}");
        config.acp.silent = true;
        config.expect = Some(Expectation {
            key_emitted: false,
            provider_paid: false,
            completed: false,
        });
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_configs_validate() {
        for protocol in Protocol::ALL {
            ScenarioConfig::coffee_honest(protocol, 1).validate().unwrap();
            ScenarioConfig::coffee_free_credits(protocol, 1).validate().unwrap();
            ScenarioConfig::silent_acp(protocol, 1).validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip() {
        let config = ScenarioConfig::coffee_free_credits(Protocol::Two, 7);
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn validation_catches_dangling_references() {
        let mut config = ScenarioConfig::coffee_honest(Protocol::S, 1);
        config.orders[0].user = "nobody".into();
        assert_eq!(
            config.validate(),
            Err(ConfigError::UnknownUser("nobody".into()))
        );

        let mut config = ScenarioConfig::coffee_honest(Protocol::S, 1);
        config.resources[0].thing = "ghost".into();
        assert!(matches!(
            config.validate(),
            Err(ConfigError::UnknownThing { .. })
        ));

        let mut config = ScenarioConfig::coffee_honest(Protocol::S, 1);
        config.orders.clear();
        assert_eq!(config.validate(), Err(ConfigError::NoOrders));
    }

    #[test]
    fn validation_rejects_inapplicable_tamper() {
        let mut config = ScenarioConfig::coffee_honest(Protocol::S, 1);
        config.adversary = AdversarySpec::Tamper {
            field: TamperField::TxHiddenChallenge,
            position: 0,
        };
        assert!(matches!(
            config.validate(),
            Err(ConfigError::InapplicableTamper { .. })
        ));
    }
}
