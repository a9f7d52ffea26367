//! Decentralized exposure notification.
//!
//! Each agent keeps a secret 32-byte seed and broadcasts a fresh 16-byte token
//! per epoch, `SHA-256(seed || epoch_be64)[..16]`. Contacts store only the
//! tokens they heard, sorted by epoch, on their own device. An infected agent
//! publishes its seed; everyone else recomputes that agent's tokens for the
//! infectious window and intersects locally.
//!
//! Publishing the seed is the compact variant. It lets anyone link all of the
//! infected agent's tokens inside the window to each other, which publishing
//! the individual tokens would not.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::{ScenarioConfig, ScenarioError};

pub const DEFAULT_WINDOW: u64 = 14;
pub const TOKEN_LEN: usize = 16;
pub type AgentSeed = [u8; 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EphemeralToken {
    pub bytes: [u8; TOKEN_LEN],
    pub epoch: u64,
}

pub fn rotate_ephemeral_id(agent_seed: &AgentSeed, epoch: u64) -> EphemeralToken {
    let digest = Sha256::new()
        .chain_update(agent_seed)
        .chain_update(epoch.to_be_bytes())
        .finalize();
    let mut bytes = [0u8; TOKEN_LEN];
    bytes.copy_from_slice(&digest[..TOKEN_LEN]);
    EphemeralToken { bytes, epoch }
}

/// A token as stored by the listener: the epoch it was heard in and its bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HeardToken {
    pub epoch: u64,
    pub token: [u8; TOKEN_LEN],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ProximityEvent {
    pub epoch: u64,
    pub agent_a: usize,
    pub agent_b: usize,
}

/// Everything the bulletin board ever learns.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BulletinBoard {
    #[serde(serialize_with = "hex_seeds")]
    pub published_seeds: Vec<AgentSeed>,
}

fn hex_seeds<S: Serializer>(seeds: &[AgentSeed], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(seeds.iter().map(hex::encode))
}

/// The full input of a tracing run. Generated from a config, or written out
/// by hand for small cases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracingSetup {
    pub agent_seeds: Vec<AgentSeed>,
    pub events: Vec<ProximityEvent>,
    pub infected: BTreeSet<usize>,
    pub epochs: u64,
    pub window: u64,
}

impl TracingSetup {
    /// The last `window` epochs of the timeline.
    pub fn infectious_window(&self) -> Range<u64> {
        self.epochs.saturating_sub(self.window)..self.epochs
    }

    pub fn from_config(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate_tracing()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let agent_seeds: Vec<AgentSeed> = (0..config.citizens)
            .map(|_| {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                seed
            })
            .collect();
        let mut events = Vec::new();
        if config.citizens >= 2 {
            for epoch in 0..config.epochs {
                for _ in 0..config.proximity_events {
                    let a = rng.gen_range(0..config.citizens);
                    let b = (a + rng.gen_range(1..config.citizens)) % config.citizens;
                    events.push(ProximityEvent {
                        epoch,
                        agent_a: a,
                        agent_b: b,
                    });
                }
            }
        }
        let infected = sample(&mut rng, config.citizens, config.infected).into_iter().collect();
        Ok(Self {
            agent_seeds,
            events,
            infected,
            epochs: config.epochs,
            window: config.window,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TracingGroundTruth {
    pub infected: BTreeSet<usize>,
    pub events: Vec<ProximityEvent>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExposureReport {
    pub agents: usize,
    pub window_start: u64,
    pub window_end: u64,
    pub exposed: BTreeSet<usize>,
    /// Matched epochs per exposed agent, computed on that agent's device.
    pub matches: BTreeMap<usize, BTreeSet<u64>>,
    pub bulletin_board: BulletinBoard,
    pub ground_truth: TracingGroundTruth,
}

impl ExposureReport {
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes") + "\n"
    }
}

/// Epochs in which a heard token equals a token recomputed from one of the
/// published seeds over `window`.
pub fn match_exposures(
    heard: &[HeardToken],
    published_seeds: &[AgentSeed],
    window: Range<u64>,
) -> Result<BTreeSet<u64>, ScenarioError> {
    if heard.windows(2).any(|w| w[0].epoch > w[1].epoch) {
        return Err(ScenarioError::UnsortedInput);
    }
    let recomputed: HashMap<[u8; TOKEN_LEN], u64> = published_seeds
        .iter()
        .flat_map(|seed| window.clone().map(move |epoch| rotate_ephemeral_id(seed, epoch)))
        .map(|t| (t.bytes, t.epoch))
        .collect();
    Ok(heard
        .iter()
        .filter(|h| recomputed.get(&h.token) == Some(&h.epoch))
        .map(|h| h.epoch)
        .collect())
}

/// Runs a fixed setup: exchange tokens on every contact, publish infected
/// seeds, then let each agent match locally.
pub fn simulate_tracing(setup: &TracingSetup) -> Result<ExposureReport, ScenarioError> {
    let agents = setup.agent_seeds.len();
    if let Some(bad) = setup
        .events
        .iter()
        .find(|e| e.agent_a == e.agent_b || e.agent_a >= agents || e.agent_b >= agents || e.epoch >= setup.epochs)
    {
        return Err(ScenarioError::InvalidConfig(format!("bad proximity event {bad:?}")));
    }
    if setup.infected.iter().any(|&i| i >= agents) {
        return Err(ScenarioError::InvalidConfig("infected agent out of range".into()));
    }

    let mut events = setup.events.clone();
    events.sort_by_key(|e| e.epoch);
    let mut heard: Vec<Vec<HeardToken>> = vec![Vec::new(); agents];
    for event in &events {
        let from_a = rotate_ephemeral_id(&setup.agent_seeds[event.agent_a], event.epoch);
        let from_b = rotate_ephemeral_id(&setup.agent_seeds[event.agent_b], event.epoch);
        heard[event.agent_b].push(HeardToken {
            epoch: event.epoch,
            token: from_a.bytes,
        });
        heard[event.agent_a].push(HeardToken {
            epoch: event.epoch,
            token: from_b.bytes,
        });
    }

    let board = BulletinBoard {
        published_seeds: setup.infected.iter().map(|&i| setup.agent_seeds[i]).collect(),
    };
    let window = setup.infectious_window();
    let mut matches = BTreeMap::new();
    for (agent, list) in heard.iter().enumerate() {
        let matched = match_exposures(list, &board.published_seeds, window.clone())?;
        if !matched.is_empty() {
            matches.insert(agent, matched);
        }
    }
    Ok(ExposureReport {
        agents,
        window_start: window.start,
        window_end: window.end,
        exposed: matches.keys().copied().collect(),
        matches,
        bulletin_board: board,
        ground_truth: TracingGroundTruth {
            infected: setup.infected.clone(),
            events,
        },
    })
}

pub fn run_contact_tracing_scenario(config: &ScenarioConfig) -> Result<ExposureReport, ScenarioError> {
    simulate_tracing(&TracingSetup::from_config(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_vectors() {
        // Pinned with a reference SHA-256 implementation.
        assert_eq!(
            hex::encode(rotate_ephemeral_id(&[0; 32], 0).bytes),
            "2c34ce1df23b838c5abf2a7f6437cca3"
        );
        assert_eq!(
            hex::encode(rotate_ephemeral_id(&[7; 32], 5).bytes),
            "c2752e50fd7dc126f756cc8ec82c24e5"
        );
        assert_eq!(rotate_ephemeral_id(&[7; 32], 5), rotate_ephemeral_id(&[7; 32], 5));
    }

    #[test]
    fn tokens_do_not_repeat_across_epochs() {
        let tokens: BTreeSet<_> = (0..10_000).map(|e| rotate_ephemeral_id(&[3; 32], e).bytes).collect();
        assert_eq!(tokens.len(), 10_000);
    }

    fn three_agents(contacts: Vec<ProximityEvent>, infected: &[usize]) -> TracingSetup {
        TracingSetup {
            agent_seeds: vec![[1; 32], [2; 32], [3; 32]],
            events: contacts,
            infected: infected.iter().copied().collect(),
            epochs: 5,
            window: DEFAULT_WINDOW,
        }
    }

    #[test]
    fn single_contact_exposes_partner_only() {
        let setup = three_agents(
            vec![ProximityEvent {
                epoch: 2,
                agent_a: 0,
                agent_b: 1,
            }],
            &[0],
        );
        let report = simulate_tracing(&setup).unwrap();
        assert_eq!(report.exposed, BTreeSet::from([1]));
        assert_eq!(report.matches[&1], BTreeSet::from([2]));
        assert_eq!(report.bulletin_board.published_seeds, vec![[1; 32]]);
    }

    #[test]
    fn nobody_infected() {
        let setup = three_agents(
            vec![ProximityEvent {
                epoch: 2,
                agent_a: 0,
                agent_b: 1,
            }],
            &[],
        );
        assert!(simulate_tracing(&setup).unwrap().exposed.is_empty());
    }

    #[test]
    fn contacts_outside_window_do_not_count() {
        let mut setup = three_agents(
            vec![
                ProximityEvent {
                    epoch: 0,
                    agent_a: 0,
                    agent_b: 1,
                },
                ProximityEvent {
                    epoch: 4,
                    agent_a: 0,
                    agent_b: 2,
                },
            ],
            &[0],
        );
        setup.window = 2;
        assert_eq!(simulate_tracing(&setup).unwrap().exposed, BTreeSet::from([2]));
    }

    #[test]
    fn match_exposures_cases() {
        let seed = [9u8; 32];
        let t3 = rotate_ephemeral_id(&seed, 3);
        let other = rotate_ephemeral_id(&[8; 32], 4);
        let heard = vec![
            HeardToken {
                epoch: 3,
                token: t3.bytes,
            },
            HeardToken {
                epoch: 4,
                token: other.bytes,
            },
        ];
        assert_eq!(match_exposures(&heard, &[seed], 0..14).unwrap(), BTreeSet::from([3]));
        assert!(match_exposures(&heard, &[[5; 32]], 0..14).unwrap().is_empty());
        assert!(match_exposures(&heard, &[seed], 4..14).unwrap().is_empty());
        let unsorted: Vec<_> = heard.iter().rev().copied().collect();
        assert_eq!(
            match_exposures(&unsorted, &[seed], 0..14),
            Err(ScenarioError::UnsortedInput)
        );
    }

    #[test]
    fn invalid_events_rejected() {
        let setup = three_agents(
            vec![ProximityEvent {
                epoch: 1,
                agent_a: 1,
                agent_b: 1,
            }],
            &[0],
        );
        assert!(matches!(simulate_tracing(&setup), Err(ScenarioError::InvalidConfig(_))));
    }

    #[test]
    fn bulletin_board_holds_only_seeds() {
        let config = ScenarioConfig {
            citizens: 20,
            infected: 3,
            seed: 5,
            ..ScenarioConfig::default()
        };
        let report = run_contact_tracing_scenario(&config).unwrap();
        let value = serde_json::to_value(&report.bulletin_board).unwrap();
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["published_seeds"]);
        assert_eq!(value["published_seeds"].as_array().unwrap().len(), 3);
    }
}
