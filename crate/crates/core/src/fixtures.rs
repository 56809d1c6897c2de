//! Deterministic synthetic data.
//!
//! All randomness comes from `ChaCha8Rng` seeded with `seed_from_u64(seed)`.
//! Each generator stage draws from its own ChaCha stream (`set_stream`), so
//! adding a stage never perturbs the output of existing ones.

use std::collections::{BTreeMap, BTreeSet};

use primitive_types::U256;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::bowtie::{BowTieLabel, BowTiePartition, LabelCounts};
use crate::graph::build_graph;
use crate::ingest::{NormalizedEdge, TransactionRecord, TxKind};
use crate::temporal::SECONDS_PER_DAY;

const STREAM_STRUCTURE: u64 = 1;
const STREAM_EXTRA: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_SCHEDULE: u64 = 10;
const STREAM_WHALES: u64 = 11;
const STREAM_TRANSACTIONS: u64 = 12;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixtureError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(&'static str),
}

/// Planted sizes per bow-tie category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlantedBowTieSpec {
    pub scc: usize,
    pub in_: usize,
    pub out: usize,
    pub tubes: usize,
    pub tendrils_in: usize,
    pub tendrils_out: usize,
    pub other: usize,
    pub seed: u64,
    pub extra_edge_rate: f64,
}

impl PlantedBowTieSpec {
    /// Sizes in [`BowTieLabel::ALL`] order.
    pub fn from_sizes(sizes: [usize; 7], seed: u64, extra_edge_rate: f64) -> Self {
        PlantedBowTieSpec {
            scc: sizes[0],
            in_: sizes[1],
            out: sizes[2],
            tubes: sizes[3],
            tendrils_in: sizes[4],
            tendrils_out: sizes[5],
            other: sizes[6],
            seed,
            extra_edge_rate,
        }
    }

    pub fn sizes(&self) -> [usize; 7] {
        [
            self.scc,
            self.in_,
            self.out,
            self.tubes,
            self.tendrils_in,
            self.tendrils_out,
            self.other,
        ]
    }

    fn validate(&self) -> Result<(), FixtureError> {
        let infeasible = |why| Err(FixtureError::InfeasibleSpec(why));
        if self.scc == 0 {
            return infeasible("the core needs at least one node");
        }
        if self.tubes > 0 && (self.in_ == 0 || self.out == 0) {
            return infeasible("tubes need both IN and OUT nodes");
        }
        if self.tendrils_in > 0 && self.in_ == 0 {
            return infeasible("IN tendrils need IN nodes");
        }
        if self.tendrils_out > 0 && self.out == 0 {
            return infeasible("OUT tendrils need OUT nodes");
        }
        if !(0.0..=1.0).contains(&self.extra_edge_rate) {
            return infeasible("extra_edge_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedBowTie {
    pub edges: Vec<NormalizedEdge>,
    /// Expected partition, expressed in the node ids `build_graph(&edges)`
    /// assigns.
    pub expected: BowTiePartition,
}

/// Contiguous planted id ranges, one per label.
struct Blocks {
    start: [usize; 7],
    len: [usize; 7],
}

impl Blocks {
    fn new(sizes: [usize; 7]) -> Self {
        let mut start = [0; 7];
        let mut acc = 0;
        for i in 0..7 {
            start[i] = acc;
            acc += sizes[i];
        }
        Blocks { start, len: sizes }
    }

    fn pick(&self, label: BowTieLabel, rng: &mut ChaCha8Rng) -> usize {
        let i = label.index();
        self.start[i] + rng.random_range(0..self.len[i])
    }

    fn nth(&self, label: BowTieLabel, k: usize) -> usize {
        self.start[label.index()] + k
    }

    fn size(&self, label: BowTieLabel) -> usize {
        self.len[label.index()]
    }

    /// A random ordered pair (lower, higher) within one block, if it has two
    /// members. Edges along increasing planted ids keep the block acyclic.
    fn forward_pair(&self, label: BowTieLabel, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
        let n = self.size(label);
        if n < 2 {
            return None;
        }
        let j = rng.random_range(0..n - 1);
        let k = rng.random_range(j + 1..n);
        Some((self.nth(label, j), self.nth(label, k)))
    }
}

/// A bow-tie graph with a known partition.
///
/// Non-core structure is acyclic (apart from an OTHER self loop when that
/// block has a single node), so every non-core SCC is a singleton and the
/// planted core is the unique largest SCC or wins the tie-break.
pub fn gen_bowtie_graph(spec: &PlantedBowTieSpec) -> Result<PlantedBowTie, FixtureError> {
    use BowTieLabel::*;
    spec.validate()?;
    let blocks = Blocks::new(spec.sizes());
    let total: usize = spec.sizes().iter().sum();
    let mut rng = rng_for(spec.seed, STREAM_STRUCTURE);
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    // Core: a Hamiltonian cycle, or a self loop for a single node. Node 0 is
    // emitted first so it receives the smallest id.
    if spec.scc == 1 {
        pairs.push((0, 0));
    } else {
        for k in 0..spec.scc {
            pairs.push((blocks.nth(Scc, k), blocks.nth(Scc, (k + 1) % spec.scc)));
        }
    }
    let required = pairs.len();
    for k in 0..spec.in_ {
        pairs.push((blocks.nth(In, k), blocks.pick(Scc, &mut rng)));
    }
    for k in 0..spec.out {
        pairs.push((blocks.pick(Scc, &mut rng), blocks.nth(Out, k)));
    }
    for k in 0..spec.tubes {
        let t = blocks.nth(Tubes, k);
        pairs.push((blocks.pick(In, &mut rng), t));
        pairs.push((t, blocks.pick(Out, &mut rng)));
    }
    for k in 0..spec.tendrils_in {
        pairs.push((blocks.pick(In, &mut rng), blocks.nth(TendrilsIn, k)));
    }
    for k in 0..spec.tendrils_out {
        pairs.push((blocks.nth(TendrilsOut, k), blocks.pick(Out, &mut rng)));
    }
    match spec.other {
        0 => {}
        1 => pairs.push((blocks.nth(Other, 0), blocks.nth(Other, 0))),
        n => {
            for k in 1..n {
                // Attach each node to a random earlier one: a forest.
                let parent = rng.random_range(0..k);
                pairs.push((blocks.nth(Other, parent), blocks.nth(Other, k)));
            }
        }
    }

    // Extra edges of kinds that cannot change any planted label.
    let mut extra_rng = rng_for(spec.seed, STREAM_EXTRA);
    let rounds = (spec.extra_edge_rate * total as f64).round() as usize;
    let block_of = |label: BowTieLabel| blocks.size(label) > 0;
    for _ in 0..rounds {
        let r = &mut extra_rng;
        let choice = r.random_range(0..16u32);
        let pair = match choice {
            0 => Some((blocks.pick(Scc, r), blocks.pick(Scc, r))),
            1 if block_of(In) => Some((blocks.pick(In, r), blocks.pick(Scc, r))),
            2 => blocks.forward_pair(In, r),
            3 if block_of(Out) => Some((blocks.pick(Scc, r), blocks.pick(Out, r))),
            4 => blocks.forward_pair(Out, r),
            5 if block_of(In) && block_of(Out) => Some((blocks.pick(In, r), blocks.pick(Out, r))),
            6 if block_of(Tubes) => Some((blocks.pick(In, r), blocks.pick(Tubes, r))),
            7 if block_of(Tubes) => Some((blocks.pick(Tubes, r), blocks.pick(Out, r))),
            8 => blocks.forward_pair(Tubes, r),
            9 => blocks.forward_pair(TendrilsIn, r),
            10 if block_of(Tubes) && block_of(TendrilsIn) => {
                Some((blocks.pick(Tubes, r), blocks.pick(TendrilsIn, r)))
            }
            11 => blocks.forward_pair(TendrilsOut, r),
            12 if block_of(TendrilsOut) && block_of(Tubes) => {
                Some((blocks.pick(TendrilsOut, r), blocks.pick(Tubes, r)))
            }
            13 if spec.other >= 2 => blocks.forward_pair(Other, r),
            14 if block_of(TendrilsOut) && block_of(Other) => {
                Some((blocks.pick(TendrilsOut, r), blocks.pick(Other, r)))
            }
            // Repeat an existing transaction to exercise multiplicity.
            15 => Some(pairs[r.random_range(0..pairs.len())]),
            _ => None,
        };
        pairs.extend(pair);
    }

    let mut shuffle_rng = rng_for(spec.seed, STREAM_SHUFFLE);
    pairs[required..].shuffle(&mut shuffle_rng);

    let tag = (spec.seed as u32) ^ 0xb0e7_1e00;
    let edges: Vec<NormalizedEdge> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, d))| NormalizedEdge {
            tx_id: format!("0x{:016x}{:016x}", spec.seed, i),
            log_index: 0,
            src: Address::synthetic(tag, s as u64),
            dst: Address::synthetic(tag, d as u64),
            timestamp: 1_600_000_000 + i as i64,
            value: U256::one(),
            kind: TxKind::Normal,
            token_contract: None,
        })
        .collect();

    let mut planted_label = vec![Other; total];
    for label in BowTieLabel::ALL {
        for k in 0..blocks.size(label) {
            planted_label[blocks.nth(label, k)] = label;
        }
    }
    let graph = build_graph(&edges);
    let labels: Vec<BowTieLabel> = graph
        .addresses()
        .iter()
        .map(|a| {
            let planted = u64::from_be_bytes(a.as_bytes()[12..].try_into().unwrap()) as usize;
            planted_label[planted]
        })
        .collect();
    debug_assert_eq!(labels.len(), total);
    let core_id = graph
        .node_id(&Address::synthetic(tag, 0))
        .expect("core node is present");
    let sizes = LabelCounts::from_labels(&labels);
    Ok(PlantedBowTie {
        edges,
        expected: BowTiePartition {
            labels,
            core_id,
            sizes,
        },
    })
}

/// A burst of activity: `multiplier` times the base rate for `duration` days
/// starting at `day`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shock {
    pub day: u32,
    pub multiplier: f64,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityStreamSpec {
    pub n_addresses: usize,
    pub n_days: u32,
    /// Mean transactions per day before shocks.
    pub base_rate: f64,
    pub whale_count: usize,
    /// Planted whales receive between 2x and 3x this amount in a mint and
    /// never let their balance drop below it.
    #[serde(serialize_with = "crate::report::serialize_decimal")]
    pub whale_value_scale: U256,
    pub shocks: Vec<Shock>,
    pub seed: u64,
    /// Unix seconds of the first day's midnight.
    pub start: i64,
}

impl Default for ActivityStreamSpec {
    fn default() -> Self {
        ActivityStreamSpec {
            n_addresses: 500,
            n_days: 120,
            base_rate: 40.0,
            whale_count: 5,
            whale_value_scale: crate::whales::default_threshold(),
            shocks: Vec::new(),
            seed: 0,
            // 2021-01-01T00:00:00Z
            start: 1_609_459_200,
        }
    }
}

impl ActivityStreamSpec {
    /// About 660K addresses and 5M records over 1,477 days.
    pub fn sandbox_scale(seed: u64) -> Self {
        ActivityStreamSpec {
            n_addresses: 659_248,
            n_days: 1_477,
            base_rate: 3_350.0,
            whale_count: 2_464,
            seed,
            // 2019-10-10T00:00:00Z
            start: 1_570_665_600,
            ..ActivityStreamSpec::default()
        }
    }
}

/// Generated records plus what the generator knows about them.
#[derive(Debug, Clone)]
pub struct ActivityStream {
    pub records: Vec<TransactionRecord>,
    pub token_contract: Address,
    pub game_contract: Address,
    pub nft_contract: Address,
    pub whales: BTreeSet<Address>,
    pub records_by_kind: BTreeMap<TxKind, usize>,
    /// Records whose `to` is empty so the destination falls back to the
    /// contract address.
    pub contract_fallbacks: usize,
}

const STREAM_TAG: u32 = 0x5a4e_d000;

/// Addresses of the fixed contracts used by the activity generator.
pub fn stream_contracts() -> (Address, Address, Address) {
    (
        Address::synthetic(STREAM_TAG + 1, 0),
        Address::synthetic(STREAM_TAG + 2, 0),
        Address::synthetic(STREAM_TAG + 3, 0),
    )
}

fn user_address(i: usize) -> Address {
    Address::synthetic(STREAM_TAG, i as u64)
}

/// Hub-centred activity: users call and are paid by a game contract,
/// trade the fungible token among themselves, and move NFTs. The user pool
/// grows linearly over the span and each user's first appearance is on the
/// day it joins (or the next day with spare transactions); planted whales
/// are minted large balances early on.
pub fn gen_activity_stream(spec: &ActivityStreamSpec) -> ActivityStream {
    let (token, game, nft) = stream_contracts();
    let n_users = spec.n_addresses.max(2);
    let n_days = spec.n_days.max(1);
    let one_token = U256::exp10(18);

    let mut schedule_rng = rng_for(spec.seed, STREAM_SCHEDULE);
    let mut whale_rng = rng_for(spec.seed, STREAM_WHALES);
    let mut rng = rng_for(spec.seed, STREAM_TRANSACTIONS);

    let whale_count = spec.whale_count.min(n_users);
    // Whales are spread through the user index space.
    let whale_ids: Vec<usize> = (0..whale_count)
        .map(|k| 1 + ((k * (n_users - 1)) / whale_count.max(1)) % (n_users - 1))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut is_whale = vec![false; n_users];
    for &w in &whale_ids {
        is_whale[w] = true;
    }

    let day_counts: Vec<usize> = (0..n_days)
        .map(|d| {
            let mult: f64 = spec
                .shocks
                .iter()
                .filter(|s| d >= s.day && d < s.day + s.duration.max(1))
                .map(|s| s.multiplier)
                .product();
            let jitter = 0.9 + 0.2 * schedule_rng.random::<f64>();
            (spec.base_rate.max(0.0) * mult * jitter).round() as usize
        })
        .collect();

    let mut balance: Vec<U256> = vec![U256::zero(); n_users];
    let mut records = Vec::new();
    let mut counter: u64 = 0;
    let mut fallbacks = 0;
    let mut emit = |records: &mut Vec<TransactionRecord>,
                    src: Address,
                    to: Option<Address>,
                    contract: Option<Address>,
                    ts: i64,
                    value: U256,
                    kind: TxKind| {
        let token_contract = if kind.is_token_transfer() {
            contract
        } else {
            None
        };
        records.push(TransactionRecord {
            tx_id: format!("0x{:016x}{:048x}", spec.seed, counter),
            log_index: 0,
            sender: src,
            target: to,
            contract,
            timestamp: ts,
            value,
            kind,
            token_contract,
        });
        counter += 1;
    };

    // The game contract and the first user are strongly connected from the
    // first second on.
    let t0 = spec.start;
    emit(
        &mut records,
        user_address(0),
        Some(game),
        None,
        t0,
        U256::from(1u8),
        TxKind::Normal,
    );
    emit(
        &mut records,
        game,
        Some(user_address(0)),
        None,
        t0 + 1,
        U256::from(1u8),
        TxKind::Internal,
    );

    // Whale mints land in the first tenth of the span.
    let mint_window = (n_days as i64 / 10).max(1) * SECONDS_PER_DAY;
    let mut mints: Vec<(i64, usize, U256)> = whale_ids
        .iter()
        .map(|&w| {
            let ts = t0 + 2 + whale_rng.random_range(0..mint_window - 2);
            let extra = spec.whale_value_scale * U256::from(whale_rng.random_range(0..1000u32))
                / U256::from(1000u32);
            (ts, w, spec.whale_value_scale * U256::from(2u8) + extra)
        })
        .collect();
    mints.sort();
    let mut mint_iter = mints.into_iter().peekable();

    let pick_user = |rng: &mut ChaCha8Rng, pool: usize| -> usize {
        // Skewed toward low indices: a long tail of rarely active users.
        let u: f64 = rng.random();
        ((u * u * pool as f64) as usize).min(pool - 1)
    };

    // User 0 is active from the bootstrap.
    let mut onboarded = 1;
    for (day, &count) in day_counts.iter().enumerate() {
        let day_start = t0 + day as i64 * SECONDS_PER_DAY;
        let pool = ((n_users as u128 * (day as u128 + 1)) / n_days as u128).max(2) as usize;
        let mut seconds: Vec<i64> = (0..count)
            .map(|_| rng.random_range(2..SECONDS_PER_DAY))
            .collect();
        seconds.sort_unstable();
        for s in seconds {
            let ts = day_start + s;
            while let Some(&(mts, w, amount)) = mint_iter.peek() {
                if mts > ts {
                    break;
                }
                emit(
                    &mut records,
                    Address::ZERO,
                    Some(user_address(w)),
                    Some(token),
                    mts,
                    amount,
                    TxKind::Token,
                );
                balance[w] += amount;
                mint_iter.next();
            }
            let roll = rng.random_range(0..100u32);
            // Users entering the pool act first, so every user appears.
            let actor = if onboarded < pool {
                onboarded += 1;
                onboarded - 1
            } else if !whale_ids.is_empty() && rng.random_bool(0.2) {
                whale_ids[rng.random_range(0..whale_ids.len())]
            } else {
                pick_user(&mut rng, pool)
            };
            let ua = user_address(actor);
            match roll {
                0..=39 => {
                    let receiver = pick_user(&mut rng, pool);
                    let spendable = if is_whale[actor] {
                        balance[actor].saturating_sub(spec.whale_value_scale)
                    } else {
                        balance[actor]
                    };
                    if spendable.is_zero() {
                        // Nothing to send: buy tokens from the game instead.
                        let amount = U256::from(rng.random_range(1..=1_000_000_000_000_000_000u64));
                        emit(
                            &mut records,
                            game,
                            Some(ua),
                            Some(token),
                            ts,
                            amount,
                            TxKind::Token,
                        );
                        balance[actor] += amount;
                    } else {
                        let cap = spendable.min(one_token).low_u64();
                        let amount = U256::from(rng.random_range(1..=cap));
                        emit(
                            &mut records,
                            ua,
                            Some(user_address(receiver)),
                            Some(token),
                            ts,
                            amount,
                            TxKind::Token,
                        );
                        balance[actor] -= amount;
                        balance[receiver] += amount;
                    }
                }
                40..=69 => {
                    let v = U256::from(rng.random_range(0..100_000_000_000_000_000u64));
                    emit(&mut records, ua, Some(game), None, ts, v, TxKind::Normal);
                }
                70..=84 => {
                    let v = U256::from(rng.random_range(0..10_000_000_000_000_000u64));
                    emit(&mut records, game, Some(ua), None, ts, v, TxKind::Internal);
                }
                85..=89 => {
                    emit(
                        &mut records,
                        ua,
                        Some(token),
                        None,
                        ts,
                        U256::zero(),
                        TxKind::Normal,
                    );
                }
                90..=94 => {
                    let receiver = user_address(pick_user(&mut rng, pool));
                    emit(
                        &mut records,
                        ua,
                        Some(receiver),
                        Some(nft),
                        ts,
                        U256::one(),
                        TxKind::Nft,
                    );
                }
                _ => {
                    emit(
                        &mut records,
                        ua,
                        None,
                        Some(game),
                        ts,
                        U256::zero(),
                        TxKind::Normal,
                    );
                    fallbacks += 1;
                }
            }
        }
    }
    for (mts, w, amount) in mint_iter {
        emit(
            &mut records,
            Address::ZERO,
            Some(user_address(w)),
            Some(token),
            mts,
            amount,
            TxKind::Token,
        );
    }

    let mut records_by_kind: BTreeMap<TxKind, usize> =
        TxKind::ALL.iter().map(|k| (*k, 0)).collect();
    for r in &records {
        *records_by_kind.get_mut(&r.kind).unwrap() += 1;
    }
    ActivityStream {
        records,
        token_contract: token,
        game_contract: game,
        nft_contract: nft,
        whales: whale_ids.iter().map(|&w| user_address(w)).collect(),
        records_by_kind,
        contract_fallbacks: fallbacks,
    }
}
