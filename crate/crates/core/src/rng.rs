//! Counter-based random streams.
//!
//! Every agent query owns a ChaCha stream keyed by
//! `(seed, agent, round, query)`, so a sample depends only on its key and
//! never on which worker thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Query slot within a round: the first query is at the current iterate, the
/// second at the midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Query {
    Iterate = 0,
    Midpoint = 1,
}

/// Domain tags keep streams for different purposes disjoint.
const DOMAIN_AGENT: u64 = 0x6167_656e_7400_0001;
const DOMAIN_PARTITION: u64 = 0x7061_7274_0000_0002;
const DOMAIN_PROBE: u64 = 0x7072_6f62_6500_0003;

fn keyed(domain: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&domain.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..32].copy_from_slice(&c.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Stream for one agent answering one query of one round.
pub fn agent_stream(seed: u64, agent: usize, round: usize, query: Query) -> ChaCha8Rng {
    let slot = ((round as u64) << 1) | query as u64;
    keyed(DOMAIN_AGENT, seed, agent as u64, slot)
}

/// Stream used to reshuffle the chunk partition at the start of a round.
pub fn partition_stream(seed: u64, round: usize) -> ChaCha8Rng {
    keyed(DOMAIN_PARTITION, seed, round as u64, 0)
}

/// Stream for test/selftest probe points.
pub fn probe_stream(seed: u64, index: u64) -> ChaCha8Rng {
    keyed(DOMAIN_PROBE, seed, index, 0)
}
