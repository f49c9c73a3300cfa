use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Where a multiply-accumulate was spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacTerm {
    /// Feature → embedding projection.
    Embedding,
    /// Q, K, V and output projections (standard and spiking attention).
    AttentionProjection,
    /// Score and value products; spike coincidences for spiking attention.
    AttentionScores,
    /// LIF membrane accumulations in the SNN stage, one per neuron per step.
    Snn,
    FeedForward,
    Head,
}

impl MacTerm {
    pub const ALL: [MacTerm; 6] = [
        MacTerm::Embedding,
        MacTerm::AttentionProjection,
        MacTerm::AttentionScores,
        MacTerm::Snn,
        MacTerm::FeedForward,
        MacTerm::Head,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Atomic per-term counters; shared by reference across parallel forwards.
#[derive(Debug, Default)]
pub struct MacCounter {
    terms: [AtomicU64; 6],
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, term: MacTerm, macs: u64) {
        self.terms[term.index()].fetch_add(macs, Ordering::Relaxed);
    }

    pub fn get(&self, term: MacTerm) -> u64 {
        self.terms[term.index()].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for t in &self.terms {
            t.store(0, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> MacCounts {
        MacCounts {
            embedding: self.get(MacTerm::Embedding),
            attention_projection: self.get(MacTerm::AttentionProjection),
            attention_scores: self.get(MacTerm::AttentionScores),
            snn: self.get(MacTerm::Snn),
            feed_forward: self.get(MacTerm::FeedForward),
            head: self.get(MacTerm::Head),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacCounts {
    pub embedding: u64,
    pub attention_projection: u64,
    pub attention_scores: u64,
    pub snn: u64,
    pub feed_forward: u64,
    pub head: u64,
}

impl MacCounts {
    /// Terms that have an analytic counterpart: embedding, attention, SNN.
    pub fn modeled(&self) -> u64 {
        self.embedding + self.attention_projection + self.attention_scores + self.snn
    }

    pub fn total(&self) -> u64 {
        self.modeled() + self.feed_forward + self.head
    }
}
