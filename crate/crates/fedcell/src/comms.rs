//! Byte-exact payload accounting.
//!
//! Wire format convention: 32-bit values regardless of in-memory precision.
//! A dense payload carries every weight and bias; a sparse payload carries
//! the kept weight values, a 1-bit-per-weight mask bitmap, and dense biases.
//! Note that sparse encoding only pays off once enough weights are pruned
//! to amortize the bitmap — at zero sparsity it is strictly larger than
//! dense.

use crate::error::{Result, SimError};
use crate::protocols::Protocol;

pub const BYTES_PER_VALUE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadDescriptor {
    pub kind: PayloadKind,
    pub weight_count: usize,
    pub kept_count: usize,
    pub bias_count: usize,
}

impl PayloadDescriptor {
    pub fn dense(weight_count: usize, bias_count: usize) -> Self {
        Self { kind: PayloadKind::Dense, weight_count, kept_count: weight_count, bias_count }
    }

    pub fn sparse(weight_count: usize, kept_count: usize, bias_count: usize) -> Self {
        debug_assert!(kept_count <= weight_count);
        Self { kind: PayloadKind::Sparse, weight_count, kept_count, bias_count }
    }

    /// dense: 4 * (d + biases); sparse: 4 * kept + ceil(d / 8) + 4 * biases.
    pub fn bytes(&self) -> u64 {
        match self.kind {
            PayloadKind::Dense => {
                BYTES_PER_VALUE * (self.weight_count as u64 + self.bias_count as u64)
            }
            PayloadKind::Sparse => {
                BYTES_PER_VALUE * self.kept_count as u64
                    + (self.weight_count as u64).div_ceil(8)
                    + BYTES_PER_VALUE * self.bias_count as u64
            }
        }
    }
}

pub fn payload_bytes(desc: &PayloadDescriptor) -> u64 {
    desc.bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerRow {
    pub round: usize,
    pub protocol: Protocol,
    pub ul_bytes: u64,
    pub dl_bytes: u64,
    pub cum_ul_bytes: u64,
    pub cum_dl_bytes: u64,
}

/// Append-only per-round communication totals with exact prefix sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommLedger {
    protocol: Protocol,
    rows: Vec<LedgerRow>,
}

impl CommLedger {
    pub fn new(protocol: Protocol) -> Self {
        Self { protocol, rows: Vec::new() }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    fn check_round(&self, round: usize) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if round <= last.round {
                return Err(SimError::Usage(format!(
                    "ledger rounds must be strictly increasing, got {round} after {}",
                    last.round
                )));
            }
        }
        Ok(())
    }

    fn push(&mut self, round: usize, ul_bytes: u64, dl_bytes: u64) {
        let (cum_ul, cum_dl) = self
            .rows
            .last()
            .map(|r| (r.cum_ul_bytes, r.cum_dl_bytes))
            .unwrap_or((0, 0));
        self.rows.push(LedgerRow {
            round,
            protocol: self.protocol,
            ul_bytes,
            dl_bytes,
            cum_ul_bytes: cum_ul + ul_bytes,
            cum_dl_bytes: cum_dl + dl_bytes,
        });
    }

    /// Records a round of traffic. At least one uplink payload is required;
    /// protocols that do not communicate use [`CommLedger::record_idle_round`].
    pub fn record_round(
        &mut self,
        round: usize,
        uplinks: &[PayloadDescriptor],
        downlinks: &[PayloadDescriptor],
    ) -> Result<()> {
        self.check_round(round)?;
        if uplinks.is_empty() {
            return Err(SimError::Usage("round recorded with empty participant list".into()));
        }
        let ul = uplinks.iter().map(PayloadDescriptor::bytes).sum();
        let dl = downlinks.iter().map(PayloadDescriptor::bytes).sum();
        self.push(round, ul, dl);
        Ok(())
    }

    /// Records a round with zero traffic (Standalone).
    pub fn record_idle_round(&mut self, round: usize) -> Result<()> {
        self.check_round(round)?;
        self.push(round, 0, 0);
        Ok(())
    }

    pub fn total_ul_bytes(&self) -> u64 {
        self.rows.last().map(|r| r.cum_ul_bytes).unwrap_or(0)
    }

    pub fn total_dl_bytes(&self) -> u64 {
        self.rows.last().map(|r| r.cum_dl_bytes).unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_ul_bytes() + self.total_dl_bytes()
    }
}
