//! Grant arbitration. One [`Arbiter`] instance per contended resource:
//! request-path arbiters per target (or one global for a shared bus) and
//! response-path arbiters per initiator, all sharing the same policy
//! machinery with independent state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::VecDeque;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArbError {
    #[error("empty requester set")]
    EmptyRequesterSet,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("priority reprogramming requires the programmable-priority policy")]
    WrongPolicy,
    #[error("priority vector length {got} does not match requester count {want}")]
    LengthMismatch { want: usize, got: usize },
}

/// The six arbitration policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArbPolicy {
    FixedPriority,
    ProgrammablePriority,
    RoundRobin,
    Lru,
    LatencyBased,
    BandwidthLimited,
}

impl ArbPolicy {
    pub const ALL: [ArbPolicy; 6] = [
        ArbPolicy::FixedPriority,
        ArbPolicy::ProgrammablePriority,
        ArbPolicy::RoundRobin,
        ArbPolicy::Lru,
        ArbPolicy::LatencyBased,
        ArbPolicy::BandwidthLimited,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ArbPolicy::FixedPriority => "FIXED_PRIORITY",
            ArbPolicy::ProgrammablePriority => "PROGRAMMABLE_PRIORITY",
            ArbPolicy::RoundRobin => "ROUND_ROBIN",
            ArbPolicy::Lru => "LRU",
            ArbPolicy::LatencyBased => "LATENCY_BASED",
            ArbPolicy::BandwidthLimited => "BANDWIDTH_LIMITED",
        }
    }
}

/// Per-requester parameters a policy may consult.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArbiterParams {
    pub priority: Vec<u64>,
    pub latency_budget: Vec<u64>,
    /// (grants, window_cycles) per requester; `None` disables quota masking,
    /// which makes the bandwidth policy degenerate to fixed priority.
    pub bw_quota: Option<Vec<(u32, u32)>>,
}

impl ArbiterParams {
    /// All-equal parameters with no quota, used on the response path.
    pub fn neutral(n: usize) -> Self {
        Self { priority: vec![0; n], latency_budget: vec![0; n], bw_quota: None }
    }
}

/// Arbitration state for one resource. Mutates only on grant events, so a
/// decision is a pure function of (state after the last grant, the requester
/// set, the callers' waited counters).
#[derive(Debug, Clone)]
pub struct Arbiter {
    policy: ArbPolicy,
    n: usize,
    params: ArbiterParams,
    rr_pointer: usize,
    lru_stamp: Vec<u64>,
    grant_counter: u64,
    last_grant: Option<usize>,
    /// Transfer cycles of past grants per requester, pruned to the quota
    /// window. Only maintained under the bandwidth policy.
    grant_ring: Vec<VecDeque<u64>>,
}

impl Arbiter {
    pub fn new(policy: ArbPolicy, n: usize, params: ArbiterParams) -> Self {
        debug_assert!(n >= 1);
        debug_assert_eq!(params.priority.len(), n);
        debug_assert_eq!(params.latency_budget.len(), n);
        Self {
            policy,
            n,
            params,
            // Reset state: all stamps equal, round-robin pointer parked on
            // the last index so index 0 wins the first contested round.
            rr_pointer: n - 1,
            lru_stamp: vec![0; n],
            grant_counter: 1,
            last_grant: None,
            grant_ring: vec![VecDeque::new(); n],
        }
    }

    pub fn policy(&self) -> ArbPolicy {
        self.policy
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn last_grant(&self) -> Option<usize> {
        self.last_grant
    }

    /// Installs a new priority vector; callers apply it at a cycle boundary.
    pub fn program_priority(&mut self, vector: &[u64]) -> Result<(), ProgramError> {
        if self.policy != ArbPolicy::ProgrammablePriority {
            return Err(ProgramError::WrongPolicy);
        }
        if vector.len() != self.n {
            return Err(ProgramError::LengthMismatch { want: self.n, got: vector.len() });
        }
        self.params.priority = vector.to_vec();
        Ok(())
    }

    /// Decides the grant for transfer cycle `decision_cycle + 1`.
    ///
    /// `requesters` is a bit set over the requester domain; `waited[i]` is
    /// the number of cycles requester i's head packet has been requesting.
    /// Returns `Ok(None)` when the bandwidth policy masks every requester;
    /// no state changes in that case.
    pub fn arbitrate(
        &mut self,
        decision_cycle: u64,
        requesters: u64,
        waited: &[u64],
    ) -> Result<Option<usize>, ArbError> {
        if requesters == 0 {
            return Err(ArbError::EmptyRequesterSet);
        }
        debug_assert!(self.n == 64 || requesters < (1u64 << self.n));
        let is_req = |i: usize| requesters & (1u64 << i) != 0;
        let transfer_cycle = decision_cycle + 1;

        let winner = match self.policy {
            ArbPolicy::FixedPriority => (0..self.n).find(|&i| is_req(i)),
            ArbPolicy::ProgrammablePriority => (0..self.n)
                .filter(|&i| is_req(i))
                .max_by(|&a, &b| {
                    self.params.priority[a]
                        .cmp(&self.params.priority[b])
                        .then(b.cmp(&a))
                }),
            ArbPolicy::RoundRobin => (1..=self.n)
                .map(|step| (self.rr_pointer + step) % self.n)
                .find(|&i| is_req(i)),
            ArbPolicy::Lru => (0..self.n)
                .filter(|&i| is_req(i))
                .min_by_key(|&i| (self.lru_stamp[i], i)),
            ArbPolicy::LatencyBased => (0..self.n)
                .filter(|&i| is_req(i))
                .max_by(|&a, &b| {
                    let score = |i: usize| {
                        waited[i] as i128 - self.params.latency_budget[i] as i128
                    };
                    score(a).cmp(&score(b)).then(b.cmp(&a))
                }),
            ArbPolicy::BandwidthLimited => {
                let masked = |i: usize| match &self.params.bw_quota {
                    Some(quotas) => {
                        let (grants, window) = quotas[i];
                        self.window_grants(i, transfer_cycle, window) >= u64::from(grants)
                    }
                    None => false,
                };
                let pick = (0..self.n).find(|&i| is_req(i) && !masked(i));
                if pick.is_none() {
                    // Every requester is at quota: idle the resource rather
                    // than exceed the limit.
                    return Ok(None);
                }
                pick
            }
        };
        let winner = winner.expect("non-empty requester set always yields a candidate");
        self.record_grant(winner, transfer_cycle);
        Ok(Some(winner))
    }

    fn window_grants(&self, i: usize, transfer_cycle: u64, window: u32) -> u64 {
        let lo = transfer_cycle.saturating_sub(u64::from(window));
        self.grant_ring[i].iter().filter(|&&t| t > lo).count() as u64
    }

    fn record_grant(&mut self, winner: usize, transfer_cycle: u64) {
        self.lru_stamp[winner] = self.grant_counter;
        self.grant_counter += 1;
        self.rr_pointer = winner;
        self.last_grant = Some(winner);
        if let Some(quotas) = &self.params.bw_quota {
            let ring = &mut self.grant_ring[winner];
            ring.push_back(transfer_cycle);
            let window = u64::from(quotas[winner].1);
            while let Some(&front) = ring.front() {
                if front + window < transfer_cycle {
                    ring.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    /// Earliest decision cycle at or after `from_decision` at which some
    /// requester in `requesters` would pass the quota mask. `None` when no
    /// quota applies (a grant is possible immediately) or no requester ever
    /// unmasks without new grants.
    pub fn bw_next_decision(&self, from_decision: u64, requesters: u64) -> Option<u64> {
        let quotas = self.params.bw_quota.as_ref()?;
        let mut best: Option<u64> = None;
        for i in 0..self.n {
            if requesters & (1u64 << i) == 0 {
                continue;
            }
            let (grants, window) = quotas[i];
            let transfer = from_decision + 1;
            if self.window_grants(i, transfer, window) < u64::from(grants) {
                return Some(from_decision);
            }
            // The quota-th most recent grant leaving the window unmasks i.
            let ring = &self.grant_ring[i];
            if grants == 0 {
                continue;
            }
            let t_q = ring[ring.len() - grants as usize];
            let unmask_transfer = t_q + u64::from(window);
            let decision = unmask_transfer - 1;
            best = Some(best.map_or(decision, |b: u64| b.min(decision)));
        }
        best
    }
}
