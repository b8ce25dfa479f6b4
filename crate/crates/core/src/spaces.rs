//! Finite index spaces and mixed tuple encoding.
//!
//! Joint objects (joint actions, joint signals, joint types, signal batches)
//! are flat `usize` indices encoding fixed-length tuples over a common base,
//! most-significant digit first: component 0 (agent 0, or batch slot 0) has
//! the largest stride. Iterating a flat index in increasing order therefore
//! visits tuples in lexicographic order, which every summation and witness
//! scan in this crate relies on for determinism.

use crate::error::{Error, Result};

/// Default ceiling on exact-enumeration table sizes, in cells.
pub const DEFAULT_CELL_CAP: u64 = 1_000_000;

/// `base^exp` without overflow, as a cell count.
pub fn pow_cells(base: usize, exp: usize) -> u128 {
    (base as u128).checked_pow(exp as u32).unwrap_or(u128::MAX)
}

/// Refuse enumerations larger than `cap` cells.
pub fn check_cap(required: u128, cap: u64) -> Result<()> {
    if required > cap as u128 {
        return Err(Error::CapExceeded { required, cap });
    }
    Ok(())
}

/// Extract component `pos` of the length-`len` tuple encoded by `idx`.
#[inline]
pub fn component(idx: usize, pos: usize, base: usize, len: usize) -> usize {
    debug_assert!(pos < len);
    (idx / base.pow((len - 1 - pos) as u32)) % base
}

/// Encode a tuple, most-significant component first.
#[inline]
pub fn encode(digits: &[usize], base: usize) -> usize {
    digits.iter().fold(0, |acc, &d| {
        debug_assert!(d < base);
        acc * base + d
    })
}

/// Decode `idx` into `out` (length gives the tuple length).
#[inline]
pub fn decode(idx: usize, base: usize, out: &mut [usize]) {
    let mut rest = idx;
    for slot in out.iter_mut().rev() {
        *slot = rest % base;
        rest /= base;
    }
    debug_assert_eq!(rest, 0);
}

/// Replace component `pos` of an encoded tuple.
#[inline]
pub fn replace(idx: usize, pos: usize, base: usize, len: usize, value: usize) -> usize {
    debug_assert!(value < base);
    let stride = base.pow((len - 1 - pos) as u32);
    let old = (idx / stride) % base;
    idx + (value as isize - old as isize) as usize * stride
}

/// Insert `own` at position `agent` into the length-`len-1` opponents tuple
/// `others`, producing a full length-`len` joint index.
#[inline]
pub fn insert_component(others: usize, own: usize, agent: usize, base: usize, len: usize) -> usize {
    debug_assert!(own < base && agent < len);
    let low_count = len - 1 - agent;
    let low_stride = base.pow(low_count as u32);
    let high = others / low_stride;
    let low = others % low_stride;
    (high * base + own) * low_stride + low
}

/// Drop position `agent` from a length-`len` joint index.
#[inline]
pub fn remove_component(joint: usize, agent: usize, base: usize, len: usize) -> usize {
    let low_count = len - 1 - agent;
    let low_stride = base.pow(low_count as u32);
    let low = joint % low_stride;
    let high = joint / (low_stride * base);
    high * low_stride + low
}

/// Cardinalities of one augmented game instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spaces {
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_signals: usize,
    pub n_types: usize,
    /// Batch size m: slot 0 carries the principal's signal, slots 1..m are
    /// drawn from the exogenous source.
    pub batch_size: usize,
}

impl Spaces {
    pub fn joint_actions(&self) -> usize {
        self.n_actions.pow(self.n_agents as u32)
    }

    pub fn joint_signals(&self) -> usize {
        self.n_signals.pow(self.n_agents as u32)
    }

    pub fn joint_types(&self) -> usize {
        self.n_types.pow(self.n_agents as u32)
    }

    /// Number of opponent signal tuples for one agent.
    pub fn opponent_signals(&self) -> usize {
        self.n_signals.pow(self.n_agents as u32 - 1)
    }

    /// Number of exogenous signal tuples per agent per period (m-1 slots).
    pub fn exo_tuples(&self) -> usize {
        self.n_signals.pow(self.batch_size as u32 - 1)
    }

    /// Number of distinct per-agent batches.
    pub fn batches(&self) -> usize {
        self.n_signals.pow(self.batch_size as u32)
    }

    #[inline]
    pub fn action_of(&self, joint: usize, agent: usize) -> usize {
        component(joint, agent, self.n_actions, self.n_agents)
    }

    #[inline]
    pub fn signal_of(&self, joint: usize, agent: usize) -> usize {
        component(joint, agent, self.n_signals, self.n_agents)
    }

    #[inline]
    pub fn type_of(&self, joint: usize, agent: usize) -> usize {
        component(joint, agent, self.n_types, self.n_agents)
    }

    /// Signal carried by `slot` of an encoded batch.
    #[inline]
    pub fn batch_slot(&self, batch: usize, slot: usize) -> usize {
        component(batch, slot, self.n_signals, self.batch_size)
    }

    /// Encode a batch from the principal's signal and an exogenous tuple.
    /// Slot 0 is the principal's, so it is the most significant digit.
    #[inline]
    pub fn batch_of(&self, principal_signal: usize, exo_tuple: usize) -> usize {
        principal_signal * self.exo_tuples() + exo_tuple
    }

    /// Transition table row for (state, joint action).
    #[inline]
    pub fn transition_row(&self, g: usize, joint_action: usize) -> usize {
        g * self.joint_actions() + joint_action
    }

    /// Size of the largest exact enumeration any operation performs on this
    /// instance, in table cells; compared against the cell cap.
    pub fn enumeration_cells(&self) -> u128 {
        let n = self.n_agents;
        let ja = pow_cells(self.n_actions, n);
        let js = pow_cells(self.n_signals, n);
        let jt = pow_cells(self.n_types, n);
        let g = self.n_states as u128;
        let rewards = ja
            .saturating_mul(g)
            .saturating_mul(self.n_signals as u128)
            .saturating_mul(self.n_types as u128);
        let transition = g.saturating_mul(ja).saturating_mul(g);
        let signaling = jt.saturating_mul(g).saturating_mul(js);
        let joint_batches = pow_cells(self.n_signals, self.batch_size * n);
        let kernel = jt
            .saturating_mul(g)
            .saturating_mul(js)
            .saturating_mul(js)
            .saturating_mul(ja)
            .saturating_mul(g);
        let batch_table = jt.saturating_mul(g).saturating_mul(joint_batches);
        [rewards, transition, signaling, kernel, batch_table]
            .into_iter()
            .max()
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_roundtrip() {
        let mut buf = [0usize; 3];
        for idx in 0..27 {
            decode(idx, 3, &mut buf);
            assert_eq!(encode(&buf, 3), idx);
            for pos in 0..3 {
                assert_eq!(component(idx, pos, 3, 3), buf[pos]);
            }
        }
    }

    #[test]
    fn lexicographic_order_matches_index_order() {
        let mut prev = vec![0usize; 4];
        let mut cur = vec![0usize; 4];
        decode(0, 2, &mut prev);
        for idx in 1..16 {
            decode(idx, 2, &mut cur);
            assert!(cur > prev, "tuple order broken at {idx}");
            prev.copy_from_slice(&cur);
        }
    }

    #[test]
    fn insert_remove_inverse() {
        let base = 3usize;
        let len = 4usize;
        for joint in 0..base.pow(len as u32) {
            for agent in 0..len {
                let others = remove_component(joint, agent, base, len);
                let own = component(joint, agent, base, len);
                assert_eq!(insert_component(others, own, agent, base, len), joint);
            }
        }
    }

    #[test]
    fn replace_changes_single_component() {
        let idx = encode(&[2, 0, 1], 3);
        let out = replace(idx, 1, 3, 3, 2);
        assert_eq!(component(out, 0, 3, 3), 2);
        assert_eq!(component(out, 1, 3, 3), 2);
        assert_eq!(component(out, 2, 3, 3), 1);
    }

    #[test]
    fn cap_refusal_reports_size() {
        let err = check_cap(2_000_000, 1_000_000).unwrap_err();
        match err {
            Error::CapExceeded { required, cap } => {
                assert_eq!(required, 2_000_000);
                assert_eq!(cap, 1_000_000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn enumeration_cells_flags_oversized_dims() {
        let small = Spaces {
            n_agents: 2,
            n_states: 3,
            n_actions: 2,
            n_signals: 2,
            n_types: 1,
            batch_size: 2,
        };
        assert!(small.enumeration_cells() <= DEFAULT_CELL_CAP as u128);
        let big = Spaces {
            n_agents: 4,
            n_states: 10,
            n_actions: 10,
            n_signals: 10,
            n_types: 4,
            batch_size: 2,
        };
        assert!(big.enumeration_cells() > DEFAULT_CELL_CAP as u128);
    }
}
