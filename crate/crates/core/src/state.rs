//! Chain state representations.
//!
//! Rejected steps copy the current state verbatim, so identity of states along
//! a path is decided on the bit representation rather than on numeric equality.

use std::fmt::Debug;

pub trait State: Clone + Debug + Send + Sync + 'static {
    /// Bitwise identity of two states.
    fn same_as(&self, other: &Self) -> bool;

    /// Flat real-valued view, used by named test functions and reports.
    fn coords(&self) -> Vec<f64>;
}

impl State for f64 {
    fn same_as(&self, other: &Self) -> bool {
        self.to_bits() == other.to_bits()
    }

    fn coords(&self) -> Vec<f64> {
        vec![*self]
    }
}

impl State for u64 {
    fn same_as(&self, other: &Self) -> bool {
        self == other
    }

    fn coords(&self) -> Vec<f64> {
        vec![*self as f64]
    }
}

impl<const D: usize> State for [f64; D] {
    fn same_as(&self, other: &Self) -> bool {
        self.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn coords(&self) -> Vec<f64> {
        self.to_vec()
    }
}

impl State for Vec<f64> {
    fn same_as(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn coords(&self) -> Vec<f64> {
        self.clone()
    }
}
