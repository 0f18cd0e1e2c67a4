//! Baseline atomic multicast protocols the overlay protocol is
//! measured against: timestamp voting among destinations and
//! fixed-tree relay ordering.

mod hier;
mod skeen;

pub use hier::Hier;
pub use skeen::Skeen;
