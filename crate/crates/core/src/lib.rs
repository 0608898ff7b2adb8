//! Maintenance scheduling for power grids under predicted component
//! degradation, with a chance constraint on simultaneous failures.

pub mod caseio;
pub mod chance;
pub mod decomp;
pub mod degrade;
pub mod mastercuts;
pub mod pboracle;
pub mod preflow;
pub mod saa;
pub mod solver;
pub mod synth;
pub mod ucmodel;
