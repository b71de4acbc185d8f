//! Young diagrams, symmetric-group characters, Schur-Weyl measures and the dense
//! permutation/projector operators used by the small-scale oracles.

pub mod characters;
pub mod operators;
pub mod schur;
pub mod young;

pub use characters::{character, cycle_type, permutations, transposition};
pub use operators::{local_projector, permutation_operator, projector, transposition_average, DENSE_LIMIT};
pub use schur::{schur_polynomial, schur_weyl_pmf, schur_weyl_table, SchurWeylMeasure, MAX_COPIES};
pub use young::{partitions, rsk_sample, syt_count, tn_statistic, weyl_dim, YoungDiagram};
