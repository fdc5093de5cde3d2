//! Exact finite-probability engine.

pub mod info;
pub mod sum;
pub mod table;
pub mod variable;

pub use info::{
    conditional_entropy, entropy, expected_conditional_kl, kl, mutual_information,
    variational_mi_lower_bound, KlValue,
};
pub use table::{
    ConditionalTable, Scope, TabularDistribution, UnnormalizedTable, VarMask, MAX_OUTCOMES,
};
pub use variable::{Assignment, Role, VariableSpec};
