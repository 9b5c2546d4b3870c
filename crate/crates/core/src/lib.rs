//! Formalised business-grant conditions: an S-expression knowledge base,
//! three-valued evaluation against company data, and sequent-calculus
//! reasoning about the conditions themselves.

pub mod analysis;
pub mod k3;
pub mod model;
pub mod oracle;
pub mod pretty;
pub mod prover;
pub mod render;
pub mod sexpr;

pub use analysis::{
    consistency_report, evaluate_all, implication_matrix, load_kb, DateWindow, Filter, GrantResult,
    KnowledgeBase, LoadError, Verdict,
};
pub use k3::{eval_formula, eval_trace, CompanyProfile, EvalTrace, TruthValue3};
pub use model::{ConceptRegistry, DefinedConcept, Formula, Grant, PredicateKind, QualifiedName};
pub use oracle::entails_bruteforce;
pub use prover::{prove, validate_derivation, Derivation, Prover, Sequent};
