//! Truth-table entailment for purely propositional sequents. Used to test
//! the prover; shares no code with it.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Formula, Node, OpaqueAtom};
use crate::prover::Sequent;

pub const MAX_ATOMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("sequent mentions a concept or code predicate; only opaque atoms are allowed")]
    NotPropositional,
    #[error("sequent has {0} distinct atoms, more than {MAX_ATOMS}")]
    TooManyAtoms(usize),
}

fn collect<'a>(f: &'a Formula, out: &mut BTreeMap<&'a OpaqueAtom, usize>) -> Result<(), OracleError> {
    match &f.node {
        Node::Atom(_) | Node::Concept(_) => return Err(OracleError::NotPropositional),
        Node::Opaque(o) => {
            let next = out.len();
            out.entry(o).or_insert(next);
        }
        _ => {}
    }
    for c in f.children() {
        collect(c, out)?;
    }
    Ok(())
}

fn holds(f: &Formula, index: &BTreeMap<&OpaqueAtom, usize>, assignment: u32) -> bool {
    match &f.node {
        Node::Top => true,
        Node::Bottom => false,
        Node::Not(a) => !holds(a, index, assignment),
        Node::And(fs) => fs.iter().all(|g| holds(g, index, assignment)),
        Node::Or(fs) => fs.iter().any(|g| holds(g, index, assignment)),
        Node::Impl(a, b) => !holds(a, index, assignment) || holds(b, index, assignment),
        Node::Opaque(o) => assignment >> index[o] & 1 == 1,
        Node::Atom(_) | Node::Concept(_) => unreachable!("rejected by collect"),
    }
}

/// True iff every two-valued assignment that makes all of the left side
/// true makes some formula on the right side true.
pub fn entails_bruteforce(s: &Sequent) -> Result<bool, OracleError> {
    let mut index = BTreeMap::new();
    for f in s.left.iter().chain(&s.right) {
        collect(f, &mut index)?;
    }
    if index.len() > MAX_ATOMS {
        return Err(OracleError::TooManyAtoms(index.len()));
    }
    Ok((0..1u32 << index.len())
        .all(|v| !s.left.iter().all(|f| holds(f, &index, v)) || s.right.iter().any(|f| holds(f, &index, v))))
}
