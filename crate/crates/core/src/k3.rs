//! Three-valued (strong Kleene) evaluation of grant conditions against
//! company data.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Atom, Code, ConceptRegistry, Formula, ModelError, Node, PredicateKind};
use crate::pretty;

/// Truth values ordered `False < Unknown < True`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthValue3 {
    False,
    Unknown,
    True,
}

impl TruthValue3 {
    pub const ALL: [TruthValue3; 3] = [TruthValue3::False, TruthValue3::Unknown, TruthValue3::True];

    pub fn is_definite(self) -> bool {
        self != TruthValue3::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TruthValue3::False => "false",
            TruthValue3::Unknown => "unknown",
            TruthValue3::True => "true",
        }
    }
}

impl From<bool> for TruthValue3 {
    fn from(b: bool) -> Self {
        if b {
            TruthValue3::True
        } else {
            TruthValue3::False
        }
    }
}

impl fmt::Display for TruthValue3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthValue3::False => "⊥",
            TruthValue3::Unknown => "u",
            TruthValue3::True => "⊤",
        })
    }
}

pub fn k3_not(a: TruthValue3) -> TruthValue3 {
    match a {
        TruthValue3::False => TruthValue3::True,
        TruthValue3::Unknown => TruthValue3::Unknown,
        TruthValue3::True => TruthValue3::False,
    }
}

pub fn k3_and(a: TruthValue3, b: TruthValue3) -> TruthValue3 {
    a.min(b)
}

pub fn k3_or(a: TruthValue3, b: TruthValue3) -> TruthValue3 {
    a.max(b)
}

pub fn k3_impl(a: TruthValue3, b: TruthValue3) -> TruthValue3 {
    k3_or(k3_not(a), b)
}

/// Company facts as far as they could be retrieved. `None` means the value is
/// unknown (register unreachable, classification not yet assigned); a known
/// empty set means the company has no such entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanyProfile {
    #[serde(default)]
    pub seat: Option<Code>,
    #[serde(default)]
    pub sites: Option<BTreeSet<Code>>,
    #[serde(default)]
    pub legal_form: Option<Code>,
    #[serde(default)]
    pub oenace: Option<BTreeSet<Code>>,
}

impl CompanyProfile {
    pub fn unknown() -> CompanyProfile {
        CompanyProfile::default()
    }

    pub fn is_complete(&self) -> bool {
        self.seat.is_some() && self.sites.is_some() && self.legal_form.is_some() && self.oenace.is_some()
    }

    /// True if `self ⊑ other`: every known field of `self` is identical in `other`.
    pub fn is_refined_by(&self, other: &CompanyProfile) -> bool {
        fn keeps<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            a.is_none() || a == b
        }
        keeps(&self.seat, &other.seat)
            && keeps(&self.sites, &other.sites)
            && keeps(&self.legal_form, &other.legal_form)
            && keeps(&self.oenace, &other.oenace)
    }
}

fn any_prefixed<'a>(codes: impl IntoIterator<Item = &'a Code>, list: &[Code]) -> bool {
    codes.into_iter().any(|c| list.iter().any(|prefix| prefix.is_prefix_of(c)))
}

pub fn eval_atom(atom: &Atom, profile: &CompanyProfile) -> TruthValue3 {
    let known = match atom.predicate {
        PredicateKind::BetriebsstandortIn => profile.sites.as_ref().map(|s| any_prefixed(s, &atom.args)),
        PredicateKind::UnternehmenssitzIn => profile.seat.as_ref().map(|s| any_prefixed([s], &atom.args)),
        PredicateKind::OenaceIn => profile.oenace.as_ref().map(|s| any_prefixed(s, &atom.args)),
        PredicateKind::RechtsformIn => profile.legal_form.as_ref().map(|f| atom.args.contains(f)),
    };
    known.map_or(TruthValue3::Unknown, TruthValue3::from)
}

pub fn eval_formula(
    f: &Formula,
    profile: &CompanyProfile,
    registry: &ConceptRegistry,
) -> Result<TruthValue3, ModelError> {
    Ok(match &f.node {
        Node::Top => TruthValue3::True,
        Node::Bottom => TruthValue3::False,
        Node::Not(a) => k3_not(eval_formula(a, profile, registry)?),
        Node::And(fs) => {
            let mut acc = TruthValue3::True;
            for g in fs {
                acc = k3_and(acc, eval_formula(g, profile, registry)?);
            }
            acc
        }
        Node::Or(fs) => {
            let mut acc = TruthValue3::False;
            for g in fs {
                acc = k3_or(acc, eval_formula(g, profile, registry)?);
            }
            acc
        }
        Node::Impl(a, b) => k3_impl(eval_formula(a, profile, registry)?, eval_formula(b, profile, registry)?),
        Node::Atom(a) => eval_atom(a, profile),
        Node::Concept(name) => eval_formula(registry.definition(name)?, profile, registry)?,
        Node::Opaque(_) => TruthValue3::Unknown,
    })
}

/// Evaluation tree mirroring the formula. Concept references get their
/// unfolded definition as the only child.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalTrace {
    /// Connective name, or the printed atom / concept reference.
    pub label: String,
    pub value: TruthValue3,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub children: Vec<EvalTrace>,
}

impl EvalTrace {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(EvalTrace::node_count).sum::<usize>()
    }

    /// Preorder iterator over the nodes.
    pub fn nodes(&self) -> Vec<&EvalTrace> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }
}

pub fn eval_trace(
    f: &Formula,
    profile: &CompanyProfile,
    registry: &ConceptRegistry,
) -> Result<EvalTrace, ModelError> {
    let children = match &f.node {
        Node::Concept(name) => {
            let concept = registry.get(name).ok_or_else(|| ModelError::UnknownConcept(name.clone()))?;
            let mut inner = eval_trace(&concept.definition, profile, registry)?;
            if inner.explanation.is_none() {
                inner.explanation = concept.explanation.clone();
            }
            vec![inner]
        }
        _ => f
            .children()
            .into_iter()
            .map(|c| eval_trace(c, profile, registry))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let value = match &f.node {
        Node::Top => TruthValue3::True,
        Node::Bottom => TruthValue3::False,
        Node::Not(_) => k3_not(children[0].value),
        Node::And(_) => children.iter().fold(TruthValue3::True, |acc, c| k3_and(acc, c.value)),
        Node::Or(_) => children.iter().fold(TruthValue3::False, |acc, c| k3_or(acc, c.value)),
        Node::Impl(_, _) => k3_impl(children[0].value, children[1].value),
        Node::Atom(a) => eval_atom(a, profile),
        Node::Concept(_) => children[0].value,
        Node::Opaque(_) => TruthValue3::Unknown,
    };
    Ok(EvalTrace { label: pretty::node_label(f), value, explanation: f.explanation.clone(), children })
}
