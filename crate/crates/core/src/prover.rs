//! Backward proof search in a G3-style sequent calculus for classical
//! propositional logic, extended with ground sequents over the code
//! predicates and left/right rules that unpack defined concepts.
//!
//! The search works like a lean Prolog prover: close the sequent with an
//! axiom if possible, otherwise pick a principal formula (left side first,
//! then right side), apply the one rule matching its main connective, and
//! prove every premise, backtracking over the choice of principal formula.
//! All rules are invertible and every rule strictly decreases the total
//! formula weight, so the search is complete and terminates. Sequents that
//! have already failed are remembered, so backtracking never re-explores
//! them.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Atom, ConceptRegistry, Formula, Node, PredicateKind, QualifiedName};
use crate::pretty;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProverError {
    #[error("unregistered concept `{0}`")]
    UnknownConcept(QualifiedName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// `left ⇒ right`, both sides read as multisets.
#[derive(Debug, Clone, Default)]
pub struct Sequent {
    pub left: Vec<Formula>,
    pub right: Vec<Formula>,
}

impl Sequent {
    pub fn new(left: Vec<Formula>, right: Vec<Formula>) -> Sequent {
        Sequent { left, right }
    }

    pub fn side(&self, side: Side) -> &[Formula] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Sorted copy of both sides; equal sequents have equal canonical forms.
    pub fn canonical(&self) -> (Vec<Formula>, Vec<Formula>) {
        let mut l = self.left.clone();
        let mut r = self.right.clone();
        l.sort();
        r.sort();
        (l, r)
    }

    /// This sequent with one occurrence of `f` removed from `side`.
    pub fn without(&self, side: Side, f: &Formula) -> Option<Sequent> {
        let mut out = self.clone();
        let list = match side {
            Side::Left => &mut out.left,
            Side::Right => &mut out.right,
        };
        let i = list.iter().position(|g| g == f)?;
        list.remove(i);
        Some(out)
    }

    /// Curries n-ary conjunctions and disjunctions into binary ones and drops
    /// explanations.
    pub fn binarized(&self) -> Sequent {
        Sequent {
            left: self.left.iter().map(binarize).collect(),
            right: self.right.iter().map(binarize).collect(),
        }
    }
}

impl PartialEq for Sequent {
    fn eq(&self, other: &Self) -> bool {
        self.left.len() == other.left.len()
            && self.right.len() == other.right.len()
            && self.canonical() == other.canonical()
    }
}

impl Eq for Sequent {}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = pretty::formula_list(&self.left);
        let r = pretty::formula_list(&self.right);
        match (l.is_empty(), r.is_empty()) {
            (true, true) => f.write_str("⇒"),
            (true, false) => write!(f, "⇒ {r}"),
            (false, true) => write!(f, "{l} ⇒"),
            (false, false) => write!(f, "{l} ⇒ {r}"),
        }
    }
}

impl Serialize for Sequent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Sequent", 2)?;
        st.serialize_field("left", &self.left)?;
        st.serialize_field("right", &self.right)?;
        st.end()
    }
}

/// Right-nested binary form of a formula without explanations.
pub fn binarize(f: &Formula) -> Formula {
    fn nest(fs: &[Formula], is_and: bool) -> Formula {
        match fs {
            [] => {
                if is_and {
                    Formula::top()
                } else {
                    Formula::bottom()
                }
            }
            [only] => binarize(only),
            [first, rest @ ..] => {
                let pair = vec![binarize(first), nest(rest, is_and)];
                if is_and {
                    Formula::and(pair)
                } else {
                    Formula::or(pair)
                }
            }
        }
    }
    match &f.node {
        Node::And(fs) => nest(fs, true),
        Node::Or(fs) => nest(fs, false),
        Node::Not(a) => Formula::not(binarize(a)),
        Node::Impl(a, b) => Formula::implies(binarize(a), binarize(b)),
        other => Formula::from(other.clone()),
    }
}

/// Splits an n-ary junction into its first child and the rest.
fn split_junction(fs: &[Formula], is_and: bool) -> (Formula, Formula) {
    let rest = match &fs[1..] {
        [only] => only.clone(),
        more if is_and => Formula::and(more.to_vec()),
        more => Formula::or(more.to_vec()),
    };
    (fs[0].clone(), rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxiomKind {
    Identity,
    BottomLeft,
    TopRight,
    Ground(PredicateKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Axiom(AxiomKind),
    AndL,
    AndR,
    OrL,
    OrR,
    NegL,
    NegR,
    ImplL,
    ImplR,
    DefL,
    DefR,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Axiom(AxiomKind::Identity) => "identity",
            Rule::Axiom(AxiomKind::BottomLeft) => "bottomL",
            Rule::Axiom(AxiomKind::TopRight) => "topR",
            Rule::Axiom(AxiomKind::Ground(_)) => "ground",
            Rule::AndL => "andL",
            Rule::AndR => "andR",
            Rule::OrL => "orL",
            Rule::OrR => "orR",
            Rule::NegL => "negL",
            Rule::NegR => "negR",
            Rule::ImplL => "implL",
            Rule::ImplR => "implR",
            Rule::DefL => "defL",
            Rule::DefR => "defR",
        }
    }

    pub fn is_axiom(self) -> bool {
        matches!(self, Rule::Axiom(_))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Human-readable shape of a logical rule.
#[derive(Debug, Clone, Copy)]
pub struct RuleSchema {
    pub rule: Rule,
    pub side: Side,
    pub conclusion: &'static str,
    pub premises: &'static [&'static str],
}

pub const RULE_SCHEMAS: [RuleSchema; 10] = [
    RuleSchema {
        rule: Rule::NegL, side: Side::Left, conclusion: "Γ, ¬A ⇒ Δ", premises: &["Γ ⇒ A, Δ"]
    },
    RuleSchema {
        rule: Rule::NegR, side: Side::Right, conclusion: "Γ ⇒ ¬A, Δ", premises: &["Γ, A ⇒ Δ"]
    },
    RuleSchema {
        rule: Rule::AndL, side: Side::Left, conclusion: "Γ, A ∧ B ⇒ Δ", premises: &["Γ, A, B ⇒ Δ"]
    },
    RuleSchema {
        rule: Rule::AndR,
        side: Side::Right,
        conclusion: "Γ ⇒ A ∧ B, Δ",
        premises: &["Γ ⇒ A, Δ", "Γ ⇒ B, Δ"],
    },
    RuleSchema {
        rule: Rule::OrL,
        side: Side::Left,
        conclusion: "Γ, A ∨ B ⇒ Δ",
        premises: &["Γ, A ⇒ Δ", "Γ, B ⇒ Δ"],
    },
    RuleSchema {
        rule: Rule::OrR, side: Side::Right, conclusion: "Γ ⇒ A ∨ B, Δ", premises: &["Γ ⇒ A, B, Δ"]
    },
    RuleSchema {
        rule: Rule::ImplL,
        side: Side::Left,
        conclusion: "Γ, A → B ⇒ Δ",
        premises: &["Γ, B ⇒ Δ", "Γ ⇒ A, Δ"],
    },
    RuleSchema {
        rule: Rule::ImplR,
        side: Side::Right,
        conclusion: "Γ ⇒ A → B, Δ",
        premises: &["Γ, A ⇒ B, Δ"],
    },
    RuleSchema {
        rule: Rule::DefL, side: Side::Left, conclusion: "Γ, 𝔡 ⇒ Δ", premises: &["Γ, D ⇒ Δ"]
    },
    RuleSchema {
        rule: Rule::DefR, side: Side::Right, conclusion: "Γ ⇒ 𝔡, Δ", premises: &["Γ ⇒ D, Δ"]
    },
];

/// Side condition of the ground sequent `atom(L1) ⇒ atom(L2)`.
pub fn ground_check(lhs: &Atom, rhs: &Atom) -> bool {
    if lhs.predicate != rhs.predicate {
        return false;
    }
    if lhs.predicate.uses_prefix() {
        lhs.args.iter().all(|x| rhs.args.iter().any(|y| y.is_prefix_of(x)))
    } else {
        lhs.args.iter().all(|x| rhs.args.contains(x))
    }
}

fn atoms(fs: &[Formula]) -> impl Iterator<Item = &Atom> {
    fs.iter().filter_map(|f| match &f.node {
        Node::Atom(a) => Some(a),
        _ => None,
    })
}

/// The left/right atom pair closing a ground sequent, if any.
pub fn ground_pair(s: &Sequent) -> Option<(&Atom, &Atom)> {
    atoms(&s.left).flat_map(|l| atoms(&s.right).map(move |r| (l, r))).find(|(l, r)| ground_check(l, r))
}

pub fn axiom_holds(kind: AxiomKind, s: &Sequent) -> bool {
    match kind {
        AxiomKind::Identity => s.left.iter().any(|f| s.right.contains(f)),
        AxiomKind::BottomLeft => s.left.iter().any(|f| f.node == Node::Bottom),
        AxiomKind::TopRight => s.right.iter().any(|f| f.node == Node::Top),
        AxiomKind::Ground(p) => atoms(&s.left)
            .flat_map(|l| atoms(&s.right).map(move |r| (l, r)))
            .any(|(l, r)| l.predicate == p && ground_check(l, r)),
    }
}

/// First applicable axiom, in the order identity, ⊥ left, ⊤ right, ground.
pub fn axiom_check(s: &Sequent) -> Option<AxiomKind> {
    if axiom_holds(AxiomKind::Identity, s) {
        Some(AxiomKind::Identity)
    } else if axiom_holds(AxiomKind::BottomLeft, s) {
        Some(AxiomKind::BottomLeft)
    } else if axiom_holds(AxiomKind::TopRight, s) {
        Some(AxiomKind::TopRight)
    } else {
        ground_pair(s).map(|(l, _)| AxiomKind::Ground(l.predicate))
    }
}

/// `Γi ⇒ Δi` becomes `Γi, Σ ⇒ Π, Δi` for context `Σ ⇒ Π`.
pub fn merge_premises(premises: &[Sequent], context: &Sequent) -> Vec<Sequent> {
    premises
        .iter()
        .map(|p| {
            let mut left = p.left.clone();
            left.extend(context.left.iter().cloned());
            let mut right = context.right.clone();
            right.extend(p.right.iter().cloned());
            Sequent { left, right }
        })
        .collect()
}

/// The rule whose principal formula is `f` on `side`, with its premises
/// before merging with the context. `None` for atoms and for constants that
/// only close sequents as axioms.
pub fn instantiate(
    side: Side,
    f: &Formula,
    registry: &ConceptRegistry,
) -> Result<Option<(Rule, Vec<Sequent>)>, ProverError> {
    let seq = |l: Vec<Formula>, r: Vec<Formula>| Sequent::new(l, r);
    Ok(Some(match (side, &f.node) {
        (Side::Left, Node::Not(a)) => (Rule::NegL, vec![seq(vec![], vec![(**a).clone()])]),
        (Side::Right, Node::Not(a)) => (Rule::NegR, vec![seq(vec![(**a).clone()], vec![])]),
        (Side::Left, Node::And(fs)) if fs.len() >= 2 => {
            let (a, b) = split_junction(fs, true);
            (Rule::AndL, vec![seq(vec![a, b], vec![])])
        }
        (Side::Right, Node::And(fs)) if fs.len() >= 2 => {
            let (a, b) = split_junction(fs, true);
            (Rule::AndR, vec![seq(vec![], vec![a]), seq(vec![], vec![b])])
        }
        (Side::Left, Node::Or(fs)) if fs.len() >= 2 => {
            let (a, b) = split_junction(fs, false);
            (Rule::OrL, vec![seq(vec![a], vec![]), seq(vec![b], vec![])])
        }
        (Side::Right, Node::Or(fs)) if fs.len() >= 2 => {
            let (a, b) = split_junction(fs, false);
            (Rule::OrR, vec![seq(vec![], vec![a, b])])
        }
        (Side::Left, Node::Impl(a, b)) => {
            (Rule::ImplL, vec![seq(vec![(**b).clone()], vec![]), seq(vec![], vec![(**a).clone()])])
        }
        (Side::Right, Node::Impl(a, b)) => (Rule::ImplR, vec![seq(vec![(**a).clone()], vec![(**b).clone()])]),
        (side, Node::Concept(name)) => {
            let d = registry.definition(name).map_err(|_| ProverError::UnknownConcept(name.clone()))?;
            let d = binarize(d);
            match side {
                Side::Left => (Rule::DefL, vec![seq(vec![d], vec![])]),
                Side::Right => (Rule::DefR, vec![seq(vec![], vec![d])]),
            }
        }
        _ => return Ok(None),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub side: Side,
    pub formula: Formula,
}

impl Serialize for Principal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Principal", 2)?;
        st.serialize_field("side", &self.side)?;
        st.serialize_field("formula", &self.formula)?;
        st.end()
    }
}

/// One backward rule application from `conclusion`.
#[derive(Debug, Clone)]
pub struct Step {
    pub principal: Principal,
    pub rule: Rule,
    pub premises: Vec<Sequent>,
}

/// Every logical-rule application available on `s`, left side first, each
/// side in order.
pub fn rule_applications(s: &Sequent, registry: &ConceptRegistry) -> Result<Vec<Step>, ProverError> {
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        for f in s.side(side) {
            if let Some((rule, schema)) = instantiate(side, f, registry)? {
                let context = s.without(side, f).expect("formula taken from this side");
                out.push(Step {
                    principal: Principal { side, formula: f.clone() },
                    rule,
                    premises: merge_premises(&schema, &context),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub rule: Rule,
    pub conclusion: Sequent,
    pub principal: Option<Principal>,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn height(&self) -> usize {
        1 + self.premises.iter().map(Derivation::height).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.premises.iter().map(Derivation::node_count).sum::<usize>()
    }

    /// Preorder list of nodes.
    pub fn nodes(&self) -> Vec<&Derivation> {
        let mut out = vec![self];
        for p in &self.premises {
            out.extend(p.nodes());
        }
        out
    }
}

impl Serialize for Derivation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Derivation", 4)?;
        st.serialize_field("rule", self.rule.name())?;
        st.serialize_field("conclusion", &self.conclusion)?;
        st.serialize_field("principal", &self.principal)?;
        st.serialize_field("premises", &self.premises)?;
        st.end()
    }
}

/// Proof search state for one concept registry. Failed sequents are cached
/// across queries.
pub struct Prover<'r> {
    registry: &'r ConceptRegistry,
    failed: HashSet<(Vec<Formula>, Vec<Formula>)>,
    concept_weights: HashMap<QualifiedName, u64>,
}

impl<'r> Prover<'r> {
    pub fn new(registry: &'r ConceptRegistry) -> Prover<'r> {
        Prover { registry, failed: HashSet::new(), concept_weights: HashMap::new() }
    }

    /// Searches for a derivation of `s`. `Ok(None)` means `s` is not derivable.
    pub fn prove(&mut self, s: &Sequent) -> Result<Option<Derivation>, ProverError> {
        self.search(s.binarized())
    }

    fn search(&mut self, s: Sequent) -> Result<Option<Derivation>, ProverError> {
        if let Some(kind) = axiom_check(&s) {
            return Ok(Some(Derivation {
                rule: Rule::Axiom(kind),
                conclusion: s,
                principal: None,
                premises: Vec::new(),
            }));
        }
        let key = s.canonical();
        if self.failed.contains(&key) {
            return Ok(None);
        }
        let conclusion_weight = if cfg!(debug_assertions) { self.sequent_weight(&s)? } else { 0 };
        'choice: for step in rule_applications(&s, self.registry)? {
            let mut derived = Vec::with_capacity(step.premises.len());
            for premise in step.premises {
                if cfg!(debug_assertions) {
                    let w = self.sequent_weight(&premise)?;
                    debug_assert!(w < conclusion_weight, "rule {} does not decrease weight", step.rule);
                }
                match self.search(premise)? {
                    Some(d) => derived.push(d),
                    None => continue 'choice,
                }
            }
            return Ok(Some(Derivation {
                rule: step.rule,
                conclusion: s,
                principal: Some(step.principal),
                premises: derived,
            }));
        }
        self.failed.insert(key);
        Ok(None)
    }

    fn weight(&mut self, f: &Formula) -> Result<u64, ProverError> {
        Ok(match &f.node {
            Node::Concept(name) => {
                if let Some(w) = self.concept_weights.get(name) {
                    return Ok(*w);
                }
                let d =
                    self.registry.definition(name).map_err(|_| ProverError::UnknownConcept(name.clone()))?;
                let w = 1 + self.weight(&binarize(d))?;
                self.concept_weights.insert(name.clone(), w);
                w
            }
            _ => {
                let mut total = 1;
                for c in f.children() {
                    total += self.weight(c)?;
                }
                total
            }
        })
    }

    /// Sum of formula weights on both sides.
    pub fn sequent_weight(&mut self, s: &Sequent) -> Result<u64, ProverError> {
        let mut total = 0;
        for f in s.left.iter().chain(&s.right) {
            total += self.weight(f)?;
        }
        Ok(total)
    }
}

pub fn prove(s: &Sequent, registry: &ConceptRegistry) -> Result<Option<Derivation>, ProverError> {
    Prover::new(registry).prove(s)
}

/// Checks that every node of `d` is a correct axiom or rule instance.
pub fn validate_derivation(d: &Derivation, registry: &ConceptRegistry) -> bool {
    match (d.rule, &d.principal) {
        (Rule::Axiom(kind), None) => d.premises.is_empty() && axiom_holds(kind, &d.conclusion),
        (Rule::Axiom(_), Some(_)) | (_, None) => false,
        (rule, Some(principal)) => {
            let Some(context) = d.conclusion.without(principal.side, &principal.formula) else {
                return false;
            };
            let Ok(Some((expected_rule, schema))) = instantiate(principal.side, &principal.formula, registry)
            else {
                return false;
            };
            let expected = merge_premises(&schema, &context);
            expected_rule == rule
                && expected.len() == d.premises.len()
                && expected.iter().zip(&d.premises).all(|(e, p)| *e == p.conclusion)
                && d.premises.iter().all(|p| validate_derivation(p, registry))
        }
    }
}
