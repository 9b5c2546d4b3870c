//! Typed view of the knowledge base: formulas, defined concepts and grants.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::sexpr::{fold_case, Atom as SAtom, SExpr, SExprKind, Span};

/// A region, activity or legal-form code. Compared case-insensitively and
/// always as a string.
#[derive(Clone)]
pub struct Code {
    text: String,
    key: String,
}

impl Code {
    pub fn new(text: impl Into<String>) -> Option<Code> {
        let text = text.into();
        if text.is_empty() {
            return None;
        }
        let key = fold_case(&text);
        Some(Code { text, key })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// The case-folded comparison key.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn is_prefix_of(&self, other: &Code) -> bool {
        other.key.starts_with(&self.key)
    }
}

impl PartialEq for Code {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Code {}
impl Hash for Code {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}
impl PartialOrd for Code {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Code {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.text)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Code {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Code::new(text).ok_or_else(|| serde::de::Error::custom("codes must be nonempty"))
    }
}

/// Possibly package-qualified name of a concept or opaque predicate.
#[derive(Clone)]
pub struct QualifiedName {
    package: Option<String>,
    name: String,
    key: (Option<String>, String),
}

impl QualifiedName {
    pub fn new(package: Option<&str>, name: &str) -> QualifiedName {
        QualifiedName {
            package: package.map(str::to_owned),
            name: name.to_owned(),
            key: (package.map(fold_case), fold_case(name)),
        }
    }

    /// Parses `pkg:name` or `name`.
    pub fn parse(text: &str) -> QualifiedName {
        match text.split_once(':') {
            Some((p, n)) if !p.is_empty() => QualifiedName::new(Some(p), n),
            _ => QualifiedName::new(None, text),
        }
    }

    pub fn package(&self) -> Option<&str> {
        self.package.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn to_sexpr(&self) -> SExpr {
        SExpr::new(SExprKind::Atom(SAtom::Symbol { package: self.package.clone(), name: self.name.clone() }))
    }
}

impl PartialEq for QualifiedName {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for QualifiedName {}
impl Hash for QualifiedName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}
impl PartialOrd for QualifiedName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QualifiedName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.package {
            Some(p) => write!(f, "{p}:{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

impl fmt::Debug for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for QualifiedName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    BetriebsstandortIn,
    UnternehmenssitzIn,
    OenaceIn,
    RechtsformIn,
}

impl PredicateKind {
    pub const ALL: [PredicateKind; 4] = [
        PredicateKind::BetriebsstandortIn,
        PredicateKind::UnternehmenssitzIn,
        PredicateKind::OenaceIn,
        PredicateKind::RechtsformIn,
    ];

    /// Recognises the DSL symbol (`Betriebsstandort-in`, `ÖNACE-in`, ...) and
    /// the underscore spelling used in derivation output.
    pub fn from_symbol(name: &str) -> Option<PredicateKind> {
        let folded = fold_case(name).replace('_', "-");
        match folded.as_str() {
            "betriebsstandort-in" => Some(PredicateKind::BetriebsstandortIn),
            "unternehmenssitz-in" => Some(PredicateKind::UnternehmenssitzIn),
            "önace-in" | "oenace-in" => Some(PredicateKind::OenaceIn),
            "rechtsform-in" => Some(PredicateKind::RechtsformIn),
            _ => None,
        }
    }

    /// Canonical surface symbol.
    pub fn symbol(self) -> &'static str {
        match self {
            PredicateKind::BetriebsstandortIn => "Betriebsstandort-in",
            PredicateKind::UnternehmenssitzIn => "Unternehmenssitz-in",
            PredicateKind::OenaceIn => "ÖNACE-in",
            PredicateKind::RechtsformIn => "Rechtsform-in",
        }
    }

    /// Name in derivation output, e.g. `betriebsstandort_in`.
    pub fn term_name(self) -> &'static str {
        match self {
            PredicateKind::BetriebsstandortIn => "betriebsstandort_in",
            PredicateKind::UnternehmenssitzIn => "unternehmenssitz_in",
            PredicateKind::OenaceIn => "oenace_in",
            PredicateKind::RechtsformIn => "rechtsform_in",
        }
    }

    /// Whether the predicate's list arguments are matched by string prefix
    /// (regions, activities) rather than by membership (legal form).
    pub fn uses_prefix(self) -> bool {
        !matches!(self, PredicateKind::RechtsformIn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: PredicateKind,
    pub args: Vec<Code>,
}

impl Atom {
    pub fn new(predicate: PredicateKind, args: &[&str]) -> Atom {
        Atom { predicate, args: args.iter().filter_map(|a| Code::new(*a)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpaqueAtom {
    pub name: QualifiedName,
    pub args: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Top,
    Bottom,
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Impl(Box<Formula>, Box<Formula>),
    Atom(Atom),
    Concept(QualifiedName),
    Opaque(OpaqueAtom),
}

/// A grant condition. The explanation (comment text attached in the source)
/// does not take part in equality, ordering or hashing.
#[derive(Debug, Clone)]
pub struct Formula {
    pub node: Node,
    pub explanation: Option<String>,
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}
impl Eq for Formula {}
impl Hash for Formula {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.node.hash(state)
    }
}
impl PartialOrd for Formula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Formula {
    fn cmp(&self, other: &Self) -> Ordering {
        self.node.cmp(&other.node)
    }
}

impl From<Node> for Formula {
    fn from(node: Node) -> Self {
        Formula { node, explanation: None }
    }
}

impl Formula {
    pub fn top() -> Formula {
        Node::Top.into()
    }

    pub fn bottom() -> Formula {
        Node::Bottom.into()
    }

    pub fn not(f: Formula) -> Formula {
        Node::Not(Box::new(f)).into()
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        Node::And(fs).into()
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        Node::Or(fs).into()
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Node::Impl(Box::new(a), Box::new(b)).into()
    }

    pub fn atom(predicate: PredicateKind, args: &[&str]) -> Formula {
        Node::Atom(Atom::new(predicate, args)).into()
    }

    pub fn concept(name: &str) -> Formula {
        Node::Concept(QualifiedName::parse(name)).into()
    }

    /// Argument-free opaque proposition.
    pub fn opaque(name: &str) -> Formula {
        Node::Opaque(OpaqueAtom { name: QualifiedName::parse(name), args: Vec::new() }).into()
    }

    pub fn with_explanation(mut self, text: impl Into<String>) -> Formula {
        self.explanation = Some(text.into());
        self
    }

    pub fn children(&self) -> Vec<&Formula> {
        match &self.node {
            Node::Not(a) => vec![a],
            Node::And(fs) | Node::Or(fs) => fs.iter().collect(),
            Node::Impl(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    /// Visits this node and every descendant, preorder.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Formula)) {
        visit(self);
        for c in self.children() {
            c.walk(visit);
        }
    }

    /// Concept names referenced directly (without unfolding).
    pub fn concept_refs(&self) -> BTreeSet<QualifiedName> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| {
            if let Node::Concept(n) = &f.node {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn contains_opaque(&self) -> bool {
        let mut found = false;
        self.walk(&mut |f| found |= matches!(f.node, Node::Opaque(_)));
        found
    }

    /// Drops all explanations.
    pub fn stripped(&self) -> Formula {
        let node = match &self.node {
            Node::Not(a) => Node::Not(Box::new(a.stripped())),
            Node::And(fs) => Node::And(fs.iter().map(Formula::stripped).collect()),
            Node::Or(fs) => Node::Or(fs.iter().map(Formula::stripped).collect()),
            Node::Impl(a, b) => Node::Impl(Box::new(a.stripped()), Box::new(b.stripped())),
            other => other.clone(),
        };
        node.into()
    }

    /// Replaces argument-free opaque atoms whose name is in `names` by
    /// concept references.
    pub fn resolve_concepts(&self, names: &impl Fn(&QualifiedName) -> bool) -> Formula {
        let node = match &self.node {
            Node::Opaque(o) if o.args.is_empty() && names(&o.name) => Node::Concept(o.name.clone()),
            Node::Not(a) => Node::Not(Box::new(a.resolve_concepts(names))),
            Node::And(fs) => Node::And(fs.iter().map(|f| f.resolve_concepts(names)).collect()),
            Node::Or(fs) => Node::Or(fs.iter().map(|f| f.resolve_concepts(names)).collect()),
            Node::Impl(a, b) => {
                Node::Impl(Box::new(a.resolve_concepts(names)), Box::new(b.resolve_concepts(names)))
            }
            other => other.clone(),
        };
        Formula { node, explanation: self.explanation.clone() }
    }

    /// Surface syntax of the formula, explanations re-emitted as comments.
    pub fn to_sexpr(&self) -> SExpr {
        let list = |head: &str, items: Vec<SExpr>| {
            let mut all = vec![SExpr::symbol(head)];
            all.extend(items);
            SExpr::list(all)
        };
        let e = match &self.node {
            Node::Top => SExpr::symbol("top"),
            Node::Bottom => SExpr::symbol("bottom"),
            Node::Not(a) => list("not", vec![a.to_sexpr()]),
            Node::And(fs) => list("and", fs.iter().map(Formula::to_sexpr).collect()),
            Node::Or(fs) => list("or", fs.iter().map(Formula::to_sexpr).collect()),
            Node::Impl(a, b) => list("impl", vec![a.to_sexpr(), b.to_sexpr()]),
            Node::Atom(a) => list(a.predicate.symbol(), a.args.iter().map(code_to_sexpr).collect()),
            Node::Concept(n) => SExpr::list(vec![n.to_sexpr()]),
            Node::Opaque(o) if o.args.is_empty() => o.name.to_sexpr(),
            Node::Opaque(o) => {
                let mut all = vec![o.name.to_sexpr()];
                all.extend(o.args.iter().map(code_to_sexpr));
                SExpr::list(all)
            }
        };
        match &self.explanation {
            Some(text) => e.with_comments(text.lines().map(str::to_owned).collect()),
            None => e,
        }
    }
}

fn code_to_sexpr(code: &Code) -> SExpr {
    let t = code.as_str();
    if let Some(int) = SExpr::integer(t) {
        if t.chars().all(|c| c.is_ascii_digit()) {
            return int;
        }
    }
    SExpr::string(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{at}: empty list is not a formula")]
    EmptyList { at: Span },
    #[error("{at}: `{connective}` expects {expected} argument(s), got {got}")]
    Arity { at: Span, connective: String, expected: usize, got: usize },
    #[error("{at}: expected a code (symbol, keyword, string or integer), found a list")]
    NonAtomArgument { at: Span },
    #[error("{at}: {what} is not a formula")]
    NotAFormula { at: Span, what: String },
    #[error("{at}: concept reference `{name}` takes no arguments")]
    ConceptWithArguments { at: Span, name: String },
    #[error("{at}: malformed {form}: {detail}")]
    Malformed { at: Span, form: &'static str, detail: String },
    #[error("{at}: invalid date `{text}`")]
    BadDate { at: Span, text: String },
    #[error("grant `{name}`: valid_from {from} is after valid_to {to}")]
    DateOrder { name: String, from: NaiveDate, to: NaiveDate },
    #[error("concept `{0}` is defined more than once")]
    DuplicateConcept(QualifiedName),
    #[error("unregistered concept `{0}`")]
    UnknownConcept(QualifiedName),
}

fn argument_code(e: &SExpr) -> Result<Code, ModelError> {
    let text = match &e.kind {
        SExprKind::List(_) => return Err(ModelError::NonAtomArgument { at: e.span }),
        SExprKind::Atom(SAtom::Symbol { package: Some(p), name }) => format!("{p}:{name}"),
        SExprKind::Atom(SAtom::Symbol { package: None, name }) => name.clone(),
        SExprKind::Atom(SAtom::Keyword(k)) => k.clone(),
        SExprKind::Atom(SAtom::Str(s)) => s.clone(),
        SExprKind::Atom(SAtom::Integer(i)) => i.lexeme().to_owned(),
    };
    Code::new(text).ok_or(ModelError::Malformed { at: e.span, form: "argument", detail: "empty code".into() })
}

fn explanation_of(e: &SExpr) -> Option<String> {
    if e.comments.is_empty() {
        None
    } else {
        Some(e.comments.join("\n"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Connective {
    And,
    Or,
    Not,
    Impl,
    Top,
    Bottom,
}

fn connective(e: &SExpr) -> Option<Connective> {
    let (None, name) = e.as_symbol()? else {
        return None;
    };
    match fold_case(name).as_str() {
        "and" => Some(Connective::And),
        "or" => Some(Connective::Or),
        "neg" | "not" => Some(Connective::Not),
        "impl" | "->" => Some(Connective::Impl),
        "top" => Some(Connective::Top),
        "bottom" => Some(Connective::Bottom),
        _ => None,
    }
}

/// Converts a parsed S-expression into a formula. Names registered in
/// `registry` become concept references; other unknown heads become opaque
/// atoms.
pub fn formula_from_sexpr(e: &SExpr, registry: &ConceptRegistry) -> Result<Formula, ModelError> {
    formula_with(e, &|n| registry.contains(n))
}

fn formula_with(e: &SExpr, is_concept: &impl Fn(&QualifiedName) -> bool) -> Result<Formula, ModelError> {
    let explanation = explanation_of(e);
    let node = match &e.kind {
        SExprKind::Atom(SAtom::Symbol { package, name }) => match connective(e) {
            Some(Connective::Top) => Node::Top,
            Some(Connective::Bottom) => Node::Bottom,
            Some(c) => {
                return Err(ModelError::NotAFormula {
                    at: e.span,
                    what: format!("bare connective `{c:?}`").to_lowercase(),
                })
            }
            None => symbol_node(package.as_deref(), name, Vec::new(), e.span, is_concept)?,
        },
        SExprKind::Atom(other) => {
            return Err(ModelError::NotAFormula { at: e.span, what: describe_atom(other) })
        }
        SExprKind::List(items) => {
            let Some((head, args)) = items.split_first() else {
                return Err(ModelError::EmptyList { at: e.span });
            };
            match connective(head) {
                Some(c) => {
                    let name = head.as_symbol().map(|(_, n)| n).unwrap_or_default();
                    let sub =
                        args.iter().map(|a| formula_with(a, is_concept)).collect::<Result<Vec<_>, _>>()?;
                    let arity = |expected: usize| {
                        if sub.len() == expected {
                            Ok(())
                        } else {
                            Err(ModelError::Arity {
                                at: e.span,
                                connective: name.to_owned(),
                                expected,
                                got: sub.len(),
                            })
                        }
                    };
                    match c {
                        Connective::Top => {
                            arity(0)?;
                            Node::Top
                        }
                        Connective::Bottom => {
                            arity(0)?;
                            Node::Bottom
                        }
                        Connective::Not => {
                            arity(1)?;
                            Node::Not(Box::new(sub.into_iter().next().expect("arity checked")))
                        }
                        Connective::Impl => {
                            arity(2)?;
                            let mut it = sub.into_iter();
                            let a = it.next().expect("arity checked");
                            let b = it.next().expect("arity checked");
                            Node::Impl(Box::new(a), Box::new(b))
                        }
                        Connective::And | Connective::Or => {
                            return Ok(junction(c == Connective::And, sub, explanation));
                        }
                    }
                }
                None => {
                    let Some((package, name)) = head.as_symbol() else {
                        return Err(ModelError::NotAFormula {
                            at: head.span,
                            what: "list head that is not a symbol".into(),
                        });
                    };
                    let codes = args.iter().map(argument_code).collect::<Result<Vec<_>, _>>()?;
                    symbol_node(package, name, codes, e.span, is_concept)?
                }
            }
        }
    };
    Ok(Formula { node, explanation })
}

fn describe_atom(a: &SAtom) -> String {
    match a {
        SAtom::Keyword(k) => format!("keyword `:{k}`"),
        SAtom::Str(_) => "string literal".into(),
        SAtom::Integer(i) => format!("integer `{}`", i.lexeme()),
        SAtom::Symbol { name, .. } => format!("symbol `{name}`"),
    }
}

/// n-ary and/or; a single child collapses into itself, zero children give the unit.
fn junction(is_and: bool, mut sub: Vec<Formula>, explanation: Option<String>) -> Formula {
    match sub.len() {
        0 => Formula { node: if is_and { Node::Top } else { Node::Bottom }, explanation },
        1 => {
            let mut only = sub.pop().expect("one child");
            if only.explanation.is_none() {
                only.explanation = explanation;
            } else if let Some(outer) = explanation {
                only.explanation = Some(format!("{outer}\n{}", only.explanation.unwrap_or_default()));
            }
            only
        }
        _ => Formula { node: if is_and { Node::And(sub) } else { Node::Or(sub) }, explanation },
    }
}

fn symbol_node(
    package: Option<&str>,
    name: &str,
    args: Vec<Code>,
    at: Span,
    is_concept: &impl Fn(&QualifiedName) -> bool,
) -> Result<Node, ModelError> {
    if package.is_none() {
        if let Some(predicate) = PredicateKind::from_symbol(name) {
            return Ok(Node::Atom(Atom { predicate, args }));
        }
    }
    let qn = QualifiedName::new(package, name);
    if is_concept(&qn) {
        if !args.is_empty() {
            return Err(ModelError::ConceptWithArguments { at, name: qn.to_string() });
        }
        return Ok(Node::Concept(qn));
    }
    Ok(Node::Opaque(OpaqueAtom { name: qn, args }))
}

#[derive(Debug, Clone)]
pub struct DefinedConcept {
    pub name: QualifiedName,
    pub definition: Formula,
    pub explanation: Option<String>,
}

impl PartialEq for DefinedConcept {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.definition == other.definition
    }
}

impl DefinedConcept {
    pub fn to_sexpr(&self) -> SExpr {
        let e =
            SExpr::list(vec![SExpr::symbol("def-concept"), self.name.to_sexpr(), self.definition.to_sexpr()]);
        match &self.explanation {
            Some(text) => e.with_comments(text.lines().map(str::to_owned).collect()),
            None => e,
        }
    }
}

fn head_is(e: &SExpr, name: &str) -> bool {
    e.as_list().and_then(|items| items.first()).is_some_and(|h| h.is_symbol_named(name))
}

pub fn is_concept_form(e: &SExpr) -> bool {
    head_is(e, "def-concept")
}

pub fn is_grant_form(e: &SExpr) -> bool {
    head_is(e, "define-grant")
}

/// Parses `(def-concept name body)`. References to other concepts inside the
/// body stay opaque until the concept is added to a registry, which resolves
/// them.
pub fn parse_concept(e: &SExpr) -> Result<DefinedConcept, ModelError> {
    let items = e.as_list().filter(|_| is_concept_form(e)).ok_or(ModelError::Malformed {
        at: e.span,
        form: "def-concept",
        detail: "expected (def-concept name body)".into(),
    })?;
    if items.len() != 3 {
        return Err(ModelError::Arity {
            at: e.span,
            connective: "def-concept".into(),
            expected: 2,
            got: items.len() - 1,
        });
    }
    let (package, name) = items[1].as_symbol().ok_or(ModelError::Malformed {
        at: items[1].span,
        form: "def-concept",
        detail: "concept name must be a symbol".into(),
    })?;
    let definition = formula_with(&items[2], &|_| false)?;
    Ok(DefinedConcept { name: QualifiedName::new(package, name), definition, explanation: explanation_of(e) })
}

/// Defined concepts indexed by name.
#[derive(Debug, Clone, Default)]
pub struct ConceptRegistry {
    concepts: BTreeMap<QualifiedName, DefinedConcept>,
}

impl ConceptRegistry {
    pub fn new() -> ConceptRegistry {
        ConceptRegistry::default()
    }

    /// Builds a registry and resolves cross-references between the
    /// definitions.
    pub fn from_concepts(
        concepts: impl IntoIterator<Item = DefinedConcept>,
    ) -> Result<ConceptRegistry, ModelError> {
        let mut map = BTreeMap::new();
        for c in concepts {
            if map.contains_key(&c.name) {
                return Err(ModelError::DuplicateConcept(c.name));
            }
            map.insert(c.name.clone(), c);
        }
        let names: BTreeSet<QualifiedName> = map.keys().cloned().collect();
        for c in map.values_mut() {
            c.definition = c.definition.resolve_concepts(&|n| names.contains(n));
        }
        Ok(ConceptRegistry { concepts: map })
    }

    /// Adds one concept as-is (its definition is not re-resolved).
    pub fn insert(&mut self, concept: DefinedConcept) -> Result<(), ModelError> {
        if self.concepts.contains_key(&concept.name) {
            return Err(ModelError::DuplicateConcept(concept.name));
        }
        self.concepts.insert(concept.name.clone(), concept);
        Ok(())
    }

    pub fn get(&self, name: &QualifiedName) -> Option<&DefinedConcept> {
        self.concepts.get(name)
    }

    pub fn definition(&self, name: &QualifiedName) -> Result<&Formula, ModelError> {
        self.get(name).map(|c| &c.definition).ok_or_else(|| ModelError::UnknownConcept(name.clone()))
    }

    pub fn contains(&self, name: &QualifiedName) -> bool {
        self.concepts.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DefinedConcept> {
        self.concepts.values()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcyclicError {
    #[error("concept cycle: {}", join_names(.0))]
    Cycle(Vec<QualifiedName>),
    #[error("concept `{from}` refers to unregistered concept `{missing}`")]
    Unregistered { from: QualifiedName, missing: QualifiedName },
}

fn join_names(names: &[QualifiedName]) -> String {
    names.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" -> ")
}

/// Checks that the concept-reference graph has no directed cycle. On failure
/// returns one witness cycle, first node repeated at the end.
pub fn check_acyclic(registry: &ConceptRegistry) -> Result<(), AcyclicError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }

    fn visit<'a>(
        registry: &'a ConceptRegistry,
        name: &'a QualifiedName,
        marks: &mut BTreeMap<&'a QualifiedName, Mark>,
        path: &mut Vec<&'a QualifiedName>,
    ) -> Result<(), AcyclicError> {
        match marks.get(name) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => {
                let start = path.iter().position(|n| *n == name).expect("active node is on path");
                let mut cycle: Vec<QualifiedName> = path[start..].iter().map(|n| (*n).clone()).collect();
                cycle.push(name.clone());
                return Err(AcyclicError::Cycle(cycle));
            }
            None => {}
        }
        let concept = registry.get(name).expect("caller checks registration");
        marks.insert(name, Mark::Active);
        path.push(name);
        let mut refs = Vec::new();
        concept.definition.walk(&mut |f| {
            if let Node::Concept(n) = &f.node {
                refs.push(n);
            }
        });
        for r in refs {
            let Some((key, _)) = registry.concepts.get_key_value(r) else {
                return Err(AcyclicError::Unregistered { from: name.clone(), missing: r.clone() });
            };
            visit(registry, key, marks, path)?;
        }
        path.pop();
        marks.insert(name, Mark::Done);
        Ok(())
    }

    let mut marks = BTreeMap::new();
    for name in registry.concepts.keys() {
        visit(registry, name, &mut marks, &mut Vec::new())?;
    }
    Ok(())
}

/// Replaces every concept reference by its (recursively unfolded) definition.
pub fn unfold(f: &Formula, registry: &ConceptRegistry) -> Result<Formula, ModelError> {
    let node = match &f.node {
        Node::Concept(name) => {
            let mut body = unfold(registry.definition(name)?, registry)?;
            if f.explanation.is_some() {
                body.explanation = f.explanation.clone();
            }
            return Ok(body);
        }
        Node::Not(a) => Node::Not(Box::new(unfold(a, registry)?)),
        Node::And(fs) => Node::And(fs.iter().map(|g| unfold(g, registry)).collect::<Result<_, _>>()?),
        Node::Or(fs) => Node::Or(fs.iter().map(|g| unfold(g, registry)).collect::<Result<_, _>>()?),
        Node::Impl(a, b) => Node::Impl(Box::new(unfold(a, registry)?), Box::new(unfold(b, registry)?)),
        other => other.clone(),
    };
    Ok(Formula { node, explanation: f.explanation.clone() })
}

/// Size measure used for termination: atoms weigh 1, connectives 1 plus
/// their children, and a concept reference 1 plus its definition.
pub fn weight(f: &Formula, registry: &ConceptRegistry) -> Result<u64, ModelError> {
    Ok(match &f.node {
        Node::Concept(name) => 1 + weight(registry.definition(name)?, registry)?,
        _ => {
            let mut total = 1;
            for c in f.children() {
                total += weight(c, registry)?;
            }
            total
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grant {
    pub name: String,
    pub href: Option<String>,
    pub tp_ref_nr: Option<i64>,
    pub categories: Vec<String>,
    pub valid_from: Option<NaiveDate>,
    pub valid_to: Option<NaiveDate>,
    pub description: String,
    pub conditions: Formula,
}

impl Grant {
    /// URL-safe identifier derived from the name.
    pub fn id(&self) -> String {
        slug(&self.name)
    }

    pub fn has_category(&self, category: &str) -> bool {
        let wanted = fold_case(category.trim_start_matches(':'));
        self.categories.iter().any(|c| fold_case(c) == wanted)
    }

    /// Serialises back to a `define-grant` form.
    pub fn to_sexpr(&self) -> SExpr {
        let mut meta = vec![SExpr::string(&self.name)];
        let entry = |key: &str, value: SExpr| SExpr::list(vec![SExpr::keyword(key), value]);
        if let Some(h) = &self.href {
            meta.push(entry("href", SExpr::string(h)));
        }
        if let Some(n) = self.tp_ref_nr {
            meta.push(entry(
                "transparenzportal-ref-nr",
                SExpr::integer(&n.to_string()).expect("integer literal"),
            ));
        }
        if !self.categories.is_empty() {
            let mut items = vec![SExpr::keyword("Fördergebiet")];
            items.extend(self.categories.iter().map(|c| SExpr::keyword(c)));
            meta.push(SExpr::list(items));
        }
        if let Some(d) = self.valid_from {
            meta.push(entry("gültig-von", SExpr::string(&d.to_string())));
        }
        if let Some(d) = self.valid_to {
            meta.push(entry("gültig-bis", SExpr::string(&d.to_string())));
        }
        let mut items =
            vec![SExpr::symbol("define-grant"), SExpr::list(meta), SExpr::string(&self.description)];
        if self.conditions.node != Node::Top {
            items.push(self.conditions.to_sexpr());
        }
        SExpr::list(items)
    }
}

pub fn slug(name: &str) -> String {
    let mut out = String::new();
    let mut dash = false;
    for c in fold_case(name).chars() {
        if c.is_alphanumeric() {
            out.push(c);
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Non-fatal findings while reading a grant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub at: Span,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.at, self.message)
    }
}

fn parse_date(e: &SExpr) -> Result<NaiveDate, ModelError> {
    let text = match e.as_atom() {
        Some(SAtom::Str(s)) => s.clone(),
        Some(SAtom::Symbol { package: None, name }) => name.clone(),
        _ => String::new(),
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d")
        .map_err(|_| ModelError::BadDate { at: e.span, text: e.to_string() })
}

fn single_value<'a>(key: &str, entry: &'a SExpr, rest: &'a [SExpr]) -> Result<&'a SExpr, ModelError> {
    match rest {
        [v] => Ok(v),
        _ => Err(ModelError::Malformed {
            at: entry.span,
            form: "grant metadata",
            detail: format!("`{key}` expects exactly one value"),
        }),
    }
}

/// Parses a `define-grant` form. Several top-level condition forms are
/// conjoined; no condition form means the grant is unconditional.
pub fn parse_grant(e: &SExpr, registry: &ConceptRegistry) -> Result<(Grant, Vec<Warning>), ModelError> {
    let malformed = |at: Span, detail: &str| ModelError::Malformed {
        at,
        form: "define-grant",
        detail: detail.to_owned(),
    };
    let items = e
        .as_list()
        .filter(|_| is_grant_form(e))
        .ok_or_else(|| malformed(e.span, "expected (define-grant (name metadata...) ...)"))?;
    let meta_form = items.get(1).ok_or_else(|| malformed(e.span, "missing metadata list"))?;
    let meta = meta_form.as_list().ok_or_else(|| malformed(meta_form.span, "metadata must be a list"))?;
    let name = meta
        .first()
        .and_then(SExpr::as_str)
        .filter(|n| !n.trim().is_empty())
        .ok_or_else(|| malformed(meta_form.span, "missing grant name"))?;
    let name = name.split_whitespace().collect::<Vec<_>>().join(" ");

    let mut warnings = Vec::new();
    let mut grant = Grant {
        name,
        href: None,
        tp_ref_nr: None,
        categories: Vec::new(),
        valid_from: None,
        valid_to: None,
        description: String::new(),
        conditions: Formula::top(),
    };

    for entry in &meta[1..] {
        let Some((key_form, rest)) = entry.as_list().and_then(|l| l.split_first()) else {
            warnings.push(Warning { at: entry.span, message: "ignored non-list metadata entry".into() });
            continue;
        };
        let key = match key_form.as_atom() {
            Some(SAtom::Keyword(k)) => k.clone(),
            Some(SAtom::Symbol { package: None, name }) => name.clone(),
            _ => {
                warnings
                    .push(Warning { at: entry.span, message: "ignored metadata entry without key".into() });
                continue;
            }
        };
        match fold_case(&key).as_str() {
            "href" => {
                let v = single_value(&key, entry, rest)?;
                grant.href =
                    Some(v.as_str().ok_or_else(|| malformed(v.span, "href must be a string"))?.to_owned());
            }
            "transparenzportal-ref-nr" => {
                let v = single_value(&key, entry, rest)?;
                let n = match v.as_atom() {
                    Some(SAtom::Integer(i)) => i64::try_from(i.value()).ok(),
                    Some(SAtom::Str(s)) => s.trim().parse().ok(),
                    _ => None,
                };
                grant.tp_ref_nr =
                    Some(n.ok_or_else(|| malformed(v.span, "reference number must be an integer"))?);
            }
            "fördergebiet" | "foerdergebiet" => {
                for v in rest {
                    let c = match v.as_atom() {
                        Some(SAtom::Keyword(k)) => k.clone(),
                        Some(SAtom::Symbol { package: None, name }) => name.clone(),
                        Some(SAtom::Str(s)) => s.clone(),
                        _ => return Err(malformed(v.span, "category must be a keyword")),
                    };
                    grant.categories.push(c);
                }
            }
            "gültig-von" | "gueltig-von" => {
                grant.valid_from = Some(parse_date(single_value(&key, entry, rest)?)?)
            }
            "gültig-bis" | "gueltig-bis" => {
                grant.valid_to = Some(parse_date(single_value(&key, entry, rest)?)?)
            }
            _ => warnings.push(Warning { at: entry.span, message: format!("unknown metadata key `{key}`") }),
        }
    }
    if let (Some(from), Some(to)) = (grant.valid_from, grant.valid_to) {
        if from > to {
            return Err(ModelError::DateOrder { name: grant.name, from, to });
        }
    }

    let mut rest = &items[2..];
    if let Some(desc) = rest.first().and_then(SExpr::as_str) {
        grant.description = desc.to_owned();
        rest = &rest[1..];
    }
    let conditions = rest.iter().map(|c| formula_from_sexpr(c, registry)).collect::<Result<Vec<_>, _>>()?;
    grant.conditions = junction(true, conditions, None);
    Ok((grant, warnings))
}
