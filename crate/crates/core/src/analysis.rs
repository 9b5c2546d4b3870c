//! Whole knowledge-base operations: loading, three-bucket evaluation of all
//! grants, pairwise implication and consistency checks.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::k3::{eval_trace, CompanyProfile, EvalTrace, TruthValue3};
use crate::model::{
    check_acyclic, is_concept_form, is_grant_form, parse_concept, parse_grant, AcyclicError, ConceptRegistry,
    Grant, ModelError, Node, QualifiedName,
};
use crate::prover::{Derivation, Prover, Sequent};
use crate::sexpr::{read_all, ReadError, SExpr};

pub const KB_EXTENSIONS: [&str; 2] = ["lisp", "g4c"];

#[derive(Debug, Clone, Serialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct KbWarning {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for KbWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub grants: Vec<Grant>,
    pub concepts: ConceptRegistry,
    pub source_files: Vec<SourceFile>,
    pub warnings: Vec<KbWarning>,
}

#[derive(Debug, Error)]
pub enum FileErrorKind {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
#[error("{}: {kind}", path.display())]
pub struct FileError {
    pub path: PathBuf,
    pub kind: FileErrorKind,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{} file error(s):\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Syntax(Vec<FileError>),
    #[error("concept `{name}` defined more than once ({})", path.display())]
    DuplicateConcept { name: QualifiedName, path: PathBuf },
    #[error("grant `{name}` defined more than once ({} and {})", first.display(), second.display())]
    DuplicateGrant { name: String, first: PathBuf, second: PathBuf },
    #[error(transparent)]
    Concepts(#[from] AcyclicError),
}

impl LoadError {
    /// Errors in the text of a file, as opposed to errors in the
    /// knowledge base as a whole.
    pub fn is_syntax(&self) -> bool {
        matches!(self, LoadError::Io { .. } | LoadError::Syntax(_))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), LoadError> {
    let entries = std::fs::read_dir(dir).map_err(|source| LoadError::Io { path: dir.into(), source })?;
    for entry in entries {
        let path = entry.map_err(|source| LoadError::Io { path: dir.into(), source })?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.extension().and_then(|e| e.to_str()).is_some_and(|e| KB_EXTENSIONS.contains(&e)) {
            out.push(path);
        }
    }
    Ok(())
}

/// Loads every `.lisp`/`.g4c` file below `dir`.
pub fn load_kb(dir: impl AsRef<Path>) -> Result<KnowledgeBase, LoadError> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut sources = Vec::with_capacity(files.len());
    for path in files {
        let text =
            std::fs::read_to_string(&path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
        let rel = path.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(path);
        sources.push((rel, text));
    }
    KnowledgeBase::from_sources(sources)
}

impl KnowledgeBase {
    /// Builds a knowledge base from `(path, contents)` pairs: concepts from
    /// all files first, then grants.
    pub fn from_sources(
        sources: impl IntoIterator<Item = (PathBuf, String)>,
    ) -> Result<KnowledgeBase, LoadError> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let mut source_files = Vec::new();
        let mut concept_forms: Vec<(PathBuf, SExpr)> = Vec::new();
        let mut grant_forms: Vec<(PathBuf, SExpr)> = Vec::new();

        for (path, text) in sources {
            source_files.push(SourceFile {
                path: path.clone(),
                sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
            });
            match read_all(&text) {
                Ok(forms) => {
                    for form in forms {
                        if is_concept_form(&form) {
                            concept_forms.push((path.clone(), form));
                        } else if is_grant_form(&form) {
                            grant_forms.push((path.clone(), form));
                        } else {
                            warnings.push(KbWarning {
                                path: path.clone(),
                                message: format!("{}: ignored top-level form", form.span),
                            });
                        }
                    }
                }
                Err(e) => errors.push(FileError { path, kind: e.into() }),
            }
        }

        let mut concepts = Vec::new();
        let mut concept_paths = HashMap::new();
        for (path, form) in &concept_forms {
            match parse_concept(form) {
                Ok(c) => {
                    if concept_paths.insert(c.name.clone(), path.clone()).is_some() {
                        return Err(LoadError::DuplicateConcept { name: c.name, path: path.clone() });
                    }
                    concepts.push(c);
                }
                Err(e) => errors.push(FileError { path: path.clone(), kind: e.into() }),
            }
        }
        if !errors.is_empty() {
            return Err(LoadError::Syntax(errors));
        }
        let registry = ConceptRegistry::from_concepts(concepts).map_err(|e| match e {
            ModelError::DuplicateConcept(name) => {
                let path = concept_paths.get(&name).cloned().unwrap_or_default();
                LoadError::DuplicateConcept { name, path }
            }
            other => LoadError::Syntax(vec![FileError { path: PathBuf::new(), kind: other.into() }]),
        })?;
        check_acyclic(&registry)?;
        for c in registry.iter() {
            let path = &concept_paths[&c.name];
            warn_opaque(&c.definition, path, &format!("concept `{}`", c.name), &mut warnings);
        }

        let mut grants: Vec<Grant> = Vec::new();
        let mut grant_paths: HashMap<String, PathBuf> = HashMap::new();
        for (path, form) in &grant_forms {
            match parse_grant(form, &registry) {
                Ok((grant, ws)) => {
                    warnings.extend(ws.into_iter().map(|w| KbWarning {
                        path: path.clone(),
                        message: format!("grant `{}`: {w}", grant.name),
                    }));
                    warn_opaque(&grant.conditions, path, &format!("grant `{}`", grant.name), &mut warnings);
                    if let Some(first) = grant_paths.insert(grant.id(), path.clone()) {
                        return Err(LoadError::DuplicateGrant {
                            name: grant.name,
                            first,
                            second: path.clone(),
                        });
                    }
                    grants.push(grant);
                }
                Err(e) => errors.push(FileError { path: path.clone(), kind: e.into() }),
            }
        }
        if !errors.is_empty() {
            return Err(LoadError::Syntax(errors));
        }
        Ok(KnowledgeBase { grants, concepts: registry, source_files, warnings })
    }

    /// Looks a grant up by id or by exact (case-insensitive) name.
    pub fn grant(&self, key: &str) -> Option<&Grant> {
        let folded = crate::sexpr::fold_case(key.trim());
        self.grants
            .iter()
            .find(|g| g.id() == folded)
            .or_else(|| self.grants.iter().find(|g| crate::sexpr::fold_case(&g.name) == folded))
    }
}

fn warn_opaque(f: &crate::model::Formula, path: &Path, owner: &str, out: &mut Vec<KbWarning>) {
    f.walk(&mut |g| {
        if let Node::Opaque(o) = &g.node {
            let what = if o.name.package().is_some() && o.args.is_empty() {
                "unregistered concept"
            } else {
                "unknown predicate"
            };
            out.push(KbWarning {
                path: path.to_path_buf(),
                message: format!("{owner}: {what} `{}` evaluates to unknown", o.name),
            });
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Undecided,
    NotSatisfied,
}

impl From<TruthValue3> for Verdict {
    fn from(v: TruthValue3) -> Self {
        match v {
            TruthValue3::True => Verdict::Satisfied,
            TruthValue3::Unknown => Verdict::Undecided,
            TruthValue3::False => Verdict::NotSatisfied,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Undecided => "undecided",
            Verdict::NotSatisfied => "not satisfied",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrantResult {
    pub id: String,
    pub grant: String,
    pub verdict: Verdict,
    pub categories: Vec<String>,
    pub valid_from: Option<NaiveDate>,
    pub valid_to: Option<NaiveDate>,
    pub trace: EvalTrace,
}

/// Inclusive application-date window; open ends are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    #[serde(default)]
    pub from: Option<NaiveDate>,
    #[serde(default)]
    pub to: Option<NaiveDate>,
}

impl DateWindow {
    /// Whether the grant's validity period overlaps the window. Grants
    /// without dates always pass.
    pub fn admits(&self, grant: &Grant) -> bool {
        let starts_in_time = match (grant.valid_from, self.to) {
            (Some(start), Some(end)) => start <= end,
            _ => true,
        };
        let ends_in_time = match (grant.valid_to, self.from) {
            (Some(end), Some(start)) => end >= start,
            _ => true,
        };
        starts_in_time && ends_in_time
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default, flatten)]
    pub window: DateWindow,
}

impl Filter {
    pub fn admits(&self, grant: &Grant) -> bool {
        self.category.as_deref().is_none_or(|c| grant.has_category(c)) && self.window.admits(grant)
    }
}

/// Evaluates every admitted grant; satisfied first, then undecided, then not
/// satisfied, keeping knowledge-base order within a bucket.
pub fn evaluate_all(kb: &KnowledgeBase, profile: &CompanyProfile, filter: &Filter) -> Vec<GrantResult> {
    let mut results: Vec<GrantResult> = kb
        .grants
        .iter()
        .filter(|g| filter.admits(g))
        .map(|g| {
            let trace = eval_trace(&g.conditions, profile, &kb.concepts)
                .expect("concept references are checked when the knowledge base is loaded");
            GrantResult {
                id: g.id(),
                grant: g.name.clone(),
                verdict: trace.value.into(),
                categories: g.categories.clone(),
                valid_from: g.valid_from,
                valid_to: g.valid_to,
                trace,
            }
        })
        .collect();
    results.sort_by_key(|r| r.verdict);
    results
}

#[derive(Debug, Clone, Serialize)]
pub struct ImplicationEdge {
    pub from: String,
    pub to: String,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImplicationReport {
    pub edges: Vec<ImplicationEdge>,
    /// Pairs of distinct grants whose conditions are structurally identical.
    pub duplicate_conditions: Vec<(String, String)>,
}

/// Tests `conditions(g1) ⇒ conditions(g2)` for every ordered pair of grants
/// with different conditions.
pub fn implication_matrix(kb: &KnowledgeBase) -> ImplicationReport {
    let mut prover = Prover::new(&kb.concepts);
    let mut report = ImplicationReport::default();
    for (i, g1) in kb.grants.iter().enumerate() {
        for (j, g2) in kb.grants.iter().enumerate() {
            if i == j {
                continue;
            }
            if g1.conditions == g2.conditions {
                if i < j {
                    report.duplicate_conditions.push((g1.name.clone(), g2.name.clone()));
                }
                continue;
            }
            let sequent = Sequent::new(vec![g1.conditions.clone()], vec![g2.conditions.clone()]);
            if let Some(derivation) = prover
                .prove(&sequent)
                .expect("concept references are checked when the knowledge base is loaded")
            {
                report.edges.push(ImplicationEdge { from: g1.name.clone(), to: g2.name.clone(), derivation });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyEntry {
    pub grant: String,
    pub consistent: bool,
    pub derivation: Option<Derivation>,
}

/// A grant is inconsistent iff `conditions ⇒` (empty right side) is derivable.
pub fn consistency_report(kb: &KnowledgeBase) -> Vec<ConsistencyEntry> {
    let mut prover = Prover::new(&kb.concepts);
    kb.grants
        .iter()
        .map(|g| {
            let derivation = prover
                .prove(&Sequent::new(vec![g.conditions.clone()], vec![]))
                .expect("concept references are checked when the knowledge base is loaded");
            ConsistencyEntry { grant: g.name.clone(), consistent: derivation.is_none(), derivation }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb(files: &[(&str, &str)]) -> Result<KnowledgeBase, LoadError> {
        KnowledgeBase::from_sources(files.iter().map(|(p, t)| (PathBuf::from(p), t.to_string())))
    }

    #[test]
    fn empty_kb() {
        let k = kb(&[]).unwrap();
        assert!(k.grants.is_empty());
        assert!(implication_matrix(&k).edges.is_empty());
    }

    #[test]
    fn cycle_is_rejected() {
        let err = kb(&[("c.lisp", "(def-concept a (b)) (def-concept b (a))")]).unwrap_err();
        assert!(matches!(err, LoadError::Concepts(AcyclicError::Cycle(_))));
        assert!(!err.is_syntax());
        assert!(err.to_string().contains("a -> b -> a"));
    }

    #[test]
    fn syntax_errors_name_the_file() {
        let err = kb(&[("bad.lisp", "(define-grant (\"x\")")]).unwrap_err();
        assert!(err.is_syntax());
        assert!(err.to_string().contains("bad.lisp"));
    }

    #[test]
    fn duplicate_grants() {
        let g = r#"(define-grant ("Same") "d")"#;
        assert!(matches!(kb(&[("a.lisp", g), ("b.lisp", g)]), Err(LoadError::DuplicateGrant { .. })));
    }

    #[test]
    fn warnings_collected() {
        let k = kb(&[("a.lisp", r#"(define-grant ("G" (:neu 1)) "d" (x:y)) (whatever)"#)]).unwrap();
        let all: Vec<String> = k.warnings.iter().map(|w| w.message.clone()).collect();
        assert_eq!(all.len(), 3, "{all:?}");
        assert!(all.iter().any(|m| m.contains("unregistered concept `x:y`")));
    }

    #[test]
    fn buckets_and_filters() {
        let k = kb(&[(
            "g.lisp",
            r#"(define-grant ("No" (:Fördergebiet :Umwelt)) "d" bottom)
               (define-grant ("Maybe" (gültig-von "2020-01-01") (gültig-bis "2020-12-31")) "d" (x))
               (define-grant ("Yes" (:Fördergebiet :Umwelt :Energie)) "d" top)"#,
        )])
        .unwrap();
        let p = CompanyProfile::unknown();
        let names =
            |f: &Filter| -> Vec<String> { evaluate_all(&k, &p, f).into_iter().map(|r| r.grant).collect() };
        assert_eq!(names(&Filter::default()), vec!["Yes", "Maybe", "No"]);
        assert_eq!(
            names(&Filter { category: Some("umwelt".into()), ..Default::default() }),
            vec!["Yes", "No"]
        );
        let in_2021 = DateWindow { from: NaiveDate::from_ymd_opt(2021, 1, 1), to: None };
        assert_eq!(names(&Filter { category: None, window: in_2021 }), vec!["Yes", "No"]);
        let mid_2020 =
            DateWindow { from: NaiveDate::from_ymd_opt(2020, 6, 1), to: NaiveDate::from_ymd_opt(2020, 6, 1) };
        assert_eq!(names(&Filter { category: None, window: mid_2020 }), vec!["Yes", "Maybe", "No"]);
    }

    #[test]
    fn consistency() {
        let k = kb(&[(
            "g.lisp",
            r#"(define-grant ("Contradiction") "d" (and a (not a)))
               (define-grant ("Bottom") "d" bottom)
               (define-grant ("Fine") "d" (Rechtsform-in :GmbH))"#,
        )])
        .unwrap();
        let r = consistency_report(&k);
        assert!(!r[0].consistent && r[0].derivation.is_some());
        assert!(!r[1].consistent);
        assert_eq!(r[1].derivation.as_ref().unwrap().rule.name(), "bottomL");
        assert!(r[2].consistent && r[2].derivation.is_none());
    }

    #[test]
    fn duplicates_are_listed_not_edges() {
        let k = kb(&[(
            "g.lisp",
            r#"(define-grant ("A") "d" (Betriebsstandort-in 20201))
               (define-grant ("A2") "d" (Betriebsstandort-in 20201))
               (define-grant ("Wide") "d" (Betriebsstandort-in 2))"#,
        )])
        .unwrap();
        let r = implication_matrix(&k);
        assert_eq!(r.duplicate_conditions, vec![("A".to_string(), "A2".to_string())]);
        let edges: Vec<(&str, &str)> = r.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
        assert_eq!(edges, vec![("A", "Wide"), ("A2", "Wide")]);
    }

    #[test]
    fn grant_lookup() {
        let k = kb(&[("g.lisp", r#"(define-grant ("Förderung X") "d")"#)]).unwrap();
        assert!(k.grant("förderung-x").is_some());
        assert!(k.grant("FÖRDERUNG X").is_some());
        assert!(k.grant("nope").is_none());
    }
}
