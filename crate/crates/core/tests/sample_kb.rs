mod common;

use common::*;
use g4c_core::k3::{eval_formula, eval_trace, TruthValue3};
use g4c_core::model::{unfold, Code, Formula, Node, PredicateKind};
use g4c_core::prover::{validate_derivation, Rule, Sequent};
use g4c_core::render::{render_derivation_html, render_eval_trace_html};
use g4c_core::sexpr::{read_all, write_all};
use g4c_core::{
    consistency_report, evaluate_all, implication_matrix, prove, CompanyProfile, Filter, Verdict,
};

/// Strong Kleene tables written out cell by cell (rows/columns ⊥, u, ⊤) and
/// an evaluator that only looks values up in them.
mod table_oracle {
    use super::*;

    const NOT: [usize; 3] = [2, 1, 0];
    const AND: [[usize; 3]; 3] = [[0, 0, 0], [0, 1, 1], [0, 1, 2]];
    const OR: [[usize; 3]; 3] = [[0, 1, 2], [1, 1, 2], [2, 2, 2]];
    const IMPL: [[usize; 3]; 3] = [[2, 2, 2], [1, 1, 2], [0, 1, 2]];

    fn starts_with_chars(code: &str, prefix: &str) -> bool {
        let code: Vec<char> = code.to_lowercase().chars().collect();
        let prefix: Vec<char> = prefix.to_lowercase().chars().collect();
        prefix.len() <= code.len() && (0..prefix.len()).all(|i| code[i] == prefix[i])
    }

    fn atom(kind: PredicateKind, args: &[Code], p: &CompanyProfile) -> usize {
        let scan = |set: Option<Vec<&Code>>| match set {
            None => 1,
            Some(codes) => {
                let mut hit = false;
                for c in &codes {
                    for a in args {
                        if starts_with_chars(c.as_str(), a.as_str()) {
                            hit = true;
                        }
                    }
                }
                if hit {
                    2
                } else {
                    0
                }
            }
        };
        match kind {
            PredicateKind::BetriebsstandortIn => scan(p.sites.as_ref().map(|s| s.iter().collect())),
            PredicateKind::UnternehmenssitzIn => scan(p.seat.as_ref().map(|s| vec![s])),
            PredicateKind::OenaceIn => scan(p.oenace.as_ref().map(|s| s.iter().collect())),
            PredicateKind::RechtsformIn => match &p.legal_form {
                None => 1,
                Some(f) => {
                    if args.iter().any(|a| a.as_str().to_lowercase() == f.as_str().to_lowercase()) {
                        2
                    } else {
                        0
                    }
                }
            },
        }
    }

    /// Evaluates a concept-free formula.
    pub fn eval(f: &Formula, p: &CompanyProfile) -> TruthValue3 {
        fn go(f: &Formula, p: &CompanyProfile) -> usize {
            match &f.node {
                Node::Top => 2,
                Node::Bottom => 0,
                Node::Not(a) => NOT[go(a, p)],
                Node::And(fs) => fs.iter().fold(2, |acc, g| AND[acc][go(g, p)]),
                Node::Or(fs) => fs.iter().fold(0, |acc, g| OR[acc][go(g, p)]),
                Node::Impl(a, b) => IMPL[go(a, p)][go(b, p)],
                Node::Atom(a) => atom(a.predicate, &a.args, p),
                Node::Opaque(_) => 1,
                Node::Concept(_) => panic!("oracle expects an unfolded formula"),
            }
        }
        [TruthValue3::False, TruthValue3::Unknown, TruthValue3::True][go(f, p)]
    }
}

fn villach_profile() -> CompanyProfile {
    CompanyProfile {
        seat: Code::new("20201"),
        sites: Some(codes(&["20201"])),
        legal_form: Code::new("Einzelunternehmen"),
        oenace: None,
    }
}

#[test]
fn sample_kb_shape() {
    let kb = sample_kb();
    assert_eq!(kb.grants.len(), 3);
    assert!(kb.concepts.len() >= 2);
    assert!(kb.warnings.is_empty(), "{:?}", kb.warnings);
    assert_eq!(kb.source_files.len(), 3);
    assert!(kb.source_files.iter().all(|f| f.sha256.len() == 64));
}

#[test]
fn villach_grant_parses_with_metadata_and_comments() {
    let kb = sample_kb();
    let g = kb.grant(VILLACH).expect("Villach grant");
    assert_eq!(g.tp_ref_nr, Some(1052703));
    assert_eq!(g.categories, vec!["Umwelt"]);
    assert_eq!(g.valid_from.map(|d| d.to_string()).as_deref(), Some("2019-01-01"));
    assert_eq!(
        g.conditions,
        Formula::and(vec![
            Formula::concept("GV.AT:natürliche-oder-juristische-Person"),
            Formula::or(vec![
                Formula::atom(PredicateKind::UnternehmenssitzIn, &["20201"]),
                Formula::atom(PredicateKind::BetriebsstandortIn, &["20201"]),
            ]),
        ])
    );
    assert!(g
        .conditions
        .explanation
        .as_deref()
        .unwrap()
        .starts_with("Voraussetzungen\n\n- Förderungswerber"));
    let or = g.conditions.children()[1];
    assert!(or.explanation.as_deref().unwrap().contains("Stadtgebiet von Villach"));
}

#[test]
fn villach_read_write_round_trip() {
    let text = std::fs::read_to_string(sample_dir().join("villach.lisp")).unwrap();
    let forms = read_all(&text).unwrap();
    assert_eq!(forms.len(), 1);
    assert!(forms[0].as_list().unwrap()[0].is_symbol_named("define-grant"));
    assert_eq!(read_all(&write_all(&forms)).unwrap(), forms);
}

#[test]
fn every_sample_file_round_trips() {
    for entry in std::fs::read_dir(sample_dir()).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let forms = read_all(&text).unwrap();
        assert_eq!(read_all(&write_all(&forms)).unwrap(), forms);
    }
}

#[test]
fn grants_round_trip_through_surface_syntax() {
    let kb = sample_kb();
    for g in &kb.grants {
        let text = g.to_sexpr().to_string();
        let (again, warnings) =
            g4c_core::model::parse_grant(&read_all(&text).unwrap()[0], &kb.concepts).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(&again, g);
    }
}

#[test]
fn person_concept_unfolds() {
    let kb = sample_kb();
    let u = unfold(&Formula::concept("gv.at:natürliche-oder-juristische-Person"), &kb.concepts).unwrap();
    assert_eq!(
        u,
        Formula::or(vec![
            Formula::atom(PredicateKind::RechtsformIn, &["Einzelunternehmen"]),
            Formula::atom(
                PredicateKind::RechtsformIn,
                &["GmbH", "AG", "Genossenschaft", "Verein", "Privatstiftung"]
            ),
        ])
    );
}

#[test]
fn villach_evaluation_matches_table_oracle() {
    let kb = sample_kb();
    let g = kb.grant(VILLACH).unwrap();
    let unfolded = unfold(&g.conditions, &kb.concepts).unwrap();
    let cases = [
        (villach_profile(), TruthValue3::True),
        (
            CompanyProfile {
                seat: Code::new("10101"),
                sites: Some(codes(&[])),
                legal_form: Code::new("Einzelunternehmen"),
                oenace: Some(codes(&[])),
            },
            TruthValue3::False,
        ),
        (
            CompanyProfile {
                seat: None,
                sites: None,
                legal_form: Code::new("Einzelunternehmen"),
                oenace: None,
            },
            TruthValue3::Unknown,
        ),
    ];
    for (p, expected) in cases {
        assert_eq!(table_oracle::eval(&unfolded, &p), expected);
        assert_eq!(eval_formula(&g.conditions, &p, &kb.concepts).unwrap(), expected);
    }
}

#[test]
fn villach_trace_carries_explanations() {
    let kb = sample_kb();
    let g = kb.grant(VILLACH).unwrap();
    let t = eval_trace(&g.conditions, &villach_profile(), &kb.concepts).unwrap();
    assert_eq!(t.value, TruthValue3::True);
    assert_eq!(t.label, "and");
    let or = &t.children[1];
    assert_eq!(or.label, "or");
    assert!(or.explanation.as_deref().unwrap().contains("Stadtgebiet von Villach"));
    let html = render_eval_trace_html(&t);
    assert!(html.contains("Stadtgebiet von Villach"));
    assert!(html.starts_with("<div class=\"g4c-trace true\">"));
}

#[test]
fn evaluate_all_orders_buckets() {
    let kb = sample_kb();
    let results = evaluate_all(&kb, &villach_profile(), &Filter::default());
    assert_eq!(results[0].grant, VILLACH);
    assert_eq!(results[0].verdict, Verdict::Satisfied);
    let verdicts: Vec<Verdict> = results.iter().map(|r| r.verdict).collect();
    let mut sorted = verdicts.clone();
    sorted.sort();
    assert_eq!(verdicts, sorted);

    let unknown = evaluate_all(&kb, &CompanyProfile::unknown(), &Filter::default());
    assert!(unknown.iter().all(|r| r.verdict == Verdict::Undecided));

    let umwelt = evaluate_all(
        &kb,
        &CompanyProfile::unknown(),
        &Filter { category: Some("Umwelt".into()), ..Default::default() },
    );
    assert_eq!(umwelt.len(), 1);
    assert_eq!(umwelt[0].grant, VILLACH);
}

#[test]
fn steiermark_implication() {
    let kb = sample_kb();
    let report = implication_matrix(&kb);
    let edge =
        report.edges.iter().find(|e| e.from == BERATUNG && e.to == NACHHALTIGKEIT).expect("K1 implies K2");
    assert_eq!(edge.derivation.rule, Rule::AndL);
    assert!(validate_derivation(&edge.derivation, &kb.concepts));
    assert!(!report.edges.iter().any(|e| e.from == NACHHALTIGKEIT && e.to == BERATUNG));
    assert!(report.duplicate_conditions.is_empty());

    let html = render_derivation_html(&edge.derivation);
    assert!(html.starts_with("<div class=\"g4c-node\" data-rule=\"andL\">"));
    assert_eq!(html.matches("<div").count(), edge.derivation.node_count());
}

#[test]
fn html_nesting_depth_is_derivation_height() {
    let kb = sample_kb();
    let report = implication_matrix(&kb);
    for edge in &report.edges {
        let html = render_derivation_html(&edge.derivation);
        let mut depth = 0usize;
        let mut max = 0usize;
        let mut rest = html.as_str();
        while let Some(i) = rest.find('<') {
            rest = &rest[i..];
            if rest.starts_with("<div") {
                depth += 1;
                max = max.max(depth);
            } else if rest.starts_with("</div>") {
                depth -= 1;
            }
            rest = &rest[1..];
        }
        assert_eq!(depth, 0);
        assert_eq!(max, edge.derivation.height());
    }
}

#[test]
fn sample_grants_are_consistent() {
    let kb = sample_kb();
    for entry in consistency_report(&kb) {
        assert!(entry.consistent, "{} flagged inconsistent", entry.grant);
    }
    // a profile satisfying the Villach grant witnesses its consistency
    let g = kb.grant(VILLACH).unwrap();
    let complete = CompanyProfile { oenace: Some(codes(&[])), ..villach_profile() };
    assert_eq!(eval_formula(&g.conditions, &complete, &kb.concepts).unwrap(), TruthValue3::True);
}

#[test]
fn weaker_copy_gets_edges_but_duplicate_does_not() {
    let mut sources: Vec<(std::path::PathBuf, String)> = std::fs::read_dir(sample_dir())
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.clone(), std::fs::read_to_string(p).unwrap())
        })
        .collect();
    sources.push((
        "extra.lisp".into(),
        r#"(define-grant ("Copy") "same conditions as Nachhaltigkeit"
             (OR (Unternehmenssitz-in "Land-Stmk") (Betriebsstandort-in "Land-Stmk")))
           (define-grant ("Wider") "widened code list"
             (OR (Unternehmenssitz-in "Land-Stmk" "Land-Ktn") (Betriebsstandort-in "Land-Stmk" "Land-Ktn")))"#
            .into(),
    ));
    let kb = g4c_core::KnowledgeBase::from_sources(sources).unwrap();
    let report = implication_matrix(&kb);
    assert_eq!(report.duplicate_conditions.len(), 1);
    let has = |a: &str, b: &str| report.edges.iter().any(|e| e.from == a && e.to == b);
    assert!(!has("Copy", NACHHALTIGKEIT) && !has(NACHHALTIGKEIT, "Copy"));
    assert!(has("Copy", "Wider"));
    assert!(has(NACHHALTIGKEIT, "Wider"));
    assert!(has(BERATUNG, "Wider"));
    assert!(!has("Wider", "Copy"));
    // transitivity where tested: Beratung → Nachhaltigkeit → Wider and Beratung → Wider
    assert!(has(BERATUNG, NACHHALTIGKEIT) && has(NACHHALTIGKEIT, "Wider"));
    for e in &report.edges {
        assert!(validate_derivation(&e.derivation, &kb.concepts));
    }
}

#[test]
fn reversed_steiermark_pair_is_not_derivable_on_the_skeleton() {
    // Replace each distinct atom of the unfolded conditions with a fresh
    // proposition; the ground sequents relate none of them except identical
    // atoms, so the propositional oracle decides the reversed query.
    let kb = sample_kb();
    let k1 = unfold(&kb.grant(BERATUNG).unwrap().conditions, &kb.concepts).unwrap();
    let k2 = unfold(&kb.grant(NACHHALTIGKEIT).unwrap().conditions, &kb.concepts).unwrap();
    let mut atoms = Vec::new();
    for f in [&k1, &k2] {
        f.walk(&mut |g| {
            if let Node::Atom(a) = &g.node {
                if !atoms.contains(a) {
                    atoms.push(a.clone());
                }
            }
        });
    }
    fn skeleton(f: &Formula, atoms: &[g4c_core::model::Atom]) -> Formula {
        match &f.node {
            Node::Atom(a) => Formula::opaque(&format!("p{}", atoms.iter().position(|b| b == a).unwrap())),
            Node::Not(a) => Formula::not(skeleton(a, atoms)),
            Node::And(fs) => Formula::and(fs.iter().map(|g| skeleton(g, atoms)).collect()),
            Node::Or(fs) => Formula::or(fs.iter().map(|g| skeleton(g, atoms)).collect()),
            Node::Impl(a, b) => Formula::implies(skeleton(a, atoms), skeleton(b, atoms)),
            _ => f.clone(),
        }
    }
    let reversed = Sequent::new(vec![skeleton(&k2, &atoms)], vec![skeleton(&k1, &atoms)]);
    assert_eq!(g4c_core::entails_bruteforce(&reversed), Ok(false));
    let real = Sequent::new(
        vec![kb.grant(NACHHALTIGKEIT).unwrap().conditions.clone()],
        vec![kb.grant(BERATUNG).unwrap().conditions.clone()],
    );
    assert!(prove(&real, &kb.concepts).unwrap().is_none());
}
