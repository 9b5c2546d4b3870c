#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use g4c_core::model::{Code, Formula, PredicateKind};
use g4c_core::{CompanyProfile, KnowledgeBase};
use proptest::prelude::*;

pub const VILLACH: &str =
    "Umweltschutz- und Energieeffizienzförderung - Förderung sonstiger Energieeffizienzmaßnahmen Villach";
pub const BERATUNG: &str =
    "Per-Bundesland/Steiermark_Beratungskostenzuschuss-Für-Gastronomie-/Hotelleriebetriebe-In-Der-Steiermark";
pub const NACHHALTIGKEIT: &str =
    "Per-Bundesland/Steiermark_Förderung-Zur-Wirtschaftsinitiative-Nachhaltigkeit-Steiermark";

pub fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../kb/sample")
}

pub fn sample_kb() -> KnowledgeBase {
    g4c_core::load_kb(sample_dir()).expect("sample knowledge base loads")
}

pub fn shared_kb() -> &'static KnowledgeBase {
    static KB: std::sync::LazyLock<KnowledgeBase> = std::sync::LazyLock::new(sample_kb);
    &KB
}

pub fn codes(xs: &[&str]) -> BTreeSet<Code> {
    xs.iter().map(|x| Code::new(*x).unwrap()).collect()
}

pub const LEGAL_FORMS: [&str; 5] = ["Einzelunternehmen", "GmbH", "Verein", "Offene-Gesellschaft", "KG"];

pub fn digit_code() -> impl Strategy<Value = String> {
    "[12][0-2]{0,3}"
}

pub fn code_list(kind: PredicateKind) -> BoxedStrategy<Vec<String>> {
    if kind == PredicateKind::RechtsformIn {
        prop::collection::vec(prop::sample::select(LEGAL_FORMS.to_vec()).prop_map(str::to_owned), 0..3)
            .boxed()
    } else {
        prop::collection::vec(digit_code(), 0..3).boxed()
    }
}

pub fn atom() -> impl Strategy<Value = Formula> {
    prop::sample::select(PredicateKind::ALL.to_vec()).prop_flat_map(|kind| {
        code_list(kind).prop_map(move |args| {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            Formula::atom(kind, &refs)
        })
    })
}

pub fn opaque() -> impl Strategy<Value = Formula> {
    prop::sample::select(vec!["A", "B", "C", "D", "E"]).prop_map(Formula::opaque)
}

fn grow(leaf: BoxedStrategy<Formula>, depth: u32) -> BoxedStrategy<Formula> {
    leaf.prop_recursive(depth, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::and),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::or),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::implies(a, b)),
        ]
    })
    .boxed()
}

/// Formulas over five opaque atoms and the constants.
pub fn propositional(depth: u32) -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![
        8 => opaque(),
        1 => Just(Formula::top()),
        1 => Just(Formula::bottom()),
    ];
    grow(leaf.boxed(), depth)
}

/// Formulas over the code predicates and the sample concepts.
pub fn grant_formula(depth: u32, with_opaque: bool) -> BoxedStrategy<Formula> {
    let concepts = prop::sample::select(vec![
        "gv.at:Ist-Juristische-Person",
        "gv.at:natürliche-oder-juristische-Person",
    ])
    .prop_map(Formula::concept);
    let leaf = if with_opaque {
        prop_oneof![6 => atom(), 2 => concepts, 1 => opaque(), 1 => Just(Formula::top())].boxed()
    } else {
        prop_oneof![6 => atom(), 2 => concepts, 1 => Just(Formula::bottom())].boxed()
    };
    grow(leaf, depth)
}

fn code_set() -> impl Strategy<Value = BTreeSet<Code>> {
    prop::collection::btree_set(digit_code(), 0..3)
        .prop_map(|s| s.into_iter().map(|c| Code::new(c).unwrap()).collect())
}

fn legal_form() -> impl Strategy<Value = Code> {
    prop::sample::select(LEGAL_FORMS.to_vec()).prop_map(|f| Code::new(f).unwrap())
}

pub fn complete_profile() -> impl Strategy<Value = CompanyProfile> {
    (digit_code(), code_set(), legal_form(), code_set()).prop_map(|(seat, sites, form, oenace)| {
        CompanyProfile {
            seat: Code::new(seat),
            sites: Some(sites),
            legal_form: Some(form),
            oenace: Some(oenace),
        }
    })
}

pub fn profile() -> impl Strategy<Value = CompanyProfile> {
    (
        prop::option::of(digit_code()),
        prop::option::of(code_set()),
        prop::option::of(legal_form()),
        prop::option::of(code_set()),
    )
        .prop_map(|(seat, sites, legal_form, oenace)| CompanyProfile {
            seat: seat.and_then(Code::new),
            sites,
            legal_form,
            oenace,
        })
}

/// A profile and a refinement of it (some unknown fields filled in).
pub fn refined_pair() -> impl Strategy<Value = (CompanyProfile, CompanyProfile)> {
    (profile(), complete_profile(), any::<[bool; 4]>()).prop_map(|(base, fill, pick)| {
        let mut refined = base.clone();
        if pick[0] && refined.seat.is_none() {
            refined.seat = fill.seat;
        }
        if pick[1] && refined.sites.is_none() {
            refined.sites = fill.sites;
        }
        if pick[2] && refined.legal_form.is_none() {
            refined.legal_form = fill.legal_form;
        }
        if pick[3] && refined.oenace.is_none() {
            refined.oenace = fill.oenace;
        }
        (base, refined)
    })
}
