//! HTML and plain-text renderings of derivations and evaluation traces.
//!
//! HTML output is a fragment of nested `<div>`s carrying class names only;
//! styling comes from [`STYLESHEET`].

use std::fmt::Write as _;

use crate::k3::EvalTrace;
use crate::pretty;
use crate::prover::{ground_pair, AxiomKind, Derivation, Rule, Sequent, Side};

pub const STYLESHEET: &str = include_str!("../assets/g4c.css");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedDoc {
    pub html: String,
    pub plain: String,
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            other => out.push(other),
        }
    }
    out
}

fn principal_text(d: &Derivation) -> String {
    d.principal.as_ref().map(|p| pretty::formula(&p.formula)).unwrap_or_default()
}

fn write_derivation_html(d: &Derivation, out: &mut String) {
    let _ = write!(
        out,
        "<div class=\"g4c-node\" data-rule=\"{}\"><span class=\"g4c-sequent\">{}</span><span class=\"g4c-rule\">{}</span>",
        d.rule.name(),
        escape_html(&d.conclusion.to_string()),
        d.rule.name(),
    );
    if let Some(p) = &d.principal {
        let side = match p.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        let _ = write!(
            out,
            "<span class=\"g4c-principal\" data-side=\"{side}\">{}</span>",
            escape_html(&principal_text(d))
        );
    }
    for p in &d.premises {
        write_derivation_html(p, out);
    }
    out.push_str("</div>");
}

/// One `g4c-node` div per derivation node, children nested inside their
/// parent, so the div nesting depth equals the derivation height.
pub fn render_derivation_html(d: &Derivation) -> String {
    let mut out = String::new();
    write_derivation_html(d, &mut out);
    out
}

fn show(s: &Sequent) -> String {
    format!("“{s}”")
}

fn sentence(d: &Derivation) -> String {
    let goal = show(&d.conclusion);
    match d.rule {
        Rule::Axiom(AxiomKind::Identity) => {
            format!("{goal} holds immediately since the assumption and goal coincide.")
        }
        Rule::Axiom(AxiomKind::BottomLeft) => {
            format!("{goal} holds immediately since the assumption bottom is contradictory.")
        }
        Rule::Axiom(AxiomKind::TopRight) => {
            format!("{goal} holds immediately since the goal top is trivially true.")
        }
        Rule::Axiom(AxiomKind::Ground(_)) => match ground_pair(&d.conclusion) {
            Some((l, r)) if l.predicate.uses_prefix() => format!(
                "{goal} holds immediately since every code of {} lies within a code of {}.",
                pretty::formula(&crate::model::Node::Atom(l.clone()).into()),
                pretty::formula(&crate::model::Node::Atom(r.clone()).into()),
            ),
            Some((l, r)) => format!(
                "{goal} holds immediately since every legal form of {} is listed in {}.",
                pretty::formula(&crate::model::Node::Atom(l.clone()).into()),
                pretty::formula(&crate::model::Node::Atom(r.clone()).into()),
            ),
            None => format!("{goal} holds immediately by a ground sequent."),
        },
        rule => {
            let premises: Vec<String> = d.premises.iter().map(|p| show(&p.conclusion)).collect();
            let why = match rule {
                Rule::DefL | Rule::DefR => format!("unfolding the definition of {}", principal_text(d)),
                _ => format!("decomposing {} ({})", principal_text(d), rule.name()),
            };
            format!("To show {goal}, it suffices, {why}, to show {}.", premises.join(" and "))
        }
    }
}

fn write_text(d: &Derivation, depth: usize, out: &mut String) {
    out.push_str(&"  ".repeat(depth));
    out.push_str(&sentence(d));
    out.push('\n');
    for p in &d.premises {
        write_text(p, depth + 1, out);
    }
}

/// One indented sentence per derivation node.
pub fn render_derivation_text(d: &Derivation) -> String {
    let mut out = String::new();
    write_text(d, 0, &mut out);
    out
}

pub fn render_derivation(d: &Derivation) -> RenderedDoc {
    RenderedDoc { html: render_derivation_html(d), plain: render_derivation_text(d) }
}

fn write_trace_html(t: &EvalTrace, out: &mut String) {
    let _ = write!(
        out,
        "<div class=\"g4c-trace {}\"><span class=\"g4c-label\">{}</span>",
        t.value.as_str(),
        escape_html(&t.label)
    );
    if let Some(e) = &t.explanation {
        let _ = write!(out, "<p class=\"g4c-explanation\">{}</p>", escape_html(e));
    }
    for c in &t.children {
        write_trace_html(c, out);
    }
    out.push_str("</div>");
}

/// Nested divs classed `true`, `false` or `unknown`, with each node's
/// explanation.
pub fn render_eval_trace_html(t: &EvalTrace) -> String {
    let mut out = String::new();
    write_trace_html(t, &mut out);
    out
}
