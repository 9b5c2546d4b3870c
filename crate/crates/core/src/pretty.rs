//! Term-style printing of formulas: `at(oenace_in(["55"]))`, `df("…")`,
//! infix `and`/`or`.

use serde::{Serialize, Serializer};

use crate::model::{Code, Formula, Node};

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&formula(self))
    }
}

fn code_list(codes: &[Code]) -> String {
    let items: Vec<String> = codes.iter().map(|c| format!("{:?}", c.as_str())).collect();
    format!("[{}]", items.join(","))
}

fn write(f: &Formula, out: &mut String, nested: bool) {
    match &f.node {
        Node::Top => out.push_str("top"),
        Node::Bottom => out.push_str("bottom"),
        Node::Not(a) => {
            out.push_str("neg(");
            write(a, out, false);
            out.push(')');
        }
        Node::And(fs) | Node::Or(fs) => {
            let op = if matches!(f.node, Node::And(_)) { " and " } else { " or " };
            if nested {
                out.push('(');
            }
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(op);
                }
                write(g, out, true);
            }
            if nested {
                out.push(')');
            }
        }
        Node::Impl(a, b) => {
            if nested {
                out.push('(');
            }
            write(a, out, true);
            out.push_str(" -> ");
            write(b, out, true);
            if nested {
                out.push(')');
            }
        }
        Node::Atom(a) => {
            out.push_str(&format!("at({}({}))", a.predicate.term_name(), code_list(&a.args)));
        }
        Node::Concept(n) => out.push_str(&format!("df({:?})", n.to_string())),
        Node::Opaque(o) if o.args.is_empty() => out.push_str(&o.name.to_string()),
        Node::Opaque(o) => out.push_str(&format!("{}({})", o.name, code_list(&o.args))),
    }
}

pub fn formula(f: &Formula) -> String {
    let mut out = String::new();
    write(f, &mut out, false);
    out
}

/// Short label for one tree node: the connective for compound formulas, the
/// whole printed formula otherwise.
pub fn node_label(f: &Formula) -> String {
    match &f.node {
        Node::Not(_) => "neg".into(),
        Node::And(_) => "and".into(),
        Node::Or(_) => "or".into(),
        Node::Impl(_, _) => "impl".into(),
        _ => formula(f),
    }
}

pub fn formula_list(fs: &[Formula]) -> String {
    fs.iter()
        .map(|f| {
            let mut s = String::new();
            write(f, &mut s, true);
            s
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PredicateKind;

    #[test]
    fn term_style() {
        let f = Formula::or(vec![
            Formula::atom(PredicateKind::UnternehmenssitzIn, &["Land-Stmk"]),
            Formula::atom(PredicateKind::BetriebsstandortIn, &["Land-Stmk"]),
        ]);
        assert_eq!(
            formula(&f),
            r#"at(unternehmenssitz_in(["Land-Stmk"])) or at(betriebsstandort_in(["Land-Stmk"]))"#
        );
        let g =
            Formula::and(vec![Formula::concept("gv.at:X"), f.clone(), Formula::not(Formula::opaque("A"))]);
        assert_eq!(
            formula(&g),
            r#"df("gv.at:X") and (at(unternehmenssitz_in(["Land-Stmk"])) or at(betriebsstandort_in(["Land-Stmk"]))) and neg(A)"#
        );
        assert_eq!(node_label(&g), "and");
        assert_eq!(formula_list(&[f, Formula::top()]).matches(", ").count(), 1);
    }
}
