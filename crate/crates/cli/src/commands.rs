//! The command-line subcommands as plain functions over writers, so tests
//! can run them in-process. Each returns the process exit code.

use std::io::Write;
use std::path::Path;

use g4c_core::analysis::ConsistencyEntry;
use g4c_core::render::{render_derivation_html, render_derivation_text, STYLESHEET};
use g4c_core::{
    consistency_report, evaluate_all, implication_matrix, load_kb, CompanyProfile, EvalTrace, Filter,
    GrantResult, KnowledgeBase, LoadError, Sequent, Verdict,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn load(kb_path: &Path, err: &mut dyn Write) -> Result<KnowledgeBase, u8> {
    match load_kb(kb_path) {
        Ok(kb) => Ok(kb),
        Err(e) => {
            let _ = writeln!(err, "error: cannot load {}: {e}", kb_path.display());
            Err(if e.is_syntax() { EXIT_USAGE } else { EXIT_FAIL })
        }
    }
}

/// Parses a profile document. Blank input is the all-unknown profile.
pub fn parse_profile(text: &str) -> Result<CompanyProfile, serde_json::Error> {
    if text.trim().is_empty() {
        return Ok(CompanyProfile::unknown());
    }
    serde_json::from_str(text)
}

/// Exit 0 if the knowledge base loads and every grant is consistent, 1 for
/// cyclic concepts, duplicates or inconsistent grants, 2 if a file cannot be
/// read or parsed.
pub fn lint(kb_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let kb = match load_kb(kb_path) {
        Ok(kb) => kb,
        Err(e) => {
            let code = if e.is_syntax() { EXIT_USAGE } else { EXIT_FAIL };
            if let LoadError::Concepts(cycle) = &e {
                let _ = writeln!(err, "error: {cycle}");
            } else {
                let _ = writeln!(err, "error: {e}");
            }
            return code;
        }
    };
    for w in &kb.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let report = consistency_report(&kb);
    let inconsistent: Vec<&ConsistencyEntry> = report.iter().filter(|e| !e.consistent).collect();
    for entry in &inconsistent {
        let _ = writeln!(out, "inconsistent: {}", entry.grant);
        if let Some(d) = &entry.derivation {
            for line in render_derivation_text(d).lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
    }
    let _ = writeln!(
        out,
        "{} file(s), {} concept(s), {} grant(s), {} inconsistent, {} warning(s)",
        kb.source_files.len(),
        kb.concepts.len(),
        kb.grants.len(),
        inconsistent.len(),
        kb.warnings.len(),
    );
    if inconsistent.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

pub struct CheckOptions<'a> {
    pub profile_text: &'a str,
    pub filter: Filter,
    pub json: bool,
    pub explain: Option<&'a str>,
}

/// Evaluates all grants against a profile and prints them bucketed by verdict.
pub fn check(kb_path: &Path, opts: &CheckOptions, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let profile = match parse_profile(opts.profile_text) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: invalid profile: {e}");
            return EXIT_USAGE;
        }
    };
    let kb = match load(kb_path, err) {
        Ok(kb) => kb,
        Err(code) => return code,
    };
    let results = evaluate_all(&kb, &profile, &opts.filter);
    if let Some(key) = opts.explain {
        let Some(grant) = kb.grant(key) else {
            let _ = writeln!(err, "error: no grant named `{key}`");
            return EXIT_USAGE;
        };
        let trace = g4c_core::eval_trace(&grant.conditions, &profile, &kb.concepts)
            .expect("concept references are checked when the knowledge base is loaded");
        let _ = writeln!(out, "{}: {}", grant.name, Verdict::from(trace.value));
        write_trace(&trace, 1, out);
        return EXIT_OK;
    }
    if opts.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&results).expect("results serialise"));
    } else {
        write_table(&results, out);
    }
    EXIT_OK
}

fn write_trace(t: &EvalTrace, depth: usize, out: &mut dyn Write) {
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}[{}] {}", t.value.as_str(), t.label);
    if let Some(e) = &t.explanation {
        for line in e.lines() {
            let _ = writeln!(out, "{pad}    ; {line}");
        }
    }
    for c in &t.children {
        write_trace(c, depth + 1, out);
    }
}

fn dates(r: &GrantResult) -> String {
    match (r.valid_from, r.valid_to) {
        (None, None) => String::new(),
        (from, to) => format!(
            "{}..{}",
            from.map(|d| d.to_string()).unwrap_or_default(),
            to.map(|d| d.to_string()).unwrap_or_default()
        ),
    }
}

fn write_table(results: &[GrantResult], out: &mut dyn Write) {
    let width = results.iter().map(|r| r.grant.chars().count()).max().unwrap_or(0);
    for (verdict, title) in [
        (Verdict::Satisfied, "Satisfied"),
        (Verdict::Undecided, "Undecided"),
        (Verdict::NotSatisfied, "Not satisfied"),
    ] {
        let bucket: Vec<&GrantResult> = results.iter().filter(|r| r.verdict == verdict).collect();
        let _ = writeln!(out, "{title} ({})", bucket.len());
        for r in bucket {
            let pad = width - r.grant.chars().count();
            let line = format!("  {}{}  {}  {}", r.grant, " ".repeat(pad), r.categories.join(","), dates(r));
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
}

/// Wraps a derivation fragment into a standalone page.
pub fn html_page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title><style>\n{STYLESHEET}</style></head>\n<body>\n{body}\n</body></html>\n",
        g4c_core::render::escape_html(title)
    )
}

/// Exit 0 and print the derivation if `conditions(from) ⇒ conditions(to)`
/// is derivable, 1 if not, 2 if either grant is unknown.
pub fn prove(
    kb_path: &Path,
    from: &str,
    to: &str,
    html_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let kb = match load(kb_path, err) {
        Ok(kb) => kb,
        Err(code) => return code,
    };
    let (Some(g1), Some(g2)) = (kb.grant(from), kb.grant(to)) else {
        for key in [from, to] {
            if kb.grant(key).is_none() {
                let _ = writeln!(err, "error: no grant named `{key}`");
            }
        }
        return EXIT_USAGE;
    };
    let sequent = Sequent::new(vec![g1.conditions.clone()], vec![g2.conditions.clone()]);
    let derivation = g4c_core::prove(&sequent, &kb.concepts)
        .expect("concept references are checked when the knowledge base is loaded");
    let Some(d) = derivation else {
        let _ = writeln!(out, "not derivable: {} does not imply {}", g1.name, g2.name);
        return EXIT_FAIL;
    };
    let _ = write!(out, "{}", render_derivation_text(&d));
    if let Some(path) = html_out {
        let page = html_page(&format!("{} ⇒ {}", g1.name, g2.name), &render_derivation_html(&d));
        if let Err(e) = std::fs::write(path, page) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    EXIT_OK
}

/// Prints every implication between grants, and pairs with identical
/// conditions.
pub fn implications(kb_path: &Path, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let kb = match load(kb_path, err) {
        Ok(kb) => kb,
        Err(code) => return code,
    };
    let report = implication_matrix(&kb);
    if json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serialises"));
        return EXIT_OK;
    }
    for e in &report.edges {
        let _ = writeln!(out, "{} ⇒ {}", e.from, e.to);
    }
    for (a, b) in &report.duplicate_conditions {
        let _ = writeln!(out, "{a} ≡ {b} (identical conditions)");
    }
    if report.edges.is_empty() && report.duplicate_conditions.is_empty() {
        let _ = writeln!(out, "no implications");
    }
    EXIT_OK
}
