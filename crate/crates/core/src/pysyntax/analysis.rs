use std::collections::BTreeMap;

use super::parse::is_keyword;
use super::token::{tokenize, Token, TokenKind};

fn is_op(tok: &Token, src: &str, op: &str) -> bool {
    tok.kind == TokenKind::Op && tok.text(src) == op
}

fn is_plain_name(tok: &Token, src: &str) -> bool {
    tok.kind == TokenKind::Name && !is_keyword(tok.text(src))
}

/// Maps local names introduced by import statements to the dotted path they
/// stand for: `import torch as th` gives `th -> torch`, `from torch import nn`
/// gives `nn -> torch.nn`, `import torch.nn` gives `torch -> torch`.
pub fn import_aliases(src: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let Ok(toks) = tokenize(src) else {
        return out;
    };
    let mut i = 0;
    let dotted = |i: &mut usize| -> String {
        let mut parts = Vec::new();
        while *i < toks.len() && is_plain_name(&toks[*i], src) {
            parts.push(toks[*i].text(src).to_string());
            *i += 1;
            if *i < toks.len() && is_op(&toks[*i], src, ".") {
                *i += 1;
            } else {
                break;
            }
        }
        parts.join(".")
    };
    while i < toks.len() {
        let t = &toks[i];
        let line_start = i == 0
            || matches!(
                toks[i - 1].kind,
                TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent
            )
            || is_op(&toks[i - 1], src, ";");
        if !(line_start && t.kind == TokenKind::Name) {
            i += 1;
            continue;
        }
        match t.text(src) {
            "import" => {
                i += 1;
                loop {
                    let path = dotted(&mut i);
                    if path.is_empty() {
                        break;
                    }
                    if i < toks.len() && toks[i].text(src) == "as" && toks[i].kind == TokenKind::Name {
                        i += 1;
                        if i < toks.len() && is_plain_name(&toks[i], src) {
                            out.insert(toks[i].text(src).to_string(), path);
                            i += 1;
                        }
                    } else {
                        let head = path.split('.').next().unwrap_or_default().to_string();
                        out.insert(head.clone(), head);
                    }
                    if i < toks.len() && is_op(&toks[i], src, ",") {
                        i += 1;
                    } else {
                        break;
                    }
                }
            }
            "from" => {
                i += 1;
                while i < toks.len() && (is_op(&toks[i], src, ".") || is_op(&toks[i], src, "...")) {
                    i += 1;
                }
                let module = dotted(&mut i);
                if !(i < toks.len() && toks[i].text(src) == "import") {
                    continue;
                }
                i += 1;
                if i < toks.len() && is_op(&toks[i], src, "(") {
                    i += 1;
                }
                while i < toks.len() && is_plain_name(&toks[i], src) {
                    let name = toks[i].text(src).to_string();
                    i += 1;
                    let mut local = name.clone();
                    if i + 1 < toks.len() && toks[i].text(src) == "as" {
                        local = toks[i + 1].text(src).to_string();
                        i += 2;
                    }
                    let full = if module.is_empty() {
                        name
                    } else {
                        format!("{module}.{name}")
                    };
                    out.insert(local, full);
                    if i < toks.len() && is_op(&toks[i], src, ",") {
                        i += 1;
                    } else {
                        break;
                    }
                }
            }
            _ => i += 1,
        }
    }
    out
}

/// Every maximal `a.b.c` chain of names in the program, in order of
/// appearance. Chains that follow a `.` (method calls on expressions) are
/// skipped, and names in import statements are not references.
pub fn dotted_references(src: &str) -> Vec<String> {
    let Ok(toks) = tokenize(src) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut i = 0;
    let mut in_import = false;
    while i < toks.len() {
        let t = &toks[i];
        if t.kind == TokenKind::Newline {
            in_import = false;
        }
        if t.kind == TokenKind::Name && matches!(t.text(src), "import" | "from") {
            in_import = true;
        }
        let after_dot = i > 0 && is_op(&toks[i - 1], src, ".");
        if in_import || after_dot || !is_plain_name(t, src) {
            i += 1;
            continue;
        }
        let mut parts = vec![t.text(src)];
        let mut j = i + 1;
        while j + 1 < toks.len() && is_op(&toks[j], src, ".") && is_plain_name(&toks[j + 1], src) {
            parts.push(toks[j + 1].text(src));
            j += 2;
        }
        out.push(parts.join("."));
        i = j;
    }
    out
}

/// Names that appear directly before `(`: for `torch.nn.Conv2d(...)` this
/// yields `Conv2d`; for `f(x)` it yields `f`.
pub fn call_names(src: &str) -> Vec<String> {
    let Ok(toks) = tokenize(src) else {
        return Vec::new();
    };
    (0..toks.len().saturating_sub(1))
        .filter(|&i| is_plain_name(&toks[i], src) && is_op(&toks[i + 1], src, "("))
        // `def f(` and `class C(` are definitions, not calls.
        .filter(|&i| i == 0 || !matches!(toks[i - 1].text(src), "def" | "class"))
        .map(|i| toks[i].text(src).to_string())
        .collect()
}

/// Rewrites the head of a dotted chain through the alias table.
pub fn resolve_alias(chain: &str, aliases: &BTreeMap<String, String>) -> String {
    let (head, rest) = match chain.split_once('.') {
        Some((h, r)) => (h, Some(r)),
        None => (chain, None),
    };
    match (aliases.get(head), rest) {
        (Some(full), Some(rest)) => format!("{full}.{rest}"),
        (Some(full), None) => full.clone(),
        (None, _) => chain.to_string(),
    }
}
