//! Source-level mutation operators over Python test programs.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pysyntax::{self, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    BoundaryValue,
    TypeMutation,
    ShapeDim,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [
        MutationKind::BoundaryValue,
        MutationKind::TypeMutation,
        MutationKind::ShapeDim,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationOp {
    pub kind: MutationKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    pub boundary_values: Vec<String>,
    pub dtypes: Vec<String>,
}

pub const DEFAULT_BOUNDARY_VALUES: &[&str] = &[
    "float('nan')",
    "0",
    "-1",
    "2**31",
    "-2**31",
    "2**63",
    "-2**63",
    "1e308",
];

pub const DEFAULT_DTYPES: &[&str] = &[
    "float16", "bfloat16", "float32", "float64", "int8", "int16", "int32", "int64", "uint8", "bool",
    "complex64", "complex128",
];

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            boundary_values: DEFAULT_BOUNDARY_VALUES.iter().map(|s| s.to_string()).collect(),
            dtypes: DEFAULT_DTYPES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    /// The mutant parses and differs from the input.
    Mutant { code: String, site: String },
    /// No applicable site in the program.
    NoOp,
    /// The rewrite produced a program that does not parse; discarded.
    Invalid,
}

struct Edit {
    span: Range<usize>,
    text: String,
}

fn tok_is(t: &Token, src: &str, s: &str) -> bool {
    t.text(src) == s
}

/// A numeric literal, with a directly preceding unary minus folded in.
struct Literal {
    span: Range<usize>,
    /// Keyword argument the literal is passed as, if any.
    keyword: Option<String>,
}

fn numeric_literals(src: &str, toks: &[Token]) -> Vec<Literal> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate() {
        match t.kind {
            TokenKind::Op if matches!(t.text(src), "(" | "[" | "{") => depth += 1,
            TokenKind::Op if matches!(t.text(src), ")" | "]" | "}") => depth = depth.saturating_sub(1),
            TokenKind::Number if depth > 0 => {
                let mut start = t.span.start;
                let mut k = i;
                if i >= 1 && tok_is(&toks[i - 1], src, "-") {
                    let unary = i < 2
                        || matches!(toks[i - 2].kind, TokenKind::Op)
                            && !matches!(toks[i - 2].text(src), ")" | "]" | "}");
                    if unary {
                        start = toks[i - 1].span.start;
                        k = i - 1;
                    }
                }
                let keyword = (k >= 2 && tok_is(&toks[k - 1], src, "=") && toks[k - 2].kind == TokenKind::Name)
                    .then(|| toks[k - 2].text(src).to_string());
                out.push(Literal {
                    span: start..t.span.end,
                    keyword,
                });
            }
            _ => {}
        }
    }
    out
}

fn boundary_value(src: &str, toks: &[Token], params: &[String], cfg: &MutationConfig, rng: &mut ChaCha8Rng) -> Option<Edit> {
    let lits = numeric_literals(src, toks);
    let preferred: Vec<&Literal> = lits
        .iter()
        .filter(|l| l.keyword.as_ref().is_some_and(|k| params.contains(k)))
        .collect();
    let pool: Vec<&Literal> = if preferred.is_empty() { lits.iter().collect() } else { preferred };
    if pool.is_empty() || cfg.boundary_values.is_empty() {
        return None;
    }
    let lit = pool[rng.random_range(0..pool.len())];
    let original = &src[lit.span.clone()];
    let candidates: Vec<&String> = cfg.boundary_values.iter().filter(|v| v.as_str() != original).collect();
    if candidates.is_empty() {
        return None;
    }
    let value = candidates[rng.random_range(0..candidates.len())];
    Some(Edit {
        span: lit.span.clone(),
        text: value.clone(),
    })
}

fn type_mutation(src: &str, toks: &[Token], cfg: &MutationConfig, rng: &mut ChaCha8Rng) -> Option<Edit> {
    // (span of the dtype word, current dtype)
    let mut sites: Vec<(Range<usize>, String)> = Vec::new();
    for t in toks {
        let text = t.text(src);
        match t.kind {
            TokenKind::Name if cfg.dtypes.iter().any(|d| d == text) => sites.push((t.span.clone(), text.to_string())),
            TokenKind::String => {
                let q = text.chars().next().unwrap_or(' ');
                if (q == '\'' || q == '"') && text.len() >= 2 && text.ends_with(q) {
                    let inner = &text[1..text.len() - 1];
                    if cfg.dtypes.iter().any(|d| d == inner) {
                        sites.push((t.span.start + 1..t.span.end - 1, inner.to_string()));
                    }
                }
            }
            _ => {}
        }
    }
    if sites.is_empty() {
        return None;
    }
    let (span, current) = sites.swap_remove(rng.random_range(0..sites.len()));
    let others: Vec<&String> = cfg.dtypes.iter().filter(|d| **d != current).collect();
    if others.is_empty() {
        return None;
    }
    Some(Edit {
        span,
        text: others[rng.random_range(0..others.len())].clone(),
    })
}

/// A bracketed run of integer literals: `(1, 3, 20, 20)`, `[2, 2]`, or the
/// integer arguments of a call such as `randn(10, 3)`.
struct ShapeSite {
    inner: Range<usize>,
    dims: Vec<i64>,
    tuple_paren: bool,
}

fn shape_sites(src: &str, toks: &[Token]) -> Vec<ShapeSite> {
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        let open = t.text(src);
        if t.kind != TokenKind::Op || !matches!(open, "(" | "[") {
            continue;
        }
        let close = if open == "(" { ")" } else { "]" };
        let mut dims = Vec::new();
        let mut j = i + 1;
        let ok = loop {
            let neg = j < toks.len() && tok_is(&toks[j], src, "-");
            if neg {
                j += 1;
            }
            let Some(n) = toks.get(j).filter(|n| n.kind == TokenKind::Number) else {
                break false;
            };
            let Ok(v) = n.text(src).replace('_', "").parse::<i64>() else {
                break false;
            };
            dims.push(if neg { -v } else { v });
            j += 1;
            if j < toks.len() && tok_is(&toks[j], src, ",") {
                // Integer positionals followed by keyword arguments.
                let kw = toks.get(j + 1).is_some_and(|n| n.kind == TokenKind::Name)
                    && toks.get(j + 2).is_some_and(|e| tok_is(e, src, "="));
                if kw && open == "(" {
                    break true;
                }
                j += 1;
            }
            if j < toks.len() && tok_is(&toks[j], src, close) {
                break true;
            }
        };
        if !ok || dims.is_empty() {
            continue;
        }
        let is_call = i > 0
            && (toks[i - 1].kind == TokenKind::Name && !pysyntax::is_keyword(toks[i - 1].text(src))
                || matches!(toks[i - 1].text(src), ")" | "]"));
        out.push(ShapeSite {
            inner: t.span.end..toks[j].span.start,
            dims,
            tuple_paren: open == "(" && !is_call,
        });
    }
    out
}

fn shape_dim(src: &str, toks: &[Token], rng: &mut ChaCha8Rng) -> Option<Edit> {
    let sites = shape_sites(src, toks);
    if sites.is_empty() {
        return None;
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let mut dims = site.dims.clone();
    match rng.random_range(0..3) {
        // resize: add or drop a dimension
        0 => {
            if dims.len() > 1 && rng.random_bool(0.5) {
                dims.pop();
            } else {
                dims.push(rng.random_range(1..=4));
            }
        }
        // reshape: change one extent
        1 => {
            let k = rng.random_range(0..dims.len());
            let choices = [0, 1, 2 * dims[k].max(1), 65536];
            let next: Vec<i64> = choices.into_iter().filter(|&c| c != dims[k]).collect();
            dims[k] = next[rng.random_range(0..next.len())];
        }
        // negative dimension
        _ => {
            let k = rng.random_range(0..dims.len());
            dims[k] = if dims[k] > 0 { -dims[k] } else { -1 - dims[k].abs() };
        }
    }
    let mut text = dims.iter().map(i64::to_string).collect::<Vec<_>>().join(", ");
    if site.tuple_paren && dims.len() == 1 {
        text.push(',');
    }
    Some(Edit {
        span: site.inner.clone(),
        text,
    })
}

/// Applies `op` to `code`. `params` names the target API's parameters;
/// boundary-value mutation prefers literals passed to them by keyword.
/// The same (code, op, params, cfg) always yields the same result.
pub fn mutate(code: &str, op: MutationOp, params: &[String], cfg: &MutationConfig) -> Mutation {
    let Ok(toks) = pysyntax::tokenize(code) else {
        return Mutation::NoOp;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(op.seed);
    let edit = match op.kind {
        MutationKind::BoundaryValue => boundary_value(code, &toks, params, cfg, &mut rng),
        MutationKind::TypeMutation => type_mutation(code, &toks, cfg, &mut rng),
        MutationKind::ShapeDim => shape_dim(code, &toks, &mut rng),
    };
    let Some(edit) = edit else {
        return Mutation::NoOp;
    };
    let before = &code[edit.span.clone()];
    if before == edit.text {
        return Mutation::NoOp;
    }
    let site = format!("{before:?} -> {:?}", edit.text);
    let mut out = String::with_capacity(code.len() + edit.text.len());
    out.push_str(&code[..edit.span.start]);
    out.push_str(&edit.text);
    out.push_str(&code[edit.span.end..]);
    if !pysyntax::parses(&out) {
        return Mutation::Invalid;
    }
    Mutation::Mutant { code: out, site }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROG: &str = "import torch\nx = torch.randn(1, 3, 8, 8, dtype=torch.float32)\nm = torch.nn.MaxPool2d(kernel_size=2, stride=2, padding=-1)\nm(x)\n";

    fn params() -> Vec<String> {
        vec!["kernel_size".into(), "stride".into(), "padding".into()]
    }

    fn op(kind: MutationKind, seed: u64) -> MutationOp {
        MutationOp { kind, seed }
    }

    #[test]
    fn stride_zero_is_reachable() {
        let cfg = MutationConfig::default();
        let found = (0..200).any(|s| match mutate(PROG, op(MutationKind::BoundaryValue, s), &params(), &cfg) {
            Mutation::Mutant { code, .. } => code.contains("stride=0,"),
            _ => false,
        });
        assert!(found);
    }

    #[test]
    fn boundary_prefers_target_keywords() {
        let cfg = MutationConfig::default();
        for s in 0..50 {
            if let Mutation::Mutant { code, .. } = mutate(PROG, op(MutationKind::BoundaryValue, s), &params(), &cfg) {
                assert!(code.contains("randn(1, 3, 8, 8,"), "non-keyword literal changed: {code}");
            }
        }
    }

    #[test]
    fn negative_literal_replaced_whole() {
        let cfg = MutationConfig { boundary_values: vec!["7".into()], ..MutationConfig::default() };
        let p = vec!["padding".to_string()];
        let Mutation::Mutant { code, .. } = mutate(PROG, op(MutationKind::BoundaryValue, 1), &p, &cfg) else {
            panic!()
        };
        assert!(code.contains("padding=7)"));
    }

    #[test]
    fn no_literals_is_noop() {
        let cfg = MutationConfig::default();
        assert_eq!(mutate("import torch\ntorch.relu(x)\n", op(MutationKind::BoundaryValue, 3), &[], &cfg), Mutation::NoOp);
        assert_eq!(mutate("f(x)\n", op(MutationKind::TypeMutation, 3), &[], &cfg), Mutation::NoOp);
        assert_eq!(mutate("f(x)\n", op(MutationKind::ShapeDim, 3), &[], &cfg), Mutation::NoOp);
    }

    #[test]
    fn dtype_rewrites() {
        let cfg = MutationConfig::default();
        let Mutation::Mutant { code, .. } = mutate(PROG, op(MutationKind::TypeMutation, 9), &[], &cfg) else {
            panic!()
        };
        assert!(!code.contains("float32"));
        let s = "x = np.zeros(3, dtype='int64')\n";
        let Mutation::Mutant { code, .. } = mutate(s, op(MutationKind::TypeMutation, 2), &[], &cfg) else {
            panic!()
        };
        assert!(code.starts_with("x = np.zeros(3, dtype='") && !code.contains("int64"));
    }

    #[test]
    fn shape_edits_keep_programs_valid() {
        let cfg = MutationConfig::default();
        let progs = [PROG, "x = t.reshape((5,))\n", "y = np.ones([2, 2])\n", "z = f(4)\n"];
        for p in progs {
            for s in 0..40 {
                match mutate(p, op(MutationKind::ShapeDim, s), &[], &cfg) {
                    Mutation::Mutant { code, .. } => {
                        assert!(pysyntax::parses(&code));
                        assert_ne!(code, p);
                    }
                    other => panic!("{p:?} seed {s}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn shape_args_before_keywords() {
        let cfg = MutationConfig::default();
        let changed = (0..30).filter_map(|s| match mutate(PROG, op(MutationKind::ShapeDim, s), &[], &cfg) {
            Mutation::Mutant { code, .. } => Some(code),
            _ => None,
        });
        for c in changed {
            assert!(c.contains(", dtype=torch.float32)") && c != PROG, "{c}");
        }
    }

    #[test]
    fn seeded_determinism() {
        let cfg = MutationConfig::default();
        for kind in MutationKind::ALL {
            for s in 0..20 {
                assert_eq!(mutate(PROG, op(kind, s), &params(), &cfg), mutate(PROG, op(kind, s), &params(), &cfg));
            }
        }
    }
}
