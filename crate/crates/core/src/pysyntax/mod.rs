//! Syntax-only checking and light static analysis of Python programs.
//!
//! The frameworks under test are driven from Python, so every snippet,
//! synthesized program and mutant is Python source. This module answers
//! "does it parse?" without an interpreter, and exposes the token-level
//! facts the synthesizer and mutator need (call sites, dotted references,
//! import aliases).

mod analysis;
mod parse;
mod token;

use std::fmt;

pub use analysis::{call_names, dotted_references, import_aliases, resolve_alias};
pub use parse::is_keyword;
pub use token::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SyntaxError: {} (line {})", self.message, self.line)
    }
}

impl std::error::Error for SyntaxError {}

/// Checks that `src` is a syntactically valid Python module.
pub fn check(src: &str) -> Result<(), SyntaxError> {
    let toks = tokenize(src)?;
    parse::Parser::new(src, &toks).module()
}

pub fn parses(src: &str) -> bool {
    check(src).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_CONV: &str = "# A bug in the torch.nn.Conv2d API.
import torch
from torch import nn
input = torch.randn(1, 1, 32, 32)
c = nn.Conv2d(in_channels=1, out_channels=32, kernel_size=4, stride=0, bias=False, padding=(0, 1), padding_mode='constant')
c(input) # bug";

    const LISTING_POOL: &str = "# A bug in the torch.nn.AdaptiveMaxPool2d API.
import torch
size = 2 ** 32
m = torch.nn.AdaptiveMaxPool2d(output_size=size, return_indices=False)
inputs = torch.randn(1, 64, 8, 9)
m(inputs)  # bug";

    #[test]
    fn accepts_listing_programs() {
        check(LISTING_CONV).unwrap();
        check(LISTING_POOL).unwrap();
        check("x = 1").unwrap();
    }

    #[test]
    fn accepts_common_constructs() {
        let programs = [
            "def f(a, b=2, *args, c: int = 3, **kw) -> int:\n    return a + b\n",
            "class A(Base, metaclass=M):\n    x: int = 1\n    def g(self):\n        pass\n",
            "for i, (a, b) in enumerate(pairs):\n    print(i)\nelse:\n    pass\n",
            "while True:\n    break\n",
            "try:\n    f()\nexcept (ValueError, TypeError) as e:\n    raise RuntimeError('x') from e\nelse:\n    pass\nfinally:\n    cleanup()\n",
            "with open('f') as fh, lock:\n    data = fh.read()\n",
            "@decorator(1)\ndef f():\n    yield from g()\n",
            "x = [i * 2 for i in range(10) if i % 2]\n",
            "d = {k: v for k, v in items}\ns = {1, 2, *rest}\ne = {**a, 'b': 2}\n",
            "y = a if b else c\nz = lambda p, q=1: p + q\n",
            "t = x[1:2, ::3, ...]\n",
            "a, *b = c\n",
            "x += 1; y -= 2\n",
            "if (n := len(a)) > 10:\n    pass\n",
            "async def f():\n    await g()\n    async with a as b:\n        pass\n",
            "from . import mod\nfrom ..pkg.sub import (a as b,\n    c,)\n",
            "import numpy as np, os.path\n",
            "assert x is not None, 'msg'\n",
            "print(f'{x!r:>10}', sep='')\n",
            "global g\n",
            "del a[0], b.c\n",
            "x = not a in b and c not in d or e is f\n",
            "x = (yield)\n",
            "v = -2**63\nw = float('nan')\n",
            "if a:\n    pass\nelif b:\n    pass\nelse:\n    pass\n",
            "x = 1 \\\n    + 2\n",
        ];
        for p in programs {
            if let Err(e) = check(p) {
                panic!("rejected valid program {p:?}: {e}");
            }
        }
    }

    #[test]
    fn rejects_traceback_log() {
        let log = "Traceback (most recent call last):\n  File \"repro.py\", line 5, in <module>\n    c(input)\nRuntimeError: non-positive stride is not supported\n";
        assert!(check(log).is_err());
    }

    #[test]
    fn rejects_malformed_programs() {
        let bad = [
            "x = ",
            "def f(:\n    pass\n",
            "if x\n    pass\n",
            "1 = x\n",
            "f() = 3\n",
            "for 1 in x:\n    pass\n",
            "return return\n",
            "x = (1, 2\n",
            "else:\n    pass\n",
            "try:\n    pass\n",
            "def f():\nreturn 1\n",
            "f(a=1, 2)\n",
            "Segmentation fault (core dumped)\n",
            "import\n",
            "x ++= 1\n",
            "class:\n    pass\n",
            "$ python repro.py\n",
        ];
        for p in bad {
            assert!(check(p).is_err(), "accepted invalid program {p:?}");
        }
    }

    #[test]
    fn empty_and_comment_only_sources_parse() {
        check("").unwrap();
        check("# only a comment\n\n").unwrap();
    }
}
