//! Synthetic inputs shared by the benchmarks.

use mirrorfuzz_core::catalog::{ApiRecord, ParamRecord};

const WORDS: &[&str] = &[
    "input", "tensor", "kernel", "size", "stride", "padding", "dilation", "groups", "channels", "output", "dim",
    "axis", "shape", "dtype", "pool", "conv", "linear", "weight", "bias", "mode", "scale", "factor", "mean", "norm",
];

fn pick(seed: usize, n: usize) -> String {
    (0..n).map(|i| WORDS[(seed * 7 + i * 13) % WORDS.len()]).collect::<Vec<_>>().join(" ")
}

/// `per_framework` APIs in each of two frameworks, with deterministic text.
pub fn catalog(per_framework: usize) -> Vec<ApiRecord> {
    let mut out = Vec::with_capacity(per_framework * 2);
    for fw in ["fa", "fb"] {
        for i in 0..per_framework {
            let params = (0..1 + i % 5)
                .map(|p| ParamRecord {
                    name: WORDS[(i + p * 3) % WORDS.len()].to_string(),
                    description: pick(i + p, 4),
                    position: p,
                })
                .collect();
            out.push(ApiRecord {
                framework: fw.to_string(),
                full_name: format!("{fw}.ops.{}_{i}", WORDS[i % WORDS.len()]),
                params,
                description: pick(i, 10),
                doc_url: None,
            });
        }
    }
    out
}

pub const PROGRAM: &str = "import torch\n\
x = torch.randn(4, 3, 32, 32, dtype=torch.float32)\n\
pool = torch.nn.MaxPool2d(kernel_size=3, stride=2, padding=1)\n\
y = pool(x)\n\
print(y.reshape(4, -1).sum(dim=1))\n";
