//! Reference documentation-dump format.
//!
//! Documentation pages differ per framework, so each framework gets an
//! adapter that turns its pages into this flat text form:
//!
//! ```text
//! ## torch.nn.Conv2d(in_channels, out_channels, kernel_size, stride=1)
//! Applies a 2D convolution over an input signal.
//! :param in_channels: Number of channels in the input image
//! :param stride: Stride of the convolution
//! ```
//!
//! Each `## ` heading opens one API; free lines become the description and
//! `:param` lines attach descriptions to parameters.

use super::{ApiRecord, LoadedCatalog, ParamRecord};

pub fn parse_signature_dump(text: &str, framework: &str) -> LoadedCatalog {
    let mut out = LoadedCatalog::default();
    let mut current: Option<ApiRecord> = None;
    let mut desc_lines: Vec<String> = Vec::new();

    let finish = |cur: Option<ApiRecord>, desc: &mut Vec<String>, out: &mut LoadedCatalog| {
        if let Some(mut rec) = cur {
            rec.description = desc.join(" ").trim().to_string();
            out.records.push(rec);
        }
        desc.clear();
    };

    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(heading) = trimmed.strip_prefix("## ") {
            finish(current.take(), &mut desc_lines, &mut out);
            match parse_heading(heading, framework) {
                Some(rec) => current = Some(rec),
                None => {
                    log::warn!("documentation heading without an API name: {heading:?}");
                    out.warnings += 1;
                }
            }
        } else if let Some(rest) = trimmed.strip_prefix(":param ") {
            let Some(rec) = current.as_mut() else { continue };
            let (name, desc) = rest.split_once(':').unwrap_or((rest, ""));
            let name = name.trim();
            let desc = desc.trim();
            match rec.params.iter_mut().find(|p| p.name == name) {
                Some(p) => p.description = desc.to_string(),
                None => {
                    let position = rec.params.len();
                    rec.params.push(ParamRecord {
                        name: name.to_string(),
                        description: desc.to_string(),
                        position,
                    });
                }
            }
        } else if !trimmed.is_empty() && current.is_some() {
            desc_lines.push(trimmed.to_string());
        }
    }
    finish(current.take(), &mut desc_lines, &mut out);
    out
}

fn parse_heading(heading: &str, framework: &str) -> Option<ApiRecord> {
    let (name, args) = match heading.find('(') {
        Some(i) => (&heading[..i], heading[i + 1..].trim_end().trim_end_matches(')')),
        None => (heading, ""),
    };
    let name = name.trim();
    if name.is_empty() {
        return None;
    }
    let params = split_top_level(args)
        .into_iter()
        .filter_map(|arg| {
            let arg = arg.split('=').next()?.split(':').next()?.trim();
            let arg = arg.trim_start_matches('*').trim();
            (!arg.is_empty() && arg != "/").then(|| arg.to_string())
        })
        .enumerate()
        .map(|(position, name)| ParamRecord {
            name,
            description: String::new(),
            position,
        })
        .collect();
    Some(ApiRecord {
        framework: framework.to_string(),
        full_name: name.to_string(),
        params,
        description: String::new(),
        doc_url: None,
    })
}

fn split_top_level(args: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in args.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&args[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&args[start..]);
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries() {
        let dump = "\
## torch.nn.Conv2d(in_channels, out_channels, kernel_size, stride=1, padding=(0, 0), *, dtype=None)
Applies a 2D convolution
over an input signal.
:param stride: Stride of the convolution
:param bias: If True, adds a learnable bias

## (broken)
text

## torch.relu(input)
";
        let out = parse_signature_dump(dump, "torch");
        assert_eq!(out.warnings, 1);
        assert_eq!(out.records.len(), 2);
        let conv = &out.records[0];
        assert_eq!(conv.full_name, "torch.nn.Conv2d");
        assert_eq!(conv.description, "Applies a 2D convolution over an input signal.");
        let names: Vec<_> = conv.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["in_channels", "out_channels", "kernel_size", "stride", "padding", "dtype", "bias"]
        );
        assert_eq!(conv.params[3].description, "Stride of the convolution");
        assert_eq!(out.records[1].params[0].name, "input");
    }
}
