use regex::Regex;
use std::sync::OnceLock;

use super::{IssueRecord, SnippetOrigin, SourceSnippet};

/// Fence info strings that mark a block as output rather than code.
const NON_CODE_INFO: &[&str] = &[
    "console", "shell-session", "text", "txt", "log", "output", "plaintext", "stderr", "stdout",
    "traceback", "pytb",
];

#[derive(Debug, Clone)]
pub struct SnippetConfig {
    /// Hosts whose links are recorded as linked-resource placeholders.
    pub linked_hosts: Vec<String>,
}

impl Default for SnippetConfig {
    fn default() -> Self {
        SnippetConfig {
            linked_hosts: vec!["colab.research.google.com".to_string()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub issue: IssueRecord,
    /// Dangling fence openers that were ignored.
    pub warnings: usize,
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^ {0,3}(`{3,})\s*([^`\s]*)[^`]*$").unwrap())
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"https?://([A-Za-z0-9.-]+)[^\s)\]>"']*"#).unwrap())
}

/// Splits `body` into lines with their byte offsets (line excludes the
/// terminator; `\r\n` and `\n` both end a line).
fn lines_with_offsets(body: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in body.bytes().enumerate() {
        if b == b'\n' {
            let end = if i > start && body.as_bytes()[i - 1] == b'\r' { i - 1 } else { i };
            out.push((start, &body[start..end]));
            start = i + 1;
        }
    }
    if start < body.len() {
        out.push((start, &body[start..]));
    }
    out
}

/// Extracts every fenced code block of the body as one snippet.
///
/// A block's text is the exact byte range between the opening fence line
/// and the closing fence line, fences excluded. An opener without a
/// matching closer is ignored and counted as a warning.
pub fn extract_snippets(issue: &IssueRecord, cfg: &SnippetConfig) -> Extraction {
    let body = issue.body.as_str();
    let lines = lines_with_offsets(body);
    let mut snippets = Vec::new();
    let mut warnings = 0;
    let mut i = 0;
    while i < lines.len() {
        let (_, line) = lines[i];
        let Some(open) = fence_re().captures(line) else {
            i += 1;
            continue;
        };
        let ticks = open[1].len();
        let info = open[2].to_ascii_lowercase();
        let close = (i + 1..lines.len()).find(|&j| {
            let t = lines[j].1.trim();
            t.len() >= ticks && t.chars().all(|c| c == '`') && lines[j].1.len() - lines[j].1.trim_start().len() <= 3
        });
        let Some(j) = close else {
            log::warn!("issue {}: unterminated code fence ignored", issue.issue_id);
            warnings += 1;
            i += 1;
            continue;
        };
        let start = if i + 1 < lines.len() { lines[i + 1].0 } else { body.len() };
        let start = start.min(lines[j].0);
        // Content ends before the line terminator preceding the closing fence.
        let mut end = lines[j].0;
        if end > start && body.as_bytes()[end - 1] == b'\n' {
            end -= 1;
            if end > start && body.as_bytes()[end - 1] == b'\r' {
                end -= 1;
            }
        }
        snippets.push(SourceSnippet {
            text: body[start..end].to_string(),
            origin: SnippetOrigin::FencedBlock,
            parses: false,
            span: Some((start, end)),
            non_code_hint: NON_CODE_INFO.contains(&info.as_str()),
            url: None,
        });
        i = j + 1;
    }

    for m in url_re().captures_iter(body) {
        let host = m[1].to_ascii_lowercase();
        if cfg.linked_hosts.iter().any(|h| host == *h || host.ends_with(&format!(".{h}"))) {
            let whole = m.get(0).unwrap();
            snippets.push(SourceSnippet {
                text: String::new(),
                origin: SnippetOrigin::LinkedResource,
                parses: false,
                span: Some((whole.start(), whole.end())),
                non_code_hint: false,
                url: Some(whole.as_str().to_string()),
            });
        }
    }

    let mut issue = issue.clone();
    issue.snippets = snippets;
    Extraction { issue, warnings }
}

/// The body with every fenced block removed: the issue's prose description.
pub fn description_text(issue: &IssueRecord) -> String {
    let mut out = String::new();
    let mut last = 0;
    let body = issue.body.as_str();
    let mut spans: Vec<(usize, usize)> = issue
        .snippets
        .iter()
        .filter(|s| s.origin == SnippetOrigin::FencedBlock)
        .filter_map(|s| s.span)
        .collect();
    spans.sort();
    for (s, e) in spans {
        if s < last || e > body.len() {
            continue;
        }
        out.push_str(&body[last..s]);
        last = e;
    }
    out.push_str(&body[last..]);
    out.lines()
        .filter(|l| !fence_re().is_match(l) && !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issue(body: &str) -> IssueRecord {
        IssueRecord {
            issue_id: "7".into(),
            framework: "torch".into(),
            title: "t".into(),
            body: body.into(),
            snippets: vec![],
            matched_keywords: vec![],
            url: String::new(),
        }
    }

    #[test]
    fn two_blocks() {
        let body = "Repro:\n```python\nimport torch\nx = 1\n```\nlog:\n```\nSegmentation fault\n```\n";
        let out = extract_snippets(&issue(body), &SnippetConfig::default());
        assert_eq!(out.issue.snippets.len(), 2);
        assert_eq!(out.issue.snippets[0].text, "import torch\nx = 1");
        assert_eq!(out.issue.snippets[1].text, "Segmentation fault");
        for s in &out.issue.snippets {
            let (a, b) = s.span.unwrap();
            assert_eq!(&body[a..b], s.text);
        }
    }

    #[test]
    fn no_fences() {
        let out = extract_snippets(&issue("just prose, x = 1"), &SnippetConfig::default());
        assert!(out.issue.snippets.is_empty());
        assert_eq!(out.warnings, 0);
    }

    #[test]
    fn unterminated_fence_ignored() {
        let out = extract_snippets(&issue("```python\nx = 1\n"), &SnippetConfig::default());
        assert!(out.issue.snippets.is_empty());
        assert_eq!(out.warnings, 1);
    }

    #[test]
    fn console_blocks_flagged() {
        let out = extract_snippets(
            &issue("```console\n$ python a.py\n```\n```py\nx=1\n```"),
            &SnippetConfig::default(),
        );
        assert!(out.issue.snippets[0].non_code_hint);
        assert!(!out.issue.snippets[1].non_code_hint);
        assert_eq!(out.issue.snippets[1].text, "x=1");
    }

    #[test]
    fn crlf_and_empty_blocks() {
        let body = "```\r\na = 1\r\nb = 2\r\n```\r\n```\n```\n";
        let out = extract_snippets(&issue(body), &SnippetConfig::default());
        assert_eq!(out.issue.snippets[0].text, "a = 1\r\nb = 2");
        assert_eq!(out.issue.snippets[1].text, "");
    }

    #[test]
    fn linked_resources_recorded_as_placeholders() {
        let body = "See https://colab.research.google.com/drive/abc123 and https://example.com/x";
        let out = extract_snippets(&issue(body), &SnippetConfig::default());
        assert_eq!(out.issue.snippets.len(), 1);
        let s = &out.issue.snippets[0];
        assert_eq!(s.origin, SnippetOrigin::LinkedResource);
        assert!(s.text.is_empty());
        assert_eq!(s.url.as_deref(), Some("https://colab.research.google.com/drive/abc123"));
    }

    #[test]
    fn description_drops_code() {
        let body = "It crashes.\n```python\nx = 1\n```\nThanks";
        let out = extract_snippets(&issue(body), &SnippetConfig::default());
        assert_eq!(description_text(&out.issue), "It crashes.\nThanks");
    }
}
