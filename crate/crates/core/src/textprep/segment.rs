//! Rule-based sentence boundary detection tuned for court judgments.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::Sentence;

const SHIPPED_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// Matches a line that opens with a list enumerator such as `1.`, `(a)`,
/// `i)`, `(iv)` or a bullet glyph.
static ENUMERATOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^[ \t]*(?:\(?\d{1,3}[.)]|\(?[A-Za-z][.)]|\(?(?:i|ii|iii|iv|v|vi|vii|viii|ix|x|xi|xii)[.)]|\([a-z]{1,4}\)|[•·●▪‣◦*\-–])[ \t]+\S",
    )
    .expect("enumerator pattern")
});

static DOTTED_ABBREVIATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[A-Za-z]{1,2}\.)+[A-Za-z]{1,2}$").expect("dotted pattern"));

static ROMAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)[ivxlc]{1,6}$").expect("roman pattern"));

/// Whether `line` starts with a list enumerator.
pub fn is_enumerated_line(line: &str) -> bool {
    ENUMERATOR.is_match(line)
}

#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::from_list(SHIPPED_ABBREVIATIONS)
    }
}

impl Segmenter {
    /// Builds a segmenter from an abbreviation list in the shipped format:
    /// one token per line, `#` comments, no trailing period.
    pub fn from_list(list: &str) -> Self {
        let mut seg = Self {
            abbreviations: HashSet::new(),
        };
        seg.extend_from_list(list);
        seg
    }

    pub fn extend_from_list(&mut self, list: &str) {
        for line in list.lines() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            self.abbreviations
                .insert(entry.trim_end_matches('.').to_lowercase());
        }
    }

    /// Shipped list plus the entries of `path`.
    pub fn with_extra_file(path: &Path) -> io::Result<Self> {
        let mut seg = Self::default();
        seg.extend_from_list(&fs::read_to_string(path)?);
        Ok(seg)
    }

    pub fn is_abbreviation(&self, token: &str) -> bool {
        self.abbreviations.contains(&token.to_lowercase())
    }

    pub fn segment(&self, text: &str) -> Vec<Sentence> {
        let mut cuts = self.boundaries(text);
        cuts.push(text.len());
        let mut out = Vec::new();
        let mut start = 0;
        for cut in cuts {
            if cut <= start {
                continue;
            }
            let piece = &text[start..cut];
            let lead = piece.len() - piece.trim_start().len();
            let body = piece.trim();
            if !body.is_empty() {
                let s = start + lead;
                out.push(Sentence {
                    index: out.len(),
                    text: body.to_string(),
                    span: (s, s + body.len()),
                });
            }
            start = cut;
        }
        out
    }

    fn boundaries(&self, text: &str) -> Vec<usize> {
        let bytes = text.as_bytes();
        let mut cuts = Vec::new();
        let mut iter = text.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            match c {
                '.' | '?' | '!' => {
                    let mut end = i + c.len_utf8();
                    while let Some(&(j, n)) = iter.peek() {
                        if matches!(n, '.' | '?' | '!' | '"' | '\'' | '”' | '’' | ')' | ']') {
                            end = j + n.len_utf8();
                            iter.next();
                        } else {
                            break;
                        }
                    }
                    let followed_by_space =
                        text[end..].chars().next().is_none_or(char::is_whitespace);
                    if !followed_by_space {
                        continue;
                    }
                    if let Some(next) = text[end..].trim_start().chars().next() {
                        if next.is_lowercase() {
                            continue;
                        }
                    }
                    if c == '.' && end == i + 1 && self.suppressed_period(text, i) {
                        continue;
                    }
                    cuts.push(end);
                }
                '\n' => {
                    let rest = &text[i + 1..];
                    let after_blanks = rest.trim_start_matches([' ', '\t', '\r']);
                    if after_blanks.starts_with('\n') {
                        cuts.push(i);
                    } else {
                        let line_end = rest.find('\n').unwrap_or(rest.len());
                        if is_enumerated_line(&rest[..line_end]) {
                            cuts.push(i);
                        }
                    }
                }
                _ => {}
            }
        }
        debug_assert!(cuts.iter().all(|&c| c <= bytes.len()));
        cuts
    }

    /// Whether the period at byte `dot` follows a token that keeps the
    /// sentence open: an abbreviation, an initial, a dotted abbreviation or
    /// a list enumerator at the start of its line.
    fn suppressed_period(&self, text: &str, dot: usize) -> bool {
        let before = &text[..dot];
        let token_start = before
            .rfind(char::is_whitespace)
            .map(|p| p + before[p..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(0);
        let raw = &before[token_start..];
        let token = raw.trim_start_matches(['(', '[', '"', '\'', '“', '‘']);
        if token.is_empty() {
            return false;
        }
        if self.is_abbreviation(token) {
            return true;
        }
        let mut chars = token.chars();
        if let (Some(first), None) = (chars.next(), chars.next()) {
            if first.is_alphabetic() {
                return true;
            }
        }
        if DOTTED_ABBREVIATION.is_match(token) {
            return true;
        }
        let line_start = before[..token_start].rfind('\n').map_or(0, |p| p + 1);
        let first_on_line = before[line_start..token_start].trim().is_empty();
        first_on_line
            && ((token.len() <= 3 && token.bytes().all(|b| b.is_ascii_digit()))
                || ROMAN.is_match(token))
    }
}
