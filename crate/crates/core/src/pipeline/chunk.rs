//! Splitting a document into extraction units: one chunk per bullet item
//! where the document has explicit lists, sentence-aligned windows of at
//! most `max_tokens` words elsewhere.

use serde::{Deserialize, Serialize};

use super::{Chunk, ChunkSource};
use crate::textprep::{is_enumerated_line, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkOptions {
    /// Window size in whitespace-delimited words.
    pub max_tokens: usize,
    /// Consecutive enumerated lines needed to treat a region as a list.
    pub min_bullet_run: usize,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        Self {
            max_tokens: 1000,
            min_bullet_run: 2,
        }
    }
}

fn tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

struct BulletItem {
    span: (usize, usize),
    lead_in: Option<String>,
}

/// Trimmed byte span of every line.
fn line_spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end();
        let lead = body.len() - body.trim_start().len();
        out.push((offset + lead, offset + body.len()));
        offset += line.len();
    }
    out
}

fn bullet_items(text: &str, min_run: usize) -> Vec<BulletItem> {
    let lines = line_spans(text);
    let mut items = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (s, e) = lines[i];
        if s == e || !is_enumerated_line(&text[s..e]) {
            i += 1;
            continue;
        }
        // A run of enumerated lines, blank lines allowed in between.
        let mut run = vec![i];
        let mut j = i + 1;
        while j < lines.len() {
            let (s2, e2) = lines[j];
            if s2 == e2 {
                j += 1;
                continue;
            }
            if is_enumerated_line(&text[s2..e2]) {
                run.push(j);
                j += 1;
            } else {
                break;
            }
        }
        if run.len() >= min_run.max(1) {
            let lead_in = lines[..i]
                .iter()
                .rev()
                .find(|(a, b)| a != b)
                .map(|&(a, b)| text[a..b].to_string());
            for k in run.iter() {
                items.push(BulletItem {
                    span: lines[*k],
                    lead_in: lead_in.clone(),
                });
            }
        }
        i = j;
    }
    items
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn make_chunk(
    text: &str,
    span: (usize, usize),
    source: ChunkSource,
    lead_in: Option<String>,
) -> Chunk {
    let body = &text[span.0..span.1];
    Chunk {
        index: 0,
        text: body.to_string(),
        source,
        token_count: tokens(body),
        span,
        lead_in,
    }
}

/// Chunk `text`, given its segmentation. Bullet items become
/// `bullet_group` chunks; the remaining sentences are packed greedily into
/// `token_window` chunks that never straddle a list. A sentence longer
/// than the window becomes a chunk of its own.
pub fn chunk_document(text: &str, sentences: &[Sentence], opts: &ChunkOptions) -> Vec<Chunk> {
    let max = opts.max_tokens.max(1);
    let mut items = bullet_items(text, opts.min_bullet_run);
    // Bullet items must coincide with sentence boundaries; otherwise the
    // list is ignored and the whole document is packed by sentence.
    let aligned = items.iter().all(|it| {
        sentences
            .iter()
            .filter(|s| overlaps(s.span, it.span))
            .all(|s| s.span.0 >= it.span.0 && s.span.1 <= it.span.1)
    });
    if !aligned {
        items.clear();
    }

    let mut chunks: Vec<Chunk> = Vec::new();
    let mut window: Option<(usize, usize)> = None;
    let mut window_tokens = 0;
    let flush = |window: &mut Option<(usize, usize)>,
                 window_tokens: &mut usize,
                 chunks: &mut Vec<Chunk>| {
        if let Some(span) = window.take() {
            chunks.push(make_chunk(text, span, ChunkSource::TokenWindow, None));
        }
        *window_tokens = 0;
    };
    let mut next_item = 0;
    for s in sentences {
        if let Some(pos) = items.iter().position(|it| overlaps(s.span, it.span)) {
            flush(&mut window, &mut window_tokens, &mut chunks);
            while next_item <= pos {
                let it = &items[next_item];
                chunks.push(make_chunk(
                    text,
                    it.span,
                    ChunkSource::BulletGroup,
                    it.lead_in.clone(),
                ));
                next_item += 1;
            }
            continue;
        }
        let t = tokens(&s.text);
        if window.is_some() && window_tokens + t > max {
            flush(&mut window, &mut window_tokens, &mut chunks);
        }
        if t > max {
            chunks.push(make_chunk(text, s.span, ChunkSource::TokenWindow, None));
            continue;
        }
        window = Some(match window {
            Some((a, _)) => (a, s.span.1),
            None => s.span,
        });
        window_tokens += t;
    }
    flush(&mut window, &mut window_tokens, &mut chunks);
    for it in &items[next_item..] {
        chunks.push(make_chunk(
            text,
            it.span,
            ChunkSource::BulletGroup,
            it.lead_in.clone(),
        ));
    }
    chunks.sort_by_key(|c| c.span.0);
    for (i, c) in chunks.iter_mut().enumerate() {
        c.index = i;
    }
    chunks
}
