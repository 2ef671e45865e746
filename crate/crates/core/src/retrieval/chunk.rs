//! Token-window chunking that prefers paragraph, then sentence, then word
//! boundaries. Tokens are whitespace-delimited words.

/// Splits `text` into chunks of at most `size` tokens. Consecutive chunks
/// share at most `overlap` tokens, and dropping each chunk's shared prefix
/// and concatenating reproduces the token sequence.
///
/// # Panics
/// If `size == 0` or `overlap >= size`.
pub fn chunk_text(text: &str, size: usize, overlap: usize) -> Vec<String> {
    chunk_spans(text, size, overlap)
        .into_iter()
        .map(|(s, e)| tokens_of(text)[s..e].join(" "))
        .collect()
}

fn tokens_of(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Token index ranges `[start, end)` of each chunk.
pub fn chunk_spans(text: &str, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    assert!(size > 0 && overlap < size, "chunk size must exceed overlap");
    let (tokens, para_ends) = paragraph_tokens(text);
    let n = tokens.len();
    let sentence_end = |i: usize| tokens[i - 1].ends_with(['.', '!', '?']);
    let mut spans = Vec::new();
    let mut start = 0;
    while start < n {
        let hard = (start + size).min(n);
        let end = if hard == n {
            n
        } else {
            // Only snap back as far as half a window so chunks stay useful.
            let floor = start + size / 2;
            let window = (floor + 1..=hard).rev();
            let para = window.clone().find(|i| para_ends.contains(i));
            let sent = window.clone().find(|&i| sentence_end(i));
            para.or(sent).unwrap_or(hard)
        };
        spans.push((start, end));
        if end == n {
            break;
        }
        start = end.saturating_sub(overlap).max(start + 1);
    }
    spans
}

/// Tokens plus the token indices at which a paragraph ends.
fn paragraph_tokens(text: &str) -> (Vec<&str>, Vec<usize>) {
    let mut tokens = Vec::new();
    let mut ends = Vec::new();
    for para in text.split("\n\n") {
        let before = tokens.len();
        tokens.extend(para.split_whitespace());
        if tokens.len() > before {
            ends.push(tokens.len());
        }
    }
    (tokens, ends)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_text_is_one_chunk() {
        assert_eq!(chunk_text(&words(500), 1000, 100).len(), 1);
        assert!(chunk_text("", 1000, 100).is_empty());
        assert!(chunk_text("  \n\n ", 1000, 100).is_empty());
    }

    #[test]
    fn nineteen_hundred_tokens_make_two_chunks() {
        let text = words(1900);
        let spans = chunk_spans(&text, 1000, 100);
        assert_eq!(spans, vec![(0, 1000), (900, 1900)]);
        let chunks = chunk_text(&text, 1000, 100);
        let a: Vec<&str> = chunks[0].split(' ').collect();
        let b: Vec<&str> = chunks[1].split(' ').collect();
        assert_eq!(a[900..], b[..100]);
    }

    #[test]
    fn prefers_paragraph_then_sentence_boundaries() {
        // paragraph break after token 7, sentence end after token 9
        let text = "a b c d e f g\n\nh i. j k l m n o p";
        assert_eq!(chunk_spans(text, 10, 2)[0], (0, 7));
        let text = "a b c d e f g h i. j k l m n o p";
        assert_eq!(chunk_spans(text, 10, 2)[0], (0, 9));
    }

    proptest! {
        #[test]
        fn chunks_cover_and_reconstruct(
            raw in proptest::collection::vec(("[a-z]{1,4}", 0u8..6), 0..300),
            size in 2usize..60,
            overlap_frac in 0.0f64..0.9,
        ) {
            let overlap = ((size as f64) * overlap_frac) as usize;
            let overlap = overlap.min(size - 1);
            let mut text = String::new();
            for (w, kind) in &raw {
                text.push_str(w);
                text.push_str(match kind { 0 => ". ", 1 => "\n\n", _ => " " });
            }
            let tokens: Vec<&str> = text.split_whitespace().collect();
            let spans = chunk_spans(&text, size, overlap);
            let mut rebuilt: Vec<&str> = Vec::new();
            let mut prev_end = 0;
            for &(s, e) in &spans {
                prop_assert!(e - s <= size);
                prop_assert!(s <= prev_end);
                prop_assert!(prev_end - s <= overlap);
                rebuilt.extend(&tokens[prev_end..e]);
                prev_end = e;
            }
            prop_assert_eq!(rebuilt, tokens);
        }
    }
}
