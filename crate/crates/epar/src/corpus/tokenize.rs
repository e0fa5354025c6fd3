//! Tokenization and sentence splitting.
//!
//! Rules: lowercase, split on whitespace and on punctuation boundaries
//! (runs of alphanumeric-or-underscore characters form words, every other
//! non-space character is its own token). Placeholder tokens of the form
//! `@word123` pass through unchanged so masked candidates survive as single
//! tokens. Sentences end at `.`, `!`, or `?` followed by whitespace (or end
//! of text); a document with no terminator is one sentence.

/// Per-word character sequences are truncated or padded to this length.
pub const CHAR_PAD_LEN: usize = 16;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_placeholder(piece: &str) -> bool {
    let mut chars = piece.chars();
    matches!(chars.next(), Some('@')) && chars.clone().count() > 0 && chars.all(is_word_char)
}

/// Tokenize one whitespace-free piece.
fn tokenize_piece(piece: &str, out: &mut Vec<String>) {
    if is_placeholder(piece) {
        out.push(piece.to_string());
        return;
    }
    let lower = piece.to_lowercase();
    let mut word = String::new();
    for c in lower.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        tokenize_piece(piece, &mut out);
    }
    out
}

/// Tokenize a document and compute sentence spans over the token sequence.
/// Returns `(tokens, spans)` where the spans partition `0..tokens.len()`.
pub fn split_sentences(text: &str) -> (Vec<String>, Vec<(usize, usize)>) {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut sent_start = 0usize;

    let chars: Vec<char> = text.chars().collect();
    let mut piece_start = 0usize;
    let mut i = 0usize;
    let flush_piece = |start: usize, end: usize, tokens: &mut Vec<String>| {
        if start < end {
            let piece: String = chars[start..end].iter().collect();
            for p in piece.split_whitespace() {
                tokenize_piece(p, tokens);
            }
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let terminator = matches!(c, '.' | '!' | '?');
        let at_boundary =
            terminator && (i + 1 >= chars.len() || chars[i + 1].is_whitespace());
        if at_boundary {
            flush_piece(piece_start, i + 1, &mut tokens);
            piece_start = i + 1;
            if tokens.len() > sent_start {
                spans.push((sent_start, tokens.len()));
                sent_start = tokens.len();
            }
        }
        i += 1;
    }
    flush_piece(piece_start, chars.len(), &mut tokens);
    if tokens.len() > sent_start {
        spans.push((sent_start, tokens.len()));
    }
    (tokens, spans)
}

/// Fixed-length character sequence for one word: truncated to
/// [`CHAR_PAD_LEN`] characters, right-padded with `None` (the PAD slot).
pub fn word_chars(word: &str) -> Vec<Option<char>> {
    let mut out: Vec<Option<char>> = word.chars().take(CHAR_PAD_LEN).map(Some).collect();
    out.resize(CHAR_PAD_LEN, None);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("The Haunted Castle, in Loon op Zand."),
            vec!["the", "haunted", "castle", ",", "in", "loon", "op", "zand", "."]
        );
    }

    #[test]
    fn placeholders_pass_through_unchanged() {
        assert_eq!(tokenize("it is @placeholder17 now"), vec!["it", "is", "@placeholder17", "now"]);
        assert_eq!(tokenize("@Placeholder17"), vec!["@Placeholder17"]);
        // A lone '@' is punctuation, not a placeholder.
        assert_eq!(tokenize("a @ b"), vec!["a", "@", "b"]);
    }

    #[test]
    fn sentence_spans_partition_tokens() {
        let (tokens, spans) = split_sentences("First one. Second one! Third?");
        assert_eq!(spans.len(), 3);
        assert_eq!(spans[0].0, 0);
        assert_eq!(spans.last().unwrap().1, tokens.len());
        for w in spans.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        let (tokens, spans) = split_sentences("no terminator here");
        assert_eq!(spans, vec![(0, tokens.len())]);
    }

    #[test]
    fn abbreviation_dot_inside_word_does_not_split() {
        // "U.S." has dots not followed by whitespace except the final one.
        let (_, spans) = split_sentences("the u.s. army");
        assert_eq!(spans.len(), 2, "final dot of 'u.s.' precedes whitespace");
    }

    #[test]
    fn word_chars_pads_and_truncates() {
        let w = word_chars("ab");
        assert_eq!(w.len(), CHAR_PAD_LEN);
        assert_eq!(w[0], Some('a'));
        assert_eq!(w[2], None);
        let long = word_chars("abcdefghijklmnopqrstuvwxyz");
        assert_eq!(long.len(), CHAR_PAD_LEN);
        assert_eq!(long[CHAR_PAD_LEN - 1], Some('p'));
    }
}
