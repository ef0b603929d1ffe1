//! Rule-based sentence segmentation.
//!
//! Boundaries fall after `.`, `!` or `?` when the next char is whitespace,
//! and at blank lines. Sentences are trimmed of surrounding whitespace, so
//! the gaps between them are whitespace-only.

use super::Sentence;

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

pub fn segment_text(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_terminator(c) && chars.get(i + 1).is_some_and(|n| n.is_whitespace()) {
            cuts.push(i + 1);
        } else if c == '\n' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() && chars[j] != '\n' {
                j += 1;
            }
            if chars.get(j) == Some(&'\n') {
                cuts.push(i);
            }
        }
        i += 1;
    }
    cuts.push(chars.len());

    let mut sentences = Vec::new();
    let mut seg_start = 0;
    for cut in cuts {
        let mut s = seg_start;
        let mut e = cut;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            sentences.push(Sentence {
                index: sentences.len(),
                start: s,
                end: e,
                text: chars[s..e].iter().collect(),
            });
        }
        seg_start = cut;
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        segment_text(s).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn two_periods() {
        assert_eq!(texts("A. B."), ["A.", "B."]);
    }

    #[test]
    fn blank_line() {
        assert_eq!(texts("line1\n\nline2"), ["line1", "line2"]);
        assert_eq!(texts("line1\n  \t\nline2"), ["line1", "line2"]);
        assert_eq!(texts("line1\nline2"), ["line1\nline2"]);
    }

    #[test]
    fn no_terminator() {
        let s = segment_text("no terminator");
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].start, s[0].end), (0, 13));
    }

    #[test]
    fn never_inside_token() {
        assert_eq!(texts("Take 0.5 mg q.d. now"), ["Take 0.5 mg q.d.", "now"]);
        assert_eq!(texts("Really?! Yes"), ["Really?!", "Yes"]);
    }

    #[test]
    fn whitespace_only() {
        assert!(segment_text("  \n\n ").is_empty());
    }

    proptest! {
        #[test]
        fn spans_and_gaps_cover_text(text in "[a-c .!?\n\t]{0,60}") {
            let sents = segment_text(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut pos = 0;
            for (i, s) in sents.iter().enumerate() {
                prop_assert_eq!(s.index, i);
                prop_assert!(s.start >= pos && s.start < s.end);
                prop_assert!(chars[pos..s.start].iter().all(|c| c.is_whitespace()));
                let body: String = chars[s.start..s.end].iter().collect();
                prop_assert_eq!(&body, &s.text);
                pos = s.end;
            }
            prop_assert!(chars[pos..].iter().all(|c| c.is_whitespace()));
        }
    }
}
