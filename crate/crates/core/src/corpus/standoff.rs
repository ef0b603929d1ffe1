//! Standoff (`.ann`) reading and writing.
//!
//! Only text-bound `T` lines are interpreted. Relation, event and attribute
//! lines (`R`, `E`, `A`, ...) are skipped, as are `#` comment lines.

use std::collections::BTreeSet;

use super::{CorpusError, Entity, LabelSource, Note};
use crate::text::CharIndex;

/// Parse one note from its text and standoff annotation document.
pub fn parse_standoff(note_id: &str, text: &str, ann_doc: &str) -> Result<Note, CorpusError> {
    let idx = CharIndex::new(text);
    let mut seen_ids = BTreeSet::new();
    let mut entities = Vec::new();

    for (lineno, raw) in ann_doc.lines().enumerate() {
        let line = lineno + 1;
        let err = |message: String| CorpusError::Parse { line, message };
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        if !raw.starts_with('T') {
            continue;
        }
        let mut fields = raw.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let (Some(header), Some(surface)) = (fields.next(), fields.next()) else {
            return Err(err(format!("expected 3 tab-separated fields in {raw:?}")));
        };
        if id.len() < 2 || !id[1..].bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(format!("malformed annotation id {id:?}")));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(err(format!("duplicate annotation id {id}")));
        }
        let mut parts = header.split(' ');
        let (Some(etype), Some(start), Some(end), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(err(format!(
                "expected `<TYPE> <start> <end>`, got {header:?}"
            )));
        };
        if header.contains(';') {
            return Err(err("discontinuous spans are not supported".into()));
        }
        if etype.is_empty() {
            return Err(err("empty entity type".into()));
        }
        let start: usize = start
            .parse()
            .map_err(|_| err(format!("bad start offset {start:?}")))?;
        let end: usize = end
            .parse()
            .map_err(|_| err(format!("bad end offset {end:?}")))?;
        if start >= end {
            return Err(err(format!("empty or inverted span [{start}, {end})")));
        }
        let Some(actual) = idx.slice(start, end) else {
            return Err(err(format!(
                "span [{start}, {end}) out of bounds for text of length {}",
                idx.len()
            )));
        };
        if actual != surface {
            return Err(err(format!(
                "surface mismatch: annotation says {surface:?}, text has {actual:?}"
            )));
        }
        entities.push(Entity::new(start, end, surface, etype, LabelSource::Gold));
    }

    Note::new(note_id, text, entities)
}

/// Serialize the gold entities of a note as a standoff document, numbering
/// `T` ids in gold order.
pub fn write_standoff(note: &Note) -> String {
    let mut out = String::new();
    for (i, e) in note.gold_entities.iter().enumerate() {
        out.push_str(&format!(
            "T{}\t{} {} {}\t{}\n",
            i + 1,
            e.entity_type,
            e.start,
            e.end,
            e.text
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NITRO: &str = "However, her symptoms were relieved with nitro.";

    #[test]
    fn single_drug() {
        // independent check: locate the surface by substring search
        let byte = NITRO.find("nitro").unwrap();
        let start = NITRO[..byte].chars().count();
        assert_eq!((start, start + 5), (41, 46));

        let note = parse_standoff("n", NITRO, "T1\tDrug 41 46\tnitro\n").unwrap();
        assert_eq!(note.gold_entities.len(), 1);
        assert_eq!(note.gold_entities[0].text, "nitro");
        assert_eq!(note.gold_entities[0].entity_type, "Drug");
    }

    #[test]
    fn empty_annotation() {
        let note = parse_standoff("n", "abc", "").unwrap();
        assert!(note.gold_entities.is_empty());
    }

    #[test]
    fn surface_mismatch() {
        let err = parse_standoff("n", NITRO, "T1\tDrug 41 50\tnitro").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_bounds_names_line() {
        let err = parse_standoff("n", "abc", "# c\nT1\tX 0 1\ta\nT2\tX 2 9\tc").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_id() {
        let err = parse_standoff("n", "abc", "T1\tX 0 1\ta\nT1\tX 1 2\tb").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn skips_comments_and_relations() {
        let ann = "#1\tAnnotatorNotes T1\tnote\nT1\tX 0 1\ta\nR1\tBEFORE Arg1:T1 Arg2:T1\n";
        assert_eq!(parse_standoff("n", "abc", ann).unwrap().gold_entities.len(), 1);
    }

    #[test]
    fn unicode_offsets_are_chars() {
        let note = parse_standoff("n", "é nitro", "T1\tDrug 2 7\tnitro").unwrap();
        assert_eq!(note.gold_entities[0].start, 2);
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(
            text in "[a-zé .]{1,40}",
            spans in proptest::collection::vec((0usize..40, 1usize..6, 0usize..3), 0..6),
        ) {
            let n = text.chars().count();
            let types = ["Drug", "Form", "Route"];
            let ann: String = spans
                .iter()
                .filter(|(s, l, _)| s + l <= n)
                .enumerate()
                .map(|(i, (s, l, t))| {
                    let surface: String = text.chars().skip(*s).take(*l).collect();
                    format!("T{}\t{} {} {}\t{}\n", i + 1, types[*t], s, s + l, surface)
                })
                .collect();
            let note = parse_standoff("n", &text, &ann).unwrap();
            let again = parse_standoff("n", &text, &write_standoff(&note)).unwrap();
            prop_assert_eq!(note, again);
        }
    }
}
