//! Character-offset helpers.
//!
//! All offsets exposed by this crate count Unicode scalar values, while Rust
//! strings index by byte. `CharIndex` maps between the two.

/// Byte position of every char boundary in a string, plus the final length.
#[derive(Debug, Clone)]
pub struct CharIndex<'a> {
    text: &'a str,
    bounds: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        CharIndex { text, bounds }
    }

    /// Number of chars in the text.
    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> Option<usize> {
        self.bounds.get(char_offset).copied()
    }

    /// Slice `[start, end)` in char offsets; `None` if out of range or inverted.
    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end {
            return None;
        }
        let b0 = self.byte_offset(start)?;
        let b1 = self.byte_offset(end)?;
        Some(&self.text[b0..b1])
    }

    /// Char offset of a byte offset that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> Option<usize> {
        self.bounds.binary_search(&byte_offset).ok()
    }
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slice by char offsets without building an index.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    CharIndex::new(text).slice(start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multibyte_offsets() {
        let idx = CharIndex::new("aé😀b");
        assert_eq!(idx.len(), 4);
        assert_eq!(idx.slice(1, 3), Some("é😀"));
        assert_eq!(idx.slice(3, 4), Some("b"));
        assert_eq!(idx.slice(3, 5), None);
        assert_eq!(idx.char_offset(3), Some(2));
        assert_eq!(idx.char_offset(2), None);
    }
}
