//! Character-offset helpers.
//!
//! Every offset that crosses the crate boundary (mention spans, labels,
//! edits) counts Unicode scalar values, not bytes, so that JSON consumers in
//! other languages see the same positions.

/// Case fold a single character, keeping a one-to-one mapping so that folded
/// text has exactly as many characters as the original.
pub fn fold_char(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

pub fn fold(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

/// Lowercase and collapse runs of whitespace to single spaces.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the `char_idx`-th character (or `s.len()` at the end).
pub fn byte_offset(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(s.len())
}

/// Slice `s` by character offsets `[begin, end)`.
pub fn char_slice(s: &str, begin: usize, end: usize) -> Option<&str> {
    if begin > end {
        return None;
    }
    let b = byte_offset(s, begin)?;
    let e = byte_offset(s, end)?;
    Some(&s[b..e])
}

/// Whether `c` can be part of a word for the purpose of boundary tests.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// A replacement of the character range `[begin, end)` by `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splice {
    pub begin: usize,
    pub end: usize,
    pub text: String,
}

/// Result of applying a set of splices: the new text plus the location of each
/// inserted piece in the new text, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spliced {
    pub text: String,
    pub placed: Vec<(usize, usize)>,
}

/// Apply non-overlapping splices (any order) to `s`.
///
/// Returns `None` if a splice falls outside the text or two splices overlap.
pub fn apply_splices(s: &str, splices: &[Splice]) -> Option<Spliced> {
    let chars: Vec<char> = s.chars().collect();
    let mut order: Vec<usize> = (0..splices.len()).collect();
    order.sort_by_key(|&i| (splices[i].begin, splices[i].end));

    let mut out = String::with_capacity(s.len());
    let mut placed = vec![(0, 0); splices.len()];
    let mut cursor = 0;
    let mut out_len = 0;
    for i in order {
        let sp = &splices[i];
        if sp.begin < cursor || sp.begin > sp.end || sp.end > chars.len() {
            return None;
        }
        out.extend(&chars[cursor..sp.begin]);
        out_len += sp.begin - cursor;
        let n = char_len(&sp.text);
        out.push_str(&sp.text);
        placed[i] = (out_len, out_len + n);
        out_len += n;
        cursor = sp.end;
    }
    out.extend(&chars[cursor..]);
    Some(Spliced { text: out, placed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_characters() {
        let s = "héllo wörld";
        assert_eq!(char_slice(s, 6, 11), Some("wörld"));
        assert_eq!(char_slice(s, 0, 12), None);
        assert_eq!(byte_offset(s, 11), Some(s.len()));
    }

    #[test]
    fn splices_shift_later_positions() {
        let s = "He wrote A and B.";
        let out = apply_splices(
            s,
            &[
                Splice { begin: 15, end: 16, text: "Bee".into() },
                Splice { begin: 9, end: 10, text: "Alpha".into() },
            ],
        )
        .unwrap();
        assert_eq!(out.text, "He wrote Alpha and Bee.");
        assert_eq!(out.placed, vec![(19, 22), (9, 14)]);
    }

    #[test]
    fn overlapping_splices_rejected() {
        let splices = [
            Splice { begin: 0, end: 3, text: String::new() },
            Splice { begin: 2, end: 4, text: String::new() },
        ];
        assert!(apply_splices("abcdef", &splices).is_none());
    }

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(normalize_key("  The\tBFG  "), "the bfg");
    }
}
