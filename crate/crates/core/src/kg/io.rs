use std::fs;
use std::path::Path;

use super::{GraphBuilder, KgError, KnowledgeGraph};

fn read(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|e| KgError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Iterate over the meaningful lines of a tab-separated file, skipping blank
/// lines and `#` comments. Yields 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Parse `subject<TAB>predicate<TAB>object` lines.
pub fn parse_triples(text: &str) -> Result<KnowledgeGraph, KgError> {
    let mut b = GraphBuilder::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(KgError::MalformedLine { line, expected: 3, found: fields.len() });
        }
        b.add(fields[0].trim(), fields[1].trim(), fields[2].trim());
    }
    b.build()
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    parse_triples(&read(path.as_ref())?)
}

/// Read a two-column `key<TAB>value` file (aliases, entity types, relation
/// phrases). Order is preserved.
pub fn read_tsv_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, KgError> {
    parse_tsv_pairs(&read(path.as_ref())?)
}

pub(crate) fn parse_tsv_pairs(text: &str) -> Result<Vec<(String, String)>, KgError> {
    data_lines(text)
        .map(|(line, l)| {
            let fields: Vec<&str> = l.split('\t').collect();
            match fields.as_slice() {
                [k, v] if !k.trim().is_empty() && !v.trim().is_empty() => {
                    Ok((k.trim().to_string(), v.trim().to_string()))
                }
                _ => Err(KgError::MalformedLine { line, expected: 2, found: fields.len() }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_fixture_file() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/toy/kg.tsv");
        let g = load_triples(path).unwrap();
        let s = g.stats();
        assert_eq!((s.entities, s.relations, s.triples), (8, 3, 7));
        // first-seen id order
        assert_eq!(g.entity_name(super::super::EntityId(0)), "roald_dahl");
        assert_eq!(g.entity_name(super::super::EntityId(1)), "the_witches");
    }

    #[test]
    fn empty_and_comment_only_files() {
        assert_eq!(parse_triples("").unwrap_err(), KgError::EmptyGraph);
        assert_eq!(parse_triples("# nothing\n\n").unwrap_err(), KgError::EmptyGraph);
    }

    #[test]
    fn duplicate_lines_are_merged() {
        let g = parse_triples("a\tr\tb\na\tr\tb\n").unwrap();
        assert_eq!(g.triples().len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_triples("a\tr\tb\n# c\na\tr\n").unwrap_err();
        assert_eq!(err, KgError::MalformedLine { line: 3, expected: 3, found: 2 });
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_triples("/nonexistent/kg.tsv"), Err(KgError::Io { .. })));
    }

    #[test]
    fn pairs_parse() {
        let p = parse_tsv_pairs("the_bfg\tThe BFG\n#x\nthe_bfg\tBFG\n").unwrap();
        assert_eq!(p.len(), 2);
        assert!(parse_tsv_pairs("only_one_field\n").is_err());
    }
}
