//! Dictionary entity linker: leftmost-longest, case-insensitive matching of
//! alias surface forms on word boundaries.

use std::collections::HashMap;

use crate::dialogue::MentionSpan;
use crate::kg::{EntityId, KgError, KnowledgeGraph};
use crate::text::{fold_char, is_word_char};

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<char, usize>,
    entity: Option<EntityId>,
}

/// Many-to-one surface form table backed by a character trie.
#[derive(Debug, Clone)]
pub struct AliasTable {
    nodes: Vec<Node>,
    preferred: HashMap<EntityId, String>,
    len: usize,
}

impl Default for AliasTable {
    fn default() -> Self {
        Self { nodes: vec![Node::default()], preferred: HashMap::new(), len: 0 }
    }
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct surface forms.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Register `surface` for `entity`. The first surface registered for an
    /// entity becomes its preferred form; a surface already claimed by another
    /// entity keeps its first owner.
    pub fn insert(&mut self, entity: EntityId, surface: &str) {
        let surface = surface.trim();
        if surface.is_empty() {
            return;
        }
        self.preferred.entry(entity).or_insert_with(|| surface.to_string());
        let mut at = 0;
        for c in surface.chars().map(fold_char) {
            at = match self.nodes[at].children.get(&c) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[at].children.insert(c, next);
                    next
                }
            };
        }
        match self.nodes[at].entity {
            None => {
                self.nodes[at].entity = Some(entity);
                self.len += 1;
            }
            Some(owner) if owner != entity => {
                log::warn!("alias {surface:?} already maps to {owner}; ignoring it for {entity}");
            }
            Some(_) => {}
        }
    }

    /// Build from `(entity name, surface)` pairs; entity names must exist in
    /// the graph vocabulary.
    pub fn from_pairs<'a, I>(g: &KnowledgeGraph, pairs: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut t = Self::new();
        for (name, surface) in pairs {
            t.insert(g.entity_id(name)?, surface);
        }
        Ok(t)
    }

    /// Canonical names with underscores read as spaces.
    pub fn from_canonical_names(g: &KnowledgeGraph) -> Self {
        let mut t = Self::new();
        t.add_canonical_names(g);
        t
    }

    /// Add each entity's canonical name as a lower-priority alias.
    pub fn add_canonical_names(&mut self, g: &KnowledgeGraph) {
        for (i, name) in g.entities().names().iter().enumerate() {
            self.insert(EntityId(i as u32), &name.replace('_', " "));
        }
    }

    pub fn preferred(&self, e: EntityId) -> Option<&str> {
        self.preferred.get(&e).map(String::as_str)
    }

    /// Surface used when writing `e` into text.
    pub fn surface(&self, g: &KnowledgeGraph, e: EntityId) -> String {
        match self.preferred(e) {
            Some(s) => s.to_string(),
            None => g.entity_name(e).replace('_', " "),
        }
    }

    /// Link mentions in `text`: scanning left to right, at each word-boundary
    /// start take the longest alias that also ends on a word boundary, then
    /// resume after it. Output is sorted and non-overlapping.
    pub fn link(&self, text: &str) -> Vec<MentionSpan> {
        let chars: Vec<char> = text.chars().collect();
        let folded: Vec<char> = chars.iter().map(|&c| fold_char(c)).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if !self.starts_ok(&chars, i) {
                i += 1;
                continue;
            }
            let mut at = 0;
            let mut best: Option<(usize, EntityId)> = None;
            for (j, c) in folded.iter().enumerate().skip(i) {
                match self.nodes[at].children.get(c) {
                    Some(&next) => at = next,
                    None => break,
                }
                if let Some(e) = self.nodes[at].entity {
                    if ends_ok(&chars, j + 1) {
                        best = Some((j + 1, e));
                    }
                }
            }
            match best {
                Some((end, entity)) => {
                    out.push(MentionSpan {
                        entity,
                        begin: i,
                        end,
                        surface: chars[i..end].iter().collect(),
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }

    fn starts_ok(&self, chars: &[char], i: usize) -> bool {
        !is_word_char(chars[i]) || i == 0 || !is_word_char(chars[i - 1])
    }
}

fn ends_ok(chars: &[char], end: usize) -> bool {
    end == chars.len() || !is_word_char(chars[end - 1]) || !is_word_char(chars[end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::toy;

    fn table() -> (KnowledgeGraph, AliasTable) {
        let g = toy();
        let t = AliasTable::from_pairs(
            &g,
            [
                ("the_bfg", "The BFG"),
                ("charlie_and_the_chocolate_factory", "Charlie and the Chocolate Factory"),
                ("charlie_and_the_chocolate_factory", "Charlie"),
                ("roald_dahl", "Roald Dahl"),
                ("roald_dahl", "Dahl"),
            ],
        )
        .unwrap();
        (g, t)
    }

    #[test]
    fn single_mention_offsets() {
        let (g, t) = table();
        let m = t.link("I love The BFG");
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].begin, m[0].end), (7, 14));
        assert_eq!(m[0].entity, g.entity_id("the_bfg").unwrap());
        assert_eq!(m[0].surface, "The BFG");
    }

    #[test]
    fn longest_alias_wins() {
        let (_, t) = table();
        let m = t.link("Charlie and the Chocolate Factory is great, Charlie too.");
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].begin, m[0].end), (0, 33));
        assert_eq!((m[1].begin, m[1].end), (44, 51));
    }

    #[test]
    fn respects_word_boundaries_and_case() {
        let (_, t) = table();
        assert!(t.link("Dahlia grew").is_empty());
        assert!(t.link("Roald Dahlish").is_empty());
        let m = t.link("roald dahl, THE bfg.");
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].surface, "THE bfg");
    }

    #[test]
    fn empty_text() {
        let (_, t) = table();
        assert!(t.link("").is_empty());
    }

    #[test]
    fn preferred_surface_is_first_listed() {
        let (g, t) = table();
        let charlie = g.entity_id("charlie_and_the_chocolate_factory").unwrap();
        assert_eq!(t.surface(&g, charlie), "Charlie and the Chocolate Factory");
        let hobbit = g.entity_id("the_hobbit").unwrap();
        assert_eq!(t.surface(&g, hobbit), "the hobbit");
    }

    #[test]
    fn non_ascii_offsets_count_characters() {
        let g = KnowledgeGraph::from_named([("zoë", "r", "x")]).unwrap();
        let t = AliasTable::from_pairs(&g, [("zoë", "Zoë")]).unwrap();
        let m = t.link("Déjà vu, Zoë!");
        assert_eq!((m[0].begin, m[0].end), (9, 12));
    }
}
