//! Deterministic hallucination critic.
//!
//! A mention is *extrinsic* when its entity lies outside the record's k-hop
//! subgraph and its surface never appeared in the dialogue history. Among the
//! remaining in-subgraph mentions, *intrinsic* hallucinations are detected
//! from the edges between co-occurring mentions.

mod linker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{derive_anchors, in_history, AnchorSource, DialogueError, DialogueRecord, MentionSpan};
use crate::kg::{KgError, KnowledgeGraph, RelationId, Subgraph};
use crate::text::{char_slice, fold};

pub use linker::AliasTable;

#[derive(Debug, Error, PartialEq)]
pub enum CriticError {
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("response has grounding triples but no linkable entity mention")]
    UnlinkedResponse,
}

impl From<KgError> for CriticError {
    fn from(e: KgError) -> Self {
        Self::Dialogue(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HallucinationLabel {
    Faithful,
    Extrinsic,
    Intrinsic,
}

impl HallucinationLabel {
    pub fn is_hallucinated(self) -> bool {
        self != Self::Faithful
    }
}

/// How relationships between co-occurring in-graph mentions are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicMode {
    /// A mention is intrinsic when no other co-occurring in-graph mention
    /// shares a direct edge with it, in either orientation.
    #[default]
    Undirected,
    /// Undirected check, plus: when a relation phrase sits between two
    /// consecutive in-graph mentions, the oriented triple
    /// (first, relation, second) must exist.
    Directed,
}

impl std::str::FromStr for IntrinsicMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "undirected" => Ok(Self::Undirected),
            "directed" => Ok(Self::Directed),
            other => Err(format!("unknown intrinsic mode {other:?}")),
        }
    }
}

/// Relation phrases (`relation<TAB>phrase`), matched as case-insensitive
/// substrings of the text between two mentions.
#[derive(Debug, Clone, Default)]
pub struct RelationLexicon {
    entries: Vec<(RelationId, String)>,
}

impl RelationLexicon {
    pub fn from_pairs<'a, I>(g: &KnowledgeGraph, pairs: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let entries = pairs
            .into_iter()
            .map(|(rel, phrase)| Ok((g.relation_id(rel)?, fold(phrase.trim()))))
            .collect::<Result<Vec<_>, KgError>>()?;
        Ok(Self { entries: entries.into_iter().filter(|(_, p)| !p.is_empty()).collect() })
    }

    /// Relations whose phrase occurs in `between`, sorted and deduplicated.
    pub fn relations_in(&self, between: &str) -> Vec<RelationId> {
        let folded = fold(between);
        let mut rels: Vec<RelationId> = self
            .entries
            .iter()
            .filter(|(_, p)| folded.contains(p.as_str()))
            .map(|&(r, _)| r)
            .collect();
        rels.sort();
        rels.dedup();
        rels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelledMention {
    #[serde(flatten)]
    pub span: MentionSpan,
    pub label: HallucinationLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CriticReport {
    pub mentions: Vec<LabelledMention>,
    pub sentence_flag: bool,
}

impl CriticReport {
    fn new(mentions: Vec<LabelledMention>) -> Self {
        let sentence_flag = mentions.iter().any(|m| m.label.is_hallucinated());
        Self { mentions, sentence_flag }
    }

    /// The flagged set `M_c`, in text order.
    pub fn flagged(&self) -> impl Iterator<Item = &LabelledMention> {
        self.mentions.iter().filter(|m| m.label.is_hallucinated())
    }

    /// Label entries in the critic output format.
    pub fn label_entries(&self) -> Vec<LabelEntry> {
        self.mentions
            .iter()
            .map(|m| LabelEntry { begin: m.span.begin, end: m.span.end, label: m.label })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub begin: usize,
    pub end: usize,
    pub label: HallucinationLabel,
}

/// One line of critic output: the input record plus labels and flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CritiqueLine {
    #[serde(flatten)]
    pub record: DialogueRecord,
    pub labels: Vec<LabelEntry>,
    pub flagged: bool,
}

/// Inputs the critic needs besides the record itself.
#[derive(Debug, Clone, Copy)]
pub struct Critic<'a> {
    pub graph: &'a KnowledgeGraph,
    pub aliases: &'a AliasTable,
    pub mode: IntrinsicMode,
    pub lexicon: Option<&'a RelationLexicon>,
}

impl<'a> Critic<'a> {
    pub fn new(graph: &'a KnowledgeGraph, aliases: &'a AliasTable) -> Self {
        Self { graph, aliases, mode: IntrinsicMode::Undirected, lexicon: None }
    }

    pub fn with_mode(mut self, mode: IntrinsicMode, lexicon: Option<&'a RelationLexicon>) -> Self {
        self.mode = mode;
        self.lexicon = lexicon;
        self
    }

    pub fn critique(&self, record: &DialogueRecord, sub: &Subgraph) -> Result<CriticReport, CriticError> {
        critique_response(record, sub, self)
    }

    /// Critique against the `k`-hop subgraph of the record's own anchors.
    /// Without anchors nothing is supported, so every mention absent from
    /// the history is extrinsic.
    pub fn critique_record(
        &self,
        record: &DialogueRecord,
        source: AnchorSource,
        k: usize,
    ) -> Result<CriticReport, CriticError> {
        let sub = match derive_anchors(record, self.graph, self.aliases, source)? {
            Some(a) => self.graph.khop_subgraph(a.set, k)?,
            None => Subgraph::empty(k),
        };
        critique_response(record, &sub, self)
    }
}

/// Label every mention of `record.response` against `sub`.
pub fn critique_response(
    record: &DialogueRecord,
    sub: &Subgraph,
    critic: &Critic<'_>,
) -> Result<CriticReport, CriticError> {
    let spans = record.mentions(critic.graph, critic.aliases)?;
    if spans.is_empty() && !record.triples.is_empty() {
        return Err(CriticError::UnlinkedResponse);
    }

    let mut labels: Vec<HallucinationLabel> = spans
        .iter()
        .map(|m| {
            if !sub.contains(m.entity) && !in_history(&record.history, &m.surface) {
                HallucinationLabel::Extrinsic
            } else {
                HallucinationLabel::Faithful
            }
        })
        .collect();

    // mentions that can take part in relationship checks
    let in_graph: Vec<usize> = (0..spans.len())
        .filter(|&i| labels[i] == HallucinationLabel::Faithful && sub.contains(spans[i].entity))
        .collect();

    let mut intrinsic = vec![false; spans.len()];
    for &i in &in_graph {
        let mut partners = in_graph.iter().filter(|&&j| spans[j].entity != spans[i].entity).peekable();
        if partners.peek().is_none() {
            continue;
        }
        let mut connected = false;
        for &j in partners {
            if !sub.has_direct_edge(spans[i].entity, spans[j].entity, false)?.is_empty() {
                connected = true;
                break;
            }
        }
        intrinsic[i] |= !connected;
    }

    if let (IntrinsicMode::Directed, Some(lexicon)) = (critic.mode, critic.lexicon) {
        for w in in_graph.windows(2) {
            let (a, b) = (&spans[w[0]], &spans[w[1]]);
            if a.entity == b.entity {
                continue;
            }
            let between = char_slice(&record.response, a.end, b.begin).unwrap_or("");
            let oriented = sub.has_direct_edge(a.entity, b.entity, true)?;
            if lexicon.relations_in(between).iter().any(|r| !oriented.contains(r)) {
                intrinsic[w[0]] = true;
                intrinsic[w[1]] = true;
            }
        }
    }

    for (label, hit) in labels.iter_mut().zip(&intrinsic) {
        if *hit {
            *label = HallucinationLabel::Intrinsic;
        }
    }
    Ok(CriticReport::new(
        spans.into_iter().zip(labels).map(|(span, label)| LabelledMention { span, label }).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::fixtures::toy;

    fn toy_aliases(g: &KnowledgeGraph) -> AliasTable {
        let mut t = AliasTable::from_pairs(
            g,
            [
                ("the_bfg", "The BFG"),
                ("the_time_machine", "The Time Machine"),
                ("the_invisible_man", "The Invisible Man"),
            ],
        )
        .unwrap();
        t.add_canonical_names(g);
        t
    }

    fn graph() -> KnowledgeGraph {
        toy().with_extra_entities(["the_time_machine", "the_invisible_man"])
    }

    #[test]
    fn out_of_subgraph_mentions_are_extrinsic() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(
            vec!["The Witches is written by Roald Dahl.".into()],
            vec![["roald_dahl".into(), "wrote".into(), "the_witches".into()]],
            "He also wrote The Time Machine and The Invisible Man",
        );
        let report = Critic::new(&g, &aliases).critique(&r, &sub).unwrap();
        assert_eq!(report.mentions.len(), 2);
        assert!(report.mentions.iter().all(|m| m.label == HallucinationLabel::Extrinsic));
        assert!(report.sentence_flag);
        assert_eq!(report.flagged().count(), 2);
    }

    #[test]
    fn anchor_adjacent_mention_is_faithful() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(vec![], vec![], "I love The BFG");
        let report = Critic::new(&g, &aliases).critique(&r, &sub).unwrap();
        assert_eq!(report.mentions[0].label, HallucinationLabel::Faithful);
        assert!(!report.sentence_flag);
    }

    #[test]
    fn critique_record_uses_own_anchors() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let critic = Critic::new(&g, &aliases);
        let grounded = DialogueRecord::new(
            vec![],
            vec![["roald_dahl".into(), "wrote".into(), "the_witches".into()]],
            "He also wrote The BFG and The Time Machine",
        );
        let report = critic.critique_record(&grounded, AnchorSource::Grounding, 1).unwrap();
        let labels: Vec<_> = report.mentions.iter().map(|m| m.label).collect();
        assert_eq!(labels, [HallucinationLabel::Faithful, HallucinationLabel::Extrinsic]);

        let bare = DialogueRecord::new(vec!["hello".into()], vec![], "The BFG");
        let report = critic.critique_record(&bare, AnchorSource::default(), 1).unwrap();
        assert_eq!(report.mentions[0].label, HallucinationLabel::Extrinsic);
    }

    #[test]
    fn history_mentions_are_exempt() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let r = DialogueRecord::new(vec!["Is The Hobbit any good?".into()], vec![], "The Hobbit is great");
        let report = Critic::new(&g, &aliases).critique(&r, &sub).unwrap();
        assert_eq!(report.mentions[0].label, HallucinationLabel::Faithful);
    }

    #[test]
    fn unconnected_pair_is_intrinsic_both_ways() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let id = |n: &str| g.entity_id(n).unwrap();
        let sub = g.khop_subgraph([id("roald_dahl")], 2).unwrap();
        let critic = Critic::new(&g, &aliases);
        for text in ["quentin blake wrote the witches", "the witches was drawn by quentin blake"] {
            let r = DialogueRecord::new(vec![], vec![], text);
            let report = critic.critique(&r, &sub).unwrap();
            assert!(report.mentions.iter().all(|m| m.label == HallucinationLabel::Intrinsic), "{text}");
        }
        let r = DialogueRecord::new(vec![], vec![], "quentin blake drew The BFG");
        assert!(!critic.critique(&r, &sub).unwrap().sentence_flag);
    }

    #[test]
    fn directed_mode_catches_swapped_pair() {
        let g = KnowledgeGraph::from_named([("crescendo", "written_by", "becca_fitzpatrick")]).unwrap();
        let aliases = AliasTable::from_canonical_names(&g);
        let lexicon = RelationLexicon::from_pairs(&g, [("written_by", "was written by")]).unwrap();
        let sub = g.khop_subgraph([g.entity_id("crescendo").unwrap()], 1).unwrap();
        let swapped = DialogueRecord::new(vec![], vec![], "Becca Fitzpatrick was written by Crescendo");
        let original = DialogueRecord::new(vec![], vec![], "Crescendo was written by Becca Fitzpatrick");

        let undirected = Critic::new(&g, &aliases);
        assert!(!undirected.critique(&swapped, &sub).unwrap().sentence_flag);

        let directed = undirected.with_mode(IntrinsicMode::Directed, Some(&lexicon));
        let report = directed.critique(&swapped, &sub).unwrap();
        assert_eq!(report.mentions.len(), 2);
        assert!(report.mentions.iter().all(|m| m.label == HallucinationLabel::Intrinsic));
        assert!(!directed.critique(&original, &sub).unwrap().sentence_flag);
    }

    #[test]
    fn unlinked_response_with_grounding_is_an_error() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let sub = g.khop_subgraph([g.entity_id("roald_dahl").unwrap()], 1).unwrap();
        let mut r = DialogueRecord::new(vec![], vec![["roald_dahl".into(), "wrote".into(), "the_bfg".into()]], "nothing here");
        let critic = Critic::new(&g, &aliases);
        assert_eq!(critic.critique(&r, &sub).unwrap_err(), CriticError::UnlinkedResponse);
        r.triples.clear();
        assert!(critic.critique(&r, &sub).unwrap().mentions.is_empty());
    }

    #[test]
    fn extrinsic_is_never_a_subgraph_node() {
        let g = graph();
        let aliases = toy_aliases(&g);
        let critic = Critic::new(&g, &aliases);
        let text = "roald dahl, the bfg, the hobbit, fantasy, the time machine, jrr tolkien";
        for anchor in ["roald_dahl", "fantasy", "the_hobbit"] {
            for k in 0..3 {
                let sub = g.khop_subgraph([g.entity_id(anchor).unwrap()], k).unwrap();
                let report = critic.critique(&DialogueRecord::new(vec![], vec![], text), &sub).unwrap();
                for m in &report.mentions {
                    if m.label == HallucinationLabel::Extrinsic {
                        assert!(!sub.contains(m.span.entity));
                    }
                }
                assert_eq!(report.sentence_flag, report.flagged().count() > 0);
            }
        }
    }
}
