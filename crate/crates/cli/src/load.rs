use std::io::Write;
use std::path::Path;

use pathhunter::corrupt::EntityTypes;
use pathhunter::critic::AliasTable;
use pathhunter::kg::{load_triples, read_tsv_pairs, GraphBuilder, KnowledgeGraph, Triple};

use crate::config::{existing, required, RunConfig};
use crate::{CliError, GraphArgs};

pub struct Loaded {
    pub graph: KnowledgeGraph,
    pub aliases: AliasTable,
    pub types: Option<EntityTypes>,
    /// Held-out triples, resolved in `graph`.
    pub holdout: Vec<Triple>,
}

/// Graph from the triple file (plus held-out triples when given), with
/// alias-only and type-only entities appended to the vocabulary.
pub fn load(args: &GraphArgs, cfg: &RunConfig, holdout: Option<&Path>) -> Result<Loaded, CliError> {
    let kg = required(args.kg.clone(), cfg.kg.clone(), "kg")?;
    let alias_path = existing(args.aliases.clone(), cfg.aliases.clone(), "aliases")?;
    let type_path = existing(args.types.clone(), cfg.types.clone(), "types")?;
    let alias_pairs = alias_path.as_deref().map(read_tsv_pairs).transpose()?.unwrap_or_default();
    let type_pairs = type_path.as_deref().map(read_tsv_pairs).transpose()?.unwrap_or_default();

    let base = load_triples(&kg)?;
    let (graph, held_names) = match holdout {
        None => (base, Vec::new()),
        Some(p) => {
            let held = load_triples(p)?;
            let names = |g: &KnowledgeGraph, t: &Triple| {
                [g.entity_name(t.subject), g.relation_name(t.predicate), g.entity_name(t.object)].map(str::to_string)
            };
            let mut b = GraphBuilder::new();
            for t in base.triples() {
                let [s, p, o] = names(&base, t);
                b.add(&s, &p, &o);
            }
            // keep entities of the triple file even if all their edges were duplicates
            let held_names: Vec<[String; 3]> = held.triples().iter().map(|t| names(&held, t)).collect();
            for [s, p, o] in &held_names {
                b.add(s, p, o);
            }
            (b.build()?.with_extra_entities(base.entities().names().iter().map(String::as_str)), held_names)
        }
    };
    let graph = graph.with_extra_entities(alias_pairs.iter().chain(&type_pairs).map(|(e, _)| e.as_str()));
    let holdout = held_names.iter().map(|[s, p, o]| graph.resolve(s, p, o)).collect::<Result<_, _>>()?;

    let mut aliases = AliasTable::from_pairs(&graph, alias_pairs.iter().map(|(e, s)| (e.as_str(), s.as_str())))?;
    aliases.add_canonical_names(&graph);
    let types = match type_path {
        Some(_) => Some(EntityTypes::from_pairs(&graph, type_pairs.iter().map(|(e, t)| (e.as_str(), t.as_str())))?),
        None => None,
    };
    Ok(Loaded { graph, aliases, types, holdout })
}

/// Write to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    pathhunter::dialogue::write_jsonl(&mut buf, items)?;
    Ok(buf)
}
