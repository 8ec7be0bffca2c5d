use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use pathhunter::corrupt::{build_synthetic_dataset, CorruptionConfig, Corruptor, FailurePolicy};
use pathhunter::critic::{Critic, CriticError, CriticReport, CritiqueLine, IntrinsicMode, RelationLexicon};
use pathhunter::dialogue::{read_jsonl, AnchorSource, DialogueRecord};
use pathhunter::embed::{
    enrich_relational, evaluate_link_prediction, train as train_embeddings, CandidateScope, EmbeddingTable,
    EnrichConfig, EvalOptions, QuerySlots, RankingMode, SamplerRegistry, Slot, Snapshot, TrainingConfig,
};
use pathhunter::kg::read_tsv_pairs;
use pathhunter::metrics::{bleu, hallucination_rate_from_flags, ranking_metrics, BleuLevel, EvalSummary};
use pathhunter::retrieve::{refine_response, QueryRegistry, RefineConfig};
use pathhunter::seed::stage_seed;

use crate::config::{existing, pick, required, RunConfig};
use crate::load::{emit, jsonl, load, Loaded};
use crate::{
    CliError, CorruptArgs, CritiqueArgs, EvalArgs, GraphArgs, OnOff, RefineArgs, SubgraphArgs, TrainArgs,
    DEFAULT_SEED,
};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn parse<T: FromStr<Err = String>>(flag: Option<String>, config: Option<String>, default: T) -> Result<T, CliError> {
    match flag.or(config) {
        Some(s) => s.parse().map_err(invalid),
        None => Ok(default),
    }
}

fn seed(flag: Option<u64>, cfg: &RunConfig) -> u64 {
    flag.or(cfg.seed).unwrap_or_else(|| {
        log::info!("no seed given; using default seed {DEFAULT_SEED}");
        DEFAULT_SEED
    })
}

fn json_line<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn read_records(path: &std::path::Path) -> Result<Vec<DialogueRecord>, CliError> {
    if !path.is_file() {
        return Err(invalid(format!("input file {} does not exist", path.display())));
    }
    Ok(read_jsonl(path)?)
}

/// Critic report, or an empty one (with a warning) for grounded records
/// whose response links no entity.
fn critique_one(critic: &Critic<'_>, record: &DialogueRecord, source: AnchorSource, k: usize, i: usize) -> Result<CriticReport, CliError> {
    match critic.critique_record(record, source, k) {
        Ok(r) => Ok(r),
        Err(CriticError::UnlinkedResponse) => {
            log::warn!("record {i}: response mentions no known entity");
            Ok(CriticReport::default())
        }
        Err(e) => Err(CliError::Runtime(format!("record {i}: {e}"))),
    }
}

pub fn kg_stats(args: GraphArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let kg = required(args.kg, cfg.kg.clone(), "kg")?;
    let g = pathhunter::kg::load_triples(kg)?;
    emit(None, &json_line(&g.stats())?)
}

#[derive(Serialize)]
struct SubgraphOut {
    anchors: Vec<String>,
    hops: usize,
    nodes: Vec<String>,
    edges: Vec<[String; 3]>,
}

pub fn subgraph(args: SubgraphArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let Loaded { graph: g, .. } = load(&args.graph, cfg, None)?;
    let k = pick(args.k, cfg.k, 2);
    let anchors = args
        .anchors
        .iter()
        .map(|a| g.entity_id(a).map_err(|_| invalid(format!("unknown anchor entity {a:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let sub = g.khop_subgraph(anchors, k)?;
    let name = |e| g.entity_name(e).to_string();
    let out = SubgraphOut {
        anchors: sub.anchors().iter().copied().map(name).collect(),
        hops: k,
        nodes: sub.nodes().iter().copied().map(name).collect(),
        edges: sub
            .edges()
            .iter()
            .map(|t| [name(t.subject), g.relation_name(t.predicate).to_string(), name(t.object)])
            .collect(),
    };
    emit(None, &json_line(&out)?)
}

pub fn corrupt(args: CorruptArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load(&args.graph, cfg, None)?;
    let types = loaded.types.as_ref().ok_or_else(|| invalid("--types is required for corrupt"))?;
    let frac = pick(args.frac, cfg.frac, 0.6);
    if !(0.0..=1.0).contains(&frac) {
        return Err(invalid(format!("--frac must lie in [0, 1], got {frac}")));
    }
    let ccfg = CorruptionConfig {
        extrinsic_fraction: frac,
        seed: stage_seed(seed(args.seed, cfg), "corrupt"),
        policy: parse(args.policy, cfg.policy.clone(), FailurePolicy::default())?,
        hops: pick(args.hops, cfg.hops, 1),
        anchors: parse(args.anchors, cfg.anchors.clone(), AnchorSource::default())?,
    };
    let records = read_records(&args.input)?;
    let corruptor = Corruptor::new(&loaded.graph, &loaded.aliases, types);
    let (out, summary) = build_synthetic_dataset(&corruptor, &records, &ccfg)?;
    let lines: Vec<_> = out.iter().map(|c| c.to_line(&loaded.graph)).collect();
    emit(args.out.as_deref(), &jsonl(&lines)?)?;
    let summary = serde_json::to_string(&summary)?;
    match args.summary {
        Some(p) => emit(Some(&p), format!("{summary}\n").as_bytes()),
        None => {
            eprintln!("{summary}");
            Ok(())
        }
    }
}

pub fn train(args: TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load(&args.graph, cfg, None)?;
    let defaults = TrainingConfig::default();
    let root = seed(args.seed, cfg);
    let tc = TrainingConfig {
        dim: pick(args.dim, cfg.dim, defaults.dim),
        learning_rate: pick(args.lr, cfg.lr, defaults.learning_rate),
        epochs: pick(args.epochs, cfg.epochs, defaults.epochs),
        batch_size: pick(args.batch_size, cfg.batch_size, defaults.batch_size),
        negatives: pick(args.neg, cfg.neg, defaults.negatives),
        sampler: pick(args.sampler, cfg.sampler.clone(), defaults.sampler),
        optimizer: pick(args.optimizer, cfg.optimizer.clone(), defaults.optimizer),
        l2: pick(args.l2, cfg.l2, defaults.l2),
        seed: root,
    };
    tc.validate().map_err(|e| invalid(e.to_string()))?;
    SamplerRegistry::builtin().build(&tc.sampler).map_err(|e| invalid(e.to_string()))?;
    pathhunter::embed::OptimizerRegistry::builtin()
        .build(&tc.optimizer, tc.learning_rate)
        .map_err(|e| invalid(e.to_string()))?;
    let layers = args.enrich_layers.or(cfg.enrich_layers);
    if layers == Some(0) {
        return Err(invalid("--enrich-layers must be at least 1"));
    }

    let outcome = train_embeddings(&loaded.graph, &tc)?;
    log::info!(
        "trained {} epochs; final mean loss {:.6}",
        outcome.losses.len(),
        outcome.losses.last().copied().unwrap_or(f64::NAN)
    );
    let table = match layers {
        Some(layers) => {
            let ec = EnrichConfig { layers, seed: stage_seed(root, "enrich"), ..Default::default() };
            enrich_relational(&outcome.table, &loaded.graph, &ec)?
        }
        None => outcome.table.clone(),
    };
    emit(Some(&args.out), table.to_snapshot(&loaded.graph)?.as_bytes())?;
    if let Some(p) = args.loss_csv {
        emit(Some(&p), outcome.loss_csv().as_bytes())?;
    }
    Ok(())
}

pub fn critique(args: CritiqueArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load(&args.graph, cfg, None)?;
    let k = pick(args.k, cfg.critic_k, 1);
    let mode: IntrinsicMode = parse(args.mode, cfg.intrinsic.clone(), IntrinsicMode::default())?;
    let source = parse(args.anchors, cfg.anchors.clone(), AnchorSource::default())?;
    let lexicon = match existing(args.lexicon, cfg.lexicon.clone(), "lexicon")? {
        Some(p) => {
            let pairs = read_tsv_pairs(p)?;
            Some(RelationLexicon::from_pairs(&loaded.graph, pairs.iter().map(|(r, s)| (r.as_str(), s.as_str())))?)
        }
        None => None,
    };
    if mode == IntrinsicMode::Directed && lexicon.is_none() {
        log::warn!("directed mode without --lexicon only runs the undirected check");
    }
    let critic = Critic::new(&loaded.graph, &loaded.aliases).with_mode(mode, lexicon.as_ref());
    let records = read_records(&args.input)?;
    let lines = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let report = critique_one(&critic, r, source, k, i)?;
            Ok(CritiqueLine { record: r.clone(), labels: report.label_entries(), flagged: report.sentence_flag })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    emit(args.out.as_deref(), &jsonl(&lines)?)
}

pub fn refine(args: RefineArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load(&args.graph, cfg, None)?;
    let g = &loaded.graph;
    let emb = required(args.emb, cfg.emb.clone(), "emb")?;
    let mode = pick(args.mode, cfg.mode.clone(), "oracle".to_string());
    let registry = QueryRegistry::builtin();
    if !registry.names().any(|n| n == mode) {
        return Err(invalid(format!("unknown query mode {mode:?}")));
    }
    let queries = match existing(args.queries, None, "queries")? {
        Some(p) => Some(Snapshot::parse(&std::fs::read_to_string(&p)?)?.vectors()),
        None if mode == "external" => return Err(invalid("external mode needs --queries")),
        None => None,
    };
    let rcfg = RefineConfig {
        k: pick(args.k, cfg.k, 2),
        chain: args.chain.map(|c| c == OnOff::On).or(cfg.chain).unwrap_or(true),
        anchors: parse(args.anchors, cfg.anchors.clone(), AnchorSource::default())?,
        ..Default::default()
    };
    let critic_k = pick(args.critic_k, cfg.critic_k, 1);
    let table = EmbeddingTable::from_snapshot(&std::fs::read_to_string(&emb)?, g)?;
    let records = read_records(&args.input)?;
    let critic = Critic::new(g, &loaded.aliases);

    let reports = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| critique_one(&critic, r, rcfg.anchors, critic_k, i))
        .collect::<Result<Vec<_>, _>>()?;
    // external vectors are consumed in input order, so hand each record its share up front
    let mut shares: Vec<Option<Vec<Vec<f64>>>> = vec![None; records.len()];
    if let Some(mut pool) = queries {
        for (share, report) in shares.iter_mut().zip(&reports) {
            let n = report.flagged().count().min(pool.len());
            *share = Some(pool.drain(..n).collect());
        }
        if !pool.is_empty() {
            log::warn!("{} query vectors left unused", pool.len());
        }
    }
    let lines = records
        .par_iter()
        .zip(&reports)
        .zip(shares)
        .enumerate()
        .map(|(i, ((r, report), share))| {
            let mut builder = registry.build(&mode, share)?;
            let out = refine_response(r, report, g, &table, &loaded.aliases, &rcfg, builder.as_mut())
                .map_err(|e| CliError::Runtime(format!("record {i}: {e}")))?;
            Ok(out.to_line(r, g))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    emit(args.out.as_deref(), &jsonl(&lines)?)
}

pub fn eval(args: EvalArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let emb = existing(args.emb, cfg.emb.clone(), "emb")?;
    let holdout = existing(args.holdout, None, "holdout")?;
    if emb.is_some() != holdout.is_some() {
        return Err(invalid("--emb and --holdout go together"));
    }
    if emb.is_none() && args.input.is_none() {
        return Err(invalid("nothing to evaluate: give --emb with --holdout, and/or --in"));
    }
    let level = match args.bleu_level.as_deref() {
        None | Some("corpus") => BleuLevel::Corpus,
        Some("sentence") => BleuLevel::Sentence,
        Some(other) => return Err(invalid(format!("unknown BLEU level {other:?}"))),
    };
    let slots = match args.slots.as_deref() {
        None | Some("object") => QuerySlots::Object,
        Some("subject") => QuerySlots::Subject,
        Some("both") => QuerySlots::Both,
        Some(other) => return Err(invalid(format!("unknown query slots {other:?}"))),
    };
    let loaded = load(&args.graph, cfg, holdout.as_deref())?;
    let g = &loaded.graph;
    let mut summary = EvalSummary::default();

    if let Some(emb) = emb {
        let table = EmbeddingTable::from_snapshot(&std::fs::read_to_string(&emb)?, g)?;
        let opts = EvalOptions {
            mode: if args.raw { RankingMode::Raw } else { RankingMode::Filtered },
            scope: args.subgraph_k.map_or(CandidateScope::AllEntities, CandidateScope::Subgraph),
            slots,
        };
        let report = evaluate_link_prediction(&table, &loaded.holdout, g, &opts)?;
        if let Some(p) = args.ranks_csv {
            let per: &[Slot] = match slots {
                QuerySlots::Object => &[Slot::Object],
                QuerySlots::Subject => &[Slot::Subject],
                QuerySlots::Both => &[Slot::Object, Slot::Subject],
            };
            let mut csv = String::from("index,subject,predicate,object,slot,rank\n");
            let queries = loaded.holdout.iter().flat_map(|t| per.iter().map(move |s| (t, s)));
            for (i, ((t, slot), rank)) in queries.zip(&report.ranks).enumerate() {
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{rank}",
                    g.entity_name(t.subject),
                    g.relation_name(t.predicate),
                    g.entity_name(t.object),
                    if matches!(slot, Slot::Object) { "object" } else { "subject" }
                );
            }
            emit(Some(&p), csv.as_bytes())?;
        }
        summary.ranking = Some(ranking_metrics(&report.ranks, &[1, 3, 10])?);
    }

    if let Some(input) = args.input {
        let records = read_records(&input)?;
        let hyp_of = |r: &DialogueRecord| match r.extra.get("refined_response").and_then(|v| v.as_str()) {
            Some(s) => s.to_string(),
            None => r.response.clone(),
        };
        let (hyps, refs): (Vec<String>, Vec<String>) =
            records.iter().filter_map(|r| r.gold_response.clone().map(|gold| (hyp_of(r), gold))).unzip();
        if hyps.len() < records.len() {
            log::info!("{} records without gold_response skipped for BLEU", records.len() - hyps.len());
        }
        if !hyps.is_empty() {
            summary.bleu = Some(bleu(&hyps, &refs, 4, level)?);
        }
        let critic = Critic::new(g, &loaded.aliases);
        let source = parse(None, cfg.anchors.clone(), AnchorSource::default())?;
        let k = pick(args.k, cfg.critic_k, 1);
        let flags = records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut judged = r.clone();
                judged.response = hyp_of(r);
                judged.spans = None;
                Ok(critique_one(&critic, &judged, source, k, i)?.sentence_flag)
            })
            .collect::<Result<Vec<bool>, CliError>>()?;
        summary.responses = flags.len();
        summary.flagged_responses = flags.iter().filter(|&&f| f).count();
        summary.hallucination_rate = Some(hallucination_rate_from_flags(&flags)?);
    }
    emit(args.out.as_deref(), &json_line(&summary)?)
}
