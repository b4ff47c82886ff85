use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{labeled_options, GenError, Gold, QuestionKind, SpatialQuery, TaskInstance, TaskKind, TaskPayload};
use crate::spatial::{DiagRelation, Diagonal, RelationStore};

pub const MIN_OBJECTS: usize = 4;
pub const MAX_OBJECTS: usize = 8;
const MAX_ATTEMPTS: u32 = 256;

pub const ENTITY_NAMES: &[&str] = &[
    "Alpaca Apparel",
    "Badger Bakery",
    "Walrus Watches",
    "Fennec Flowers",
    "Gecko Games",
    "Heron Hats",
    "Iguana Ink",
    "Jackal Jewelry",
    "Kiwi Kitchenware",
    "Lemur Lamps",
    "Marmot Music",
    "Newt's Noodles",
    "Ocelot Optics",
    "Puffin Pottery",
    "Quokka Quilts",
    "Raccoon Records",
    "Sloth Soaps",
    "Tapir Toys",
    "Urchin Umbrellas",
    "Vole's Violins",
    "Wombat Woodworks",
    "Yak Yarns",
    "Zebra Zippers",
    "Dragonfly Deli",
    "Capybara Candles",
    "Bison Books",
    "Moose Mittens",
    "Pelican Pies",
    "Tortoise Tea House",
    "Gull's Gadgets",
    "Otter Outfitters",
    "Ferret Fabrics",
];

struct Layout {
    names: Vec<String>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Layout {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let names: Vec<String> = ENTITY_NAMES.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(rng);
        cols.shuffle(rng);
        Self { names, rows, cols }
    }

    /// Direction of entity `i` relative to entity `j`.
    fn dir(&self, i: usize, j: usize) -> Diagonal {
        Diagonal::from_axes(self.rows[i] < self.rows[j], self.cols[i] < self.cols[j])
    }

    fn relation(&self, i: usize, j: usize) -> DiagRelation {
        DiagRelation::new(&*self.names[i], self.dir(i, j), &*self.names[j])
    }
}

/// A random spanning tree plus a few extra true relations.
fn map_relations(rng: &mut ChaCha8Rng, layout: &Layout) -> Vec<DiagRelation> {
    let n = layout.names.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for k in 1..n {
        pairs.push((k, rng.gen_range(0..k)));
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let i = rng.gen_range(1..n);
        let j = rng.gen_range(0..i);
        if !pairs.contains(&(i, j)) {
            pairs.push((i, j));
        }
    }
    pairs.iter().map(|&(i, j)| if rng.gen_bool(0.5) { layout.relation(i, j) } else { layout.relation(j, i) }).collect()
}

fn count_options(gold: usize) -> Vec<String> {
    let mut out: Vec<usize> = Vec::new();
    for d in [1i64, -1, 2, -2, 3, 4, 5] {
        let v = (gold as i64 + d).max(0) as usize;
        if v != gold && !out.contains(&v) {
            out.push(v);
        }
        if out.len() == 3 {
            break;
        }
    }
    out.into_iter().map(|v| v.to_string()).collect()
}

struct Posed {
    query: SpatialQuery,
    question: String,
    gold: String,
    distractors: Vec<String>,
}

fn pose(rng: &mut ChaCha8Rng, layout: &Layout, store: &RelationStore, q: QuestionKind) -> Option<Posed> {
    let n = layout.names.len();
    let name = |i: usize| layout.names[i].clone();
    match q {
        QuestionKind::Q0 => {
            let mut pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
            pairs.shuffle(rng);
            let (i, j) = pairs.into_iter().find(|&(i, j)| {
                store.entailed_direction(&layout.names[i], &layout.names[j]).ok().flatten().is_some()
            })?;
            let gold = layout.dir(i, j);
            let distractors = Diagonal::ALL.iter().filter(|d| **d != gold).map(|d| d.name().to_string()).collect();
            Some(Posed {
                question: format!("In which direction is {} relative to {}?", name(i), name(j)),
                query: SpatialQuery::Direction { subject: name(i), object: name(j) },
                gold: gold.name().to_string(),
                distractors,
            })
        }
        QuestionKind::Q1 | QuestionKind::Q2 => {
            let mut probes: Vec<(usize, Diagonal)> =
                (0..n).flat_map(|a| Diagonal::ALL.into_iter().map(move |d| (a, d))).collect();
            probes.shuffle(rng);
            for (a, dir) in probes {
                let anchor = name(a);
                let mut inside = Vec::new();
                let mut outside = Vec::new();
                let mut undecided = false;
                for (i, other) in layout.names.iter().enumerate().filter(|(i, _)| *i != a) {
                    match store.membership(other, dir, &anchor).ok()? {
                        Some(true) => inside.push(i),
                        Some(false) => outside.push(i),
                        None => undecided = true,
                    }
                }
                if q == QuestionKind::Q1 && !inside.is_empty() && outside.len() >= 3 {
                    let gold = name(*inside.choose(rng)?);
                    let distractors = outside.choose_multiple(rng, 3).map(|&i| name(i)).collect();
                    return Some(Posed {
                        question: format!("Which object is in the {dir} of {anchor}?"),
                        query: SpatialQuery::Which { dir, anchor },
                        gold,
                        distractors,
                    });
                }
                if q == QuestionKind::Q2 && !undecided {
                    return Some(Posed {
                        question: format!("How many objects are in the {dir} of {anchor}?"),
                        query: SpatialQuery::Count { dir, anchor },
                        gold: inside.len().to_string(),
                        distractors: count_options(inside.len()),
                    });
                }
            }
            None
        }
        _ => None,
    }
}

/// Map description: the first entity's placement, then every relation.
pub fn describe_map(entities: &[String], relations: &[DiagRelation]) -> String {
    let mut out = String::new();
    if let Some(first) = entities.first() {
        out.push_str(&format!("{first} is in the map."));
    }
    for r in relations {
        out.push_str(&format!(" {}.", r.sentence()));
    }
    out
}

/// Objects on a random diagonal-only map with a question answerable from it.
pub fn gen_spatial_instance(seed: u64, n_objects: usize, question: QuestionKind) -> Result<TaskInstance, GenError> {
    if !matches!(question, QuestionKind::Q0 | QuestionKind::Q1 | QuestionKind::Q2) {
        return Err(GenError::WrongQuestion(question));
    }
    if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&n_objects) {
        return Err(GenError::Parameters(format!("n_objects must be in {MIN_OBJECTS}..={MAX_OBJECTS}, got {n_objects}")));
    }
    if question == QuestionKind::Q1 && n_objects < MIN_OBJECTS + 1 {
        // one entailed member plus three entailed non-members
        return Err(GenError::Parameters(format!("Q1 needs at least {} objects", MIN_OBJECTS + 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let layout = Layout::random(&mut rng, n_objects);
        let relations = map_relations(&mut rng, &layout);
        let Ok(store) = RelationStore::from_relations(&relations) else { continue };
        let Some(posed) = pose(&mut rng, &layout, &store, question) else { continue };
        let (options, label) = labeled_options(&mut rng, posed.gold, posed.distractors);
        let mut entities: Vec<String> = Vec::new();
        for r in &relations {
            for nm in [&r.object, &r.subject] {
                if !entities.contains(nm) {
                    entities.push(nm.clone());
                }
            }
        }
        return Ok(TaskInstance {
            id: format!("spatialmap-{seed}"),
            kind: TaskKind::Spatialmap,
            payload: TaskPayload::Spatial { entities, relations, query: posed.query },
            question_kind: question,
            question: posed.question,
            options,
            gold: Gold::Label { label },
            seed,
        });
    }
    Err(GenError::Exhausted(MAX_ATTEMPTS))
}

pub(super) fn recompute(
    inst: &TaskInstance,
    entities: &[String],
    relations: &[DiagRelation],
    query: &SpatialQuery,
) -> Result<Gold, GenError> {
    let mut store = RelationStore::with_entities(entities.iter().map(|s| s.as_str()));
    for r in relations {
        let v = store.assert_relation(r);
        if !v.pass {
            return Err(GenError::Payload(v.feedback.unwrap_or_default()));
        }
    }
    let err = |e: crate::spatial::SpatialError| GenError::Payload(e.to_string());
    match query {
        SpatialQuery::Direction { subject, object } => {
            let d = store.entailed_direction(subject, object).map_err(err)?;
            let d = d.ok_or_else(|| GenError::Payload("direction is not entailed".into()))?;
            inst.label_of(d.name())
        }
        SpatialQuery::Which { dir, anchor } => {
            let mut hits = Vec::new();
            for c in &inst.options {
                if store.membership(&c.text, *dir, anchor).map_err(err)? == Some(true) {
                    hits.push(c.label.clone());
                }
            }
            match hits.as_slice() {
                [one] => Ok(Gold::Label { label: one.clone() }),
                _ => Err(GenError::Payload(format!("{} options are entailed", hits.len()))),
            }
        }
        SpatialQuery::Count { dir, anchor } => {
            let n = store.entities_in(*dir, anchor).map_err(err)?.len();
            inst.label_of(&n.to_string())
        }
    }
}
