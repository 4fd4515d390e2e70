#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;

use typeforge::corpus::{
    generate_synthetic_corpus, GeneratorConfig, MentionExample, SyntheticType, MENTION_SLOT,
};
use typeforge::model::ModelConfig;
use typeforge::schema::{SchemaKind, TypeSchema};
use typeforge::tokenizer::{TextTokenizer, Tokenizer, TokenizerKind, VocabBuilder};

pub fn tokenizer_for(corpora: &[&[MentionExample]], schemas: &[&TypeSchema]) -> TextTokenizer {
    let mut b = VocabBuilder::new();
    for corpus in corpora {
        for ex in *corpus {
            b.add_words(ex.left_context.iter().map(String::as_str));
            b.add_text(&ex.mention);
            b.add_words(ex.right_context.iter().map(String::as_str));
        }
    }
    for s in schemas {
        for l in s.labels() {
            let phrase = l.rsplit('/').next().unwrap_or(l).replace('_', " ");
            b.add_text(&phrase);
        }
    }
    TextTokenizer::new(TokenizerKind::Word, b.build())
}

pub fn small_model(tok: &TextTokenizer, hidden: usize, layers: usize) -> ModelConfig {
    let mut cfg = ModelConfig::desk(tok.vocab().len());
    cfg.hidden = hidden;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.ffn = hidden * 2;
    cfg.max_len = 48;
    cfg.type_heads = 2;
    cfg
}

fn t(path: &str, templates: &[&str], fillers: &[&str]) -> SyntheticType {
    SyntheticType {
        path: path.into(),
        templates: templates.iter().map(|s| s.to_string()).collect(),
        fillers: fillers.iter().map(|s| s.to_string()).collect(),
    }
}

/// 8 flat types, 2 templates and 4 fillers each: 64 examples.
pub fn overfit_generator() -> GeneratorConfig {
    let names = [
        "person", "city", "company", "river", "film", "disease", "weapon", "holiday",
    ];
    let cues = [
        ("she met {m} at the party", "{m} was born in march"),
        ("they flew to {m} last year", "{m} has a busy harbor"),
        ("shares of {m} fell sharply", "{m} hired new engineers"),
        (
            "boats sail down the {m} slowly",
            "the {m} floods every spring",
        ),
        (
            "critics praised {m} at the festival",
            "{m} won the best picture award",
        ),
        (
            "doctors treated {m} with antibiotics",
            "{m} spreads through water",
        ),
        ("soldiers carried {m} into battle", "{m} fires heavy rounds"),
        (
            "families celebrate {m} in december",
            "{m} is a public day off",
        ),
    ];
    let fillers = ["alpha", "bravo", "delta", "echo"];
    let types = names
        .iter()
        .zip(cues)
        .map(|(n, (a, b))| t(n, &[a, b], &fillers))
        .collect();
    GeneratorConfig {
        types,
        view: SchemaKind::FreeForm,
    }
}

pub fn free_form(labels: &[&str]) -> TypeSchema {
    TypeSchema::new(
        SchemaKind::FreeForm,
        labels.iter().map(|s| s.to_string()).collect(),
    )
    .unwrap()
}

/// Pretraining corpus and few-shot target for the transfer experiment.
pub struct TransferBench {
    pub ufet_train: Vec<MentionExample>,
    pub ufet_schema: TypeSchema,
    pub fet_pool: Vec<MentionExample>,
    pub fet_test: Vec<MentionExample>,
    pub fet_schema: TypeSchema,
    pub tokenizer: TextTokenizer,
}

// Leaves seen only by pretraining, only by the target schema, and by both.
const SHARED: &[&str] = &[
    "person athlete",
    "person artist",
    "person politician",
    "organization company",
    "organization sports_team",
    "location city",
    "location river",
    "event war",
    "event election",
];
const UFET_ONLY: &[&str] = &[
    "organization school",
    "product car",
    "product phone",
    "animal bird",
    "animal dog",
];
const FET_ONLY: &[&str] = &["person doctor", "location mountain"];

fn pseudo_words(rng: &mut impl rand::Rng, n: usize, taken: &mut HashSet<String>) -> Vec<String> {
    const ON: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
    ];
    const NU: &[&str] = &["a", "e", "i", "o", "u"];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syl = rng.gen_range(2..=3);
        let w: String = (0..syl)
            .map(|_| {
                format!(
                    "{}{}",
                    ON[rng.gen_range(0..ON.len())],
                    NU[rng.gen_range(0..NU.len())]
                )
            })
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Context templates `g k g {m} g k g` mixing generic words with two cue
/// words from the type's pool; `avoid` keeps the two corpora's templates apart.
fn templates(
    rng: &mut impl rand::Rng,
    pool: &[String],
    generic: &[String],
    n: usize,
    avoid: &mut HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g = |rng: &mut dyn rand::RngCore| generic[rng.gen_range(0..generic.len())].clone();
        let k1 = &pool[rng.gen_range(0..pool.len())];
        let k2 = &pool[rng.gen_range(0..pool.len())];
        let tpl = format!(
            "{} {} {} {} {} {} {}",
            g(rng),
            k1,
            g(rng),
            MENTION_SLOT,
            g(rng),
            k2,
            g(rng)
        );
        if avoid.insert(tpl.clone()) {
            out.push(tpl);
        }
    }
    out
}

pub fn transfer_bench(seed: u64) -> TransferBench {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let generic = pseudo_words(&mut rng, 40, &mut taken);
    let ufet_names = pseudo_words(&mut rng, 3, &mut taken);
    let fet_names = pseudo_words(&mut rng, 2, &mut taken);
    let mut pools = std::collections::BTreeMap::new();
    for path in SHARED.iter().chain(UFET_ONLY).chain(FET_ONLY) {
        pools.insert(*path, pseudo_words(&mut rng, 20, &mut taken));
    }
    let mut used = HashSet::new();
    let mut ufet_types = Vec::new();
    for path in SHARED.iter().chain(UFET_ONLY) {
        let tpls = templates(&mut rng, &pools[path], &generic, 40, &mut used);
        ufet_types.push(SyntheticType {
            path: path.to_string(),
            templates: tpls,
            fillers: ufet_names.clone(),
        });
    }
    let mut fet_types = Vec::new();
    for path in SHARED.iter().chain(FET_ONLY) {
        let tpls = templates(&mut rng, &pools[path], &generic, 40, &mut used);
        fet_types.push(SyntheticType {
            path: path.to_string(),
            templates: tpls,
            fillers: fet_names.clone(),
        });
    }
    let (ufet_train, ufet_schema) = generate_synthetic_corpus(
        &GeneratorConfig {
            types: ufet_types,
            view: SchemaKind::FreeForm,
        },
        seed,
    )
    .unwrap();
    let (fet_all, fet_schema) = generate_synthetic_corpus(
        &GeneratorConfig {
            types: fet_types,
            view: SchemaKind::Hierarchical,
        },
        seed,
    )
    .unwrap();
    let fet_test = fet_all[..300].to_vec();
    let fet_pool = fet_all[300..].to_vec();
    let tokenizer = tokenizer_for(&[&ufet_train, &fet_all], &[&ufet_schema, &fet_schema]);
    TransferBench {
        ufet_train,
        ufet_schema,
        fet_pool,
        fet_test,
        fet_schema,
        tokenizer,
    }
}
