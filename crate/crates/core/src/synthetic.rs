//! Generated corpora with a planted cross-argument pattern, and the tiny
//! reference model used for gradient checks.
//!
//! A pair of class `k` carries a cue token `a{k}_{s}` somewhere in Arg1 and
//! a cue `b{k}_{s'}` somewhere in Arg2. Each argument also carries a
//! distractor cue of another class, chosen so the distractors never form a
//! matching pair. Only the co-occurrence of `a{k}_*` with `b{k}_*` across
//! the two arguments identifies the class; no single argument does.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArgumentPair, LabelSet};
use crate::embedding::{random_init, Vocabulary};
use crate::error::Result;
use crate::features::{fit_templates, FeatureTemplateSet, Template};
use crate::model::{Example, ModelState, SharedSpec, TaskSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedPattern {
    pub classes: usize,
    /// Interchangeable cue tokens per class and side.
    pub cues_per_class: usize,
    pub filler_words: usize,
    /// Inclusive bounds on the filler length of each argument.
    pub filler_len: (usize, usize),
}

impl Default for PlantedPattern {
    fn default() -> Self {
        PlantedPattern {
            classes: 4,
            cues_per_class: 2,
            filler_words: 30,
            filler_len: (3, 6),
        }
    }
}

impl PlantedPattern {
    /// Every token the generator can emit.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut v = Vocabulary::new();
        for i in 0..self.filler_words {
            v.insert(&format!("w{i}"));
        }
        for k in 0..self.classes {
            for s in 0..self.cues_per_class {
                v.insert(&format!("a{k}_{s}"));
                v.insert(&format!("b{k}_{s}"));
            }
        }
        v
    }

    fn argument(&self, side: char, class: usize, distractor: usize, rng: &mut impl Rng) -> Vec<String> {
        let len = rng.gen_range(self.filler_len.0..=self.filler_len.1);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.gen_range(0..self.filler_words)))
            .collect();
        for k in [class, distractor] {
            let s = rng.gen_range(0..self.cues_per_class);
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, format!("{side}{k}_{s}"));
        }
        tokens
    }

    /// One pair of class `class`; `label` names it.
    pub fn pair(&self, task: &str, class: usize, label: &str, rng: &mut impl Rng) -> ArgumentPair {
        assert!(self.classes >= 3, "distractors need at least three classes");
        let others: Vec<usize> = (0..self.classes).filter(|&c| c != class).collect();
        let d1 = *others.choose(rng).expect("classes >= 3");
        let d2 = *others
            .iter()
            .filter(|&&c| c != d1)
            .collect::<Vec<_>>()
            .choose(rng)
            .copied()
            .expect("classes >= 3");
        ArgumentPair::new(
            task,
            self.argument('a', class, d1, rng),
            self.argument('b', class, d2, rng),
            label,
        )
    }

    /// `n` pairs with classes cycling `0, 1, ..., classes-1` and shuffled.
    /// Class `k` is labelled `labels[k]`.
    pub fn corpus(&self, task: &str, labels: &LabelSet, n: usize, seed: u64) -> Vec<ArgumentPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<ArgumentPair> = (0..n)
            .map(|i| {
                let k = i % self.classes;
                self.pair(task, k, labels.name(k), &mut rng)
            })
            .collect();
        pairs.shuffle(&mut rng);
        pairs
    }
}

/// The gradient-check model: `D_e = 4`, `h = 2`, `n_p = 2`, `n_f = 3`,
/// `n_r = 5`, a 3-class task with first/last-word features and a 2-class
/// task with the same-sentence flag. Returns one example per task.
pub fn tiny_reference_model(seed: u64) -> Result<(ModelState, Vec<Example>)> {
    let words = ["the", "market", "fell", "because", "rates", "rose", "sharply", "investors", "sold", "shares", "then"];
    let vocab = Vocabulary::from_tokens(words);
    let embeddings = random_init(&vocab, 4, 0.5, seed);
    let toks = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();

    let mut p1 = ArgumentPair::new("alpha", toks("the market fell sharply"), toks("investors sold shares then rates"), "c2");
    p1.same_sentence = Some(true);
    let mut p2 = ArgumentPair::new("beta", toks("rates rose sharply then"), toks("the market fell"), "yes");
    p2.same_sentence = Some(true);

    let spec = |name: &str, labels: &[&str], templates: Vec<Template>| TaskSpec {
        name: name.into(),
        labels: LabelSet::new(labels.iter().copied()).expect("distinct"),
        window: 2,
        pool: 2,
        filters: 3,
        fusion_dim: 5,
        lr_ratio: 1.0,
        emb_lr_ratio: 1.0,
        templates,
    };
    let alpha = spec("alpha", &["c0", "c1", "c2"], vec![Template::FirstLastWords]);
    let beta = spec("beta", &["no", "yes"], vec![Template::SameSentence]);
    let fa = fit_templates([&p1], &FeatureTemplateSet::new("alpha", alpha.templates.clone()), 1);
    let fb = fit_templates([&p2], &FeatureTemplateSet::new("beta", beta.templates.clone()), 1);
    let mut state = ModelState::new(
        vocab,
        embeddings,
        SharedSpec { window: 2, pool: 2, filters: 3 },
        vec![(alpha, fa), (beta, fb)],
        seed,
    )?;
    // give biases nonzero values so their gradient paths are exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    for b in state.blocks() {
        if matches!(
            b,
            crate::model::ParamBlock::SharedBiases
                | crate::model::ParamBlock::Biases(_)
                | crate::model::ParamBlock::B1(_)
                | crate::model::ParamBlock::B2(_)
        ) {
            for x in state.block_mut(b) {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let examples = vec![state.prepare(0, &p1)?, state.prepare(1, &p2)?];
    Ok((state, examples))
}
