//! Task-specific surface features `sf`.
//!
//! Three templates exist. `FirstLastWords` fires `A1_FIRST=w`, `A1_LAST=w`,
//! `A2_FIRST=w`, `A2_LAST=w`. `ProductionRules` fires `RULE=r` for every
//! caller-supplied rule string found in either argument. `SameSentence` is a
//! single 0/1 dimension. The feature space is the concatenation of the
//! enabled blocks in that order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ArgumentPair;
use crate::error::{Error, Result};
use crate::tensor::Vec1;

pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    FirstLastWords,
    ProductionRules,
    SameSentence,
}

impl Template {
    pub const ALL: [Template; 3] = [
        Template::FirstLastWords,
        Template::ProductionRules,
        Template::SameSentence,
    ];

    /// Templates used for tasks 1..=4 of the four-task setup: first/last
    /// words for task 1, production rules for tasks 1, 2 and 4, the
    /// same-sentence flag for task 3.
    pub fn defaults_for_task(task_number: usize) -> Vec<Template> {
        match task_number {
            1 => vec![Template::FirstLastWords, Template::ProductionRules],
            2 | 4 => vec![Template::ProductionRules],
            3 => vec![Template::SameSentence],
            _ => vec![],
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::FirstLastWords => "first_last_words",
            Template::ProductionRules => "production_rules",
            Template::SameSentence => "same_sentence",
        })
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first_last_words" => Ok(Template::FirstLastWords),
            "production_rules" => Ok(Template::ProductionRules),
            "same_sentence" => Ok(Template::SameSentence),
            other => Err(Error::Rejected(format!("unknown feature template {other:?}"))),
        }
    }
}

const SAME_SENTENCE_FEATURE: &str = "same_sentence";

/// Enabled templates of one task and their fitted vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTemplateSet {
    pub task: String,
    templates: BTreeSet<Template>,
    /// Fitted feature strings per template, in index order.
    vocab: BTreeMap<Template, Vec<String>>,
    #[serde(skip)]
    lookup: HashMap<(Template, String), usize>,
}

impl FeatureTemplateSet {
    /// An unfitted set; only `SameSentence` contributes until [`fit_templates`] runs.
    pub fn new(task: impl Into<String>, templates: impl IntoIterator<Item = Template>) -> Self {
        let mut s = FeatureTemplateSet {
            task: task.into(),
            templates: templates.into_iter().collect(),
            vocab: BTreeMap::new(),
            lookup: HashMap::new(),
        };
        s.reindex();
        s
    }

    pub fn templates(&self) -> impl Iterator<Item = Template> + '_ {
        self.templates.iter().copied()
    }

    pub fn is_enabled(&self, t: Template) -> bool {
        self.templates.contains(&t)
    }

    pub fn vocabulary(&self, t: Template) -> &[String] {
        self.vocab.get(&t).map_or(&[], Vec::as_slice)
    }

    /// Length of `sf` for this task.
    pub fn dim(&self) -> usize {
        self.templates.iter().map(|&t| self.block_len(t)).sum()
    }

    fn block_len(&self, t: Template) -> usize {
        match t {
            Template::SameSentence => 1,
            _ => self.vocabulary(t).len(),
        }
    }

    pub(crate) fn reindex(&mut self) {
        if self.is_enabled(Template::SameSentence) {
            self.vocab
                .insert(Template::SameSentence, vec![SAME_SENTENCE_FEATURE.to_string()]);
        }
        let mut lookup = HashMap::new();
        let mut offset = 0;
        for &t in &self.templates {
            for (i, f) in self.vocabulary(t).iter().enumerate() {
                lookup.insert((t, f.clone()), offset + i);
            }
            offset += self.block_len(t);
        }
        self.lookup = lookup;
    }

    fn index_of(&self, t: Template, feature: &str) -> Option<usize> {
        self.lookup.get(&(t, feature.to_string())).copied()
    }

    /// `template<TAB>feature<TAB>index` per line.
    pub fn write_vocab(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut entries: Vec<(usize, Template, &str)> = self
            .lookup
            .iter()
            .map(|((t, f), &i)| (i, *t, f.as_str()))
            .collect();
        entries.sort();
        for (i, t, f) in entries {
            writeln!(w, "{t}\t{f}\t{i}")?;
        }
        Ok(())
    }

    /// Inverse of [`FeatureTemplateSet::write_vocab`].
    pub fn read_vocab(task: impl Into<String>, reader: impl BufRead) -> Result<Self> {
        let mut rows: Vec<(usize, Template, String)> = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse("feature vocabulary", n + 1, e))?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [t, f, i] = parts[..] else {
                return Err(Error::parse("feature vocabulary", n + 1, "expected 3 tab-separated fields"));
            };
            let i = i
                .parse()
                .map_err(|_| Error::parse("feature vocabulary", n + 1, format!("bad index {i:?}")))?;
            rows.push((i, t.parse()?, f.to_string()));
        }
        rows.sort();
        let mut set = FeatureTemplateSet::new(task, rows.iter().map(|r| r.1));
        for (pos, (i, t, f)) in rows.into_iter().enumerate() {
            if i != pos {
                return Err(Error::parse("feature vocabulary", pos + 1, "indices are not contiguous"));
            }
            if t != Template::SameSentence {
                set.vocab.entry(t).or_default().push(f);
            }
        }
        set.reindex();
        Ok(set)
    }
}

/// Sparse `sf`: strictly increasing indices of the active (value 1) dimensions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceVector {
    dim: usize,
    active: Vec<usize>,
}

impl SurfaceVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn to_dense(&self) -> Vec1 {
        let mut v = Vec1::zeros(self.dim);
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }
}

fn candidate_features(pair: &ArgumentPair, t: Template) -> Vec<String> {
    match t {
        Template::FirstLastWords => {
            let mut out = Vec::with_capacity(4);
            for (name, arg) in [("A1", &pair.arg1), ("A2", &pair.arg2)] {
                if let (Some(first), Some(last)) = (arg.first(), arg.last()) {
                    out.push(format!("{name}_FIRST={}", first.to_lowercase()));
                    out.push(format!("{name}_LAST={}", last.to_lowercase()));
                }
            }
            out
        }
        Template::ProductionRules => {
            let rules: BTreeSet<&String> = pair
                .rules1
                .iter()
                .chain(pair.rules2.iter())
                .flatten()
                .collect();
            rules.into_iter().map(|r| format!("RULE={r}")).collect()
        }
        Template::SameSentence => vec![],
    }
}

/// Keeps every feature string seen at least `min_count` times. Order is
/// frequency descending, then lexicographic.
pub fn fit_templates<'a>(
    corpus: impl IntoIterator<Item = &'a ArgumentPair>,
    spec: &FeatureTemplateSet,
    min_count: usize,
) -> FeatureTemplateSet {
    let mut counts: BTreeMap<Template, HashMap<String, usize>> = BTreeMap::new();
    for pair in corpus {
        for t in spec.templates() {
            let c = counts.entry(t).or_default();
            for f in candidate_features(pair, t) {
                *c.entry(f).or_default() += 1;
            }
        }
    }
    let mut fitted = FeatureTemplateSet::new(spec.task.clone(), spec.templates());
    for (t, c) in counts {
        if t == Template::SameSentence {
            continue;
        }
        let mut kept: Vec<(String, usize)> = c.into_iter().filter(|(_, n)| *n >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        fitted.vocab.insert(t, kept.into_iter().map(|(f, _)| f).collect());
    }
    fitted.reindex();
    fitted
}

/// Features of `pair` under the fitted templates. Unknown strings are dropped.
pub fn extract(pair: &ArgumentPair, spec: &FeatureTemplateSet) -> SurfaceVector {
    let mut active = Vec::new();
    for t in spec.templates() {
        if t == Template::SameSentence {
            if pair.same_sentence == Some(true) {
                active.extend(spec.index_of(t, SAME_SENTENCE_FEATURE));
            }
            continue;
        }
        active.extend(
            candidate_features(pair, t)
                .iter()
                .filter_map(|f| spec.index_of(t, f)),
        );
    }
    active.sort_unstable();
    active.dedup();
    SurfaceVector {
        dim: spec.dim(),
        active,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a1: &[&str], a2: &[&str]) -> ArgumentPair {
        ArgumentPair::new(
            "t",
            a1.iter().map(|s| s.to_string()).collect(),
            a2.iter().map(|s| s.to_string()).collect(),
            "l",
        )
    }

    #[test]
    fn default_template_mapping() {
        use Template::*;
        assert_eq!(Template::defaults_for_task(1), [FirstLastWords, ProductionRules]);
        assert_eq!(Template::defaults_for_task(2), [ProductionRules]);
        assert_eq!(Template::defaults_for_task(3), [SameSentence]);
        assert_eq!(Template::defaults_for_task(4), [ProductionRules]);
    }

    #[test]
    fn first_last_words() {
        let p = pair(&["income", "rose"], &["revenue", "fell"]);
        let f = candidate_features(&p, Template::FirstLastWords);
        assert_eq!(f, ["A1_FIRST=income", "A1_LAST=rose", "A2_FIRST=revenue", "A2_LAST=fell"]);

        let spec = FeatureTemplateSet::new("t", [Template::FirstLastWords]);
        let fitted = fit_templates([&p], &spec, 1);
        let sv = extract(&p, &fitted);
        assert_eq!(sv.dim(), 4);
        assert_eq!(sv.active(), &[0, 1, 2, 3]);
    }

    #[test]
    fn cutoff_above_every_count_gives_empty_space() {
        let p = pair(&["a"], &["b"]);
        let spec = FeatureTemplateSet::new("t", [Template::FirstLastWords, Template::ProductionRules]);
        let fitted = fit_templates([&p, &p], &spec, 100);
        assert_eq!(fitted.dim(), 0);
        assert!(extract(&p, &fitted).to_dense().is_empty());
    }

    #[test]
    fn frequent_opener_and_tiebreak() {
        let corpus = vec![
            pair(&["the", "x"], &["b", "y"]),
            pair(&["the", "z"], &["a", "y"]),
            pair(&["the", "x"], &["a", "w"]),
        ];
        let spec = FeatureTemplateSet::new("t", [Template::FirstLastWords]);
        let fitted = fit_templates(&corpus, &spec, 1);
        let v = fitted.vocabulary(Template::FirstLastWords);
        assert_eq!(v[0], "A1_FIRST=the");
        // A1_LAST=x, A2_FIRST=a and A2_LAST=y all occur twice
        assert_eq!(&v[1..4], ["A1_LAST=x", "A2_FIRST=a", "A2_LAST=y"]);
    }

    #[test]
    fn production_rules_and_absence() {
        let mut p = pair(&["a"], &["b"]);
        p.rules1 = Some(vec!["S -> NP VP".into()]);
        p.rules2 = Some(vec!["NP -> DT NN".into(), "S -> NP VP".into()]);
        let spec = FeatureTemplateSet::new("t", [Template::ProductionRules]);
        let fitted = fit_templates([&p], &spec, 1);
        assert_eq!(fitted.dim(), 2);
        assert_eq!(extract(&p, &fitted).active(), &[0, 1]);

        let bare = pair(&["a"], &["b"]);
        assert!(extract(&bare, &fitted).active().is_empty());
        let mut unseen = bare.clone();
        unseen.rules1 = Some(vec!["VP -> VB".into()]);
        assert!(extract(&unseen, &fitted).active().is_empty());
    }

    #[test]
    fn same_sentence_dimension() {
        let spec = FeatureTemplateSet::new("rst", [Template::SameSentence]);
        let mut p = pair(&["a"], &["b"]);
        let fitted = fit_templates([&p], &spec, 5);
        assert_eq!(fitted.dim(), 1);
        assert_eq!(extract(&p, &fitted).to_dense().as_slice(), &[0.0]);
        p.same_sentence = Some(true);
        assert_eq!(extract(&p, &fitted).to_dense().as_slice(), &[1.0]);
    }

    #[test]
    fn vocab_text_round_trip() {
        let mut p = pair(&["a", "b"], &["c", "d"]);
        p.rules1 = Some(vec!["S -> NP VP".into()]);
        p.same_sentence = Some(true);
        let spec = FeatureTemplateSet::new("t", Template::ALL);
        let fitted = fit_templates([&p], &spec, 1);
        let mut buf = Vec::new();
        fitted.write_vocab(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("first_last_words\tA1_FIRST=a\t0\n"));
        let back = FeatureTemplateSet::read_vocab("t", buf.as_slice()).unwrap();
        assert_eq!(back, fitted);
        assert_eq!(extract(&p, &back), extract(&p, &fitted));
    }
}
