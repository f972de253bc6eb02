//! Argument-pair datasets and the connective-mining pipeline.
//!
//! Datasets are line-delimited JSON, one [`ArgumentPair`] per line. The
//! mining pipeline turns raw text into pairs whose label is the connective
//! that opened the second sentence:
//!
//! 1. [`split_sentences`] segments each document.
//! 2. [`extract_connective_pairs`] keeps adjacent sentences where the second
//!    one starts with a known connective, strips it, and filters by length.
//! 3. [`sample_corpus`] draws a seeded uniform sample.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Two token sequences and their relation label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgumentPair {
    pub task: String,
    #[serde(deserialize_with = "tokens_or_text")]
    pub arg1: Vec<String>,
    #[serde(deserialize_with = "tokens_or_text")]
    pub arg2: Vec<String>,
    pub label: String,
    /// Production-rule strings of Arg1, supplied by an external parser.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules1: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules2: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_sentence: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl ArgumentPair {
    pub fn new(
        task: impl Into<String>,
        arg1: Vec<String>,
        arg2: Vec<String>,
        label: impl Into<String>,
    ) -> Self {
        ArgumentPair {
            task: task.into(),
            arg1,
            arg2,
            label: label.into(),
            rules1: None,
            rules2: None,
            same_sentence: None,
            id: None,
        }
    }
}

/// Accepts either a token array or a raw string, which gets tokenized.
fn tokens_or_text<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Arg {
        Tokens(Vec<String>),
        Text(String),
    }
    Ok(match Arg::deserialize(d)? {
        Arg::Tokens(t) => t,
        Arg::Text(s) => tokenize(&s),
    })
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+(?:['’-]\w+)*|[^\w\s]").unwrap())
}

/// Lowercased words and single punctuation marks, in order.
///
/// ```
/// use discourse_mtl::corpus::tokenize;
/// assert_eq!(tokenize("In fact, it's high."), ["in", "fact", ",", "it's", "high", "."]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    token_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

/// Ordered label names of one task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let unique: HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Rejected("duplicate label".into()));
        }
        if labels.len() < 2 {
            return Err(Error::Rejected(format!(
                "a task needs at least two labels, got {}",
                labels.len()
            )));
        }
        Ok(LabelSet { labels })
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }
}

/// Records of one task together with the per-label counts seen while loading.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub pairs: Vec<ArgumentPair>,
    pub label_counts: BTreeMap<String, usize>,
}

/// Parses a JSON-lines dataset and validates it against `task` and `labels`.
pub fn load_dataset(path: &Path, task: &str, labels: &LabelSet) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let ds = read_dataset(BufReader::new(f), &name, task, labels)?;
    if ds.pairs.is_empty() {
        log::warn!("{name}: dataset is empty");
    }
    Ok(ds)
}

pub fn read_dataset(
    reader: impl BufRead,
    source_name: &str,
    task: &str,
    labels: &LabelSet,
) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ArgumentPair =
            serde_json::from_str(&line).map_err(|e| Error::parse(source_name, lineno, e))?;
        validate_pair(&pair, task, labels).map_err(|m| Error::parse(source_name, lineno, m))?;
        *ds.label_counts.entry(pair.label.clone()).or_default() += 1;
        ds.pairs.push(pair);
    }
    Ok(ds)
}

pub fn validate_pair(pair: &ArgumentPair, task: &str, labels: &LabelSet) -> std::result::Result<(), String> {
    if pair.task != task {
        return Err(format!("record belongs to task {:?}, expected {task:?}", pair.task));
    }
    if pair.arg1.is_empty() || pair.arg2.is_empty() {
        return Err("empty argument".into());
    }
    if labels.index(&pair.label).is_none() {
        return Err(format!("unknown label {:?} for task {task:?}", pair.label));
    }
    Ok(())
}

pub fn save_dataset(path: &Path, pairs: &[ArgumentPair]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "inc.", "corp.", "co.", "ltd.",
    "gen.", "gov.", "sen.", "rep.", "vs.", "etc.", "jan.", "feb.", "aug.", "sept.", "oct.",
    "nov.", "dec.", "u.s.", "e.g.", "i.e.", "no.",
];

/// Rule-based sentence splitter.
#[derive(Clone, Debug)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    /// Abbreviations are matched case-insensitively and include their final period.
    pub fn new<'a>(abbreviations: impl IntoIterator<Item = &'a str>) -> Self {
        SentenceSplitter {
            abbreviations: abbreviations.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// Splits after `.`, `!` or `?` (plus closing quotes/brackets) when the
    /// next non-space character is uppercase or a quote, unless the word
    /// ending in `.` is a known abbreviation.
    pub fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let (_, ch) = chars[i];
            if !matches!(ch, '.' | '!' | '?') {
                i += 1;
                continue;
            }
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end].1, '.' | '!' | '?' | '"' | '\'' | '”' | '’' | ')') {
                end += 1;
            }
            let mut next = end;
            while next < chars.len() && chars[next].1.is_whitespace() {
                next += 1;
            }
            let boundary = next > end
                && next < chars.len()
                && {
                    let c = chars[next].1;
                    c.is_uppercase() || matches!(c, '"' | '\'' | '“' | '‘')
                }
                && !(ch == '.' && self.is_abbreviation(text, chars[i].0, start));
            if boundary {
                let byte_end = chars.get(end).map_or(text.len(), |c| c.0);
                push_trimmed(&mut out, &text[start..byte_end]);
                start = chars[next].0;
                i = next;
            } else {
                i = end;
            }
        }
        push_trimmed(&mut out, &text[start..]);
        out
    }

    fn is_abbreviation(&self, text: &str, dot: usize, sentence_start: usize) -> bool {
        let word_start = text[sentence_start..dot]
            .rfind(char::is_whitespace)
            .map_or(sentence_start, |p| sentence_start + p + 1);
        let word = text[word_start..=dot].trim_start_matches(['"', '\'', '(', '“']);
        self.abbreviations.contains(&word.to_lowercase())
    }
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// [`SentenceSplitter::split`] with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<String> {
    SentenceSplitter::default().split(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivePosition {
    /// The connective opens the second of two adjacent sentences.
    SentenceInitialSecondArg,
    /// `A <connective> B` inside one sentence. Not extracted yet.
    IntraSentence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivePattern {
    connective: String,
    tokens: Vec<String>,
    pub position: ConnectivePosition,
}

impl ConnectivePattern {
    pub fn new(connective: &str) -> Result<Self> {
        let connective = connective.trim().to_lowercase();
        let tokens = tokenize(&connective);
        if tokens.is_empty() {
            return Err(Error::Rejected("empty connective".into()));
        }
        Ok(ConnectivePattern {
            connective: tokens.join(" "),
            tokens,
            position: ConnectivePosition::SentenceInitialSecondArg,
        })
    }

    /// The label this pattern assigns.
    pub fn connective(&self) -> &str {
        &self.connective
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// One connective per line; blank lines and `#` comments are skipped.
pub fn load_connectives(path: &Path) -> Result<Vec<ConnectivePattern>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(ConnectivePattern::new)
        .collect()
}

/// Noise filters applied to mined pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRuleSet {
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Both sentences must end in `.`, `!` or `?`.
    pub require_final_punctuation: bool,
    /// The connective must be the first thing in the second sentence.
    pub connective_starts_second: bool,
}

impl Default for ExtractionRuleSet {
    fn default() -> Self {
        ExtractionRuleSet {
            min_tokens: 3,
            max_tokens: 100,
            require_final_punctuation: true,
            connective_starts_second: true,
        }
    }
}

impl ExtractionRuleSet {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens > self.max_tokens {
            return Err(Error::Rejected(format!(
                "min_tokens {} exceeds max_tokens {}",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }

    fn accepts_len(&self, n: usize) -> bool {
        (self.min_tokens..=self.max_tokens).contains(&n)
    }
}

fn ends_sentence(s: &str) -> bool {
    s.trim_end_matches(['"', '\'', '”', '’', ')'])
        .ends_with(['.', '!', '?'])
}

/// Mines `(sentence, next sentence)` pairs whose second sentence opens with
/// a connective. The connective and a directly following comma are removed
/// from Arg2; the longest matching connective wins.
///
/// Pairs get ids `"{source}:{index:06}"`, where `index` is the position of
/// the first sentence.
pub fn extract_connective_pairs(
    source: &str,
    sentences: &[String],
    patterns: &[ConnectivePattern],
    rules: &ExtractionRuleSet,
    task: &str,
) -> Vec<ArgumentPair> {
    let mut by_len: Vec<&ConnectivePattern> = patterns
        .iter()
        .filter(|p| p.position == ConnectivePosition::SentenceInitialSecondArg)
        .collect();
    by_len.sort_by_key(|p| std::cmp::Reverse(p.tokens.len()));

    let mut out = Vec::new();
    for (idx, w) in sentences.windows(2).enumerate() {
        let (s1, s2) = (&w[0], &w[1]);
        if rules.require_final_punctuation && !(ends_sentence(s1) && ends_sentence(s2)) {
            continue;
        }
        let t1 = tokenize(s1);
        let t2 = tokenize(s2);
        let Some(pattern) = by_len.iter().find(|p| t2.starts_with(&p.tokens)) else {
            continue;
        };
        let mut rest = &t2[pattern.tokens.len()..];
        if rest.first().map(String::as_str) == Some(",") {
            rest = &rest[1..];
        }
        if !rules.accepts_len(t1.len()) || !rules.accepts_len(rest.len()) {
            continue;
        }
        if t1.starts_with(&pattern.tokens) || rest.starts_with(&pattern.tokens) {
            continue;
        }
        let mut pair = ArgumentPair::new(task, t1, rest.to_vec(), pattern.connective.clone());
        pair.id = Some(format!("{source}:{idx:06}"));
        out.push(pair);
    }
    out
}

/// Uniform sample of `n` pairs without replacement, ordered by id and then
/// by draw order.
pub fn sample_corpus(pairs: &[ArgumentPair], n: usize, seed: u64) -> Result<Vec<ArgumentPair>> {
    if n > pairs.len() {
        return Err(Error::SampleSize {
            requested: n,
            available: pairs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, pairs.len(), n)
        .into_iter()
        .enumerate()
        .collect();
    drawn.sort_by(|a, b| pairs[a.1].id.cmp(&pairs[b.1].id).then(a.0.cmp(&b.0)));
    Ok(drawn.into_iter().map(|(_, i)| pairs[i].clone()).collect())
}

/// Per-connective counts and percentages, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractionStats {
    pub total: usize,
    pub rows: Vec<(String, usize, f64)>,
}

impl ExtractionStats {
    pub fn from_pairs(pairs: &[ArgumentPair]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in pairs {
            *counts.entry(&p.label).or_default() += 1;
        }
        let total = pairs.len();
        let mut rows: Vec<(String, usize, f64)> = counts
            .into_iter()
            .map(|(c, n)| (c.to_string(), n, 100.0 * n as f64 / total as f64))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ExtractionStats { total, rows }
    }

    /// Two connectives per line, `Connective  Pct.` columns.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.0.len()).max().unwrap_or(10).max(10);
        let mut s = String::new();
        s.push_str(&format!(
            "{:<width$}  {:>7}  {:<width$}  {:>7}\n",
            "Connective", "Pct.", "Connective", "Pct."
        ));
        for chunk in self.rows.chunks(2) {
            let cell = |r: &(String, usize, f64)| format!("{:<width$}  {:>6.2}%", r.0, r.2);
            match chunk {
                [a, b] => s.push_str(&format!("{}  {}\n", cell(a), cell(b))),
                [a] => s.push_str(&format!("{}\n", cell(a))),
                _ => unreachable!(),
            }
        }
        s.push_str(&format!("total pairs: {}\n", self.total));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn labels(v: &[&str]) -> LabelSet {
        LabelSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn splitter_examples() {
        assert_eq!(split_sentences("It rained. We left."), ["It rained.", "We left."]);
        assert_eq!(
            split_sentences("Dr. Smith arrived. We left."),
            ["Dr. Smith arrived.", "We left."]
        );
        assert!(split_sentences("").is_empty());
        assert_eq!(
            SentenceSplitter::new([]).split("Dr. Smith arrived."),
            ["Dr.", "Smith arrived."]
        );
        assert_eq!(
            split_sentences("He said \"fine.\" Then he left! Why? \"Because.\""),
            ["He said \"fine.\"", "Then he left!", "Why?", "\"Because.\""]
        );
        assert_eq!(split_sentences("Pi is 3.14 today. ok."), ["Pi is 3.14 today. ok."]);
    }

    #[test]
    fn extraction_example() {
        let sents = vec![
            "Prices fell sharply yesterday afternoon.".to_string(),
            "In fact, volume hit a record high.".to_string(),
        ];
        let pats = vec![ConnectivePattern::new("in fact").unwrap(), ConnectivePattern::new("in").unwrap()];
        let rules = ExtractionRuleSet::default();
        let out = extract_connective_pairs("doc", &sents, &pats, &rules, "conn");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, "in fact");
        assert_eq!(out[0].arg1, toks("prices fell sharply yesterday afternoon."));
        assert_eq!(out[0].arg2, toks("volume hit a record high."));
        assert_eq!(out[0].id.as_deref(), Some("doc:000000"));
    }

    #[test]
    fn extraction_requires_word_boundary() {
        let sents = vec![
            "Prices fell sharply yesterday afternoon.".to_string(),
            "Infactual claims abound everywhere.".to_string(),
        ];
        let pats = vec![ConnectivePattern::new("in fact").unwrap()];
        assert!(extract_connective_pairs("d", &sents, &pats, &ExtractionRuleSet::default(), "c").is_empty());
    }

    #[test]
    fn extraction_length_filter() {
        let sents = vec!["Short.".to_string(), "Because it was raining hard.".to_string()];
        let pats = vec![ConnectivePattern::new("because").unwrap()];
        let rules = ExtractionRuleSet::default();
        assert!(extract_connective_pairs("d", &sents, &pats, &rules, "c").is_empty());
        let loose = ExtractionRuleSet { min_tokens: 1, ..rules };
        assert_eq!(extract_connective_pairs("d", &sents, &pats, &loose, "c").len(), 1);
    }

    #[test]
    fn rules_validate() {
        let bad = ExtractionRuleSet { min_tokens: 5, max_tokens: 4, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dataset_validation_errors() {
        let ls = labels(&["Comparison", "Expansion"]);
        let ok = r#"{"task":"imp","arg1":["a"],"arg2":"b c","label":"Expansion"}"#;
        let ds = read_dataset(ok.as_bytes(), "m", "imp", &ls).unwrap();
        assert_eq!(ds.pairs[0].arg2, ["b", "c"]);
        assert_eq!(ds.label_counts["Expansion"], 1);

        let bad_label = format!("{ok}\n{}", ok.replace("Expansion", "Elaboration"));
        match read_dataset(bad_label.as_bytes(), "m", "imp", &ls).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("Elaboration"));
            }
            e => panic!("{e:?}"),
        }
        let empty_arg = ok.replace(r#"["a"]"#, "[]");
        assert!(read_dataset(empty_arg.as_bytes(), "m", "imp", &ls).is_err());
        let wrong_task = ok.replace("imp", "rst");
        assert!(read_dataset(wrong_task.as_bytes(), "m", "imp", &ls).is_err());
        assert!(read_dataset("".as_bytes(), "m", "imp", &ls).unwrap().pairs.is_empty());
    }

    #[test]
    fn rst_label_accepted() {
        let ls = labels(&[
            "Elaboration", "Attribution", "Joint", "Same-unit", "Contrast", "Explanation",
            "Background", "Cause", "Evaluation", "Enablement", "Temporal", "Comparison",
        ]);
        let rec = r#"{"task":"rst","arg1":["x"],"arg2":["y"],"label":"Elaboration","same_sentence":true}"#;
        let ds = read_dataset(rec.as_bytes(), "m", "rst", &ls).unwrap();
        assert_eq!(ds.pairs[0].same_sentence, Some(true));
    }

    #[test]
    fn sampling() {
        let pairs: Vec<ArgumentPair> = (0..20)
            .map(|i| {
                let mut p = ArgumentPair::new("t", vec!["a".into()], vec!["b".into()], "l");
                p.id = Some(format!("d:{i:06}"));
                p
            })
            .collect();
        let all = sample_corpus(&pairs, 20, 1).unwrap();
        let mut ids: Vec<_> = all.iter().map(|p| p.id.clone()).collect();
        ids.sort();
        assert_eq!(ids, pairs.iter().map(|p| p.id.clone()).collect::<Vec<_>>());
        assert!(sample_corpus(&pairs, 0, 1).unwrap().is_empty());
        assert_eq!(sample_corpus(&pairs, 7, 3).unwrap(), sample_corpus(&pairs, 7, 3).unwrap());
        match sample_corpus(&pairs, 21, 1).unwrap_err() {
            Error::SampleSize { requested, available } => assert_eq!((requested, available), (21, 20)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn stats_percentages_sum_to_100() {
        let mk = |l: &str| ArgumentPair::new("t", vec!["a".into()], vec!["b".into()], l);
        let pairs: Vec<_> = ["because", "because", "so", "if", "because", "so", "indeed"]
            .iter()
            .map(|l| mk(l))
            .collect();
        let s = ExtractionStats::from_pairs(&pairs);
        assert_eq!(s.rows[0].0, "because");
        let sum: f64 = s.rows.iter().map(|r| r.2).sum();
        assert!((sum - 100.0).abs() < 0.1);
        assert!(s.to_table().contains("because"));
    }

    fn arb_pair() -> impl Strategy<Value = ArgumentPair> {
        let words = prop::collection::vec("[a-z]{1,6}", 1..6);
        (
            "[a-z]{1,5}",
            words.clone(),
            words,
            "[A-Za-z]{1,8}",
            prop::option::of(prop::collection::vec("[A-Z]+ -> [A-Z]+", 0..3)),
            prop::option::of(any::<bool>()),
            prop::option::of("[a-z0-9:]{1,8}"),
        )
            .prop_map(|(task, arg1, arg2, label, rules, same, id)| ArgumentPair {
                task,
                arg1,
                arg2,
                label,
                rules1: rules.clone(),
                rules2: rules,
                same_sentence: same,
                id,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(pairs in prop::collection::vec(arb_pair(), 1..8)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.jsonl");
            save_dataset(&path, &pairs).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            let back: Vec<ArgumentPair> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
            prop_assert_eq!(back, pairs);
        }

        #[test]
        fn extracted_pairs_respect_rules(
            sents in prop::collection::vec(
                prop::sample::select(vec![
                    "Because because the market fell.",
                    "The market fell again today.",
                    "So it goes.",
                    "In fact, in fact prices rose a lot.",
                    "Indeed the rally continued for weeks.",
                    "If rates rise, stocks drop.",
                    "Because.",
                    "no punctuation here",
                ]).prop_map(String::from),
                0..12,
            ),
            min in 1usize..5,
            span in 0usize..8,
        ) {
            let pats: Vec<_> = ["because", "so", "in fact", "indeed", "if"]
                .iter().map(|c| ConnectivePattern::new(c).unwrap()).collect();
            let rules = ExtractionRuleSet { min_tokens: min, max_tokens: min + span, ..Default::default() };
            for p in extract_connective_pairs("d", &sents, &pats, &rules, "c") {
                let conn = tokenize(&p.label);
                prop_assert!(!p.arg1.starts_with(&conn));
                prop_assert!(!p.arg2.starts_with(&conn));
                prop_assert!(rules.accepts_len(p.arg1.len()) && rules.accepts_len(p.arg2.len()));
            }
        }
    }
}
