//! Report-quality metrics and confusion-matrix classification metrics.
//!
//! Tokens are lowercased alphabetic runs; an apostrophe is kept only between
//! two letters. Sentences end at `.`, `!` or `?` followed by whitespace or end
//! of text, which means abbreviations such as "e.g." split sentences.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TextMetricsError {
    #[error("text has no word tokens")]
    NoTokens,
    #[error("need at least 2 tokens, found {0}")]
    TooFewTokens(usize),
    #[error("no sentences detected")]
    NoSentences,
    #[error("need at least 2 sentences, found {0}")]
    TooFewSentences(usize),
    #[error("embedder returned {got} vectors for {expected} sentences")]
    EmbeddingCount { expected: usize, got: usize },
    #[error("confusion matrix: {0}")]
    Confusion(String),
}

type Result<T> = std::result::Result<T, TextMetricsError>;

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits on sentence-final punctuation followed by whitespace or end of text.
/// Segments without any word token are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            push_sentence(&mut sentences, &mut current);
        }
    }
    push_sentence(&mut sentences, &mut current);
    sentences
}

fn push_sentence(out: &mut Vec<String>, buf: &mut String) {
    let s = buf.trim();
    if !tokenize(s).is_empty() {
        out.push(s.to_string());
    }
    buf.clear();
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate: runs of `aeiouy`, minus a silent final `e`
/// (kept for consonant + `le`), never below 1.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    let mut groups = 0usize;
    let mut in_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !in_vowel {
            groups += 1;
        }
        in_vowel = v;
    }
    let n = w.len();
    if n >= 1 && w[n - 1] == 'e' {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

fn type_count(tokens: &[String]) -> usize {
    tokens.iter().collect::<HashSet<_>>().len()
}

/// Distinct tokens over total tokens.
pub fn ttr(text: &str) -> Result<f64> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(TextMetricsError::NoTokens);
    }
    Ok(type_count(&tokens) as f64 / tokens.len() as f64)
}

fn maas_counts(n_tokens: usize, n_types: usize) -> f64 {
    let lt = (n_tokens as f64).ln();
    (lt - (n_types as f64).ln()) / (lt * lt)
}

/// Maas index `(ln N - ln V) / (ln N)^2`; lower means more diverse.
pub fn maas(text: &str) -> Result<f64> {
    let tokens = tokenize(text);
    if tokens.len() < 2 {
        return Err(TextMetricsError::TooFewTokens(tokens.len()));
    }
    Ok(maas_counts(tokens.len(), type_count(&tokens)))
}

pub fn fres_from_averages(asl: f64, asw: f64) -> f64 {
    206.835 - 1.015 * asl - 84.6 * asw
}

/// Flesch reading ease.
pub fn fres(text: &str) -> Result<f64> {
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(TextMetricsError::NoSentences);
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(TextMetricsError::NoTokens);
    }
    let syllables: usize = tokens.iter().map(|t| count_syllables(t)).sum();
    let asl = tokens.len() as f64 / sentences.len() as f64;
    let asw = syllables as f64 / tokens.len() as f64;
    Ok(fres_from_averages(asl, asw))
}

/// Sentence embedding source for the coherence score.
///
/// Implementations get the whole sentence list at once so that
/// vocabulary-based embedders can share a vocabulary across sentences.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, sentences: &[String]) -> Vec<Vec<f64>>;
}

/// L2-normalized term-frequency vectors over the batch vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct TermFrequencyEmbedder;

impl EmbeddingProvider for TermFrequencyEmbedder {
    fn embed(&self, sentences: &[String]) -> Vec<Vec<f64>> {
        let tokenized: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
        let vocab: BTreeMap<&str, usize> = {
            let mut words: Vec<&str> = tokenized.iter().flatten().map(String::as_str).collect();
            words.sort_unstable();
            words.dedup();
            words.into_iter().enumerate().map(|(i, w)| (w, i)).collect()
        };
        tokenized
            .iter()
            .map(|toks| {
                let mut v = vec![0.0; vocab.len()];
                for t in toks {
                    v[vocab[t.as_str()]] += 1.0;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Mean cosine over consecutive sentence embeddings.
pub fn coherence_of_embeddings(vectors: &[Vec<f64>]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(TextMetricsError::TooFewSentences(vectors.len()));
    }
    let sum: f64 = vectors.windows(2).map(|w| cosine(&w[0], &w[1])).sum();
    Ok(sum / (vectors.len() - 1) as f64)
}

pub fn coherence(text: &str, embedder: &dyn EmbeddingProvider) -> Result<f64> {
    let sentences = split_sentences(text);
    if sentences.len() < 2 {
        return Err(TextMetricsError::TooFewSentences(sentences.len()));
    }
    let vectors = embedder.embed(&sentences);
    if vectors.len() != sentences.len() {
        return Err(TextMetricsError::EmbeddingCount {
            expected: sentences.len(),
            got: vectors.len(),
        });
    }
    coherence_of_embeddings(&vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextMetricsReport {
    pub n_tokens: usize,
    pub n_types: usize,
    pub n_sentences: usize,
    pub ttr: f64,
    pub maas: f64,
    pub fres: f64,
    pub cohs: f64,
}

/// All four report metrics in one pass. Needs at least 2 tokens and 2
/// sentences.
pub fn evaluate_text(text: &str, embedder: &dyn EmbeddingProvider) -> Result<TextMetricsReport> {
    let tokens = tokenize(text);
    if tokens.len() < 2 {
        return Err(TextMetricsError::TooFewTokens(tokens.len()));
    }
    let sentences = split_sentences(text);
    if sentences.len() < 2 {
        return Err(TextMetricsError::TooFewSentences(sentences.len()));
    }
    let n_types = type_count(&tokens);
    let syllables: usize = tokens.iter().map(|t| count_syllables(t)).sum();
    Ok(TextMetricsReport {
        n_tokens: tokens.len(),
        n_types,
        n_sentences: sentences.len(),
        ttr: n_types as f64 / tokens.len() as f64,
        maas: maas_counts(tokens.len(), n_types),
        fres: fres_from_averages(
            tokens.len() as f64 / sentences.len() as f64,
            syllables as f64 / tokens.len() as f64,
        ),
        cohs: coherence(text, embedder)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single observation.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<MeanSd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_texts: usize,
    pub ttr: MeanSd,
    pub maas: MeanSd,
    pub fres: MeanSd,
    pub cohs: MeanSd,
}

/// Per-text metrics pooled as mean and sample standard deviation.
pub fn summarize_corpus(reports: &[TextMetricsReport]) -> Option<CorpusSummary> {
    let col = |f: fn(&TextMetricsReport) -> f64| {
        MeanSd::of(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Some(CorpusSummary {
        n_texts: reports.len(),
        ttr: col(|r| r.ttr)?,
        maas: col(|r| r.maas)?,
        fres: col(|r| r.fres)?,
        cohs: col(|r| r.cohs)?,
    })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = classes.len();
        if n == 0 {
            return Err(TextMetricsError::Confusion("no classes".into()));
        }
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(TextMetricsError::Confusion(format!(
                "counts must be {n}x{n} to match the class list"
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub warnings: Vec<String>,
}

/// Per-class and macro-averaged precision, recall and F1 plus accuracy.
/// Zero denominators yield 0 and a warning.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(TextMetricsError::Confusion("matrix has no samples".into()));
    }
    let n = cm.classes.len();
    let mut warnings = Vec::new();
    let mut ratio = |num: u64, den: u64, what: &str, class: &str| {
        if den == 0 {
            let msg = format!("{what} undefined for class {class}; reported as 0");
            log::warn!("{msg}");
            warnings.push(msg);
            0.0
        } else {
            num as f64 / den as f64
        }
    };

    let mut per_class = Vec::with_capacity(n);
    for k in 0..n {
        let tp = cm.counts[k][k];
        let support: u64 = cm.counts[k].iter().sum();
        let predicted: u64 = cm.counts.iter().map(|row| row[k]).sum();
        let class = &cm.classes[k];
        let precision = ratio(tp, predicted, "precision", class);
        let recall = ratio(tp, support, "recall", class);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class: class.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }

    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let correct: u64 = (0..n).map(|k| cm.counts[k][k]).sum();
    Ok(ClassificationReport {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        accuracy: correct as f64 / total as f64,
        per_class,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("The tumor, the tumor."),
            vec!["the", "tumor", "the", "tumor"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("patient's MRI-scan"), vec!["patient's", "mri", "scan"]);
        assert_eq!(tokenize("'quoted' 3D T1w"), vec!["quoted", "d", "t", "w"]);
    }

    #[test]
    fn sentence_splitting() {
        let s = split_sentences("One two. Three?! Four five! 3.5 six");
        assert_eq!(s, vec!["One two.", "Three?!", "Four five!", "3.5 six"]);
        assert!(split_sentences("... !!").is_empty());
    }

    #[test]
    fn syllable_heuristic() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("make"), 1);
        assert_eq!(count_syllables("table"), 2);
        assert_eq!(count_syllables("paper"), 2);
        assert_eq!(count_syllables("tumor"), 2);
        assert_eq!(count_syllables("free"), 1);
        assert_eq!(count_syllables("rhythm"), 1);
        assert_eq!(count_syllables("meningioma"), 4);
    }

    #[test]
    fn ttr_examples() {
        assert_eq!(ttr("a b a b").unwrap(), 0.5);
        assert_eq!(ttr("one two three").unwrap(), 1.0);
        assert_eq!(ttr("42 !"), Err(TextMetricsError::NoTokens));
    }

    #[test]
    fn maas_examples() {
        let distinct: String = (0..10).map(|i| format!("w{} ", "x".repeat(i + 1))).collect();
        assert_eq!(maas(&distinct).unwrap(), 0.0);
        let expected = (100f64.ln() - 50f64.ln()) / 100f64.ln().powi(2);
        assert!((maas_counts(100, 50) - expected).abs() < 1e-15);
        assert!((maas_counts(100, 50) - 0.0327).abs() < 1e-4);
        assert_eq!(maas("single"), Err(TextMetricsError::TooFewTokens(1)));
    }

    #[test]
    fn fres_examples() {
        let ten = format!("{}.", ["cat"; 10].join(" "));
        assert!((fres(&ten).unwrap() - 112.085).abs() < 1e-9);
        assert!((fres_from_averages(20.0, 2.0) - 17.335).abs() < 1e-9);
        assert_eq!(fres("   "), Err(TextMetricsError::NoSentences));
    }

    #[test]
    fn fres_is_linear_in_sentence_length() {
        let a = format!("{}.", ["cat"; 10].join(" "));
        let b = format!("{}.", ["cat"; 11].join(" "));
        let delta = fres(&b).unwrap() - fres(&a).unwrap();
        assert!((delta + 1.015).abs() < 1e-9);
    }

    struct Fixed(Vec<Vec<f64>>);
    impl EmbeddingProvider for Fixed {
        fn embed(&self, _: &[String]) -> Vec<Vec<f64>> {
            self.0.clone()
        }
    }

    #[test]
    fn coherence_examples() {
        let dup = "The lesion is small. The lesion is small.";
        assert!((coherence(dup, &TermFrequencyEmbedder).unwrap() - 1.0).abs() < 1e-12);

        let ortho = Fixed(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(coherence("A b. C d.", &ortho).unwrap(), 0.0);

        // cos = 0.8 then 0.6.
        let v = Fixed(vec![vec![1.0, 0.0], vec![0.8, 0.6], vec![0.0, 1.0]]);
        assert!((coherence("A. B. C.", &v).unwrap() - 0.7).abs() < 1e-12);

        assert_eq!(
            coherence("Only one.", &TermFrequencyEmbedder),
            Err(TextMetricsError::TooFewSentences(1))
        );
        let zero = Fixed(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(coherence("A. B.", &zero).unwrap(), 0.0);
    }

    fn reference_matrix() -> ConfusionMatrix {
        ConfusionMatrix::new(
            vec!["glioma".into(), "meningioma".into(), "pituitary".into()],
            vec![vec![113, 0, 8], vec![6, 158, 6], vec![1, 2, 189]],
        )
        .unwrap()
    }

    #[test]
    fn classification_on_reported_matrix() {
        let r = classification_metrics(&reference_matrix()).unwrap();
        assert!((r.accuracy - 460.0 / 483.0).abs() < 1e-12);
        assert_eq!(r.per_class[0].recall, 113.0 / 121.0);
        assert_eq!(r.per_class[1].recall, 158.0 / 170.0);
        assert_eq!(r.per_class[2].recall, 189.0 / 192.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn identity_matrix_is_perfect() {
        let cm = ConfusionMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![5, 0], vec![0, 7]],
        )
        .unwrap();
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert!(r.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        let cm = ConfusionMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![5, 0], vec![3, 0]],
        )
        .unwrap();
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn invalid_matrices() {
        assert!(ConfusionMatrix::new(vec!["a".into()], vec![vec![1, 2]]).is_err());
        let zero = ConfusionMatrix::new(vec!["a".into()], vec![vec![0]]).unwrap();
        assert!(classification_metrics(&zero).is_err());
    }

    #[test]
    fn corpus_summary_uses_sample_sd() {
        let mk = |ttr| TextMetricsReport {
            n_tokens: 10,
            n_types: 5,
            n_sentences: 2,
            ttr,
            maas: 0.0,
            fres: 0.0,
            cohs: 0.0,
        };
        let s = summarize_corpus(&[mk(0.4), mk(0.6)]).unwrap();
        assert!((s.ttr.mean - 0.5).abs() < 1e-12);
        assert!((s.ttr.sd - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(summarize_corpus(&[]).is_none());
    }

    proptest! {
        #[test]
        fn ttr_times_tokens_is_type_count(words in proptest::collection::vec("[a-e]{1,3}", 1..60)) {
            let text = words.join(" ");
            let t = ttr(&text).unwrap();
            let types = words.iter().collect::<HashSet<_>>().len();
            prop_assert!((t * words.len() as f64 - types as f64).abs() < 1e-9);
        }

        #[test]
        fn maas_zero_iff_all_distinct(words in proptest::collection::vec("[a-c]{1,2}", 2..30)) {
            let text = words.join(" ");
            let m = maas(&text).unwrap();
            let distinct = words.iter().collect::<HashSet<_>>().len() == words.len();
            prop_assert!(m >= 0.0);
            prop_assert_eq!(m == 0.0, distinct);
        }

        #[test]
        fn coherence_is_scale_invariant(
            vecs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 2..6),
            scale in 0.1f64..100.0
        ) {
            let scaled: Vec<Vec<f64>> = vecs.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
            let a = coherence_of_embeddings(&vecs).unwrap();
            let b = coherence_of_embeddings(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn macro_f1_invariant_under_reordering(
            counts in proptest::collection::vec(0u64..50, 9), perm_seed in 0usize..6
        ) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let p = perms[perm_seed];
            let grid: Vec<Vec<u64>> = counts.chunks(3).map(|c| c.to_vec()).collect();
            prop_assume!(grid.iter().flatten().sum::<u64>() > 0);
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let permuted: Vec<Vec<u64>> = (0..3).map(|i| (0..3).map(|j| grid[p[i]][p[j]]).collect()).collect();
            let pnames: Vec<String> = p.iter().map(|&i| names[i].clone()).collect();
            let a = classification_metrics(&ConfusionMatrix::new(names, grid).unwrap()).unwrap();
            let b = classification_metrics(&ConfusionMatrix::new(pnames, permuted).unwrap()).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        }
    }
}
