//! Corpus statistics and subject-token pruning.
//!
//! The removal decision for a token depends only on [`CorpusStats`] and the
//! blocklist, never on the record being filtered, so pruning twice with the
//! same statistics is a no-op the second time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orgdata::EmailRecord;

/// Splits a raw subject line into lowercase tokens.
pub trait Tokenizer {
    fn tokenize(&self, subject: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, subject: &str) -> Vec<String> {
        subject.split_whitespace().map(str::to_lowercase).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub token_doc_freq: BTreeMap<String, usize>,
    pub token_total_freq: BTreeMap<String, usize>,
    pub n_docs: usize,
}

pub fn build_corpus_stats(records: &[EmailRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::Data("cannot build corpus statistics from an empty corpus".into()));
    }
    let mut doc = BTreeMap::new();
    let mut total = BTreeMap::new();
    for r in records {
        let mut seen = HashSet::new();
        for t in &r.subject_tokens {
            *total.entry(t.clone()).or_insert(0) += 1;
            if seen.insert(t.as_str()) {
                *doc.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    Ok(CorpusStats {
        token_doc_freq: doc,
        token_total_freq: total,
        n_docs: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// Fraction of the frequency-ranked vocabulary trimmed at each end.
    pub trim_fraction: f64,
    pub tfidf_floor: f64,
    pub drop_dates: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            trim_fraction: 0.05,
            tfidf_floor: 0.05,
            drop_dates: true,
        }
    }
}

impl CorpusStats {
    pub fn vocab_size(&self) -> usize {
        self.token_total_freq.len()
    }

    /// Vocabulary ordered by total frequency descending, ties lexicographic.
    pub fn ranked_vocab(&self) -> Vec<&str> {
        let mut v: Vec<(&str, usize)> = self
            .token_total_freq
            .iter()
            .map(|(t, &c)| (t.as_str(), c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v.into_iter().map(|(t, _)| t).collect()
    }

    /// Token-level TF-IDF: mean in-document count times `ln(n_docs / df)`.
    pub fn tfidf(&self, token: &str) -> f64 {
        let (Some(&df), Some(&tf)) = (self.token_doc_freq.get(token), self.token_total_freq.get(token))
        else {
            return 0.0;
        };
        (tf as f64 / df as f64) * (self.n_docs as f64 / df as f64).ln()
    }

    /// Tokens removed by frequency-rank trimming alone.
    pub fn rank_trimmed(&self, fraction: f64) -> BTreeSet<String> {
        let ranked = self.ranked_vocab();
        let k = (fraction * ranked.len() as f64).ceil() as usize;
        let k = k.min(ranked.len());
        ranked[..k]
            .iter()
            .chain(&ranked[ranked.len() - k..])
            .map(|t| t.to_string())
            .collect()
    }
}

fn date_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)^(
                \d{4}[-./]\d{1,2}([-./]\d{1,2})?
              | \d{1,2}[-./]\d{1,2}([-./]\d{2,4})?
              | \d{1,2}:\d{2}(:\d{2})?(am|pm)?
              | \d{1,2}(am|pm)
              | (19|20)\d{2}
              | (19|20)\d{6}
              | \d{1,2}(st|nd|rd|th)
              | jan(uary)?|feb(ruary)?|mar(ch)?|apr(il)?|may|june?|july?|aug(ust)?
              | sep(t|tember)?|oct(ober)?|nov(ember)?|dec(ember)?
              | mon(day)?|tue(s|sday)?|wed(nesday)?|thu(rs|rsday)?|fri(day)?|sat(urday)?|sun(day)?
              | today|tomorrow|yesterday|weekly|monthly|daily
              | q[1-4]
            )$",
        )
        .unwrap()
    })
}

pub fn is_date_or_time(token: &str) -> bool {
    date_pattern().is_match(token)
}

/// Full removal set implied by `stats`, `blocklist` and `cfg`.
pub fn removal_set(stats: &CorpusStats, blocklist: &BTreeSet<String>, cfg: &PruneConfig) -> BTreeSet<String> {
    let mut out = stats.rank_trimmed(cfg.trim_fraction);
    for t in stats.token_total_freq.keys() {
        if blocklist.contains(t)
            || (cfg.drop_dates && is_date_or_time(t))
            || stats.tfidf(t) < cfg.tfidf_floor
        {
            out.insert(t.clone());
        }
    }
    out
}

/// Removes trimmed, date-like, blocklisted and low TF-IDF tokens; drops
/// records left without tokens.
pub fn prune_tokens(
    records: &[EmailRecord],
    stats: &CorpusStats,
    blocklist: &BTreeSet<String>,
    cfg: &PruneConfig,
) -> Vec<EmailRecord> {
    let removed = removal_set(stats, blocklist, cfg);
    records
        .iter()
        .filter_map(|r| {
            let tokens: Vec<String> = r
                .subject_tokens
                .iter()
                .filter(|t| !removed.contains(*t) && !blocklist.contains(*t))
                .cloned()
                .collect();
            (!tokens.is_empty()).then(|| EmailRecord {
                subject_tokens: tokens,
                ..r.clone()
            })
        })
        .collect()
}

pub fn load_blocklist(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_blocklist(&text))
}

pub fn parse_blocklist(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn rec(subject: &str) -> EmailRecord {
        EmailRecord {
            sender: "a".into(),
            recipient: "b".into(),
            timestamp: 0,
            subject_tokens: WhitespaceTokenizer.tokenize(subject),
        }
    }

    fn no_filters() -> PruneConfig {
        PruneConfig {
            trim_fraction: 0.0,
            tfidf_floor: f64::NEG_INFINITY,
            drop_dates: false,
        }
    }

    #[test]
    fn doc_frequency_counts() {
        let s = build_corpus_stats(&[rec("a b"), rec("a c")]).unwrap();
        assert_eq!(s.n_docs, 2);
        assert_eq!(s.token_doc_freq["a"], 2);
        assert_eq!(s.token_doc_freq["b"], 1);
        assert_eq!(s.token_doc_freq["c"], 1);
    }

    #[test]
    fn single_subject_has_unit_doc_freq() {
        let s = build_corpus_stats(&[rec("x y y z")]).unwrap();
        assert!(s.token_doc_freq.values().all(|&d| d == 1));
        assert_eq!(s.token_total_freq["y"], 2);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(build_corpus_stats(&[]).is_err());
    }

    #[test]
    fn stats_match_recount_on_synthetic_corpus() {
        let (_, emails) =
            crate::orgdata::generate_synthetic_org(&crate::orgdata::SyntheticOrgConfig::default()).unwrap();
        let s = build_corpus_stats(&emails).unwrap();
        let mut total: HashMap<&str, usize> = HashMap::new();
        let mut doc: HashMap<&str, usize> = HashMap::new();
        for e in &emails {
            let mut uniq: Vec<&str> = e.subject_tokens.iter().map(String::as_str).collect();
            for t in &uniq {
                *total.entry(t).or_default() += 1;
            }
            uniq.sort();
            uniq.dedup();
            for t in uniq {
                *doc.entry(t).or_default() += 1;
            }
        }
        assert_eq!(s.token_total_freq.len(), total.len());
        for (t, c) in &total {
            assert_eq!(s.token_total_freq[*t], *c);
            assert_eq!(s.token_doc_freq[*t], doc[t]);
        }
    }

    #[test]
    fn trims_five_percent_at_each_end() {
        // Token wNN appears NN+1 times: 100 distinct frequencies.
        let mut records = Vec::new();
        for k in 0..100usize {
            for _ in 0..=k {
                records.push(rec(&format!("w{k:02}")));
            }
        }
        let stats = build_corpus_stats(&records).unwrap();
        let cfg = PruneConfig {
            trim_fraction: 0.05,
            ..no_filters()
        };
        let out = prune_tokens(&records, &stats, &BTreeSet::new(), &cfg);
        let kept: BTreeSet<String> = out.iter().flat_map(|r| r.subject_tokens.clone()).collect();

        // Oracle: sort by (count desc, token asc) and slice.
        let mut ranked: Vec<(usize, String)> = (0..100).map(|k| (k + 1, format!("w{k:02}"))).collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let expect: BTreeSet<String> = ranked[5..95].iter().map(|x| x.1.clone()).collect();
        assert_eq!(kept, expect);
    }

    #[test]
    fn ties_break_lexicographically() {
        let records: Vec<_> = (0..20).map(|k| rec(&format!("t{k:02}"))).collect();
        let stats = build_corpus_stats(&records).unwrap();
        let trimmed = stats.rank_trimmed(0.05);
        assert_eq!(trimmed, ["t00", "t19"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn dates_are_removed() {
        for t in ["2024-03-01", "3/14", "09:30", "5pm", "2024", "monday", "mar", "q3", "20240301"] {
            assert!(is_date_or_time(t), "{t}");
        }
        for t in ["payroll", "res001", "bg012", "budget", "request"] {
            assert!(!is_date_or_time(t), "{t}");
        }
        let records = vec![rec("budget 2024-03-01"), rec("review")];
        let stats = build_corpus_stats(&records).unwrap();
        let cfg = PruneConfig {
            drop_dates: true,
            ..no_filters()
        };
        let out = prune_tokens(&records, &stats, &BTreeSet::new(), &cfg);
        assert_eq!(out[0].subject_tokens, vec!["budget"]);
    }

    #[test]
    fn uniform_frequencies_only_rank_trim() {
        let records: Vec<_> = (0..40).map(|k| rec(&format!("tok{k:02} other{k:02}"))).collect();
        let stats = build_corpus_stats(&records).unwrap();
        let cfg = PruneConfig {
            tfidf_floor: 0.05,
            ..PruneConfig::default()
        };
        let removed = removal_set(&stats, &BTreeSet::new(), &cfg);
        assert_eq!(removed, stats.rank_trimmed(0.05));
    }

    #[test]
    fn blocklist_and_empty_records() {
        let records = vec![rec("acme deal"), rec("acme")];
        let stats = build_corpus_stats(&records).unwrap();
        let block = parse_blocklist("# names\nACME\n\n");
        let out = prune_tokens(&records, &stats, &block, &no_filters());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].subject_tokens, vec!["deal"]);
    }

    #[test]
    fn ubiquitous_tokens_fall_below_tfidf_floor() {
        let records = vec![rec("fwd alpha"), rec("fwd beta"), rec("fwd gamma")];
        let stats = build_corpus_stats(&records).unwrap();
        assert_eq!(stats.tfidf("fwd"), 0.0);
        let cfg = PruneConfig {
            tfidf_floor: 0.05,
            ..no_filters()
        };
        let out = prune_tokens(&records, &stats, &BTreeSet::new(), &cfg);
        assert!(out.iter().all(|r| !r.subject_tokens.contains(&"fwd".to_string())));
    }

    proptest! {
        #[test]
        fn prune_is_idempotent(docs in prop::collection::vec(prop::collection::vec(0u8..30, 1..6), 1..40)) {
            let records: Vec<_> = docs
                .iter()
                .map(|d| EmailRecord {
                    sender: "a".into(),
                    recipient: "b".into(),
                    timestamp: 0,
                    subject_tokens: d.iter().map(|k| format!("k{k}")).collect(),
                })
                .collect();
            let stats = build_corpus_stats(&records).unwrap();
            let cfg = PruneConfig::default();
            let once = prune_tokens(&records, &stats, &BTreeSet::new(), &cfg);
            let twice = prune_tokens(&once, &stats, &BTreeSet::new(), &cfg);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn distinct_frequencies_shrink_vocab(n in 2usize..60) {
            let mut records = Vec::new();
            for k in 0..n {
                for _ in 0..=k {
                    records.push(rec(&format!("w{k}")));
                }
            }
            let stats = build_corpus_stats(&records).unwrap();
            let out = prune_tokens(&records, &stats, &BTreeSet::new(), &PruneConfig::default());
            let kept: BTreeSet<&String> = out.iter().flat_map(|r| &r.subject_tokens).collect();
            prop_assert!(kept.len() as f64 <= 0.9 * n as f64);
        }
    }
}
