//! Lexical scorers fitted on one worksheet's problems.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::Worksheet;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lexical {
    Jaccard,
    TfIdf,
    Bm25 { k1: f64, b: f64 },
}

type Counts = BTreeMap<String, f64>;

fn counts(tokens: &[String]) -> Counts {
    let mut m = Counts::new();
    for t in tokens {
        *m.entry(t.clone()).or_insert(0.0) += 1.0;
    }
    m
}

/// Per-worksheet index; the problems are the document collection.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    method: Lexical,
    sets: Vec<BTreeSet<String>>,
    tfs: Vec<Counts>,
    lengths: Vec<f64>,
    df: BTreeMap<String, f64>,
    /// L2-normalized tf-idf vectors, filled for `TfIdf` only.
    tfidf: Vec<Counts>,
}

impl LexicalIndex {
    pub fn fit(method: Lexical, worksheet: &Worksheet) -> Self {
        let docs: Vec<Vec<String>> = worksheet.problems().iter().map(|p| tokenize(&p.text)).collect();
        let sets: Vec<BTreeSet<String>> = docs.iter().map(|d| d.iter().cloned().collect()).collect();
        let mut df = BTreeMap::new();
        for s in &sets {
            for t in s {
                *df.entry(t.clone()).or_insert(0.0) += 1.0;
            }
        }
        let tfs: Vec<Counts> = docs.iter().map(|d| counts(d)).collect();
        let lengths = docs.iter().map(|d| d.len() as f64).collect();
        let mut index = Self {
            method,
            sets,
            tfs,
            lengths,
            df,
            tfidf: Vec::new(),
        };
        if let Lexical::TfIdf = method {
            index.tfidf = index.tfs.iter().map(|tf| index.tfidf_vector(tf)).collect();
        }
        index
    }

    pub fn method(&self) -> Lexical {
        self.method
    }

    fn n_docs(&self) -> f64 {
        self.sets.len() as f64
    }

    /// Smoothed idf: `ln((1 + W) / (1 + df)) + 1`.
    fn smooth_idf(&self, df: f64) -> f64 {
        libm::log((1.0 + self.n_docs()) / (1.0 + df)) + 1.0
    }

    fn tfidf_vector(&self, tf: &Counts) -> Counts {
        let mut v: Counts = tf
            .iter()
            .filter_map(|(t, c)| self.df.get(t).map(|&df| (t.clone(), c * self.smooth_idf(df))))
            .collect();
        let norm = libm::sqrt(v.values().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            for x in v.values_mut() {
                *x /= norm;
            }
        }
        v
    }

    /// One raw score per problem, in worksheet order.
    pub fn scores(&self, query: &[String]) -> Vec<f64> {
        match self.method {
            Lexical::Jaccard => {
                let q: BTreeSet<&str> = query.iter().map(String::as_str).collect();
                self.sets
                    .iter()
                    .map(|doc| {
                        let inter = doc.iter().filter(|t| q.contains(t.as_str())).count();
                        let union = q.len() + doc.len() - inter;
                        if union == 0 {
                            0.0
                        } else {
                            inter as f64 / union as f64
                        }
                    })
                    .collect()
            }
            Lexical::TfIdf => {
                let qv = self.tfidf_vector(&counts(query));
                self.tfidf
                    .iter()
                    .map(|dv| qv.iter().filter_map(|(t, x)| dv.get(t).map(|y| x * y)).sum::<f64>())
                    .collect()
            }
            Lexical::Bm25 { k1, b } => {
                let avgdl = self.lengths.iter().sum::<f64>() / self.n_docs();
                let n = self.n_docs();
                self.tfs
                    .iter()
                    .zip(&self.lengths)
                    .map(|(tf, &dl)| {
                        let norm = if avgdl > 0.0 {
                            k1 * (1.0 - b + b * dl / avgdl)
                        } else {
                            k1
                        };
                        query
                            .iter()
                            .filter_map(|q| {
                                let f = *tf.get(q)?;
                                let df = self.df[q];
                                let idf = libm::log(1.0 + (n - df + 0.5) / (df + 0.5));
                                Some(idf * f * (k1 + 1.0) / (f + norm))
                            })
                            .sum::<f64>()
                    })
                    .collect()
            }
        }
    }
}
