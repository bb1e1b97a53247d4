//! Pairwise document similarity from TF-IDF cosine over whitespace
//! tokens, for the similarity-based diversifier.

use std::collections::HashMap;

use crate::error::Error;
use crate::instance::QueryInstance;

/// L2-normalized sparse TF-IDF vectors; similarity is their dot product,
/// so `sim(d, d) = 1`, symmetric, and in `[0, 1]`.
pub struct SimilarityProvider {
    vectors: Vec<Vec<(u32, f64)>>,
}

impl SimilarityProvider {
    /// Builds vectors from lowercased, whitespace-tokenized texts using
    /// raw term counts and the smoothed idf `ln((1 + n) / (1 + df)) + 1`.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let n = texts.len();
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut counts: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        let mut df: Vec<f64> = Vec::new();
        for text in texts {
            let mut tf: HashMap<u32, f64> = HashMap::new();
            for token in text.as_ref().to_lowercase().split_whitespace() {
                let next_id = vocab.len() as u32;
                let id = *vocab.entry(token.to_string()).or_insert(next_id);
                if id as usize == df.len() {
                    df.push(0.0);
                }
                let entry = tf.entry(id).or_insert(0.0);
                if *entry == 0.0 {
                    df[id as usize] += 1.0;
                }
                *entry += 1.0;
            }
            let mut row: Vec<(u32, f64)> = tf.into_iter().collect();
            row.sort_unstable_by_key(|&(id, _)| id);
            counts.push(row);
        }
        let vectors = counts
            .into_iter()
            .map(|row| {
                let mut weighted: Vec<(u32, f64)> = row
                    .into_iter()
                    .map(|(id, tf)| {
                        let idf = ((1.0 + n as f64) / (1.0 + df[id as usize])).ln() + 1.0;
                        (id, tf * idf)
                    })
                    .collect();
                let norm = weighted.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (_, w) in &mut weighted {
                        *w /= norm;
                    }
                }
                weighted
            })
            .collect();
        Self { vectors }
    }

    /// Builds the provider from an instance's document texts.
    pub fn for_instance(inst: &QueryInstance) -> Result<Self, Error> {
        let texts = inst.doc_texts().ok_or(Error::MissingFeatures)?;
        Ok(Self::from_texts(texts))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let (mut i, mut j) = (0, 0);
        let (va, vb) = (&self.vectors[a], &self.vectors[b]);
        let mut dot = 0.0;
        while i < va.len() && j < vb.len() {
            match va[i].0.cmp(&vb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += va[i].1 * vb[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        dot.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_similarity_one() {
        let sim = SimilarityProvider::from_texts(&["red car fast", "red car fast", "green tree"]);
        assert!((sim.similarity(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(sim.similarity(0, 0), 1.0);
    }

    #[test]
    fn disjoint_vocabulary_is_orthogonal() {
        let sim = SimilarityProvider::from_texts(&["alpha beta", "gamma delta"]);
        assert_eq!(sim.similarity(0, 1), 0.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        let texts = ["a b c", "b c d", "c d e", ""];
        let sim = SimilarityProvider::from_texts(&texts);
        for i in 0..texts.len() {
            assert_eq!(sim.similarity(i, i), 1.0);
            for j in 0..texts.len() {
                let s = sim.similarity(i, j);
                assert!((0.0..=1.0).contains(&s));
                assert!((s - sim.similarity(j, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn case_and_whitespace_are_normalized() {
        let sim = SimilarityProvider::from_texts(&["Red  CAR", "red car"]);
        assert!((sim.similarity(0, 1) - 1.0).abs() < 1e-12);
    }
}
