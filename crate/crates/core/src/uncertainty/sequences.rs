//! Bigram embeddings of token sequences and the similarity measures built
//! on them.
//!
//! Coordinate `a * V + b` counts occurrences of token `b` directly after
//! token `a`. The implicit begin token shares the row of the end token,
//! which never has a successor inside a sequence, so the first token `t`
//! lands on `EOS * V + t`.

use crate::error::{Error, Result};
use crate::models::EOS;
use crate::numkit::{dot, norm, sample_variance};

/// L2-normalized bigram counts, dimension `vocab_size²`. The empty
/// sequence maps to the basis vector at `(EOS, EOS)`.
pub fn embed_sequence(seq: &[usize], vocab_size: usize) -> Result<Vec<f64>> {
    if let Some(&token) = seq.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::InvalidToken { token, vocab_size });
    }
    let mut v = vec![0.0; vocab_size * vocab_size];
    if seq.is_empty() {
        v[EOS * vocab_size + EOS] = 1.0;
        return Ok(v);
    }
    let mut prev = EOS;
    for &tok in seq {
        v[prev * vocab_size + tok] += 1.0;
        prev = tok;
    }
    let len = norm(&v);
    for x in &mut v {
        *x /= len;
    }
    Ok(v)
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean pairwise cosine distance between response embeddings.
pub fn dispersion(responses: &[Vec<usize>], vocab_size: usize) -> Result<f64> {
    if responses.len() < 2 {
        return Err(Error::TooFewResponses(responses.len()));
    }
    let emb = responses
        .iter()
        .map(|r| embed_sequence(r, vocab_size))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            total += 1.0 - cosine_similarity(&emb[i], &emb[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Mean over embedding coordinates of teacher minus student sample variance.
pub fn intra_variance_gap(
    teacher_samples: &[Vec<usize>],
    student_samples: &[Vec<usize>],
    vocab_size: usize,
) -> Result<f64> {
    let coordinate_variances = |samples: &[Vec<usize>]| -> Result<Vec<f64>> {
        if samples.len() < 2 {
            return Err(Error::TooFewResponses(samples.len()));
        }
        let emb = samples
            .iter()
            .map(|s| embed_sequence(s, vocab_size))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..vocab_size * vocab_size)
            .map(|c| sample_variance(&emb.iter().map(|e| e[c]).collect::<Vec<_>>()))
            .collect())
    };
    let vt = coordinate_variances(teacher_samples)?;
    let vs = coordinate_variances(student_samples)?;
    Ok(vt.iter().zip(&vs).map(|(a, b)| a - b).sum::<f64>() / vt.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_basics() {
        let a = embed_sequence(&[1, 2, 0], 3).unwrap();
        assert_eq!(a, embed_sequence(&[1, 2, 0], 3).unwrap());
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert_eq!(embed_sequence(&[], 3).unwrap()[0], 1.0);
        assert!(embed_sequence(&[4], 3).is_err());
        // (BOS,1),(1,1) versus (BOS,2),(2,2): no shared bigram.
        let b = embed_sequence(&[1, 1], 3).unwrap();
        let c = embed_sequence(&[2, 2], 3).unwrap();
        assert_eq!(cosine_similarity(&b, &c).unwrap(), 0.0);
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&[1.0, -1.0], &[-1.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err(), Error::ZeroVector);
    }

    #[test]
    fn dispersion_cases() {
        assert_eq!(dispersion(&[vec![1, 0], vec![1, 0]], 3).unwrap(), 0.0);
        assert!((dispersion(&[vec![1, 1], vec![2, 2]], 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dispersion(&[vec![1]], 3).unwrap_err(), Error::TooFewResponses(1));
    }

    #[test]
    fn variance_gap() {
        let t = vec![vec![1, 0], vec![2, 0], vec![1, 2, 0]];
        assert_eq!(intra_variance_gap(&t, &t, 3).unwrap(), 0.0);
        let s = vec![vec![1, 0]; 3];
        assert!(intra_variance_gap(&t, &s, 3).unwrap() > 0.0);
    }
}
