use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bag-of-words sentence vector: the sum of the token embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub values: Tensor,
    pub tokens: Vec<usize>,
}

impl SentenceEmbedding {
    pub fn width(&self) -> usize {
        self.values.len()
    }
}

/// Sum-pools rows of `table: [vocab, width]`. The empty sentence maps to zeros.
///
/// Rows are added in sorted token order so the result is bitwise independent
/// of word order.
pub fn encode_bow(tokens: &[usize], table: &Tensor) -> Result<SentenceEmbedding> {
    let (vocab, width) = table.dims2();
    let mut out = vec![0.0; width];
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    for &t in &sorted {
        if t >= vocab {
            return Err(Error::OutOfVocabulary { token: t, vocab });
        }
        let row = &table.data()[t * width..(t + 1) * width];
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    Ok(SentenceEmbedding {
        values: Tensor::vector(out),
        tokens: tokens.to_vec(),
    })
}
