use std::collections::HashMap;
use std::path::{Path, PathBuf};

use safetensors::{Dtype, SafeTensors};

use super::EmbeddingProvider;
use crate::corpus::normalize_text;
use crate::error::{Error, Result};

const TENSOR_NAME: &str = "embeddings";
const UNKNOWN_TOKEN: &str = "[UNK]";

/// Static (token-lookup) sentence encoder loaded from a safetensors file.
///
/// The file holds a `[vocab, dim]` tensor named `embeddings` (F32 or F64).
/// Row `i` belongs to line `i` of `vocab.txt` in the same directory. An
/// optional `dimension` entry in the safetensors metadata is checked against
/// the tensor width. Text is split into alphanumeric runs and single
/// punctuation characters, each mapped by WordPiece greedy longest match
/// (`##` continuation pieces), and the matched rows are mean-pooled and
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct StaticModelProvider {
    id: String,
    dim: usize,
    vocab: HashMap<String, usize>,
    rows: Vec<f64>,
    unknown: Option<usize>,
}

impl StaticModelProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = format!(
            "static-model:{}",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("model")
        );
        let fail = |message: String| Error::Provider {
            provider: id.clone(),
            message,
        };
        let bytes = std::fs::read(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
        let (_, metadata) =
            SafeTensors::read_metadata(&bytes).map_err(|e| fail(format!("invalid safetensors header: {e:?}")))?;
        let tensors = SafeTensors::deserialize(&bytes).map_err(|e| fail(format!("invalid safetensors file: {e:?}")))?;
        let view = tensors
            .tensor(TENSOR_NAME)
            .map_err(|_| fail(format!("tensor `{TENSOR_NAME}` not found")))?;
        let shape = view.shape().to_vec();
        let [n_tokens, dim] = shape[..] else {
            return Err(fail(format!("tensor `{TENSOR_NAME}` must be 2-D, got {shape:?}")));
        };
        let rows: Vec<f64> = match view.dtype() {
            Dtype::F32 => view
                .data()
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect(),
            Dtype::F64 => view
                .data()
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            other => return Err(fail(format!("unsupported dtype {other:?}"))),
        };
        if let Some(declared) = metadata.metadata().as_ref().and_then(|m| m.get("dimension")) {
            let declared: usize = declared
                .parse()
                .map_err(|_| fail(format!("metadata dimension `{declared}` is not an integer")))?;
            if declared != dim {
                return Err(fail(format!("declared dimension {declared} but tensor width is {dim}")));
            }
        }

        let vocab_path: PathBuf = path.with_file_name("vocab.txt");
        let vocab_text = std::fs::read_to_string(&vocab_path)
            .map_err(|e| fail(format!("cannot read {}: {e}", vocab_path.display())))?;
        let tokens: Vec<&str> = vocab_text.lines().collect();
        if tokens.len() != n_tokens {
            return Err(fail(format!(
                "vocab.txt has {} tokens but the tensor has {n_tokens} rows",
                tokens.len()
            )));
        }
        let vocab: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
        let unknown = vocab.get(UNKNOWN_TOKEN).copied();
        Ok(Self {
            id,
            dim,
            vocab,
            rows,
            unknown,
        })
    }

    fn wordpiece(&self, word: &str, out: &mut Vec<usize>) {
        if let Some(&id) = self.vocab.get(word) {
            out.push(id);
            return;
        }
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.vocab.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.extend(self.unknown);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    fn tokenize(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                word.push(ch);
                continue;
            }
            if !word.is_empty() {
                self.wordpiece(&word, &mut ids);
                word.clear();
            }
            if !ch.is_whitespace() {
                self.wordpiece(&ch.to_string(), &mut ids);
            }
        }
        if !word.is_empty() {
            self.wordpiece(&word, &mut ids);
        }
        ids
    }
}

impl EmbeddingProvider for StaticModelProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.tokenize(&normalize_text(text));
        let mut out = vec![0.0; self.dim];
        for &id in &ids {
            for (o, &v) in out.iter_mut().zip(&self.rows[id * self.dim..(id + 1) * self.dim]) {
                *o += v;
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for o in out.iter_mut() {
                *o /= norm;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use safetensors::tensor::TensorView;

    fn write_model(dir: &Path, vocab: &[&str], rows: &[f32], dim: usize, declared: Option<usize>) -> PathBuf {
        let bytes: Vec<u8> = rows.iter().flat_map(|v| v.to_le_bytes()).collect();
        let view = TensorView::new(Dtype::F32, vec![vocab.len(), dim], &bytes).unwrap();
        let meta = declared.map(|d| HashMap::from([("dimension".to_string(), d.to_string())]));
        let path = dir.join("model.safetensors");
        safetensors::serialize_to_file([(TENSOR_NAME, view)], &meta, &path).unwrap();
        std::fs::write(dir.join("vocab.txt"), vocab.join("\n")).unwrap();
        path
    }

    #[test]
    fn mean_pools_wordpieces() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = ["[UNK]", "loop", "iter", "##ate", "!"];
        let rows = [0., 0., 1., 0., 0., 1., 0., 1., 1., 1.];
        let path = write_model(dir.path(), &vocab, &rows, 2, Some(2));
        let p = StaticModelProvider::load(&path).unwrap();
        assert_eq!(p.dimension(), 2);
        assert_eq!(p.tokenize("iterate loop!"), vec![2, 3, 1, 4]);
        assert_eq!(p.tokenize("zzz"), vec![0]);
        // loop -> (1,0)
        assert_eq!(p.embed("Loop").unwrap(), vec![1.0, 0.0]);
        // iter + ##ate -> (0,2) normalized
        assert_eq!(p.embed("iterate").unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn missing_file_names_provider() {
        let err = StaticModelProvider::load("/nonexistent/encoder.safetensors").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("static-model:encoder"), "{msg}");
    }

    #[test]
    fn declared_dimension_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_model(dir.path(), &["a", "b"], &[1., 0., 0., 1.], 2, Some(768));
        let err = StaticModelProvider::load(&path).unwrap_err();
        assert!(err.to_string().contains("declared dimension 768"), "{err}");
    }
}
