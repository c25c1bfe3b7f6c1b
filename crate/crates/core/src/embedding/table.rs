use std::collections::HashMap;

use super::EmbeddingProvider;
use crate::error::{Error, Result};

/// Provider backed by a precomputed text → vector table.
///
/// Useful for embeddings produced by an external encoder ahead of time, and
/// for synthetic corpora whose geometry is fixed by construction.
#[derive(Debug, Clone)]
pub struct TableProvider {
    id: String,
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn new(id: impl Into<String>, dim: usize) -> Self {
        Self {
            id: id.into(),
            dim,
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.table.insert(text.into(), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for TableProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.table.get(text).cloned().ok_or_else(|| Error::Provider {
            provider: self.id.clone(),
            message: format!("no vector for text `{text}`"),
        })
    }
}
