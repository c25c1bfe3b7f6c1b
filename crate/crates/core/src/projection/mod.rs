//! Two-dimensional projection of embeddings.

mod scatter;
pub mod tsne;

pub use scatter::{export_scatter, read_scatter_csv, render_scatter_svg, write_scatter_csv, ProjectedPoint, ScatterFormat};
pub use tsne::{tsne, TsneConfig, TsneInit, TsneResult};
