//! Client-side encoder stack: GraphSAGE over node features, text fusion,
//! the kNN fuzzy graph and the parametric UMAP head.

pub mod align;
pub mod fusion;
pub mod gnn;
pub mod knn;
pub mod nn;
pub mod text;
pub mod umap;

pub use align::{align_loss, align_loss_scaled};
pub use fusion::{concat_inputs, fuse, fuse_backward, FusionParams};
pub use gnn::{gnn_backward, gnn_embed, gnn_forward, input_features, GnnParams, MeanAdjacency};
pub use knn::{build_knn, NeighborGraph};
pub use nn::{Activation, Dense};
pub use text::{text_embed_mock, MockTextEncoder, TextEncoder, TextMatrix};
pub use umap::{
    fit_ab, q_ij, sample_umap_terms, umap_backward, umap_forward, umap_loss, umap_terms_loss, UmapEncoderParams,
    UmapTerm,
};
