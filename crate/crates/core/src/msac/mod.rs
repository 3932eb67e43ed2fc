//! Multimodal semantic-aware clustering: contrastive alignment of the three
//! item views followed by cascaded vector quantization.

mod align;
mod index;
mod quantize;
mod train;

pub use align::{pairwise_alignment_loss, AlignmentParams, PairLoss, ProjectedModalities, VIEWS};
pub use index::{
    build_semantic_index, load_codebooks, load_index, load_model, primary_distances, write_codebooks, write_index,
    write_model, SemanticIndex,
};
pub use quantize::{assign, fuse_primary, residual_secondary, sq_loss, CascadedCodebooks, Codebook, CodebookLevel, SqLoss};
pub use train::{
    flatten, init_codebooks, msac_objective, train_msac, unflatten, Assignments, MsacConfig, MsacGrads, MsacInputs,
    MsacLoss, MsacModel, ALIGN_PAIRS,
};
