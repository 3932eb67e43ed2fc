//! Interaction logs, embedding tables, profiles and synthetic datasets.

mod embedding;
mod interactions;
mod profile;
mod split;
mod synthetic;

pub use embedding::{
    decode_emb1, load_embedding_table, manifest_path, read_emb1, write_emb1, write_embedding_table, EmbeddingTable,
    Modality, MAGIC,
};
pub use interactions::{load_interactions, parse_interactions, write_interactions, Interaction, InteractionLog};
pub use profile::{load_profiles, write_profiles, ProfileTable, UserProfile};
pub use split::{split_train_eval, EvalSet};
pub use synthetic::{generate_synthetic, load_groups, write_groups, SyntheticDataset, SyntheticSpec};
