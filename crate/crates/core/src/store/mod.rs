//! Data model and on-disk formats: embeddings in NPY files, session
//! manifests, the class registry and pipeline state directories.

mod embeddings;
mod manifest;
pub mod npy;
mod registry;
mod state;

pub use embeddings::{load_embeddings, save_embeddings, EmbeddingSet, UNLABELED};
pub use manifest::{Manifest, Role, SessionManifest};
pub use registry::{ClassEntry, ClassRegistry};
pub use state::{load_state, save_state, PipelineState, STATE_VERSION};
