//! Minimal neural-network stack: tensors, a reverse-mode tape, the two
//! toy volumetric architectures, the Adam optimizer, and checkpointing.

pub mod checkpoint;
pub mod network;
pub mod optim;
pub mod tape;
pub mod tensor;
