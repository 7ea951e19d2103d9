pub mod autodiff;
pub mod cli;
pub mod data;
pub mod model;
pub mod nn;
pub mod ssl;
pub mod train;

/// Generator used for every stochastic step (initialization, dropout,
/// augmentation, sampling). Seeded explicitly so runs are reproducible.
pub type SeededRng = rand_chacha::ChaCha8Rng;
