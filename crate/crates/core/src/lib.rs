pub mod baselines;
pub mod commands;
pub mod config;
pub mod denoiser;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod trajectory;
pub mod video;
pub mod window;
pub mod world;
