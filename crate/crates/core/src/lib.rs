//! Learned-prior Monte Carlo tree search for automated parking, with the
//! bicycle-model environment, a convolutional policy/value evaluator, the
//! self-play training loop and a Hybrid A* baseline.

pub mod astar;
pub mod bench;
pub mod config;
pub mod cost;
pub mod data;
pub mod dubins;
pub mod evaluator;
pub mod geometry;
pub mod mcts;
pub mod path;
pub mod render;
pub mod rng;
pub mod scenario;
pub mod train;
pub mod vehicle;
