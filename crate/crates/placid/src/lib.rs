pub mod wire;
pub mod persistence;
pub mod scenario;
pub mod service;
