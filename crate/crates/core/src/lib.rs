pub mod bounds;
pub mod error;
pub mod flow;
pub mod generate;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod spectrum;
