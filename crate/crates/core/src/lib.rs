pub mod events;
pub mod fixtures;
pub mod linalg;
pub mod measures;
pub mod process;
pub mod io;
pub mod quantum;
pub mod embedding;
pub mod trajectory;
pub mod analysis;
pub mod reverse;
