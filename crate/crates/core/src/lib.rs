pub mod dynamics;
pub mod experiments;
pub mod landscape;
pub mod linalg;
pub mod observation;
pub mod oracles;
