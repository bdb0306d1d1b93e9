pub mod campaign;
pub mod cli;
pub mod ir;
pub mod seed;
pub mod sim;
pub mod transforms;
