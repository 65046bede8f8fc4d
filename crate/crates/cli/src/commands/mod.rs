pub mod generate;
pub mod reproduce;
pub mod solve;
pub mod train;
