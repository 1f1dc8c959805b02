pub mod app;
pub mod dataset;
pub mod model;
pub mod serve;
pub mod train;
