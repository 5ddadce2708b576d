pub mod cli;
pub mod csv_io;
pub mod json;
pub mod pipeline;
pub mod server;
pub mod turtle;
