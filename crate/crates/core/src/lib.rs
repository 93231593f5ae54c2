pub mod archive;
pub mod channel_db;
pub mod time;
pub mod tune;
pub mod sim;
pub mod query;
pub mod config;
pub mod scanner;
pub mod system;
pub mod api;
pub mod cli;
