pub mod config;
pub mod gradcompare;
pub mod profile;
pub mod sweep;
pub mod task;
