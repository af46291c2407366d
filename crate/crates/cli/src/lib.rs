//! Command-line front end for training and inspecting RT models.

pub mod commands;
pub mod config;
pub mod sweep;
