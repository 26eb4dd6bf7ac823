//! Std companion of `webvln-core`: snapshot ingestion, file formats,
//! image features, language-model clients, the synthetic fixture site,
//! configuration, the HTTP session service and the pipeline used by the
//! `webvln` command-line tool.

pub mod config;
pub mod fixture;
pub mod formats;
pub mod images;
pub mod llm;
pub mod pipeline;
pub mod service;
pub mod site;

pub use webvln_core as core;
