pub mod catalog;
pub mod config;
pub mod executor;
pub mod ingest;
pub mod llm;
pub mod matcher;
pub mod pysyntax;
pub mod recognizer;
pub mod store;
pub mod synthesizer;
