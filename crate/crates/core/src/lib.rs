//! Core of a self-hosted platform for text conversation studies.

pub mod auth;
pub mod bot;
pub mod clock;
pub mod engine;
pub mod export;
pub mod gateway;
pub mod ids;
pub mod message;
pub mod platform;
pub mod randomizer;
pub mod registry;
pub mod sim;
pub mod survey;
pub mod telemetry;
