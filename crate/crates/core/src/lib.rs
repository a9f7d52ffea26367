pub mod auditor;
pub mod blindsig;
pub mod cli;
pub mod codec;
pub mod credentials;
pub mod scenarios;
pub mod services;
pub mod transcript;
