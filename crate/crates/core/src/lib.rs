pub mod calendar;
pub mod registry;
pub mod eidas;
pub mod trust;
pub mod eventlog;
pub mod edelivery;
pub mod health;
pub mod scenario;
