pub mod scenario;
pub mod tracker;
pub mod world;
pub mod mission;
