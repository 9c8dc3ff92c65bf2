pub mod cli;
pub mod cp;
pub mod dispatch;
pub mod sim;
pub mod system;
pub mod workload;
