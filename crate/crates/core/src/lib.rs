pub mod attack;
pub mod cli;
pub mod codec;
pub mod fs;
pub mod maxrate;
pub mod sim;
