//! One function per subcommand.

mod dataset;
mod eval;
mod info;
mod reconstruct;
mod train;

pub use dataset::{distort, distorted_name, make_dataset};
pub use eval::{eval, write_report, EVAL_HEADER};
pub use info::info;
pub use reconstruct::{reconstruct, ReconMethod};
pub use train::{train, TrainArgs};
