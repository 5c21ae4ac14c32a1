mod adam;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::*;
pub use gradcheck::*;
pub use loss::*;
pub use trainer::*;
