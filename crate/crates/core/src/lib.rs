//! Generalization bounds for bias-free ReLU networks from noise resilience
//! of their hidden layers and interlayer Jacobians on the training data.
//!
//! Start at [`bounds::bound_report`]; the guide in `book/` walks through the
//! pieces.

pub mod analysis;
pub mod bounds;
pub mod data;
pub mod error;
pub mod linalg;
pub mod network;
pub mod perturb;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Networks, "networks.md");
    chapter!(Properties, "properties.md");
    chapter!(Sigma, "sigma.md");
    chapter!(Bounds, "bounds.md");
    chapter!(Perturbation, "perturbation.md");
    chapter!(Data, "data.md");
    chapter!(Cli, "cli.md");
}
