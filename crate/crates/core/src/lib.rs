//! Block weight clustering for trained neural networks.
//!
//! Weight matrices are cut into `b x b` blocks, the blocks of the whole model
//! are clustered into K shared "legos", and the model is stored as the lego
//! codebook plus one `ceil(log2 K)`-bit index per block.
//!
//! ```no_run
//! use lego::{container, pipeline};
//!
//! let model = container::read_model("model.lgtw")?;
//! let (compressed, report) = pipeline::compress(&model, &pipeline::CompressParams::new(32, 4))?;
//! lego::codec::write_compressed(&compressed, "model.lgnc")?;
//! println!("theoretical CR {}", report.theoretical_cr);
//! # Ok::<(), lego::Error>(())
//! ```

pub mod blocking;
pub mod clustering;
pub mod codec;
pub mod container;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod pipeline;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{model_param_count, ArchManifest, DatasetBundle, LayerSpec, ModelBundle};
pub use tensor::{DType, Role, Tensor};
