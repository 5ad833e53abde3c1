//! Analytically optimal data augmentations for kernel joint-embedding
//! self-supervised learning.
//!
//! Given training points, a kernel and a target representation, this crate
//! constructs a binary augmentation distribution (identity or a fixed
//! Hilbert-space map `T = Φ M Φᵀ`) under which the least-norm minimizer of
//! VICReg, Barlow Twins or the spectral contrastive loss equals the target up
//! to an invertible affine map. The pieces are:
//!
//! * [`matrixkit`]: dense symmetric linear algebra and the Lyapunov solver.
//! * [`kernels`]: kernel functions and Gram matrices.
//! * [`losses`]: the joint-embedding losses and their analytic gradients.
//! * [`synth`]: representer fit and augmentation-operator construction.
//! * [`preimage`]: closed-form mapping of augmented points back to input space.
//! * [`trainer`]: Adam training of a kernel model under the augmentations.
//! * [`evalkit`]: Procrustes distance, whitening, equivalence checks.
//! * [`dataio`]: matrix files and synthetic data generators.
//! * [`cli`]: the command pipeline behind the `kssl` binary.
//!
//! All matrices are dense `f64` [`nalgebra::DMatrix`] values. Point sets are
//! stored column-wise: column `j` of an `m × n` data matrix is point `x_j`.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evalkit;
pub mod kernels;
pub mod losses;
pub mod matrixkit;
pub mod preimage;
pub mod synth;
pub mod trainer;

pub use dataio::DataMatrix;
pub use error::{Error, Result};
pub use kernels::{GramMatrix, KernelSpec};
pub use losses::{LossKind, VicregWeights};
pub use synth::{AugmentationDistribution, AugmentationOperator, CoefficientMatrix};
