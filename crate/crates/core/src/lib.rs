//! Color image restoration with saturation-value similarity nonlocal total
//! variation (SVS-NLTV).
//!
//! The crate covers the whole pipeline: RGB rasters and the orthogonal
//! saturation-value transform ([`image`]), patch-similarity graphs with the
//! nonlocal gradient/divergence/Laplacian ([`graph`]), blur and noise models
//! ([`degradation`]), the regularizers and objectives ([`regularizer`]), the
//! Bregmanized operator-splitting solver for L2 and L1 fidelity ([`solver`])
//! and the quality metrics ([`metrics`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64`/`*F32` aliases below fix the precision.
//!
//! ```
//! use svsnltv::{build_graph, solve, BlurKernel, ColorImage, Fidelity, GraphSet, PatchParams, SolverConfig};
//!
//! let f = ColorImage::<f64>::from_fn(16, 16, |y, x| {
//!     let v = if x < 8 { 0.2 } else { 0.7 };
//!     [v, 0.5, 1.0 - v + 0.01 * y as f64]
//! });
//! let graph = build_graph(&f, &PatchParams::default()).unwrap();
//! let cfg = SolverConfig { alpha: 0.05, outer_max: 20, ..SolverConfig::default() };
//! let out = solve(&f, &BlurKernel::identity(), GraphSet::SaturationValue(&graph), &cfg, Fidelity::L2).unwrap();
//! assert_eq!(out.restored.dims(), (16, 16));
//! ```

pub mod degradation;
pub mod error;
pub mod fourier;
pub mod graph;
pub mod image;
pub mod io;
pub mod metrics;
pub mod regularizer;
pub mod scalar;
pub mod solver;

pub use degradation::{
    add_gaussian_noise, add_noise, add_poisson_noise, convolve_periodic, gaussian_kernel,
    motion_kernel, BlurKernel, ConvolutionMethod, NoiseKind, NoiseSpec,
};
pub use error::{Error, Result};
pub use graph::{
    build_channel_graphs, build_graph, read_graph, write_graph, Channel, EdgeField, NonlocalGraph,
    PatchParams,
};
pub use image::{clamp, rgb_to_sv, sv_to_rgb, ColorImage, Plane, SvImage, TransformMatrix};
pub use io::{load_image, save_image, RasterFormat};
pub use metrics::{evaluate, psnr, qssim, scielab_count, ssim, MetricsReport};
pub use regularizer::{
    fidelity_term, nltv, objective, objective_with, svs_nltv, svs_nltv_qform, Fidelity, RegWeights,
    Regularizer,
};
pub use scalar::Scalar;
pub use solver::{
    estimate_spectral_norm, p_update_l1, p_update_l2, shrink, solve, u_subproblem, w_update,
    BlurOperator, GraphSet, RestoreResult, Reweight, SolverConfig, SolverState, SplitVariables,
};

pub type ColorImageF64 = ColorImage<f64>;
pub type ColorImageF32 = ColorImage<f32>;
pub type PlaneF64 = Plane<f64>;
pub type PlaneF32 = Plane<f32>;
pub type SvImageF64 = SvImage<f64>;
pub type SvImageF32 = SvImage<f32>;
pub type NonlocalGraphF64 = NonlocalGraph<f64>;
pub type NonlocalGraphF32 = NonlocalGraph<f32>;
pub type BlurKernelF64 = BlurKernel<f64>;
pub type BlurKernelF32 = BlurKernel<f32>;
pub type RestoreResultF64 = RestoreResult<f64>;
pub type RestoreResultF32 = RestoreResult<f32>;
