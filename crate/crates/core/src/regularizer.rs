//! Regularization functionals and full restoration objectives.
//!
//! All functionals use the anisotropic discretization: absolute values are
//! summed over every directed edge and, for the saturation pair, over both
//! components.

use crate::degradation::{convolve_periodic, BlurKernel, ConvolutionMethod};
use crate::error::{invalid, Result};
use crate::graph::{Channel, NonlocalGraph};
use crate::image::{rgb_to_sv, ColorImage};
use crate::scalar::Scalar;

/// Data fidelity of the restoration model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fidelity {
    /// `1/2 ||K u - f||_2^2`
    L2,
    /// `1/2 ||K u - f||_1`
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegWeights<T> {
    /// Weight of the value term relative to the saturation term.
    pub mu: T,
    /// Overall regularization strength.
    pub alpha: T,
}

impl<T: Scalar> RegWeights<T> {
    pub fn new(mu: T, alpha: T) -> Result<Self> {
        if !(mu >= T::zero()) {
            return Err(invalid("mu", format!("{mu} must be nonnegative")));
        }
        if !(alpha > T::zero()) {
            return Err(invalid("alpha", format!("{alpha} must be positive")));
        }
        Ok(Self { mu, alpha })
    }
}

/// The regularizer a solve uses, borrowing its prebuilt graphs.
#[derive(Clone, Copy, Debug)]
pub enum Regularizer<'g, T> {
    /// Saturation-value similarity NLTV: one graph carrying `w_s` and `w_v`.
    SvsNltv { graph: &'g NonlocalGraph<T>, mu: T },
    /// Per-channel NLTV baseline: one grayscale graph per RGB channel.
    Nltv { graphs: &'g [NonlocalGraph<T>; 3] },
}

impl<T: Scalar> Regularizer<'_, T> {
    pub fn value(&self, u: &ColorImage<T>) -> Result<T> {
        match *self {
            Regularizer::SvsNltv { graph, mu } => svs_nltv(u, graph, mu),
            Regularizer::Nltv { graphs } => nltv(u, graphs),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Regularizer::SvsNltv { graph, .. } => (graph.height(), graph.width()),
            Regularizer::Nltv { graphs } => (graphs[0].height(), graphs[0].width()),
        }
    }
}

/// SVS-NLTV evaluated directly from RGB differences on each edge.
pub fn svs_nltv<T: Scalar>(u: &ColorImage<T>, g: &NonlocalGraph<T>, mu: T) -> Result<T> {
    g.check_dims(u.height(), u.width())?;
    let [r, gr, b] = u.planes();
    let (r, gr, b) = (r.as_slice(), gr.as_slice(), b.as_slice());
    let inv2 = T::one() / T::of(2.0).sqrt();
    let inv6 = T::one() / T::of(6.0).sqrt();
    let inv3 = T::one() / T::of(3.0).sqrt();
    let two = T::of(2.0);
    let sws = g.sqrt_weights(Channel::Saturation);
    let swv = g.sqrt_weights(Channel::Value);
    let mut sat = T::zero();
    let mut val = T::zero();
    for i in 0..g.pixel_count() {
        for e in g.row(i) {
            let j = g.target(e);
            let (dr, dg, db) = (r[j] - r[i], gr[j] - gr[i], b[j] - b[i]);
            let s1 = (dr - dg) * inv2;
            let s2 = (dr + dg - two * db) * inv6;
            let v = (dr + dg + db) * inv3;
            sat = sat + (s1.abs() + s2.abs()) * sws[e];
            val = val + v.abs() * swv[e];
        }
    }
    Ok(sat + mu * val)
}

/// SVS-NLTV evaluated through the rotated coefficients `q = P u` and the
/// graph gradient operators.
pub fn svs_nltv_qform<T: Scalar>(u: &ColorImage<T>, g: &NonlocalGraph<T>, mu: T) -> Result<T> {
    let sv = rgb_to_sv(u);
    let [q1, q2, q3] = sv.planes();
    let [g1, g2] = g.gradient_pair((q1, q2), Channel::Saturation)?;
    let g3 = g.gradient(q3, Channel::Value)?;
    Ok(g1.l1_norm() + g2.l1_norm() + mu * g3.l1_norm())
}

/// Channel-by-channel NLTV with per-channel weights.
pub fn nltv<T: Scalar>(u: &ColorImage<T>, graphs: &[NonlocalGraph<T>; 3]) -> Result<T> {
    let mut total = T::zero();
    for (plane, g) in u.planes().iter().zip(graphs) {
        total = total + g.gradient(plane, Channel::Value)?.l1_norm();
    }
    Ok(total)
}

/// Fidelity term `1/2 ||K u - f||` in the chosen norm.
pub fn fidelity_term<T: Scalar>(
    u: &ColorImage<T>,
    f: &ColorImage<T>,
    kernel: &BlurKernel<T>,
    fidelity: Fidelity,
) -> Result<T> {
    u.check_same_dims(f)?;
    let ku = if kernel.is_identity() {
        u.clone()
    } else {
        convolve_periodic(u, kernel, ConvolutionMethod::Frequency)?
    };
    let half = T::of(0.5);
    let mut acc = T::zero();
    for (a, b) in ku.planes().iter().zip(f.planes()) {
        for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
            let r = x - y;
            acc = acc
                + match fidelity {
                    Fidelity::L2 => r * r,
                    Fidelity::L1 => r.abs(),
                };
        }
    }
    Ok(half * acc)
}

/// `alpha * SVS-NLTV(u) + fidelity`.
pub fn objective<T: Scalar>(
    u: &ColorImage<T>,
    f: &ColorImage<T>,
    kernel: &BlurKernel<T>,
    g: &NonlocalGraph<T>,
    weights: RegWeights<T>,
    fidelity: Fidelity,
) -> Result<T> {
    objective_with(
        u,
        f,
        kernel,
        &Regularizer::SvsNltv {
            graph: g,
            mu: weights.mu,
        },
        weights.alpha,
        fidelity,
    )
}

/// Objective for an arbitrary regularizer.
pub fn objective_with<T: Scalar>(
    u: &ColorImage<T>,
    f: &ColorImage<T>,
    kernel: &BlurKernel<T>,
    reg: &Regularizer<'_, T>,
    alpha: T,
    fidelity: Fidelity,
) -> Result<T> {
    Ok(alpha * reg.value(u)? + fidelity_term(u, f, kernel, fidelity)?)
}
