use std::cmp::Ordering;

use rayon::prelude::*;

use super::NonlocalGraph;
use crate::error::{invalid, Error, Result};
use crate::image::{rgb_to_sv, ColorImage, Plane};
use crate::scalar::Scalar;

/// Patch geometry and weight parameters for graph construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchParams {
    /// Patches are `(2 r + 1)^2` pixels.
    pub patch_radius: usize,
    /// Candidates come from a `(2 s + 1)^2` window around each pixel.
    pub search_radius: usize,
    /// Neighbors retained per pixel before symmetrization.
    pub neighbors: usize,
    /// Standard deviation, in pixels, of the Gaussian patch window.
    pub kernel_sigma: f64,
    /// Filtering parameter; tracks the noise level.
    pub h0: f64,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self {
            patch_radius: 2,
            search_radius: 5,
            neighbors: 10,
            kernel_sigma: 1.0,
            h0: 0.1,
        }
    }
}

impl PatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors == 0 {
            return Err(invalid("neighbors", "must be at least 1"));
        }
        let window = (2 * self.search_radius + 1).pow(2) - 1;
        if self.neighbors > window {
            return Err(invalid(
                "neighbors",
                format!(
                    "{} exceeds the {window} candidates of a radius-{} window",
                    self.neighbors, self.search_radius
                ),
            ));
        }
        if !(self.kernel_sigma > 0.0 && self.kernel_sigma.is_finite()) {
            return Err(invalid("kernel_sigma", "must be positive"));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(invalid("h0", "must be positive"));
        }
        Ok(())
    }

    /// Normalized Gaussian patch window, row-major over `(2r+1)^2` offsets.
    pub fn patch_window(&self) -> Vec<f64> {
        let r = self.patch_radius as isize;
        let two_var = 2.0 * self.kernel_sigma * self.kernel_sigma;
        let mut taps = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for ty in -r..=r {
            for tx in -r..=r {
                taps.push((-((ty * ty + tx * tx) as f64) / two_var).exp());
            }
        }
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        taps
    }
}

/// Half-sample symmetric reflection: `-1 -> 0`, `n -> n - 1`.
pub(crate) fn mirror(mut k: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if k < 0 {
            k = -k - 1;
        } else if k >= n {
            k = 2 * n - k - 1;
        } else {
            return k as usize;
        }
    }
}

/// Feature planes padded by `pad` pixels of mirror extension on every side.
struct Padded<T> {
    stride: usize,
    pad: usize,
    planes: Vec<Vec<T>>,
}

impl<T: Scalar> Padded<T> {
    fn new(features: &[&Plane<T>], pad: usize) -> Self {
        let (h, w) = features[0].dims();
        let stride = w + 2 * pad;
        let planes = features
            .iter()
            .map(|p| {
                let mut out = Vec::with_capacity((h + 2 * pad) * stride);
                for y in 0..h + 2 * pad {
                    let sy = mirror(y as isize - pad as isize, h);
                    for x in 0..stride {
                        let sx = mirror(x as isize - pad as isize, w);
                        out.push(p.get(sy, sx));
                    }
                }
                out
            })
            .collect();
        Self {
            stride,
            pad,
            planes,
        }
    }

    /// Gaussian-windowed squared distance between the patches centered at
    /// `(yi, xi)` and `(yj, xj)`, summed over feature planes.
    fn distance(&self, window: &[T], (yi, xi): (usize, usize), (yj, xj): (usize, usize)) -> T {
        let side = 2 * self.pad + 1;
        let mut total = T::zero();
        for plane in &self.planes {
            let mut acc = T::zero();
            for ty in 0..side {
                let ri = (yi + ty) * self.stride + xi;
                let rj = (yj + ty) * self.stride + xj;
                let taps = &window[ty * side..(ty + 1) * side];
                for (tx, &g) in taps.iter().enumerate() {
                    let d = plane[ri + tx] - plane[rj + tx];
                    acc = acc + g * d * d;
                }
            }
            total = total + acc;
        }
        total
    }
}

fn build_from_features<T: Scalar>(
    height: usize,
    width: usize,
    sat: &[&Plane<T>],
    val: &[&Plane<T>],
    params: &PatchParams,
) -> Result<NonlocalGraph<T>> {
    params.validate()?;
    let side = 2 * params.patch_radius + 1;
    if height < side || width < side {
        return Err(Error::ImageTooSmall {
            height,
            width,
            min: side,
        });
    }
    let pad = params.patch_radius;
    let sat = Padded::new(sat, pad);
    let val = Padded::new(val, pad);
    let window: Vec<T> = params.patch_window().into_iter().map(T::of).collect();
    let inv = T::one() / T::of(2.0 * params.h0 * params.h0);
    let s = params.search_radius as isize;
    let keep = params.neighbors;

    let rows: Vec<Vec<(u32, u32, T, T)>> = (0..height)
        .into_par_iter()
        .map(|yi| {
            let mut out = Vec::with_capacity(width * keep);
            let mut cands: Vec<(usize, T, T)> = Vec::new();
            for xi in 0..width {
                let i = yi * width + xi;
                cands.clear();
                let y0 = (yi as isize - s).max(0) as usize;
                let y1 = (yi as isize + s).min(height as isize - 1) as usize;
                let x0 = (xi as isize - s).max(0) as usize;
                let x1 = (xi as isize + s).min(width as isize - 1) as usize;
                for yj in y0..=y1 {
                    for xj in x0..=x1 {
                        let j = yj * width + xj;
                        if j == i {
                            continue;
                        }
                        let ds = sat.distance(&window, (yi, xi), (yj, xj));
                        let dv = val.distance(&window, (yi, xi), (yj, xj));
                        cands.push((j, (-ds * inv).exp(), (-dv * inv).exp()));
                    }
                }
                // Largest combined weight first; ties go to the smaller index.
                cands.sort_by(|a, b| {
                    (b.1 + b.2)
                        .partial_cmp(&(a.1 + a.2))
                        .unwrap_or(Ordering::Equal)
                        .then(a.0.cmp(&b.0))
                });
                for &(j, ws, wv) in cands.iter().take(keep) {
                    // exp underflow would give a zero weight; floor it so every
                    // retained edge stays in (0, 1].
                    let ws = ws.max(T::min_positive_value());
                    let wv = wv.max(T::min_positive_value());
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    out.push((a as u32, b as u32, ws, wv));
                }
            }
            out
        })
        .collect();

    let pairs: Vec<_> = rows.into_iter().flatten().collect();
    NonlocalGraph::from_canonical_pairs(height, width, pairs)
}

/// Builds the saturation/value similarity graph of `f`.
///
/// Saturation weights compare the `(q1, q2)` patches and value weights compare
/// `q3` patches. Each pixel keeps its `neighbors` best candidates by
/// `w_s + w_v`; the pattern is then symmetrized by union.
pub fn build_graph<T: Scalar>(f: &ColorImage<T>, params: &PatchParams) -> Result<NonlocalGraph<T>> {
    let sv = rgb_to_sv(f);
    let [q1, q2, q3] = sv.planes();
    let (h, w) = f.dims();
    build_from_features(h, w, &[q1, q2], &[q3], params)
}

/// Per-channel grayscale graphs for the NLTV baseline; both weight sets of
/// graph `c` are computed from RGB channel `c` alone.
pub fn build_channel_graphs<T: Scalar>(
    f: &ColorImage<T>,
    params: &PatchParams,
) -> Result<[NonlocalGraph<T>; 3]> {
    let (h, w) = f.dims();
    let [r, g, b] = f.planes();
    Ok([
        build_from_features(h, w, &[r], &[r], params)?,
        build_from_features(h, w, &[g], &[g], params)?,
        build_from_features(h, w, &[b], &[b], params)?,
    ])
}
