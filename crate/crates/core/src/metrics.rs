//! Full-reference quality metrics: PSNR, SSIM, QSSIM and the S-CIELAB
//! exceedance count.
//!
//! All metrics work on the `[0, 1]` scale and accumulate in `f64` whatever the
//! image scalar type.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::mirror;
use crate::image::ColorImage;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SCIELAB_THRESHOLD: f64 = 15.0;
pub const SCIELAB_SAMPLES_PER_DEGREE: f64 = 23.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub qssim: f64,
    pub scielab_count: usize,
}

/// All four metrics with default S-CIELAB viewing conditions.
pub fn evaluate<T: Scalar>(a: &ColorImage<T>, b: &ColorImage<T>) -> Result<MetricsReport> {
    Ok(MetricsReport {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        qssim: qssim(a, b)?,
        scielab_count: scielab_count(a, b, SCIELAB_THRESHOLD)?,
    })
}

fn channels<T: Scalar>(img: &ColorImage<T>) -> [Vec<f64>; 3] {
    let p = img.planes();
    [0, 1, 2].map(|c| p[c].as_slice().iter().map(|v| v.to_f64_lossy()).collect())
}

/// `10 log10(1 / MSE)` with peak 1; infinite when the images agree exactly.
pub fn psnr<T: Scalar>(a: &ColorImage<T>, b: &ColorImage<T>) -> Result<f64> {
    a.check_same_dims(b)?;
    let mut sse = 0.0;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        for (&x, &y) in pa.as_slice().iter().zip(pb.as_slice()) {
            let d = (x - y).to_f64_lossy();
            sse += d * d;
        }
    }
    let mse = sse / (3 * a.pixel_count()) as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|k| {
            let x = k as f64 - c;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over fully-inside window positions only.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            let base = y * w + ox;
            rows[y * ow + ox] = taps.iter().enumerate().map(|(t, c)| c * x[base + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = taps
                .iter()
                .enumerate()
                .map(|(t, c)| c * rows[(oy + t) * ow + ox])
                .sum();
        }
    }
    out
}

fn check_window<T: Scalar>(a: &ColorImage<T>, b: &ColorImage<T>) -> Result<()> {
    a.check_same_dims(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: a.height(),
            width: a.width(),
            min: SSIM_WINDOW,
        });
    }
    Ok(())
}

fn constants() -> (f64, f64) {
    ((SSIM_K1 * SSIM_K1), (SSIM_K2 * SSIM_K2))
}

/// Mean SSIM map of one pair of gray rasters.
fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> Vec<f64> {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = constants();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let exx = filter_valid(&prod(x, x), h, w, &taps);
    let eyy = filter_valid(&prod(y, y), h, w, &taps);
    let exy = filter_valid(&prod(x, y), h, w, &taps);
    (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let sxx = exx[i] - a * a;
            let syy = eyy[i] - b * b;
            let sxy = exy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * sxy + c2)) / ((a * a + b * b + c1) * (sxx + syy + c2))
        })
        .collect()
}

/// SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels
/// and window positions.
pub fn ssim<T: Scalar>(a: &ColorImage<T>, b: &ColorImage<T>) -> Result<f64> {
    check_window(a, b)?;
    let (h, w) = a.dims();
    let (ca, cb) = (channels(a), channels(b));
    let maps: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|c| ssim_plane(&ca[c], &cb[c], h, w))
        .collect();
    let count = maps[0].len();
    let total: f64 = (0..count)
        .map(|i| (maps[0][i] + maps[1][i] + maps[2][i]) / 3.0)
        .sum();
    Ok(total / count as f64)
}

/// SSIM of a single gray raster pair given as row-major slices.
pub fn ssim_gray(x: &[f64], y: &[f64], height: usize, width: usize) -> Result<f64> {
    if x.len() != height * width || y.len() != height * width {
        return Err(invalid("raster", "slice length does not match dimensions"));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height,
            width,
            min: SSIM_WINDOW,
        });
    }
    let map = ssim_plane(x, y, height, width);
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Sum of squares of a 3-vector, grouped so that exchanging the first and
/// last components gives a bit-identical result.
#[inline]
fn sq3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[2] * v[2]) + v[1] * v[1]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] * b[0] + a[2] * b[2]) + a[1] * b[1]
}

#[inline]
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Quaternion SSIM. Pixels are the pure quaternions `(r i + g j + b k)/sqrt(3)`
/// so a gray pixel of level `x` has modulus `|x|`.
///
/// The cross-covariance `E[(a - mu_a)(b - mu_b)^*]` is a full quaternion; the
/// structure term is the modulus of `(2 sigma_ab + C2) / (sigma_a^2 +
/// sigma_b^2 + C2)`, signed by its real part so anticorrelated pairs score
/// negative as in scalar SSIM.
pub fn qssim<T: Scalar>(a: &ColorImage<T>, b: &ColorImage<T>) -> Result<f64> {
    check_window(a, b)?;
    let (h, w) = a.dims();
    let s = 1.0 / 3f64.sqrt();
    let (ca, cb) = (channels(a), channels(b));
    let n = h * w;
    let px = |ch: &[Vec<f64>; 3], i: usize| [ch[0][i] * s, ch[1][i] * s, ch[2][i] * s];

    // Fields to average: mean components, squared moduli, dot and cross.
    let mut fields: Vec<Vec<f64>> = vec![vec![0.0; n]; 12];
    for i in 0..n {
        let (qa, qb) = (px(&ca, i), px(&cb, i));
        let cr = cross3(qa, qb);
        let vals = [
            qa[0],
            qa[1],
            qa[2],
            qb[0],
            qb[1],
            qb[2],
            sq3(qa),
            sq3(qb),
            dot3(qa, qb),
            cr[0],
            cr[1],
            cr[2],
        ];
        for (f, v) in fields.iter_mut().zip(vals) {
            f[i] = v;
        }
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let m: Vec<Vec<f64>> = fields
        .par_iter()
        .map(|f| filter_valid(f, h, w, &taps))
        .collect();
    let (c1, c2) = constants();
    let count = m[0].len();
    let total: f64 = (0..count)
        .map(|i| {
            let mu_a = [m[0][i], m[1][i], m[2][i]];
            let mu_b = [m[3][i], m[4][i], m[5][i]];
            let na = sq3(mu_a).sqrt();
            let nb = sq3(mu_b).sqrt();
            let lum = (2.0 * na * nb + c1) / (na * na + nb * nb + c1);
            let var_a = m[6][i] - sq3(mu_a);
            let var_b = m[7][i] - sq3(mu_b);
            let cov_re = m[8][i] - dot3(mu_a, mu_b);
            let mc = cross3(mu_a, mu_b);
            let cov_im = [m[9][i] - mc[0], m[10][i] - mc[1], m[11][i] - mc[2]];
            let re = 2.0 * cov_re + c2;
            let modulus = (re * re + 4.0 * sq3(cov_im)).sqrt();
            let structure = modulus.copysign(re) / (var_a + var_b + c2);
            lum * structure
        })
        .sum();
    Ok(total / count as f64)
}

/// D65 linear sRGB to XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// XYZ to the opponent space (luminance, red-green, blue-yellow).
const XYZ_TO_OPP: [[f64; 3]; 3] = [
    [0.279, 0.72, -0.107],
    [-0.449, 0.29, -0.077],
    [0.086, -0.59, 0.501],
];

/// Weights and spreads (degrees) of the Gaussian sums filtering each
/// opponent channel.
const OPP_FILTERS: [&[(f64, f64)]; 3] = [
    &[(1.00327, 0.05), (0.114416, 0.225), (-0.117686, 7.0)],
    &[(0.616725, 0.0685), (0.383275, 0.826)],
    &[(0.567885, 0.0920), (0.432115, 0.6451)],
];

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c(k, r) / det;
        }
    }
    inv
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// CIELAB of an XYZ triple relative to the white of sRGB `(1, 1, 1)`.
pub fn xyz_to_lab(xyz: [f64; 3]) -> [f64; 3] {
    let white = mat_vec(&RGB_TO_XYZ, [1.0; 3]);
    let f = [0, 1, 2].map(|c| lab_f(xyz[c] / white[c]));
    [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ]
}

/// XYZ of a gamma-encoded sRGB triple.
pub fn srgb_to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    mat_vec(&RGB_TO_XYZ, rgb.map(srgb_to_linear))
}

/// One-dimensional taps of a Gaussian sum, each term normalized to unit sum.
fn opponent_taps(terms: &[(f64, f64)], samples_per_degree: f64) -> Vec<f64> {
    let half = (samples_per_degree / 2.0).ceil() as usize;
    let len = 2 * half - 1;
    let c = (len / 2) as f64;
    let mut total = vec![0.0; len];
    for &(weight, spread) in terms {
        let s = spread * samples_per_degree;
        let g: Vec<f64> = (0..len)
            .map(|k| {
                let x = k as f64 - c;
                (-(x * x) / (s * s)).exp()
            })
            .collect();
        let norm: f64 = g.iter().sum();
        for (t, v) in total.iter_mut().zip(g) {
            *t += weight * v / norm;
        }
    }
    total
}

/// Applies `sum_k w_k (g_k x g_k)` as a sum of separable passes, with mirror
/// boundary extension.
fn filter_opponent(x: &[f64], h: usize, w: usize, terms: &[(f64, f64)], spd: f64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for &(weight, spread) in terms {
        let taps = opponent_taps(&[(1.0, spread)], spd);
        let r = (taps.len() / 2) as isize;
        let mut rows = vec![0.0; h * w];
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for (t, c) in taps.iter().enumerate() {
                    let k = mirror(xx as isize + t as isize - r, w);
                    acc += c * x[y * w + k];
                }
                rows[y * w + xx] = acc;
            }
        }
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for (t, c) in taps.iter().enumerate() {
                    let k = mirror(y as isize + t as isize - r, h);
                    acc += c * rows[k * w + xx];
                }
                out[y * w + xx] += weight * acc;
            }
        }
    }
    out
}

/// Spatially filtered CIELAB of an sRGB image.
fn scielab<T: Scalar>(img: &ColorImage<T>, spd: f64) -> Vec<[f64; 3]> {
    let (h, w) = img.dims();
    let ch = channels(img);
    let n = h * w;
    let mut opp = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let o = mat_vec(&XYZ_TO_OPP, srgb_to_xyz([ch[0][i], ch[1][i], ch[2][i]]));
        for c in 0..3 {
            opp[c][i] = o[c];
        }
    }
    let filtered: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|c| filter_opponent(&opp[c], h, w, OPP_FILTERS[c], spd))
        .collect();
    let back = invert3(&XYZ_TO_OPP);
    (0..n)
        .map(|i| {
            xyz_to_lab(mat_vec(
                &back,
                [filtered[0][i], filtered[1][i], filtered[2][i]],
            ))
        })
        .collect()
}

/// Per-pixel S-CIELAB `Delta E*ab`, row-major.
pub fn scielab_delta_e<T: Scalar>(
    a: &ColorImage<T>,
    b: &ColorImage<T>,
    samples_per_degree: f64,
) -> Result<Vec<f64>> {
    a.check_same_dims(b)?;
    if !(samples_per_degree >= 1.0 && samples_per_degree.is_finite()) {
        return Err(invalid(
            "samples_per_degree",
            format!("{samples_per_degree} must be a finite value of at least 1"),
        ));
    }
    let (la, lb) = (
        scielab(a, samples_per_degree),
        scielab(b, samples_per_degree),
    );
    Ok(la
        .iter()
        .zip(&lb)
        .map(|(p, q)| {
            let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect())
}

/// Number of pixels whose S-CIELAB difference exceeds `threshold`, at the
/// default 23 samples per degree.
pub fn scielab_count<T: Scalar>(
    a: &ColorImage<T>,
    b: &ColorImage<T>,
    threshold: f64,
) -> Result<usize> {
    scielab_count_with(a, b, threshold, SCIELAB_SAMPLES_PER_DEGREE)
}

pub fn scielab_count_with<T: Scalar>(
    a: &ColorImage<T>,
    b: &ColorImage<T>,
    threshold: f64,
    samples_per_degree: f64,
) -> Result<usize> {
    if !(threshold >= 0.0) {
        return Err(invalid(
            "threshold",
            format!("{threshold} must be nonnegative"),
        ));
    }
    Ok(scielab_delta_e(a, b, samples_per_degree)?
        .into_iter()
        .filter(|&d| d > threshold)
        .count())
}
