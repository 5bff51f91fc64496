//! Degradation protocol: blur kernels, periodic convolution, and Gaussian or
//! Poisson noise driven by a seeded ChaCha20 stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::fourier::Fft2;
use crate::image::{ColorImage, Plane};
use crate::scalar::Scalar;

/// A centered convolution kernel with odd dimensions and unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel<T> {
    height: usize,
    width: usize,
    taps: Vec<T>,
}

impl<T: Scalar> BlurKernel<T> {
    pub fn identity() -> Self {
        Self {
            height: 1,
            width: 1,
            taps: vec![T::one()],
        }
    }

    /// Normalizes `taps` (row-major, odd dimensions) to unit sum.
    pub fn from_taps(height: usize, width: usize, taps: Vec<T>) -> Result<Self> {
        if height.is_multiple_of(2) || width.is_multiple_of(2) {
            return Err(invalid(
                "kernel",
                format!("dimensions {height}x{width} must be odd"),
            ));
        }
        if taps.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{} taps", height * width),
                got: format!("{} taps", taps.len()),
            });
        }
        if !taps.iter().all(|t| t.is_finite()) {
            return Err(invalid("kernel", "non-finite tap"));
        }
        let total: T = taps.iter().copied().sum();
        if total.abs() < T::of(1e-12) {
            return Err(invalid("kernel", "taps sum to zero"));
        }
        Ok(Self {
            height,
            width,
            taps: taps.into_iter().map(|t| t / total).collect(),
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    /// Tap at offset `(dy, dx)` from the center.
    pub fn tap(&self, dy: isize, dx: isize) -> T {
        let ry = (self.height / 2) as isize;
        let rx = (self.width / 2) as isize;
        if dy.abs() > ry || dx.abs() > rx {
            return T::zero();
        }
        self.taps[((dy + ry) as usize) * self.width + (dx + rx) as usize]
    }

    pub fn is_identity(&self) -> bool {
        self.height == 1 && self.width == 1
    }

    /// Offsets and values of the nonzero taps.
    fn offsets(&self) -> impl Iterator<Item = (isize, isize, T)> + '_ {
        let ry = (self.height / 2) as isize;
        let rx = (self.width / 2) as isize;
        self.taps.iter().enumerate().filter_map(move |(k, &t)| {
            (t != T::zero()).then(|| {
                let dy = (k / self.width) as isize - ry;
                let dx = (k % self.width) as isize - rx;
                (dy, dx, t)
            })
        })
    }

    fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        if self.height > height || self.width > width {
            return Err(Error::KernelTooLarge {
                kh: self.height,
                kw: self.width,
                height,
                width,
            });
        }
        Ok(())
    }

    /// Frequency response for a `height x width` periodic grid, with the kernel
    /// center placed at the origin.
    pub fn transfer(&self, height: usize, width: usize) -> Result<Vec<Complex<T>>> {
        self.check_fits(height, width)?;
        let mut placed = vec![T::zero(); height * width];
        for (dy, dx, t) in self.offsets() {
            let y = dy.rem_euclid(height as isize) as usize;
            let x = dx.rem_euclid(width as isize) as usize;
            placed[y * width + x] = placed[y * width + x] + t;
        }
        Ok(Fft2::new(height, width).forward_real(&placed))
    }
}

/// Isotropic Gaussian kernel; `radius` defaults to `ceil(3 sigma)`.
pub fn gaussian_kernel<T: Scalar>(sigma: f64, radius: Option<usize>) -> Result<BlurKernel<T>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("{sigma} must be positive")));
    }
    let r = radius.unwrap_or((3.0 * sigma).ceil() as usize) as isize;
    let side = (2 * r + 1) as usize;
    let mut taps = Vec::with_capacity(side * side);
    for y in -r..=r {
        for x in -r..=r {
            taps.push((-((y * y + x * x) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = taps.iter().sum();
    BlurKernel::from_taps(
        side,
        side,
        taps.into_iter().map(|t| T::of(t / total)).collect(),
    )
}

/// Equal-weight line of `length` pixels through the center at `angle_deg`
/// (counter-clockwise from the +x axis, image rows pointing down), rasterized
/// with Bresenham's algorithm.
pub fn motion_kernel<T: Scalar>(length: usize, angle_deg: f64) -> Result<BlurKernel<T>> {
    if length < 1 {
        return Err(invalid("length", "must be at least 1"));
    }
    if !angle_deg.is_finite() {
        return Err(invalid("angle", "must be finite"));
    }
    let theta = angle_deg.to_radians();
    let (dx, dy) = (theta.cos(), -theta.sin());
    let back = ((length - 1) / 2) as f64;
    let fwd = (length - 1) as f64 - back;
    let p0 = ((-back * dx).round() as isize, (-back * dy).round() as isize);
    let p1 = ((fwd * dx).round() as isize, (fwd * dy).round() as isize);
    let points = bresenham(p0, p1);
    let r = points
        .iter()
        .map(|&(x, y)| x.abs().max(y.abs()))
        .max()
        .unwrap_or(0);
    let side = (2 * r + 1) as usize;
    let mut taps = vec![T::zero(); side * side];
    let w = T::one() / T::of_usize(points.len());
    for (x, y) in points {
        taps[((y + r) as usize) * side + (x + r) as usize] = w;
    }
    BlurKernel::from_taps(side, side, taps)
}

fn bresenham((mut x0, mut y0): (isize, isize), (x1, y1): (isize, isize)) -> Vec<(isize, isize)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = vec![(x0, y0)];
    while (x0, y0) != (x1, y1) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
        out.push((x0, y0));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvolutionMethod {
    Spatial,
    Frequency,
}

fn convolve_plane_spatial<T: Scalar>(plane: &Plane<T>, k: &BlurKernel<T>) -> Plane<T> {
    let (h, w) = plane.dims();
    let taps: Vec<_> = k.offsets().collect();
    Plane::from_fn(h, w, |y, x| {
        let mut acc = T::zero();
        for &(dy, dx, t) in &taps {
            let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
            let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
            acc = acc + t * plane.get(sy, sx);
        }
        acc
    })
}

/// Applies a precomputed transfer function (or its conjugate) to one plane.
pub(crate) fn filter_plane<T: Scalar>(
    fft: &Fft2<T>,
    plane: &[T],
    transfer: &[Complex<T>],
    adjoint: bool,
) -> Vec<T> {
    let mut spec = fft.forward_real(plane);
    for (s, &k) in spec.iter_mut().zip(transfer) {
        *s = *s * if adjoint { k.conj() } else { k };
    }
    fft.inverse_real(spec)
}

/// Circular convolution of every channel with `k`.
pub fn convolve_periodic<T: Scalar>(
    img: &ColorImage<T>,
    k: &BlurKernel<T>,
    method: ConvolutionMethod,
) -> Result<ColorImage<T>> {
    let (h, w) = img.dims();
    k.check_fits(h, w)?;
    let planes = match method {
        ConvolutionMethod::Spatial => img.planes().clone().map(|p| convolve_plane_spatial(&p, k)),
        ConvolutionMethod::Frequency => {
            let fft = Fft2::new(h, w);
            let transfer = k.transfer(h, w)?;
            img.planes().clone().map(|p| {
                let data = filter_plane(&fft, p.as_slice(), &transfer, false);
                Plane::from_vec(h, w, data).expect("dimensions preserved")
            })
        }
    };
    Ok(ColorImage::from_planes(planes).expect("convolution of finite data is finite"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

/// Noise model: `level` is the standard deviation (Gaussian) or the scale `d`
/// (Poisson, applied as `Poisson(max(0, I / d^2)) d^2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            level: sigma,
            seed,
        }
    }

    pub fn poisson(d: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            level: d,
            seed,
        }
    }

    fn check(&self, kind: NoiseKind) -> Result<()> {
        if self.kind != kind {
            return Err(invalid(
                "noise kind",
                format!("expected {kind:?}, got {:?}", self.kind),
            ));
        }
        if !(self.level > 0.0 && self.level.is_finite()) {
            return Err(invalid(
                "noise level",
                format!("{} must be positive", self.level),
            ));
        }
        Ok(())
    }
}

/// Samples are drawn channel by channel in row-major order.
fn perturb<T: Scalar>(
    img: &ColorImage<T>,
    seed: u64,
    mut f: impl FnMut(&mut ChaCha20Rng, f64) -> f64,
) -> ColorImage<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let planes = img
        .planes()
        .clone()
        .map(|p| p.map_in_order(|v| T::of(f(&mut rng, v.to_f64_lossy()))));
    ColorImage::from_planes(planes).expect("noise keeps samples finite")
}

impl<T: Scalar> Plane<T> {
    fn map_in_order(mut self, mut f: impl FnMut(T) -> T) -> Self {
        self.as_mut_slice().iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise; no clipping.
pub fn add_gaussian_noise<T: Scalar>(
    img: &ColorImage<T>,
    spec: &NoiseSpec,
) -> Result<ColorImage<T>> {
    spec.check(NoiseKind::Gaussian)?;
    let sigma = spec.level;
    Ok(perturb(img, spec.seed, |rng, v| {
        let z: f64 = rng.sample(StandardNormal);
        v + sigma * z
    }))
}

/// Poisson variate: Knuth's product method below mean 30, rounded normal
/// approximation above.
pub fn sample_poisson(rng: &mut impl Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 30.0 {
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut p: f64 = rng.random();
        while p > limit {
            k += 1;
            p *= rng.random::<f64>();
        }
        k as f64
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

pub fn add_poisson_noise<T: Scalar>(
    img: &ColorImage<T>,
    spec: &NoiseSpec,
) -> Result<ColorImage<T>> {
    spec.check(NoiseKind::Poisson)?;
    let d2 = spec.level * spec.level;
    Ok(perturb(img, spec.seed, |rng, v| {
        sample_poisson(rng, (v / d2).max(0.0)) * d2
    }))
}

/// Dispatches on `spec.kind`.
pub fn add_noise<T: Scalar>(img: &ColorImage<T>, spec: &NoiseSpec) -> Result<ColorImage<T>> {
    match spec.kind {
        NoiseKind::Gaussian => add_gaussian_noise(img, spec),
        NoiseKind::Poisson => add_poisson_noise(img, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(h: usize, w: usize) -> ColorImage<f64> {
        ColorImage::from_fn(h, w, |y, x| {
            let a = ((y * 31 + x * 17) % 23) as f64 / 23.0;
            [a, (a * 7.0).fract(), 1.0 - a]
        })
    }

    #[test]
    fn gaussian_kernel_limits_and_symmetry() {
        let k = gaussian_kernel::<f64>(1e-6, Some(2)).unwrap();
        assert!((k.tap(0, 0) - 1.0).abs() < 1e-12);
        assert!(k.tap(0, 1).abs() < 1e-12);

        let k = gaussian_kernel::<f64>(1.5, Some(4)).unwrap();
        assert_eq!(k.height(), 9);
        for y in -4..=4isize {
            for x in -4..=4isize {
                // 90 degree rotation: (y, x) -> (x, -y)
                assert_eq!(k.tap(y, x), k.tap(x, -y));
            }
        }
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel::<f64>(1.5, None).unwrap().height(), 11);
        assert!(gaussian_kernel::<f64>(0.0, None).is_err());
        assert!(gaussian_kernel::<f64>(-1.0, None).is_err());
    }

    #[test]
    fn gaussian_center_tap_matches_direct_sum() {
        let k = gaussian_kernel::<f64>(1.5, None).unwrap();
        let mut total = 0.0;
        for y in -5i32..=5 {
            for x in -5i32..=5 {
                total += (-((y * y + x * x) as f64) / 4.5).exp();
            }
        }
        assert!((k.tap(0, 0) - 1.0 / total).abs() < 1e-15);
    }

    #[test]
    fn motion_kernels() {
        let k = motion_kernel::<f64>(1, 37.0).unwrap();
        assert!(k.is_identity());

        let k = motion_kernel::<f64>(3, 0.0).unwrap();
        assert_eq!(k.height(), 3);
        for dx in -1..=1 {
            assert!((k.tap(0, dx) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(k.tap(1, 0), 0.0);

        let k = motion_kernel::<f64>(3, 45.0).unwrap();
        assert_eq!(k.height(), 3);
        let third = 1.0 / 3.0;
        assert!((k.tap(0, 0) - third).abs() < 1e-15);
        assert!((k.tap(-1, 1) - third).abs() < 1e-15);
        assert!((k.tap(1, -1) - third).abs() < 1e-15);
        assert_eq!(k.taps().iter().filter(|&&t| t != 0.0).count(), 3);

        let k = motion_kernel::<f64>(5, 30.0).unwrap();
        assert_eq!(k.taps().iter().filter(|&&t| t != 0.0).count(), 5);
        assert!(motion_kernel::<f64>(0, 0.0).is_err());
    }

    #[test]
    fn identity_and_constant_convolution() {
        let img = test_image(6, 5);
        for method in [ConvolutionMethod::Spatial, ConvolutionMethod::Frequency] {
            let out = convolve_periodic(&img, &BlurKernel::identity(), method).unwrap();
            for c in 0..3 {
                for (a, b) in out.planes()[c]
                    .as_slice()
                    .iter()
                    .zip(img.planes()[c].as_slice())
                {
                    assert!((a - b).abs() < 1e-14);
                }
            }
            let flat = ColorImage::filled(6, 5, [0.25, 0.5, 0.75]);
            let k = gaussian_kernel::<f64>(1.0, Some(2)).unwrap();
            let out = convolve_periodic(&flat, &k, method).unwrap();
            for (c, v) in [0.25, 0.5, 0.75].into_iter().enumerate() {
                assert!(out.planes()[c]
                    .as_slice()
                    .iter()
                    .all(|&s| (s - v).abs() < 1e-14));
            }
        }
    }

    #[test]
    fn spatial_and_frequency_agree() {
        let img = test_image(8, 8);
        let k = BlurKernel::from_taps(3, 3, vec![0.0, 1.0, 2.0, 0.5, 3.0, 0.25, 1.0, 0.0, 0.7])
            .unwrap();
        let a = convolve_periodic(&img, &k, ConvolutionMethod::Spatial).unwrap();
        let b = convolve_periodic(&img, &k, ConvolutionMethod::Frequency).unwrap();
        for c in 0..3 {
            for (x, y) in a.planes()[c]
                .as_slice()
                .iter()
                .zip(b.planes()[c].as_slice())
            {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_too_large() {
        let img = test_image(4, 4);
        let k = gaussian_kernel::<f64>(1.5, None).unwrap();
        assert!(matches!(
            convolve_periodic(&img, &k, ConvolutionMethod::Spatial),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn gaussian_noise_statistics() {
        let sigma = 30.0 / 255.0;
        let img = ColorImage::filled(256, 256, [0.5, 0.5, 0.5]);
        let out = add_gaussian_noise(&img, &NoiseSpec::gaussian(sigma, 42)).unwrap();
        let samples: Vec<f64> = out
            .planes()
            .iter()
            .flat_map(|p| p.as_slice().to_vec())
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - sigma).abs() / sigma < 0.03, "std {std}");

        let again = add_gaussian_noise(&img, &NoiseSpec::gaussian(sigma, 42)).unwrap();
        assert_eq!(out, again);

        let tiny = add_gaussian_noise(&img, &NoiseSpec::gaussian(1e-12, 1)).unwrap();
        assert!(tiny.planes()[0]
            .as_slice()
            .iter()
            .all(|v| (v - 0.5).abs() < 1e-10));
        assert!(add_gaussian_noise(&img, &NoiseSpec::poisson(0.3, 1)).is_err());
    }

    #[test]
    fn poisson_noise_properties() {
        let zero = ColorImage::<f64>::zeros(16, 16);
        let out = add_poisson_noise(&zero, &NoiseSpec::poisson(0.3, 9)).unwrap();
        assert_eq!(out, zero);

        let d = 0.3;
        let img = ColorImage::filled(256, 256, [0.5, 0.5, 0.5]);
        let out = add_poisson_noise(&img, &NoiseSpec::poisson(d, 5)).unwrap();
        let samples: Vec<f64> = out
            .planes()
            .iter()
            .flat_map(|p| p.as_slice().to_vec())
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((mean - 0.5).abs() / 0.5 < 0.03, "mean {mean}");
        for v in samples {
            let k = v / (d * d);
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert!(add_poisson_noise(&img, &NoiseSpec::gaussian(0.1, 1)).is_err());
        assert!(add_poisson_noise(&img, &NoiseSpec::poisson(0.0, 1)).is_err());
    }

    #[test]
    fn poisson_sampler_large_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = 20000;
        let mean = (0..n).map(|_| sample_poisson(&mut rng, 100.0)).sum::<f64>() / n as f64;
        assert!((mean - 100.0).abs() < 0.5);
    }
}
