//! Image containers and the orthogonal saturation-value transform.
//!
//! Intensities are stored in the nominal range `[0, 1]`; that range is only
//! enforced when images are written to disk or explicitly clamped.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// A single real-valued raster stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("dimensions", "height and width must be at least 1"));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", height * width),
                got: format!("{} samples", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two planes of equal size.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.height, self.width),
                got: format!("{}x{}", other.height, other.width),
            });
        }
        Ok(())
    }
}

/// An RGB image: three planes of identical size.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage<T> {
    planes: [Plane<T>; 3],
}

impl<T: Scalar> ColorImage<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, [T::zero(); 3])
    }

    pub fn filled(height: usize, width: usize, rgb: [T; 3]) -> Self {
        Self {
            planes: rgb.map(|c| Plane::filled(height, width, c)),
        }
    }

    /// Builds an image from three planes, rejecting mismatched sizes and
    /// non-finite samples.
    pub fn from_planes(planes: [Plane<T>; 3]) -> Result<Self> {
        planes[0].check_same_dims(&planes[1])?;
        planes[0].check_same_dims(&planes[2])?;
        if planes[0].height() == 0 || planes[0].width() == 0 {
            return Err(invalid("dimensions", "height and width must be at least 1"));
        }
        if !planes.iter().all(Plane::is_finite) {
            return Err(invalid("samples", "non-finite intensity"));
        }
        Ok(Self { planes })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut planes = [
            Plane::zeros(height, width),
            Plane::zeros(height, width),
            Plane::zeros(height, width),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(y, x);
                for (plane, v) in planes.iter_mut().zip(px) {
                    plane.set(y, x, v);
                }
            }
        }
        Self { planes }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    /// Number of pixels (not samples).
    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.planes[0].len()
    }

    #[inline]
    pub fn planes(&self) -> &[Plane<T>; 3] {
        &self.planes
    }

    #[inline]
    pub fn planes_mut(&mut self) -> &mut [Plane<T>; 3] {
        &mut self.planes
    }

    pub fn into_planes(self) -> [Plane<T>; 3] {
        self.planes
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [T; 3] {
        [
            self.planes[0].get(y, x),
            self.planes[1].get(y, x),
            self.planes[2].get(y, x),
        ]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            planes: [
                self.planes[0].map(&f),
                self.planes[1].map(&f),
                self.planes[2].map(&f),
            ],
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            planes: [
                self.planes[0].zip_map(&other.planes[0], &f),
                self.planes[1].zip_map(&other.planes[1], &f),
                self.planes[2].zip_map(&other.planes[2], &f),
            ],
        }
    }

    /// Euclidean norm over all samples.
    pub fn norm(&self) -> T {
        self.planes.iter().map(|p| p.dot(p)).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(Plane::is_finite)
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        self.planes[0].check_same_dims(&other.planes[0])
    }
}

/// Saturation-value coefficients `(q1, q2, q3) = P * (r, g, b)` per pixel.
///
/// `q1` and `q2` span the saturation plane orthogonal to the gray axis and
/// `q3` is the value coordinate along it.
#[derive(Clone, Debug, PartialEq)]
pub struct SvImage<T> {
    planes: [Plane<T>; 3],
}

impl<T: Scalar> SvImage<T> {
    pub fn from_planes(planes: [Plane<T>; 3]) -> Result<Self> {
        planes[0].check_same_dims(&planes[1])?;
        planes[0].check_same_dims(&planes[2])?;
        Ok(Self { planes })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn saturation(&self) -> (&Plane<T>, &Plane<T>) {
        (&self.planes[0], &self.planes[1])
    }

    pub fn value(&self) -> &Plane<T> {
        &self.planes[2]
    }

    #[inline]
    pub fn planes(&self) -> &[Plane<T>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Plane<T>; 3] {
        self.planes
    }

    #[inline]
    pub fn coefficients(&self, y: usize, x: usize) -> [T; 3] {
        [
            self.planes[0].get(y, x),
            self.planes[1].get(y, x),
            self.planes[2].get(y, x),
        ]
    }
}

/// The fixed orthogonal matrix diagonalizing `C = [[2,-1,-1],[-1,2,-1],[-1,-1,2]]`
/// as `C = P^T diag(3, 3, 0) P`.
#[derive(Clone, Copy, Debug)]
pub struct TransformMatrix;

impl TransformMatrix {
    /// Rows of `P` in `f64`.
    pub fn rows() -> [[f64; 3]; 3] {
        let s2 = std::f64::consts::SQRT_2;
        let s6 = 6f64.sqrt();
        let s3 = 3f64.sqrt();
        [
            [1.0 / s2, -1.0 / s2, 0.0],
            [1.0 / s6, 1.0 / s6, -2.0 / s6],
            [1.0 / s3, 1.0 / s3, 1.0 / s3],
        ]
    }

    pub fn entries<T: Scalar>() -> [[T; 3]; 3] {
        Self::rows().map(|row| row.map(T::of))
    }

    #[inline]
    pub fn apply<T: Scalar>(m: &[[T; 3]; 3], v: [T; 3]) -> [T; 3] {
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    #[inline]
    pub fn apply_transpose<T: Scalar>(m: &[[T; 3]; 3], v: [T; 3]) -> [T; 3] {
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }
}

fn map_pixels<T: Scalar>(planes: &[Plane<T>; 3], f: impl Fn([T; 3]) -> [T; 3]) -> [Plane<T>; 3] {
    let (h, w) = planes[0].dims();
    let mut out = [Plane::zeros(h, w), Plane::zeros(h, w), Plane::zeros(h, w)];
    for i in 0..h * w {
        let px = [
            planes[0].as_slice()[i],
            planes[1].as_slice()[i],
            planes[2].as_slice()[i],
        ];
        let q = f(px);
        for c in 0..3 {
            out[c].as_mut_slice()[i] = q[c];
        }
    }
    out
}

/// Rotates RGB into saturation-value coordinates.
pub fn rgb_to_sv<T: Scalar>(img: &ColorImage<T>) -> SvImage<T> {
    let p = TransformMatrix::entries::<T>();
    SvImage {
        planes: map_pixels(img.planes(), |px| TransformMatrix::apply(&p, px)),
    }
}

/// Inverse of [`rgb_to_sv`]; `P` is orthogonal so this applies `P^T`.
pub fn sv_to_rgb<T: Scalar>(sv: &SvImage<T>) -> ColorImage<T> {
    let p = TransformMatrix::entries::<T>();
    ColorImage {
        planes: map_pixels(sv.planes(), |q| TransformMatrix::apply_transpose(&p, q)),
    }
}

/// Clamps every sample to `[lo, hi]`.
pub fn clamp<T: Scalar>(img: &ColorImage<T>, lo: T, hi: T) -> Result<ColorImage<T>> {
    if !(lo <= hi) {
        return Err(invalid(
            "clamp bounds",
            format!("lo = {lo} exceeds hi = {hi}"),
        ));
    }
    Ok(img.map(|v| v.max(lo).min(hi)))
}
