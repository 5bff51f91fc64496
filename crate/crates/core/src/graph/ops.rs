//! Nonlocal gradient, divergence, Laplacian and inner product.
//!
//! With `<u, v>` the plain sum over pixels and `<p, r>` the sum over directed
//! edges, these satisfy `<grad u, p> = -<u, div p>`, `div grad = laplacian`
//! and `sum_i (div p)(i) = 0` exactly in exact arithmetic.

use super::{Channel, NonlocalGraph};
use crate::error::{Error, Result};
use crate::image::Plane;
use crate::scalar::Scalar;

/// One real value per directed edge, in the graph's edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeField<T> {
    values: Vec<T>,
}

impl<T: Scalar> EdgeField<T> {
    pub fn zeros(graph: &NonlocalGraph<T>) -> Self {
        Self {
            values: vec![T::zero(); graph.edge_count()],
        }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Self { values }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Sum over edges of the pointwise product.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.len() != other.len() {
            return Err(support_mismatch(self.len(), other.len()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// Sum over edges of absolute values.
    pub fn l1_norm(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

fn support_mismatch(expected: usize, got: usize) -> Error {
    Error::DimensionMismatch {
        expected: format!("field over {expected} edges"),
        got: format!("field over {got} edges"),
    }
}

/// Inner product of pair-valued fields: components summed.
pub fn inner_pair<T: Scalar>(a: &[EdgeField<T>; 2], b: &[EdgeField<T>; 2]) -> Result<T> {
    Ok(a[0].inner(&b[0])? + a[1].inner(&b[1])?)
}

impl<T: Scalar> NonlocalGraph<T> {
    /// `(grad x)(i, j) = (x(j) - x(i)) sqrt(w(i, j))`.
    pub fn gradient(&self, x: &Plane<T>, channel: Channel) -> Result<EdgeField<T>> {
        self.check_dims(x.height(), x.width())?;
        let mut out = EdgeField::zeros(self);
        self.gradient_into(x.as_slice(), channel, out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, x: &[T], channel: Channel, out: &mut [T]) {
        let sw = self.sqrt_weights(channel);
        for i in 0..self.pixel_count() {
            let xi = x[i];
            for e in self.row(i) {
                out[e] = (x[self.target(e)] - xi) * sw[e];
            }
        }
    }

    /// `(div p)(i) = sum_j (p(i, j) - p(j, i)) sqrt(w(i, j))`.
    pub fn divergence(&self, p: &EdgeField<T>, channel: Channel) -> Result<Plane<T>> {
        if p.len() != self.edge_count() {
            return Err(support_mismatch(self.edge_count(), p.len()));
        }
        let mut out = Plane::zeros(self.height, self.width);
        self.divergence_into(p.as_slice(), channel, out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn divergence_into(&self, p: &[T], channel: Channel, out: &mut [T]) {
        let sw = self.sqrt_weights(channel);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for e in self.row(i) {
                acc = acc + (p[e] - p[self.reverse(e)]) * sw[e];
            }
            *o = acc;
        }
    }

    /// `(lap x)(i) = 2 sum_j (x(j) - x(i)) w(i, j)`.
    pub fn laplacian(&self, x: &Plane<T>, channel: Channel) -> Result<Plane<T>> {
        self.check_dims(x.height(), x.width())?;
        let w = self.weights(channel);
        let two = T::of(2.0);
        let xs = x.as_slice();
        let data = (0..self.pixel_count())
            .map(|i| {
                let acc: T = self
                    .row(i)
                    .map(|e| (xs[self.target(e)] - xs[i]) * w[e])
                    .sum();
                two * acc
            })
            .collect();
        Plane::from_vec(self.height, self.width, data)
    }

    /// Gradient of a pair of rasters sharing one weight set.
    pub fn gradient_pair(
        &self,
        x: (&Plane<T>, &Plane<T>),
        channel: Channel,
    ) -> Result<[EdgeField<T>; 2]> {
        Ok([self.gradient(x.0, channel)?, self.gradient(x.1, channel)?])
    }

    pub fn divergence_pair(
        &self,
        p: &[EdgeField<T>; 2],
        channel: Channel,
    ) -> Result<[Plane<T>; 2]> {
        Ok([
            self.divergence(&p[0], channel)?,
            self.divergence(&p[1], channel)?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pixel() -> NonlocalGraph<f64> {
        NonlocalGraph::from_edges(1, 2, [(0, 1, 1.0, 1.0)]).unwrap()
    }

    #[test]
    fn two_pixel_gradient_and_laplacian() {
        let g = two_pixel();
        let u = Plane::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let grad = g.gradient(&u, Channel::Value).unwrap();
        assert_eq!(grad.as_slice(), &[1.0, -1.0]);
        let lap = g.laplacian(&u, Channel::Value).unwrap();
        assert_eq!(lap.as_slice(), &[2.0, -2.0]);
    }

    #[test]
    fn constant_raster_has_zero_gradient() {
        let g =
            NonlocalGraph::from_edges(2, 2, [(0, 1, 0.3, 0.7), (0, 3, 0.9, 0.1), (1, 2, 1.0, 1.0)])
                .unwrap();
        let u = Plane::filled(2, 2, 0.42);
        for ch in [Channel::Saturation, Channel::Value] {
            assert!(g
                .gradient(&u, ch)
                .unwrap()
                .as_slice()
                .iter()
                .all(|&v| v == 0.0));
            assert!(g
                .laplacian(&u, ch)
                .unwrap()
                .as_slice()
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn symmetric_field_has_zero_divergence() {
        let g =
            NonlocalGraph::from_edges(2, 2, [(0, 1, 0.3, 0.7), (0, 3, 0.9, 0.1), (1, 2, 1.0, 1.0)])
                .unwrap();
        let mut p = EdgeField::zeros(&g);
        for i in 0..g.pixel_count() {
            for e in g.row(i) {
                let j = g.target(e);
                p.as_mut_slice()[e] = (i.min(j) * 10 + i.max(j)) as f64;
            }
        }
        let d = g.divergence(&p, Channel::Saturation).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
        let zero = EdgeField::<f64>::zeros(&g);
        assert!(g
            .divergence(&zero, Channel::Value)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn inner_product_basics() {
        let a = EdgeField::from_vec(vec![1.0, 0.0, 2.0]);
        let b = EdgeField::from_vec(vec![0.0, 5.0, 0.0]);
        assert_eq!(a.inner(&b).unwrap(), 0.0);
        assert_eq!(a.inner(&a).unwrap(), 5.0);
        let z = EdgeField::from_vec(vec![0.0; 3]);
        assert_eq!(z.inner(&z).unwrap(), 0.0);
        assert!(a.inner(&EdgeField::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn dimension_checks() {
        let g = two_pixel();
        let wrong = Plane::<f64>::zeros(2, 2);
        assert!(g.gradient(&wrong, Channel::Value).is_err());
        assert!(g.laplacian(&wrong, Channel::Value).is_err());
        assert!(g
            .divergence(&EdgeField::from_vec(vec![0.0; 3]), Channel::Value)
            .is_err());
    }
}
