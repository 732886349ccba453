//! Sample sets for residual scans.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "bounds have {} lower and {} upper entries",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidArgument("bounds need finite lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Tensor-product lattice with `counts[i]` equally spaced points per axis,
/// endpoints included. Ordered with the last axis varying fastest.
pub fn lattice(bounds: &Bounds, counts: &[usize]) -> Result<Vec<DVector<f64>>> {
    if counts.len() != bounds.dim() || counts.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "lattice needs {} positive counts, got {counts:?}",
            bounds.dim()
        )));
    }
    let axis = |i: usize, k: usize| {
        if counts[i] == 1 {
            0.5 * (bounds.lo[i] + bounds.hi[i])
        } else {
            bounds.lo[i] + (bounds.hi[i] - bounds.lo[i]) * k as f64 / (counts[i] - 1) as f64
        }
    };
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut index = vec![0usize; counts.len()];
    for _ in 0..total {
        points.push(DVector::from_iterator(
            counts.len(),
            index.iter().enumerate().map(|(i, &k)| axis(i, k)),
        ));
        for i in (0..counts.len()).rev() {
            index[i] += 1;
            if index[i] < counts[i] {
                break;
            }
            index[i] = 0;
        }
    }
    Ok(points)
}

/// `count` uniform points in the box, reproducible from `seed`.
pub fn random_points(bounds: &Bounds, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            DVector::from_iterator(
                bounds.dim(),
                bounds.lo.iter().zip(&bounds.hi).map(|(l, h)| {
                    if l == h {
                        *l
                    } else {
                        rng.random_range(*l..*h)
                    }
                }),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_covers_endpoints() {
        let b = Bounds::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = lattice(&b, &[3, 2]).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].as_slice(), &[-1.0, 0.0]);
        assert_eq!(pts[1].as_slice(), &[-1.0, 2.0]);
        assert_eq!(pts[5].as_slice(), &[1.0, 2.0]);
        assert!(lattice(&b, &[3]).is_err());
        assert!(lattice(&b, &[0, 2]).is_err());
    }

    #[test]
    fn random_points_are_seeded() {
        let b = Bounds::cube(3, -2.0, 2.0).unwrap();
        let a = random_points(&b, 10, 7);
        assert_eq!(a, random_points(&b, 10, 7));
        assert_ne!(a, random_points(&b, 10, 8));
        assert!(a.iter().all(|p| p.iter().all(|v| (-2.0..2.0).contains(v))));
    }

    #[test]
    fn bad_bounds() {
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![1.0], vec![]).is_err());
    }
}
