//! Square QAM alphabets normalized to unit average energy.
//!
//! Each axis carries one of `N_c = sqrt(M)` amplitude levels. Symbol index
//! `i` maps to (real level `i / N_c`, imaginary level `i % N_c`); the bit
//! label is the Gray code of the real level index followed by the Gray code
//! of the imaginary level index.

use num_complex::Complex64;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    levels: Vec<f64>,
}

impl Constellation {
    /// Builds the unit-energy square QAM of the given order (4 or 16).
    pub fn new(order: usize) -> Result<Self> {
        let per_axis = match order {
            4 => 2,
            16 => 4,
            other => {
                return Err(Error::Parameter(format!(
                    "constellation order must be 4 or 16, got {other}"
                )))
            }
        };
        // Mean energy of the odd-integer grid is 2(N_c^2 - 1)/3.
        let scale = (2.0 * ((per_axis * per_axis) as f64 - 1.0) / 3.0).sqrt();
        let levels = (0..per_axis)
            .map(|q| (2.0 * q as f64 - (per_axis as f64 - 1.0)) / scale)
            .collect();
        Ok(Self { order, levels })
    }

    pub fn qpsk() -> Self {
        Self::new(4).expect("order 4 is valid")
    }

    pub fn qam16() -> Self {
        Self::new(16).expect("order 16 is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of amplitude levels per real axis (`N_c`).
    pub fn levels_per_axis(&self) -> usize {
        self.levels.len()
    }

    /// The per-axis level set `{l_q}`, ascending.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn symbol(&self, index: usize) -> Complex64 {
        let n_c = self.levels.len();
        Complex64::new(self.levels[index / n_c], self.levels[index % n_c])
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order).map(|i| self.symbol(i)).collect()
    }

    /// Splits a symbol index into its (real, imaginary) level indices.
    pub fn level_indices(&self, index: usize) -> (usize, usize) {
        let n_c = self.levels.len();
        (index / n_c, index % n_c)
    }

    pub fn index_from_levels(&self, re: usize, im: usize) -> usize {
        re * self.levels.len() + im
    }

    /// Nearest level index on one axis.
    pub fn nearest_level(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (q, &l) in self.levels.iter().enumerate() {
            let d = (value - l).abs();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Nearest constellation point; square QAM decouples per axis.
    pub fn nearest(&self, z: Complex64) -> usize {
        self.index_from_levels(self.nearest_level(z.re), self.nearest_level(z.im))
    }

    /// Index of `z` if it is an alphabet point within `tol`.
    pub fn index_of(&self, z: Complex64, tol: f64) -> Option<usize> {
        let i = self.nearest(z);
        ((self.symbol(i) - z).norm() <= tol).then_some(i)
    }

    /// Gray label of a symbol index.
    pub fn label(&self, index: usize) -> u32 {
        let (re, im) = self.level_indices(index);
        let half = self.bits_per_symbol() / 2;
        ((gray(re) << half) | gray(im)) as u32
    }

    /// Number of differing label bits between two symbol indices.
    pub fn bit_errors(&self, sent: usize, detected: usize) -> u32 {
        (self.label(sent) ^ self.label(detected)).count_ones()
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_energy() {
        for c in [Constellation::qpsk(), Constellation::qam16()] {
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.order() as f64;
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gray_neighbours_differ_by_one_bit() {
        let c = Constellation::qam16();
        for re in 0..3 {
            for im in 0..4 {
                let a = c.index_from_levels(re, im);
                let b = c.index_from_levels(re + 1, im);
                assert_eq!(c.bit_errors(a, b), 1);
            }
        }
    }

    #[test]
    fn labels_are_a_permutation() {
        let c = Constellation::qam16();
        let mut labels: Vec<u32> = (0..16).map(|i| c.label(i)).collect();
        labels.sort_unstable();
        assert_eq!(labels, (0..16).collect::<Vec<u32>>());
    }

    #[test]
    fn rejects_unsupported_order() {
        assert!(Constellation::new(8).is_err());
    }
}
