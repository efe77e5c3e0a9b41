//! Sobol low-discrepancy sequence on a 32-bit lattice, Gray-code ordered.

use crate::design::DesignPoint;
use crate::error::{DesignError, Result};
use crate::generators::candidates::DomainBox;

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

/// Largest supported dimension.
pub const MAX_DIM: usize = 1 + DIRECTION_TABLE.len();

/// Joe–Kuo primitive polynomials and initial direction numbers for
/// dimensions 2.. as `(degree, coefficients, m)`.
#[rustfmt::skip]
const DIRECTION_TABLE: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
    (7, 50, &[1, 3, 1, 3, 5, 53, 69]),
    (7, 55, &[1, 1, 5, 5, 23, 33, 13]),
    (7, 56, &[1, 1, 7, 7, 1, 61, 123]),
    (7, 59, &[1, 1, 7, 9, 13, 61, 49]),
    (7, 62, &[1, 3, 3, 5, 3, 55, 33]),
    (8, 14, &[1, 3, 1, 15, 31, 13, 49, 245]),
    (8, 21, &[1, 3, 5, 15, 31, 59, 63, 97]),
    (8, 22, &[1, 3, 1, 11, 11, 11, 77, 249]),
    (8, 38, &[1, 3, 1, 11, 27, 43, 71, 9]),
    (8, 47, &[1, 1, 7, 15, 21, 11, 81, 45]),
    (8, 49, &[1, 3, 7, 3, 25, 31, 65, 79]),
    (8, 50, &[1, 3, 1, 1, 19, 11, 3, 205]),
    (8, 52, &[1, 1, 5, 9, 19, 21, 29, 157]),
    (8, 56, &[1, 3, 7, 11, 1, 33, 89, 185]),
    (8, 67, &[1, 3, 3, 3, 15, 9, 79, 71]),
    (8, 70, &[1, 3, 7, 11, 15, 39, 119, 27]),
    (8, 84, &[1, 1, 3, 1, 11, 31, 97, 225]),
    (8, 97, &[1, 1, 1, 3, 23, 43, 57, 177]),
    (8, 103, &[1, 3, 7, 7, 17, 17, 37, 71]),
    (8, 115, &[1, 3, 1, 5, 27, 63, 123, 213]),
    (8, 122, &[1, 1, 3, 5, 11, 43, 53, 133]),
    (9, 8, &[1, 3, 5, 5, 29, 17, 47, 173, 479]),
    (9, 13, &[1, 3, 3, 11, 3, 1, 109, 9, 69]),
    (9, 16, &[1, 1, 1, 5, 17, 39, 23, 5, 343]),
    (9, 22, &[1, 3, 1, 5, 25, 15, 31, 103, 499]),
    (9, 25, &[1, 1, 1, 11, 11, 17, 63, 105, 183]),
    (9, 44, &[1, 1, 5, 11, 9, 29, 97, 231, 363]),
    (9, 47, &[1, 1, 5, 15, 19, 45, 41, 7, 383]),
    (9, 52, &[1, 3, 7, 7, 31, 19, 83, 137, 221]),
    (9, 55, &[1, 1, 1, 3, 23, 15, 111, 223, 83]),
    (9, 59, &[1, 1, 5, 13, 31, 15, 55, 25, 161]),
    (9, 62, &[1, 1, 3, 13, 25, 47, 39, 87, 257]),
];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTION_TABLE[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Stateful generator. Index 0 is the origin; [`sobol`] starts at index 1.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    index: u64,
    state: Vec<u32>,
}

impl SobolSequence {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DesignError::InvalidArgument("Sobol dimension must be >= 1".into()));
        }
        if n > MAX_DIM {
            return Err(DesignError::Capability(format!(
                "Sobol direction numbers cover at most {MAX_DIM} dimensions, got {n}"
            )));
        }
        Ok(Self {
            directions: (0..n).map(direction_numbers).collect(),
            index: 0,
            state: vec![0; n],
        })
    }

    /// Index of the point the next call to [`Self::next_raw`] returns.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Jumps to `index` directly through its Gray code.
    pub fn seek(&mut self, index: u64) {
        let gray = index ^ (index >> 1);
        for (s, dirs) in self.state.iter_mut().zip(&self.directions) {
            *s = (0..BITS)
                .filter(|&k| (gray >> k) & 1 == 1)
                .fold(0, |acc, k| acc ^ dirs[k]);
        }
        self.index = index;
    }

    /// Current lattice point, then advances by one Gray-code step.
    pub fn next_raw(&mut self) -> Vec<u32> {
        let out = self.state.clone();
        let c = self.index.trailing_ones() as usize;
        if c < BITS {
            for (s, dirs) in self.state.iter_mut().zip(&self.directions) {
                *s ^= dirs[c];
            }
        }
        self.index += 1;
        out
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.next_raw().into_iter().map(|v| v as f64 * SCALE).collect()
    }
}

/// Points `skip+1 ..= skip+count` of the `n`-dimensional sequence in the unit cube.
pub fn sobol(n: usize, count: usize, skip: u64) -> Result<Vec<DesignPoint>> {
    let mut seq = SobolSequence::new(n)?;
    seq.seek(skip + 1);
    Ok((0..count).map(|_| DesignPoint::new(seq.next_point())).collect())
}

/// [`sobol`] mapped affinely onto `domain`.
pub fn sobol_in(domain: &DomainBox, count: usize, skip: u64) -> Result<Vec<DesignPoint>> {
    Ok(sobol(domain.dim(), count, skip)?
        .iter()
        .map(|u| domain.map_unit(u.coords()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(points: &[DesignPoint]) -> Vec<Vec<f64>> {
        points.iter().map(|p| p.coords().to_vec()).collect()
    }

    #[test]
    fn first_points_two_dims() {
        let pts = coords(&sobol(2, 4, 0).unwrap());
        assert_eq!(pts, vec![vec![0.5, 0.5], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.375, 0.375]]);
    }

    #[test]
    fn skip_one_excludes_center_and_reaches_known_point() {
        let pts = coords(&sobol(2, 20, 1).unwrap());
        assert!(!pts.contains(&vec![0.5, 0.5]));
        assert!(pts.contains(&vec![0.96875, 0.59375]));
    }

    #[test]
    fn seek_matches_sequential_generation() {
        let mut a = SobolSequence::new(7).unwrap();
        let seq: Vec<Vec<u32>> = (0..300).map(|_| a.next_raw()).collect();
        let mut b = SobolSequence::new(7).unwrap();
        for i in [0u64, 1, 2, 17, 64, 255, 299] {
            b.seek(i);
            assert_eq!(b.next_raw(), seq[i as usize]);
        }
    }

    #[test]
    fn third_dimension_known_values() {
        let mut s = SobolSequence::new(3).unwrap();
        s.seek(1);
        let third: Vec<f64> = (0..4).map(|_| s.next_point()[2]).collect();
        assert_eq!(third, vec![0.5, 0.25, 0.75, 0.625]);
    }

    #[test]
    fn capability_limit() {
        assert!(SobolSequence::new(MAX_DIM).is_ok());
        assert!(matches!(SobolSequence::new(MAX_DIM + 1), Err(DesignError::Capability(_))));
    }

    #[test]
    fn unit_cube_stratification_every_dimension() {
        // Each coordinate of the first 2^k points (origin included) is a permutation of the k-bit grid.
        let n = MAX_DIM;
        let mut s = SobolSequence::new(n).unwrap();
        let pts: Vec<Vec<u32>> = (0..256).map(|_| s.next_raw()).collect();
        for d in 0..n {
            let mut bins: Vec<u32> = pts.iter().map(|p| p[d] >> 24).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..256).collect::<Vec<u32>>(), "dimension {}", d + 1);
        }
    }
}
