//! Mixed-radix enumeration of integer boxes `[0, cap_0] x ... x [0, cap_{n-1}]`.
//!
//! Coordinate 0 is the most significant digit, so flat index order coincides
//! with lexicographic order on the vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    caps: Vec<u32>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(caps: Vec<u32>) -> Self {
        let n = caps.len();
        let mut strides = vec![0usize; n];
        let mut len = 1usize;
        for b in (0..n).rev() {
            strides[b] = len;
            len = len
                .checked_mul(caps[b] as usize + 1)
                .expect("state space size overflows usize");
        }
        Grid { caps, strides, len }
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    pub fn dims(&self) -> usize {
        self.caps.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self, coord: usize) -> usize {
        self.strides[coord]
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.caps.len() && x.iter().zip(&self.caps).all(|(v, c)| v <= c)
    }

    pub fn check(&self, x: &[u32]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "vector {x:?} lies outside the box [0, {:?}]",
                self.caps
            )))
        }
    }

    /// Flat index of `x`; `x` must lie in the box.
    pub fn index(&self, x: &[u32]) -> usize {
        debug_assert!(self.contains(x));
        x.iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v as usize * s)
            .sum()
    }

    pub fn decode_into(&self, mut idx: usize, out: &mut [u32]) {
        for (b, &s) in self.strides.iter().enumerate() {
            out[b] = (idx / s) as u32;
            idx %= s;
        }
    }

    pub fn decode(&self, idx: usize) -> Vec<u32> {
        let mut out = vec![0; self.caps.len()];
        self.decode_into(idx, &mut out);
        out
    }

    /// Coordinate `coord` of the vector at flat index `idx`.
    pub fn digit(&self, idx: usize, coord: usize) -> u32 {
        ((idx / self.strides[coord]) % (self.caps[coord] as usize + 1)) as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        (0..self.len).map(move |i| self.decode(i))
    }

    /// The top corner `caps` itself.
    pub fn top(&self) -> Vec<u32> {
        self.caps.clone()
    }
}
