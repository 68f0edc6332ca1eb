//! Dense binary image masks and their run-length encoding.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Bitmap {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut b = Bitmap::new(width, height);
        for (r, c) in pixels {
            b.set(r, c, true);
        }
        b
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Bitmap { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let w = self.width as usize;
        self.bits[row as usize * w + col as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersection_count(&self, other: &Bitmap) -> usize {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn union(&self, other: &Bitmap) -> Bitmap {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Bitmap {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn intersect(&self, other: &Bitmap) -> Bitmap {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Bitmap {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i / w) as u32, (i % w) as u32))
    }

    /// One step of 4-neighbour erosion; pixels on the image border are
    /// eroded as if the outside were empty.
    pub fn erode(&self) -> Bitmap {
        let (w, h) = (self.width, self.height);
        Bitmap::from_fn(w, h, |r, c| {
            self.get(r, c)
                && r > 0
                && c > 0
                && r + 1 < h
                && c + 1 < w
                && self.get(r - 1, c)
                && self.get(r + 1, c)
                && self.get(r, c - 1)
                && self.get(r, c + 1)
        })
    }

    /// 4-connected component of set pixels containing `(row, col)`.
    pub fn component_at(&self, row: u32, col: u32) -> Bitmap {
        let mut out = Bitmap::new(self.width, self.height);
        if !self.get(row, col) {
            return out;
        }
        let mut queue = VecDeque::from([(row, col)]);
        out.set(row, col, true);
        while let Some((r, c)) = queue.pop_front() {
            let mut visit = |rr: u32, cc: u32| {
                if self.get(rr, cc) && !out.get(rr, cc) {
                    out.set(rr, cc, true);
                    queue.push_back((rr, cc));
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < self.height {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < self.width {
                visit(r, c + 1);
            }
        }
        out
    }

    /// Uncompressed RLE over the row-major bitmap: alternating run lengths,
    /// the first counting unset pixels (possibly zero).
    pub fn to_rle(&self) -> Vec<u32> {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in &self.bits {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        counts
    }

    pub fn from_rle(width: u32, height: u32, counts: &[u32]) -> Result<Bitmap> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::Format(format!(
                "RLE covers {total} pixels, image has {expected}"
            )));
        }
        let mut bits = Vec::with_capacity(expected as usize);
        for (i, &run) in counts.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
        }
        Ok(Bitmap { width, height, bits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_starts_with_zero_run() {
        let b = Bitmap::from_pixels(3, 1, [(0, 0)]);
        assert_eq!(b.to_rle(), vec![0, 1, 2]);
        let b = Bitmap::from_pixels(3, 1, [(0, 2)]);
        assert_eq!(b.to_rle(), vec![2, 1]);
    }

    #[test]
    fn rle_length_mismatch_rejected() {
        assert!(Bitmap::from_rle(2, 2, &[1, 2]).is_err());
    }

    #[test]
    fn erosion_and_components() {
        let b = Bitmap::from_fn(5, 5, |r, c| (1..4).contains(&r) && (1..4).contains(&c));
        let e = b.erode();
        assert_eq!(e.count(), 1);
        assert!(e.get(2, 2));
        let two = Bitmap::from_pixels(5, 1, [(0, 0), (0, 1), (0, 3)]);
        assert_eq!(two.component_at(0, 0).count(), 2);
        assert_eq!(two.component_at(0, 2).count(), 0);
    }

    proptest! {
        #[test]
        fn rle_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let b = Bitmap::from_fn(w, h, |r, c| (seed >> ((r * w + c) % 64)) & 1 == 1);
            let back = Bitmap::from_rle(w, h, &b.to_rle()).unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
