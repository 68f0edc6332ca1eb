//! Exact Euclidean distance transform.
//!
//! For each set pixel, the distance to the nearest unset pixel, where
//! everything outside the image counts as unset. Computed with the
//! separable lower-envelope-of-parabolas algorithm in two 1D passes.

use crate::bitmap::Bitmap;

const INF: f64 = 1e20;

/// 1D squared distance transform of a sampled function `f`.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    // First parabola dominated; replace it.
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distances, row-major; zero on unset pixels.
pub fn squared_edt(mask: &Bitmap) -> Vec<u32> {
    // Pad by one unset pixel on every side.
    let w = mask.width() as usize + 2;
    let h = mask.height() as usize + 2;
    let mut grid = vec![0.0f64; w * h];
    for (r, c) in mask.pixels() {
        grid[(r as usize + 1) * w + c as usize + 1] = INF;
    }
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        dt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    let mw = mask.width() as usize;
    let mut result = vec![0u32; mw * mask.height() as usize];
    for r in 0..mask.height() as usize {
        for c in 0..mw {
            result[r * mw + c] = grid[(r + 1) * w + c + 1] as u32;
        }
    }
    result
}

/// Euclidean distances, row-major.
pub fn edt(mask: &Bitmap) -> Vec<f64> {
    squared_edt(mask).into_iter().map(|d| (d as f64).sqrt()).collect()
}
