//! Fixed Gaussian transposed convolution taking a heatmap back to input
//! resolution.

use super::head::{HeatMap, Upsampled};
use crate::error::{Error, Result};

pub const KERNEL_SIZE: usize = 4;
pub const KERNEL_SIGMA: f64 = 1.0;

/// Separable `size × size` Gaussian sampled at pixel-centre offsets from the
/// kernel centre, normalized to unit sum. Row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut k: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Transposed convolution of `A` with the Gaussian kernel at `stride`.
///
/// Cell `(i, j)` spreads over output rows `i·stride − pad ..` with
/// `pad = (size − stride) / 2`. Contributions that fall outside the frame
/// are folded onto the nearest edge pixel, so the output mass is always
/// `Σ A × Σ kernel`.
pub fn transposed_conv(map: &HeatMap, stride: usize, kernel: &[f64], size: usize) -> Upsampled {
    let (height, width) = (map.u * stride, map.v * stride);
    let pad = (size.saturating_sub(stride) / 2) as isize;
    let mut out = vec![0.0; width * height];
    for i in 0..map.u {
        for j in 0..map.v {
            let a = map.values[i * map.v + j];
            if a == 0.0 {
                continue;
            }
            for ky in 0..size {
                let oy = ((i * stride + ky) as isize - pad).clamp(0, height as isize - 1) as usize;
                for kx in 0..size {
                    let ox = ((j * stride + kx) as isize - pad).clamp(0, width as isize - 1) as usize;
                    out[oy * width + ox] += a * kernel[ky * size + kx];
                }
            }
        }
    }
    Upsampled {
        width,
        height,
        values: out,
    }
}

/// Attaches `A′` at `(width, height)` to the map.
pub fn upsample(map: &HeatMap, input_dims: (usize, usize), stride: usize) -> Result<HeatMap> {
    let (width, height) = input_dims;
    if stride == 0 || map.u * stride != height || map.v * stride != width {
        return Err(Error::Shape(format!(
            "{}x{} map at stride {stride} does not cover a {width}x{height} frame",
            map.v, map.u
        )));
    }
    let kernel = gaussian_kernel(KERNEL_SIZE, KERNEL_SIGMA);
    let mut out = map.clone();
    out.upsampled = Some(transposed_conv(map, stride, &kernel, KERNEL_SIZE));
    Ok(out)
}
