//! Fixed sinusoidal structural encodings.

use crate::tensor::Tensor;

const BASE: f64 = 10_000.0;

/// Interleaved `[sin, cos, sin, cos, …]` encoding of one position over `width` channels.
fn sinusoid(pos: f64, width: usize, out: &mut [f64]) {
    for i in 0..width / 2 {
        let freq = BASE.powf(-((2 * i) as f64) / width as f64);
        out[2 * i] = (pos * freq).sin();
        out[2 * i + 1] = (pos * freq).cos();
    }
}

/// `[N, d]` 2D encodings: channels `0..d/2` from the row, `d/2..d` from the column.
/// `d` must be a multiple of 4.
pub fn spatial_encoding(coords: &[(f64, f64)], d: usize) -> Tensor {
    debug_assert_eq!(d % 4, 0);
    let half = d / 2;
    let mut data = vec![0.0; coords.len() * d];
    for (row, &(r, c)) in data.chunks_mut(d).zip(coords) {
        let (a, b) = row.split_at_mut(half);
        sinusoid(r, half, a);
        sinusoid(c, half, b);
    }
    Tensor::new(vec![coords.len(), d], data).expect("shape")
}

/// `[T, d]` encoding of sequence positions `0..t`. `d` must be even.
pub fn temporal_encoding(t: usize, d: usize) -> Tensor {
    debug_assert_eq!(d % 2, 0);
    let mut data = vec![0.0; t * d];
    for (i, row) in data.chunks_mut(d).enumerate() {
        sinusoid(i as f64, d, row);
    }
    Tensor::new(vec![t, d], data).expect("shape")
}

/// Tokens `[N, d]` plus their 2D encodings.
pub fn spatial_embed_2d(tokens: &Tensor, coords: &[(f64, f64)]) -> Tensor {
    let d = tokens.shape()[1];
    assert_eq!(coords.len(), tokens.shape()[0], "one coordinate per token");
    let enc = spatial_encoding(coords, d);
    crate::tensor::kernels::add(tokens, &enc).expect("shape")
}

/// Tokens `[T, d]` plus their 1D position encodings.
pub fn temporal_embed_1d(tokens: &Tensor) -> Tensor {
    let (t, d) = (tokens.shape()[0], tokens.shape()[1]);
    crate::tensor::kernels::add(tokens, &temporal_encoding(t, d)).expect("shape")
}
