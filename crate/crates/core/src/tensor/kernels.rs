//! Forward kernels on plain tensors. The graph records these and supplies
//! the matching adjoints; they are also usable directly for inference.

use super::{Result, Tensor, TensorError};

/// Added to the variance before the square root in [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Lower clamp applied to both log arguments of [`bce`].
pub const BCE_CLAMP: f64 = 1e-12;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn build(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    Tensor::new(shape, data).expect("kernel produced consistent shape")
}

/// `out[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Dot product with four independent partial sums, so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[m,n] += a[m,k] * b[n,k]^T`
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out[m,n] += a[k,m]^T * b[k,n]`
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    gemm_nn(m, k, n, a.data(), b.data(), &mut out);
    Ok(build(vec![m, n], out))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2("transpose")?;
    let src = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Ok(build(vec![c, r], out))
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(op, a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(build(a.shape().to_vec(), data))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

/// Adds a length-`n` vector to every row of an `m x n` matrix.
pub fn add_row(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2("add_row")?;
    if bias.numel() != n || bias.shape().len() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "add_row",
            left: x.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    let b = bias.data();
    let mut out = x.data().to_vec();
    for i in 0..m {
        for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
            *o += bv;
        }
    }
    Ok(build(vec![m, n], out))
}

pub fn scale(a: &Tensor, s: f64) -> Tensor {
    map(a, |x| x * s)
}

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    build(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    map(a, sigmoid_scalar)
}

pub fn tanh(a: &Tensor) -> Tensor {
    map(a, f64::tanh)
}

pub fn relu(a: &Tensor) -> Tensor {
    map(a, |x| x.max(0.0))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of the Gaussian error linear unit, evaluated through
/// the identity `(1 + tanh u) / 2 = sigmoid(2u)` (exp is cheaper than tanh).
pub fn gelu_scalar(x: f64) -> f64 {
    x * sigmoid_scalar(2.0 * GELU_C * (x + GELU_A * x * x * x))
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    let s = sigmoid_scalar(2.0 * GELU_C * (x + GELU_A * x * x * x));
    s + 2.0 * x * s * (1.0 - s) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu(a: &Tensor) -> Tensor {
    map(a, gelu_scalar)
}

fn last_dim(a: &Tensor) -> usize {
    *a.shape().last().expect("non-empty shape")
}

fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax along the last axis.
pub fn softmax(a: &Tensor) -> Tensor {
    let n = last_dim(a);
    let mut out = a.data().to_vec();
    for row in out.chunks_mut(n) {
        softmax_row_in_place(row);
    }
    build(a.shape().to_vec(), out)
}

/// Softmax along the last axis of `logits + mask`, where `mask` holds `0` or
/// `-inf`. Masked positions receive exactly zero weight.
pub fn masked_softmax(logits: &Tensor, mask: &Tensor) -> Result<Tensor> {
    same_shape("masked_softmax", logits, mask)?;
    let n = last_dim(logits);
    let mut out: Vec<f64> = logits.data().iter().zip(mask.data()).map(|(l, m)| l + m).collect();
    for (r, row) in out.chunks_mut(n).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(TensorError::AllMasked { row: r });
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - max).exp() };
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(build(logits.shape().to_vec(), out))
}

/// Row-wise layer normalization. Returns `(output, normalized, inv_std)`;
/// the last two are kept by the graph for the adjoint.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (m, n) = x.dims2("layer_norm")?;
    if gamma.numel() != n || beta.numel() != n {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm",
            left: x.shape().to_vec(),
            right: gamma.shape().to_vec(),
        });
    }
    let (g, b) = (gamma.data(), beta.data());
    let mut xhat = vec![0.0; m * n];
    let mut inv = vec![0.0; m];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &x.data()[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv[i] = is;
        for j in 0..n {
            let h = (row[j] - mean) * is;
            xhat[i * n + j] = h;
            out[i * n + j] = h * g[j] + b[j];
        }
    }
    Ok((build(vec![m, n], out), xhat, inv))
}

pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| TensorError::InvalidShape {
        op: "concat_rows",
        shape: vec![],
        reason: "no inputs".into(),
    })?;
    let (_, n) = first.dims2("concat_rows")?;
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        let (r, c) = p.dims2("concat_rows")?;
        if c != n {
            return Err(TensorError::ShapeMismatch {
                op: "concat_rows",
                left: first.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
        rows += r;
        data.extend_from_slice(p.data());
    }
    Ok(build(vec![rows, n], data))
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| TensorError::InvalidShape {
        op: "concat_cols",
        shape: vec![],
        reason: "no inputs".into(),
    })?;
    let (m, _) = first.dims2("concat_cols")?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (r, c) = p.dims2("concat_cols")?;
        if r != m {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                left: first.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
        widths.push(c);
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(m * total);
    for i in 0..m {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
    }
    Ok(build(vec![m, total], data))
}

fn check_range(op: &'static str, start: usize, end: usize, extent: usize) -> Result<()> {
    if start >= end || end > extent {
        return Err(TensorError::IndexOutOfRange {
            op,
            index: end.max(start),
            extent,
        });
    }
    Ok(())
}

pub fn slice_rows(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let (m, n) = a.dims2("slice_rows")?;
    check_range("slice_rows", start, end, m)?;
    Ok(build(vec![end - start, n], a.data()[start * n..end * n].to_vec()))
}

pub fn slice_cols(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let (m, n) = a.dims2("slice_cols")?;
    check_range("slice_cols", start, end, n)?;
    let w = end - start;
    let mut data = Vec::with_capacity(m * w);
    for i in 0..m {
        data.extend_from_slice(&a.data()[i * n + start..i * n + end]);
    }
    Ok(build(vec![m, w], data))
}

/// Embedding lookup: picks rows of a 2-D table.
pub fn gather_rows(table: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (m, n) = table.dims2("gather_rows")?;
    if idx.is_empty() {
        return Err(TensorError::InvalidShape {
            op: "gather_rows",
            shape: table.shape().to_vec(),
            reason: "empty index list".into(),
        });
    }
    let mut data = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        if i >= m {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: i,
                extent: m,
            });
        }
        data.extend_from_slice(&table.data()[i * n..(i + 1) * n]);
    }
    Ok(build(vec![idx.len(), n], data))
}

/// Geometry of a 2-D convolution over a `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let l = ho * wo;
    let mut cols = vec![0.0; g.patch() * l];
    for c in 0..g.in_ch {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let r = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[r * l..(r + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &x[(c * g.height + iy as usize) * g.width..];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let l = ho * wo;
    for c in 0..g.in_ch {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let r = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[r * l..(r + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let base = (c * g.height + iy as usize) * g.width;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dx[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Square-kernel convolution. `x: [Cin, H, W]`, `weight: [Cout, Cin, k, k]`,
/// `bias: [Cout]`. Returns the output and the unfolded input patches.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Vec<f64>, ConvGeom)> {
    let (cin, h, w) = x.dims3("conv2d")?;
    let (cout, wcin, kh, kw) = match weight.shape() {
        [a, b, c, d] => (*a, *b, *c, *d),
        s => {
            return Err(TensorError::InvalidShape {
                op: "conv2d",
                shape: s.to_vec(),
                reason: "weight must be [Cout, Cin, k, k]".into(),
            })
        }
    };
    if wcin != cin || kh != kw || bias.numel() != cout {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            left: x.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    }
    if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(TensorError::InvalidShape {
            op: "conv2d",
            shape: x.shape().to_vec(),
            reason: format!("kernel {kh} stride {stride} pad {pad} does not fit"),
        });
    }
    let geom = ConvGeom {
        in_ch: cin,
        height: h,
        width: w,
        kernel: kh,
        stride,
        pad,
    };
    let cols = im2col(x.data(), &geom);
    let l = geom.out_h() * geom.out_w();
    let mut out = vec![0.0; cout * l];
    for (co, &b) in bias.data().iter().enumerate() {
        out[co * l..(co + 1) * l].fill(b);
    }
    gemm_nn(cout, geom.patch(), l, weight.data(), &cols, &mut out);
    Ok((build(vec![cout, geom.out_h(), geom.out_w()], out), cols, geom))
}

/// Number of windows produced by [`window_pool`].
pub fn pool_output_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

/// Validity ranges of each pooling window: `(first_real_index, end_exclusive)`.
pub(crate) fn pool_windows(len: usize, kernel: usize, stride: usize, pad: usize) -> Vec<(usize, usize)> {
    (0..pool_output_len(len, kernel, stride, pad))
        .map(|w| {
            let start = (w * stride) as isize - pad as isize;
            let end = (start + kernel as isize).min(len as isize);
            (start.max(0) as usize, end as usize)
        })
        .collect()
}

/// Attention-weighted pooling over sliding windows of a `[T, D]` sequence.
///
/// Each window takes a softmax of `scores` over the real (non-padding)
/// positions it covers and returns the weighted sum of those rows. Returns
/// the pooled `[T', D]` tensor and the flattened per-window weights.
pub fn window_pool(
    x: &Tensor,
    scores: &Tensor,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Vec<f64>)> {
    let (t, d) = x.dims2("window_pool")?;
    if scores.numel() != t {
        return Err(TensorError::ShapeMismatch {
            op: "window_pool",
            left: x.shape().to_vec(),
            right: scores.shape().to_vec(),
        });
    }
    if kernel == 0 || stride == 0 || pad >= kernel || t + 2 * pad < kernel {
        return Err(TensorError::InvalidShape {
            op: "window_pool",
            shape: x.shape().to_vec(),
            reason: format!("kernel {kernel} stride {stride} pad {pad} invalid for length {t}"),
        });
    }
    let windows = pool_windows(t, kernel, stride, pad);
    let s = scores.data();
    let mut out = vec![0.0; windows.len() * d];
    let mut weights = Vec::new();
    for (w, &(lo, hi)) in windows.iter().enumerate() {
        let mut a: Vec<f64> = s[lo..hi].to_vec();
        softmax_row_in_place(&mut a);
        let orow = &mut out[w * d..(w + 1) * d];
        for (i, &ai) in (lo..hi).zip(&a) {
            for (o, &xv) in orow.iter_mut().zip(x.row(i)) {
                *o += ai * xv;
            }
        }
        weights.extend_from_slice(&a);
    }
    Ok((build(vec![windows.len(), d], out), weights))
}

/// Mean binary cross-entropy with both log arguments clamped at [`BCE_CLAMP`].
pub fn bce(pred: &Tensor, labels: &Tensor) -> Result<f64> {
    same_shape("bce_loss", pred, labels)?;
    let n = pred.numel() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &l)| l * p.max(BCE_CLAMP).ln() + (1.0 - l) * (1.0 - p).max(BCE_CLAMP).ln())
        .sum();
    Ok(-total / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_all_ones() {
        let a = Tensor::ones(&[2, 3]);
        let b = Tensor::ones(&[3, 2]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert!(c.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor::ones(&[2, 3]), &Tensor::ones(&[2, 2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn gemm_variants_agree() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3, 2], &[7., 8., 9., 10., 11., 12.]);
        let c = matmul(&a, &b).unwrap();
        let at = transpose(&a).unwrap();
        let bt = transpose(&b).unwrap();
        let mut nt = vec![0.0; 4];
        gemm_nt(2, 3, 2, a.data(), bt.data(), &mut nt);
        let mut tn = vec![0.0; 4];
        gemm_tn(2, 3, 2, at.data(), b.data(), &mut tn);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
        assert_eq!(nt, c.data());
        assert_eq!(tn, c.data());
    }

    #[test]
    fn softmax_symmetric() {
        let s = softmax(&t(&[2], &[0., 0.]));
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_zero() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0).is_finite());
    }

    #[test]
    fn masked_softmax_examples() {
        let ninf = f64::NEG_INFINITY;
        let p = masked_softmax(&t(&[2], &[1., 1.]), &t(&[2], &[0., ninf])).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
        let p = masked_softmax(&t(&[3], &[0., 0., 0.]), &t(&[3], &[0., 0., ninf])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5, 0.0]);
        let p = masked_softmax(&t(&[2], &[2f64.ln(), 0.]), &t(&[2], &[0., 0.])).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn masked_softmax_rejects_fully_masked_row() {
        let ninf = f64::NEG_INFINITY;
        let err = masked_softmax(&t(&[2, 2], &[0., 0., 0., 0.]), &t(&[2, 2], &[0., 0., ninf, ninf]))
            .unwrap_err();
        assert_eq!(err, TensorError::AllMasked { row: 1 });
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 2, 2], &[1., 2., 3., 4.]);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let w = t(&[1, 1, 3, 3], &w);
        let (y, _, _) = conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_stride_two_shapes() {
        let x = Tensor::ones(&[1, 8, 8]);
        let w = Tensor::ones(&[4, 1, 3, 3]);
        let (y, _, _) = conv2d(&x, &w, &Tensor::zeros(&[4]), 2, 1).unwrap();
        assert_eq!(y.shape(), &[4, 4, 4]);
        // interior output sees a full 3x3 window of ones
        assert_eq!(y.at3(0, 1, 1), 9.0);
        // top-left corner sees a 2x2 window because of padding
        assert_eq!(y.at3(0, 0, 0), 4.0);
    }

    #[test]
    fn pool_lengths() {
        assert_eq!(pool_output_len(10, 5, 2, 2), 5);
        assert_eq!(pool_output_len(1, 5, 2, 2), 1);
    }

    #[test]
    fn uniform_scores_average_window() {
        let x = t(&[5, 1], &[1., 2., 6., 3., 8.]);
        let (y, _) = window_pool(&x, &Tensor::zeros(&[5]), 5, 2, 2).unwrap();
        // windows cover rows {0,1,2}, {0..4}, {2,3,4}; padding is excluded
        assert_eq!(y.shape(), &[3, 1]);
        assert!((y.data()[0] - 3.0).abs() < 1e-15);
        assert!((y.data()[1] - 4.0).abs() < 1e-15);
        assert!((y.data()[2] - 17.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bce_examples() {
        let l = bce(&t(&[1, 2], &[0.5, 0.5]), &t(&[1, 2], &[1., 0.])).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = bce(&t(&[1, 1], &[0.9]), &t(&[1, 1], &[1.])).unwrap();
        assert!((l - 0.1054).abs() < 1e-4);
        let l = bce(&t(&[1, 2], &[1.0, 0.0]), &t(&[1, 2], &[1., 0.])).unwrap();
        assert!(l.abs() < 1e-12);
    }
}
