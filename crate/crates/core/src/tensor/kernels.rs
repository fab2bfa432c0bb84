//! Raw dense kernels on row-major slices.

/// `c = beta * c + op(a) * op(b)` where `op(a)` is `m x k` and `op(b)` is `k x n`.
///
/// `a_t`/`b_t` select the transposed view of the stored matrix.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every slice to exactly the extent the
    // strides address, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv_out_size(input: usize, kernel: usize, stride: usize) -> usize {
    (input - kernel) / stride + 1
}

/// Unfolds `x: [c, h, w]` into `[c*k*k, ho*wo]` patches for a valid convolution.
pub fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, stride: usize) -> Vec<f64> {
    let ho = conv_out_size(h, k, stride);
    let wo = conv_out_size(w, k, stride);
    let cols = ho * wo;
    let mut out = vec![0.0; c * k * k * cols];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let src_row = &x[(ch * h + oy * stride + ky) * w..];
                    for ox in 0..wo {
                        dst[oy * wo + ox] = src_row[ox * stride + kx];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, stride: usize) -> Vec<f64> {
    let ho = conv_out_size(h, k, stride);
    let wo = conv_out_size(w, k, stride);
    let n = ho * wo;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..ho {
                    let base = (ch * h + oy * stride + ky) * w;
                    for ox in 0..wo {
                        out[base + ox * stride + kx] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
    out
}
