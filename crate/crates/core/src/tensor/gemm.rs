/// Row/column strides of a 2-D matrix view.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl Layout {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major `rows x cols` buffer.
    pub fn transposed(rows: usize, cols: usize) -> Self {
        Self {
            rows: cols,
            cols: rows,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }

    fn max_offset(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        (self.rows - 1) * self.row_stride as usize + (self.cols - 1) * self.col_stride as usize
    }
}

/// `c = alpha * a @ b + beta * c` with `c` row-major.
pub(crate) fn gemm(alpha: f32, a: &[f32], la: Layout, b: &[f32], lb: Layout, beta: f32, c: &mut [f32]) {
    assert_eq!(la.cols, lb.rows, "inner dimensions differ");
    let (m, k, n) = (la.rows, la.cols, lb.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    assert!(la.max_offset() < a.len());
    assert!(lb.max_offset() < b.len());
    if m < SMALL || n < SMALL {
        small_gemm(alpha, a, la, b, lb, beta, &mut c[..m * n]);
        return;
    }
    // SAFETY: the asserts above keep every index the kernel touches inside
    // `a`, `b` and `c`; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            la.row_stride,
            la.col_stride,
            b.as_ptr(),
            lb.row_stride,
            lb.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Below this many rows or columns the packing done by the blocked kernel
/// costs more than the product itself.
const SMALL: usize = 8;

fn small_gemm(alpha: f32, a: &[f32], la: Layout, b: &[f32], lb: Layout, beta: f32, c: &mut [f32]) {
    let (m, k, n) = (la.rows, la.cols, lb.cols);
    // rows of `a` and columns of `b`, both contiguous
    let a_rows = gather(a, la.row_stride as usize, la.col_stride as usize, m, k);
    let b_cols = gather(b, lb.col_stride as usize, lb.row_stride as usize, n, k);
    for (i, ar) in a_rows.chunks_exact(k).enumerate() {
        for (j, bc) in b_cols.chunks_exact(k).enumerate() {
            let acc = dot(ar, bc);
            let cv = &mut c[i * n + j];
            *cv = if beta == 0.0 { alpha * acc } else { alpha * acc + beta * *cv };
        }
    }
}

/// `outer x inner` values `src[o * so + i * si]` packed row-major.
fn gather(src: &[f32], so: usize, si: usize, outer: usize, inner: usize) -> std::borrow::Cow<'_, [f32]> {
    if si == 1 && so == inner {
        return std::borrow::Cow::Borrowed(&src[..outer * inner]);
    }
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        if si == 1 {
            out.extend_from_slice(&src[o * so..o * so + inner]);
        } else {
            out.extend((0..inner).map(|i| src[o * so + i * si]));
        }
    }
    std::borrow::Cow::Owned(out)
}

/// Dot product with eight independent accumulators so the loop vectorises.
fn dot(x: &[f32], y: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let xs = x.chunks_exact(8);
    let ys = y.chunks_exact(8);
    let tail: f32 = xs.remainder().iter().zip(ys.remainder()).map(|(a, b)| a * b).sum();
    for (xc, yc) in xs.zip(ys) {
        for l in 0..8 {
            acc[l] += xc[l] * yc[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}
