//! Single-sample feature maps and the GEMM kernel the layers are built on.

/// A `C × H × W` activation of one sample, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "feature map buffer size");
        Self { c, h, w, data }
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self::zeros(0, h, w)
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.hw()..(c + 1) * self.hw()]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let hw = self.hw();
        &mut self.data[c * hw..(c + 1) * hw]
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!((self.c, self.h, self.w), (other.c, other.h, other.w));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Stacks `a` and `b` along the channel axis.
    pub fn concat(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
        assert_eq!((a.h, a.w), (b.h, b.w), "concat needs equal spatial size");
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        FeatureMap::from_vec(a.c + b.c, a.h, a.w, data)
    }

    /// Inverse of [`FeatureMap::concat`]: splits off the first `c0` channels.
    pub fn split(&self, c0: usize) -> (FeatureMap, FeatureMap) {
        let cut = c0 * self.hw();
        (
            FeatureMap::from_vec(c0, self.h, self.w, self.data[..cut].to_vec()),
            FeatureMap::from_vec(self.c - c0, self.h, self.w, self.data[cut..].to_vec()),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major matrix view: `(data, rows, cols, row_stride, col_stride)`.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rs: isize,
    pub cs: isize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `C[m×n] = alpha · A[m×k] · B[k×n] + beta · C` with `C` row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: MatRef, b: MatRef, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    let span = |r: &MatRef, rows: usize, cols: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            ((rows - 1) as isize * r.rs + (cols - 1) as isize * r.cs) as usize + 1
        }
    };
    assert!(a.data.len() >= span(&a, m, k));
    assert!(b.data.len() >= span(&b, k, n));
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
