//! Radix-2 complex FFT, enough for the ramp filter of the FBP.

use crate::prelude::*;
use core::f64::consts::PI;

/// Precomputed twiddles for one power-of-two length.
#[derive(Clone, Debug)]
pub(crate) struct Radix2 {
    len: usize,
    // exp(-2πi k/len) for k < len/2
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Radix2 {
    pub(crate) fn new(len: usize) -> Self {
        assert!(len.is_power_of_two(), "FFT length must be a power of two");
        let half = len / 2;
        let (cos, sin) = (0..half)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / len as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Self { len, cos, sin }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// In-place transform. The inverse is unnormalized; callers divide by `len`.
    pub(crate) fn process(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.len;
        debug_assert_eq!(re.len(), n);
        debug_assert_eq!(im.len(), n);
        if n <= 1 {
            return;
        }

        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }

        let sign = if inverse { -1.0 } else { 1.0 };
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = sign * self.sin[k * stride];
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size *= 2;
        }
    }
}
