//! Small iterative radix-2 FFT used to apply wide convolution kernels.
//!
//! Zero-padded circular convolution with `nfft >= signal + kernel width`
//! equals direct linear convolution restricted to the box, to roundoff; the
//! direct form stays available as the oracle (and for the separable 2-d
//! solver).

/// In-place iterative Cooley-Tukey FFT. `n` must be a power of two.
pub fn fft_inplace(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }

    // Bit reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2usize;
    while len <= n {
        let angle = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (libm::cos(angle), libm::sin(angle));
        let mut start = 0;
        while start < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let nr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = nr;
            }
            start += len;
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= scale;
        }
        for v in im.iter_mut() {
            *v *= scale;
        }
    }
}

/// Frequency-domain image of a real signal, padded to `nfft`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    /// FFT of a signal laid out at offsets `0..signal.len()`.
    pub fn of_signal(signal: &[f64], nfft: usize) -> Spectrum {
        let mut re = vec![0.0; nfft];
        let mut im = vec![0.0; nfft];
        re[..signal.len()].copy_from_slice(signal);
        fft_inplace(&mut re, &mut im, false);
        Spectrum { re, im }
    }

    /// FFT of a symmetric kernel with taps at offsets `-radius..=radius`,
    /// wrapped circularly.
    pub fn of_kernel(taps: &[f64], radius: usize, nfft: usize) -> Spectrum {
        let mut re = vec![0.0; nfft];
        let mut im = vec![0.0; nfft];
        for (slot, m) in (-(radius as isize)..=radius as isize).enumerate() {
            let idx = m.rem_euclid(nfft as isize) as usize;
            re[idx] += taps[slot];
        }
        fft_inplace(&mut re, &mut im, false);
        Spectrum { re, im }
    }

    /// Accumulates `weight * self * other` into a frequency buffer.
    pub fn mul_add_into(&self, other: &Spectrum, weight: f64, acc_re: &mut [f64], acc_im: &mut [f64]) {
        for i in 0..self.re.len() {
            let r = self.re[i] * other.re[i] - self.im[i] * other.im[i];
            let im = self.re[i] * other.im[i] + self.im[i] * other.re[i];
            acc_re[i] += weight * r;
            acc_im[i] += weight * im;
        }
    }
}

/// Direct truncated convolution with zero extension beyond the grid:
/// `out[i] = sum_m taps[m + radius] * g[i - m]`.
pub fn conv_direct(taps: &[f64], radius: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let r = radius as isize;
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let i = i as isize;
        let m_lo = (-r).max(i - (n as isize - 1));
        let m_hi = r.min(i);
        let mut acc = 0.0;
        for m in m_lo..=m_hi {
            acc += taps[(m + r) as usize] * g[(i - m) as usize];
        }
        *slot = acc;
    }
    out
}
