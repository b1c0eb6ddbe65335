//! Complex-to-real variable lifting.
//!
//! Every complex scalar occupies two contiguous real variables (real part,
//! then imaginary part). `h^H w` for a complex vector `w` of lifted variables
//! becomes a pair of real affine forms.

use num_complex::Complex64;

use super::program::AffineExpr;

/// Lifted block of `len` complex variables starting at real index `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexLayout {
    pub base: usize,
    pub len: usize,
}

impl ComplexLayout {
    pub fn new(base: usize, len: usize) -> Self {
        ComplexLayout { base, len }
    }

    /// Real variables used by this block.
    pub fn real_len(&self) -> usize {
        2 * self.len
    }

    pub fn end(&self) -> usize {
        self.base + self.real_len()
    }

    pub fn re(&self, i: usize) -> usize {
        debug_assert!(i < self.len);
        self.base + 2 * i
    }

    pub fn im(&self, i: usize) -> usize {
        self.re(i) + 1
    }

    pub fn read(&self, x: &[f64], i: usize) -> Complex64 {
        Complex64::new(x[self.re(i)], x[self.im(i)])
    }

    pub fn write(&self, x: &mut [f64], i: usize, z: Complex64) {
        x[self.re(i)] = z.re;
        x[self.im(i)] = z.im;
    }
}

/// `(Re, Im)` of `h^H w`, where `w[a]` is complex variable `var(a)` of `layout`.
pub fn inner_product_forms(
    h: &[Complex64],
    layout: &ComplexLayout,
    var: impl Fn(usize) -> usize,
) -> (AffineExpr, AffineExpr) {
    // conj(p + iq)(x + iy) = (px + qy) + i(py - qx)
    let mut re = AffineExpr::default();
    let mut im = AffineExpr::default();
    for (a, hz) in h.iter().enumerate() {
        let v = var(a);
        re.add_term(layout.re(v), hz.re).add_term(layout.im(v), hz.im);
        im.add_term(layout.re(v), -hz.im).add_term(layout.im(v), hz.re);
    }
    (re, im)
}

/// `Re{g^H w}` as one real affine form.
pub fn real_inner_form(g: &[Complex64], layout: &ComplexLayout, var: impl Fn(usize) -> usize) -> AffineExpr {
    inner_product_forms(g, layout, var).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_real_channel() {
        let layout = ComplexLayout::new(0, 1);
        let (re, im) = inner_product_forms(&[Complex64::new(1.0, 0.0)], &layout, |a| a);
        let x = [0.7, -1.3];
        // |h^H w|^2 = a^2 + b^2
        let v = re.eval(&x).powi(2) + im.eval(&x).powi(2);
        assert!((v - (0.49 + 1.69)).abs() < 1e-15);
    }

    #[test]
    fn imaginary_channel_real_part_is_b() {
        let layout = ComplexLayout::new(0, 1);
        let re = real_inner_form(&[Complex64::new(0.0, 1.0)], &layout, |a| a);
        let (a, b) = (0.4, -2.5);
        assert_eq!(re.eval(&[a, b]), b);
    }

    #[test]
    fn vector_case_matches_complex_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let w: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let layout = ComplexLayout::new(3, 2);
            let mut x = vec![0.0; layout.end()];
            for (i, z) in w.iter().enumerate() {
                layout.write(&mut x, i, *z);
            }
            let (re, im) = inner_product_forms(&h, &layout, |a| a);
            let direct = inner(&h, &w);
            assert!((re.eval(&x) - direct.re).abs() <= 1e-12 * (1.0 + direct.re.abs()));
            assert!((im.eval(&x) - direct.im).abs() <= 1e-12 * (1.0 + direct.im.abs()));
        }
    }
}
