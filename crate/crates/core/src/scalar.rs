//! Floating-point scalar abstraction shared by the RBM, DBN and baseline code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the learning code is generic over: `f32` or `f64`.
///
/// Beyond plain arithmetic the trait carries a bit-exact hexadecimal
/// encoding, used by the model file, and a dense matrix product hook so that
/// each concrete type can dispatch to its own GEMM kernel.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Short type tag written into model files.
    const NAME: &'static str;

    /// Hexadecimal rendering of the IEEE-754 bit pattern, e.g. `0x3ff0000000000000`.
    fn to_hex(self) -> String;

    /// Inverse of [`Scalar::to_hex`]. Returns `None` on malformed input.
    fn from_hex(text: &str) -> Option<Self>;

    /// `c <- alpha * a * b + beta * c` on raw strided storage.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping `m x k`,
    /// `k x n` and `m x n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Converts an `f64` constant. Panics only for values the type cannot hold,
    /// which never happens for `f32`/`f64`.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn to_hex(self) -> String {
        format!("0x{:016x}", self.to_bits())
    }

    fn from_hex(text: &str) -> Option<Self> {
        let digits = text.strip_prefix("0x")?;
        if digits.len() != 16 {
            return None;
        }
        u64::from_str_radix(digits, 16).ok().map(f64::from_bits)
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn to_hex(self) -> String {
        format!("0x{:08x}", self.to_bits())
    }

    fn from_hex(text: &str) -> Option<Self> {
        let digits = text.strip_prefix("0x")?;
        if digits.len() != 8 {
            return None;
        }
        u32::from_str_radix(digits, 16).ok().map(f32::from_bits)
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Logistic function `1 / (1 + e^-x)`.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip_is_bit_exact() {
        for v in [0.0f64, -0.0, 1.0, 0.1, f64::MIN_POSITIVE, 1e300, -3.25] {
            let back = f64::from_hex(&v.to_hex()).unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
        for v in [0.0f32, -1.5, 0.1, 3.0e38] {
            assert_eq!(f32::from_hex(&v.to_hex()).unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(1.0f64.to_hex(), "0x3ff0000000000000");
    }

    #[test]
    fn hex_rejects_garbage() {
        assert!(f64::from_hex("3ff0000000000000").is_none());
        assert!(f64::from_hex("0x3ff").is_none());
        assert!(f64::from_hex("0xzzzzzzzzzzzzzzzz").is_none());
        assert!(f32::from_hex("0x3ff0000000000000").is_none());
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0f64), 0.5);
        assert!((logistic(1.0f64) - 0.7310585786300049).abs() < 1e-15);
        assert!((logistic(1.0f32) - 0.731_058_6).abs() < 1e-6);
    }
}
