use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use twofloat::TwoFloat;

/// Real scalar the models compute in.
///
/// Implemented for `f32` and `f64`, plus double-double [`TwoFloat`] which
/// the gradient check uses to evaluate finite differences without f64
/// roundoff. Training uses `f64`; checkpoints store `f32`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        // NumCast rather than FromPrimitive: the latter's default `from_f64`
        // truncates through an integer for types that do not override it.
        <Self as NumCast>::from(v).expect("finite f64 converts to every float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }

    /// `exp` accurate to the type's full precision.
    fn exp_precise(self) -> Self {
        self.exp()
    }

    /// Division accurate to the type's full precision.
    fn div_precise(self, rhs: Self) -> Self {
        self / rhs
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for TwoFloat {
    // The crate's own exp is only good to about 1e-11.
    fn exp_precise(self) -> Self {
        const LN_2: (f64, f64) = (std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
        const HALVINGS: i32 = 4;
        let hi = self.hi();
        if hi.is_nan() {
            return self;
        }
        if hi > 709.0 {
            return f64::INFINITY.into();
        }
        if hi < -745.0 {
            return 0.0.into();
        }
        let k = (hi / LN_2.0).round();
        let ln2 = TwoFloat::new_add(LN_2.0, LN_2.1);
        let r = (self - ln2 * k) / (1 << HALVINGS) as f64;
        let mut term: TwoFloat = 1.0.into();
        let mut sum: TwoFloat = 1.0.into();
        for n in 1..=16 {
            term = term * r / n as f64;
            sum += term;
        }
        for _ in 0..HALVINGS {
            sum = sum * sum;
        }
        sum * 2f64.powi(k as i32)
    }

    // The crate's reciprocal drops the residual of `1 - b.hi / b.hi`, leaving
    // quotients only f64-accurate. One remainder correction restores them.
    fn div_precise(self, rhs: Self) -> Self {
        let q = self / rhs;
        let r = self - q * rhs;
        q + r.hi() / rhs.hi()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_values_survive_conversion() {
        assert_eq!(TwoFloat::from_f64_lossy(0.3).to_f64_lossy(), 0.3);
        assert_eq!(f32::from_f64_lossy(0.5), 0.5f32);
        assert_eq!(f64::from_usize_lossy(7), 7.0);
    }

    #[test]
    fn double_double_exp_is_accurate() {
        let one: TwoFloat = 1.0.into();
        for i in 0..200 {
            let a = TwoFloat::new_add(-20.0 + 0.2 * i as f64, 1e-19 * i as f64);
            let err = (a.exp_precise() * (-a).exp_precise() - one)
                .abs()
                .to_f64_lossy();
            assert!(err < 1e-28, "exp({a:?}) identity off by {err:e}");
        }
        let e = one.exp_precise();
        assert!(
            (e - TwoFloat::new_add(std::f64::consts::E, 1.445_646_891_729_250_2e-16))
                .abs()
                .to_f64_lossy()
                < 1e-30
        );
    }

    #[test]
    fn double_double_division_is_accurate() {
        let one: TwoFloat = 1.0.into();
        let third = one.div_precise(3.0.into());
        assert_eq!(third.hi(), 0.333_333_333_333_333_3);
        assert!((third.lo() - 1.850_371_707_708_594e-17).abs() < 1e-32);
        for i in 1..100 {
            let b = TwoFloat::new_add(0.37 * i as f64, 1e-18 * i as f64);
            let err = ((one.div_precise(b) * b) - one).abs().to_f64_lossy();
            assert!(err < 1e-30, "1/{b:?} off by {err:e}");
        }
    }
}
