//! Small numeric helpers: activations, clipping and compensated summation.

use crate::Scalar;

/// Lower/upper probability clip applied by every nuisance backend.
pub const PROB_CLIP: f64 = 1e-3;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn clip_probability<T: Scalar>(p: T) -> T {
    let lo = T::lit(PROB_CLIP);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

/// Neumaier-compensated sum. Order-dependent only at the level of the
/// compensation term, so repeated reductions over the same sequence agree
/// bit-for-bit.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

pub fn compensated_mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::nan();
    }
    compensated_sum(values.iter().copied()) / T::from_count(values.len())
}
