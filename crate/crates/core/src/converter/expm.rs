//! Matrix exponential. nalgebra's `exp` implements scaling and squaring
//! with Padé approximants of order 3 to 13; this wrapper rejects non-finite
//! input and output.

use nalgebra::DMatrix;

/// `e^A`, or `None` when the input or the result is not finite.
pub fn expm(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    assert!(a.is_square());
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let e = a.exp();
    e.iter().all(|v| v.is_finite()).then_some(e)
}
