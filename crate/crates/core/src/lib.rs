//! Conservative finite-difference solver for the linearly coupled
//! nonlinear Schrödinger system
//!
//! ```text
//! i psi_t = beta psi_xx + alpha1 (|psi|^2 + |phi|^2) psi - Gamma phi
//! i phi_t = beta phi_xx + alpha1 (|phi|^2 + |psi|^2) phi - Gamma psi
//! ```
//!
//! together with an envelope generator for elliptically polarized
//! solitons, collision diagnostics and a scenario runner.

pub mod band;
pub mod diagnostics;
pub mod envelope;
pub mod exact;
pub mod pde;
pub mod scenario;

pub use num_complex::Complex64;

/// Formats a float with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        "nan".to_string()
    }
}
