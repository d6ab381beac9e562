//! Number formatting shared by all CSV writers.

/// 17 significant digits in scientific notation; parses back to the same bits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}
