//! Number formatting shared by the table writers.

/// Shortest round-trip form; switches to exponent notation for very small
/// or very large magnitudes.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

/// [`float`], with `NA` for a missing value.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), float)
}
