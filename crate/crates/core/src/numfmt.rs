//! Number quantization and display formatting shared by options, stems and
//! axis labels.

use crate::chart::Unit;
use alloc::format;
use alloc::string::String;

/// Number of decimals needed to print multiples of `step` exactly.
pub fn decimals_for(step: f64) -> usize {
    let mut scale = 1.0;
    for d in 0..6 {
        let s = step * scale;
        if (s - libm::round(s)).abs() < 1e-7 {
            return d;
        }
        scale *= 10.0;
    }
    6
}

/// Round `v` to the nearest multiple of `step`.
pub fn quantize(v: f64, step: f64) -> f64 {
    let q = libm::round(v / step) * step;
    // Strip representation noise such as 47.300000000000004.
    let d = decimals_for(step) as i32;
    let scale = libm::pow(10.0, d as f64);
    libm::round(q * scale) / scale
}

pub fn format_number(v: f64, decimals: usize) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{:.*}", decimals, v)
}

pub fn format_value(v: f64, unit: Unit, decimals: usize) -> String {
    if v < 0.0 {
        format!("-{}{}{}", unit.prefix(), format_number(-v, decimals), unit.suffix())
    } else {
        format!("{}{}{}", unit.prefix(), format_number(v, decimals), unit.suffix())
    }
}

pub fn format_range(lo: f64, hi: f64, unit: Unit, decimals: usize) -> String {
    format!(
        "{} - {}",
        format_value(lo, unit, decimals),
        format_value(hi, unit, decimals)
    )
}

/// Approximate equality used for quantized data.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals() {
        assert_eq!(decimals_for(1.0), 0);
        assert_eq!(decimals_for(0.5), 1);
        assert_eq!(decimals_for(0.05), 2);
        assert_eq!(decimals_for(25.0), 0);
    }

    #[test]
    fn quantize_strips_noise() {
        assert_eq!(quantize(47.31, 0.1), 47.3);
        assert_eq!(format_value(47.3, Unit::Dollar, 1), "$47.3");
        assert_eq!(format_value(23.0, Unit::Percent, 0), "23%");
        assert_eq!(format_range(12.0, 37.0, Unit::Dollar, 0), "$12 - $37");
    }
}
