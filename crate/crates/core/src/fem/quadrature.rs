/// Quadrature rules on the reference simplex as (barycentric coordinates,
/// weight relative to the cell measure).
pub(crate) fn gauss_rule(dim: usize) -> &'static [([f64; 3], f64)] {
    const G: f64 = 0.211_324_865_405_187_1; // (1 − 1/√3)/2
    const LINE: [([f64; 3], f64); 2] = [([1.0 - G, G, 0.0], 0.5), ([G, 1.0 - G, 0.0], 0.5)];
    const TRI: [([f64; 3], f64); 3] = [
        ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
        ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
        ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
    ];
    if dim == 1 {
        &LINE
    } else {
        &TRI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_rule_is_exact_for_cubics() {
        // ∫_0^1 x^3 dx with x = λ_1
        let s: f64 = gauss_rule(1).iter().map(|(l, w)| w * l[1].powi(3)).sum();
        assert!((s - 0.25).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_is_exact_for_quadratics() {
        // reference triangle of area 1/2: ∫ x² = 1/12, ∫ xy = 1/24
        let xx: f64 = gauss_rule(2).iter().map(|(l, w)| 0.5 * w * l[1] * l[1]).sum();
        let xy: f64 = gauss_rule(2).iter().map(|(l, w)| 0.5 * w * l[1] * l[2]).sum();
        assert!((xx - 1.0 / 12.0).abs() < 1e-15);
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
    }
}
