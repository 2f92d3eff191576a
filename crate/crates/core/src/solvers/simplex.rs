/// Euclidean projection onto the probability simplex `{w >= 0, Σ w = 1}`.
///
/// Sort-based threshold: with `u` sorted descending, the threshold is
/// `θ = (Σ_{i<=ρ} u_i − 1)/ρ` for the largest `ρ` with `u_ρ > θ_ρ`, and the
/// projection is `max(v − θ, 0)`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}
