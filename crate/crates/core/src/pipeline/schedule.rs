/// Contrastive-loss coefficient at iteration `i`: the closed form of
/// `μᵢ = μᵢ₋₁ · e^{−β}`, i.e. `μ₀ · e^{−iβ}`.
pub fn mu_schedule(iteration: u64, mu0: f64, beta: f64) -> f64 {
    mu0 * libm::exp(-(iteration as f64) * beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_and_one_e_fold() {
        assert_eq!(mu_schedule(0, 0.5, 1e-4), 0.5);
        let e = core::f64::consts::E;
        assert!((mu_schedule(10_000, 0.5, 1e-4) - 0.5 / e).abs() < 1e-9);
    }

    #[test]
    fn recurrence_agrees_with_closed_form() {
        let step = libm::exp(-1e-4);
        let mut mu = 0.5;
        for i in 1..=100_000u64 {
            mu *= step;
            if i % 1000 == 0 {
                assert!((mu - mu_schedule(i, 0.5, 1e-4)).abs() < 1e-12, "i = {i}");
            }
        }
    }
}
