use crate::duhamel::DirectSolver;
use crate::error::Result;
use crate::laplacian_forms::DiscreteOperator;
use crate::metric_charts::FormField;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// ‖u(t)‖₂ in the √g-weighted inner product, in the order of `times`.
    pub norms: Vec<f64>,
    pub omega_norm: f64,
    pub symmetry_defect: f64,
    /// Relative slack granted to each comparison.
    pub slack: f64,
    pub contraction: bool,
    pub monotone: bool,
    /// Largest ‖u(t)‖₂/‖ω‖₂ - 1 seen.
    pub worst_excess: f64,
    pub pass: bool,
}

/// ‖e^{-tΔ}ω‖₂ ≤ ‖ω‖₂ for every t and nonincreasing in t. The slack is
/// 1e-12 plus the operator's measured symmetry defect.
pub fn l2_contraction_check(op: &DiscreteOperator, omega: &FormField, times: &[f64]) -> Result<ContractionReport> {
    let solver = DirectSolver::new(op);
    let sols = solver.solve_many(omega, times)?;
    let norms: Vec<f64> = sols.iter().map(|u| op.weighted_norm(&u.to_vec())).collect();
    let omega_norm = op.weighted_norm(&omega.to_vec());
    let symmetry_defect = op.symmetry_defect();
    let slack = 1e-12 + symmetry_defect;
    let allowed = omega_norm * (1.0 + slack);
    let worst_excess = if omega_norm > 0.0 {
        norms.iter().map(|n| n / omega_norm - 1.0).fold(f64::NEG_INFINITY, f64::max)
    } else {
        0.0
    };
    let contraction = norms.iter().all(|&n| n <= allowed);
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let monotone = order.windows(2).all(|w| norms[w[1]] <= norms[w[0]] * (1.0 + slack) + 1e-300);
    Ok(ContractionReport {
        times: times.to_vec(),
        norms,
        omega_norm,
        symmetry_defect,
        slack,
        contraction,
        monotone,
        worst_excess,
        pass: contraction && monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian_forms::assemble_discrete;
    use crate::metric_charts::{flat_torus, ChartMetric};
    use proptest::prelude::*;

    #[test]
    fn time_zero_is_equality() {
        let m = flat_torus(2);
        let grid = m.domain().grid(8);
        let op = assemble_discrete(&m, 0, &grid).unwrap();
        let w = FormField::from_fn(&grid, 0, |_, x| x[0].sin() + 1.0).unwrap();
        let rep = l2_contraction_check(&op, &w, &[0.0]).unwrap();
        assert_eq!(rep.norms[0], rep.omega_norm);
        assert!(rep.pass);
    }

    #[test]
    fn eigenvector_decay_rate() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let op = assemble_discrete(&m, 0, &grid).unwrap();
        let h = grid.h[0];
        let lam = 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        let w = FormField::from_fn(&grid, 0, |_, x| x[1].cos()).unwrap();
        let times = [0.1, 0.5, 2.0];
        let rep = l2_contraction_check(&op, &w, &times).unwrap();
        for (t, n) in times.iter().zip(&rep.norms) {
            let want = (-lam * t).exp() * rep.omega_norm;
            assert!((n - want).abs() < 1e-12 * rep.omega_norm, "{t}: {n} vs {want}");
        }
    }

    #[test]
    fn zero_data_is_vacuous() {
        let m = flat_torus(2);
        let grid = m.domain().grid(8);
        let op = assemble_discrete(&m, 1, &grid).unwrap();
        let rep = l2_contraction_check(&op, &FormField::zeros(&grid, 1).unwrap(), &[0.5, 1.0]).unwrap();
        assert!(rep.pass);
        assert!(rep.norms.iter().all(|&n| n == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn random_data_contracts(seed in 0u64..1000, p in 0usize..2) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = flat_torus(2);
            let grid = m.domain().grid(8);
            let op = assemble_discrete(&m, p, &grid).unwrap();
            let v: Vec<f64> = (0..op.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = FormField::from_vec(&grid, p, &v).unwrap();
            let times: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..5.0)).collect();
            let rep = l2_contraction_check(&op, &w, &times).unwrap();
            prop_assert!(rep.pass, "{:?}", rep);
        }
    }
}
