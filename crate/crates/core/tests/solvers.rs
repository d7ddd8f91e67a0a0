use andersonkit::bench::convection_diffusion;
use andersonkit::precond::{build_preconditioner, PrecondKind, PrecondSpec};
use andersonkit::sparse::{matvec, parse_matrix_market, write_matrix_market};
use andersonkit::{gmres_solve, norm2, Aar, LinearProblem, Mode, SolveConfig, SparseMatrix};
use proptest::prelude::*;

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(a: &SparseMatrix, b: &[f64]) -> Vec<f64> {
    let mut m = a.to_dense();
    let mut rhs = b.to_vec();
    let n = rhs.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap();
        m.swap(k, p);
        rhs.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    x
}

fn rel_err(x: &[f64], want: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(want).map(|(a, b)| a - b).collect();
    norm2(&d) / norm2(want)
}

#[test]
fn every_mode_matches_direct_solve() {
    let a = convection_diffusion(12, 8.0);
    let b: Vec<f64> = (0..a.n_rows()).map(|i| (i as f64 * 0.37).sin()).collect();
    let want = dense_solve(&a, &b);
    let pc = build_preconditioner(&a, &PrecondSpec::new(PrecondKind::Ilu0)).unwrap();
    for mode in [Mode::Aa, Mode::AlternatingAa] {
        let cfg = SolveConfig {
            omega: 1.0,
            p: 3,
            m: 10,
            tol: 1e-12,
            max_iter: 2000,
            mode,
        };
        let sol = Aar::new(cfg)
            .solve(&LinearProblem::new(&a, &b, Some(&pc)).unwrap(), None)
            .unwrap();
        assert!(sol.converged(), "{mode:?}");
        assert!(rel_err(&sol.x, &want) < 1e-9, "{mode:?}");
    }
    let sol = gmres_solve(&a, &b, Some(&pc), 30, 1e-12, 2000).unwrap();
    assert!(rel_err(&sol.x, &want) < 1e-9);
}

#[test]
fn reordered_and_scaled_preconditioner_still_solves() {
    let a = convection_diffusion(15, 20.0);
    let b = matvec(&a, &vec![1.0; a.n_rows()]).unwrap();
    let spec = PrecondSpec {
        kind: PrecondKind::Ilu0,
        rcm: true,
        diagonal_scaling: true,
    };
    let pc = build_preconditioner(&a, &spec).unwrap();
    let sol = gmres_solve(&a, &b, Some(&pc), 50, 1e-10, 1000).unwrap();
    assert!(sol.converged());
    assert!(sol.x.iter().all(|v| (v - 1.0).abs() < 1e-7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrix_market_round_trip(
        n in 1usize..20,
        entries in prop::collection::vec((0usize..20, 0usize..20, -1e3f64..1e3), 0..60),
    ) {
        let t: Vec<_> = entries.into_iter().filter(|(i, j, _)| *i < n && *j < n).collect();
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let back = parse_matrix_market(buf.as_slice()).unwrap();
        prop_assert_eq!(back.to_dense(), a.to_dense());
    }
}
