//! Cross-checks of the simplex against independent oracles.

mod common;

use peakreg_core::lp::{LinearProgram, LpStatus, Relation, VarId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn fifty_seeded_lps_match_vertex_enumeration() {
    let (solved, infeasible) = common::vertex_comparison(50, 0x5ee1);
    // The seed mix should exercise both outcomes.
    assert!(solved >= 20, "only {solved} optimal instances");
    assert!(infeasible >= 1, "no infeasible instances drawn");
}

#[test]
fn classifies_handmade_infeasible_and_unbounded() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var(0.0, 10.0, 1.0);
    let y = lp.add_var(0.0, 10.0, 1.0);
    lp.add_row(Relation::Ge, 8.0, &[(x, 1.0), (y, 1.0)]);
    lp.add_row(Relation::Le, 3.0, &[(x, 1.0), (y, 1.0)]);
    assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

    let mut lp = LinearProgram::new();
    let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let y = lp.add_var(0.0, f64::INFINITY, -1.0);
    lp.add_row(Relation::Le, 5.0, &[(x, 1.0), (y, -1.0)]);
    assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
}

#[test]
fn abs_split_embedded_matches_grid_search() {
    // minimize 0.5|x + 2y - 1| + x + 0.3 y over the box [-2, 2]^2; the
    // objective is piecewise linear, so a fine grid bounds the optimum.
    let mut lp = LinearProgram::new();
    let x = lp.add_var(-2.0, 2.0, 1.0);
    let y = lp.add_var(-2.0, 2.0, 0.3);
    let _aux = lp.abs_split(&[(x, 1.0), (y, 2.0)], -1.0, 0.5);
    let sol = lp.solve().unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);

    let mut best = f64::INFINITY;
    let steps = 400;
    for i in 0..=steps {
        for j in 0..=steps {
            let xv = -2.0 + 4.0 * i as f64 / steps as f64;
            let yv = -2.0 + 4.0 * j as f64 / steps as f64;
            let obj = 0.5 * (xv + 2.0 * yv - 1.0).abs() + xv + 0.3 * yv;
            if obj < best {
                best = obj;
            }
        }
    }
    assert!(
        (sol.objective_value - best).abs() <= 2e-2,
        "lp {} vs grid {best}",
        sol.objective_value
    );
    assert!(sol.objective_value <= best + 1e-9);
}

#[test]
fn epigraph_value_matches_direct_max_at_solution() {
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..20 {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 1.0, rng.gen_range(-1.0..1.0));
        let y = lp.add_var(-1.0, 1.0, rng.gen_range(-1.0..1.0));
        let exprs: Vec<(Vec<(VarId, f64)>, f64)> = (0..4)
            .map(|_| {
                (
                    vec![(x, rng.gen_range(-1.0..1.0)), (y, rng.gen_range(-1.0..1.0))],
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let borrowed: Vec<(&[(VarId, f64)], f64)> =
            exprs.iter().map(|(t, c)| (t.as_slice(), *c)).collect();
        let aux = lp.epigraph_max(&borrowed, 1.0).unwrap();
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let direct = exprs
            .iter()
            .map(|(t, c)| t.iter().map(|(v, coef)| coef * sol.value(*v)).sum::<f64>() + c)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((sol.value(aux) - direct).abs() <= 1e-7);
    }
}
