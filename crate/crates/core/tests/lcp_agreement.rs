mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use terrain_pose::lcp::{contact_lcp, default_max_pivots, CONTACT_REGULARIZATION};
use terrain_pose::scenario::LoadedScenario;
use terrain_pose::{
    lcp_contact_forces, lemke_solve, solve_forces, LcpStatus, SvdThreshold, GRAVITY,
};

#[test]
fn svd_and_lemke_agree_on_seeded_random_problems() {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 1 + (seed as usize % 24);
        let (prob, mass) = common::random_contact_problem(&mut rng, p);
        let f = solve_forces(&prob, SvdThreshold::default()).unwrap();
        let g = lcp_contact_forces(&prob).unwrap();
        let worst = (&f - &g).amax();
        assert!(
            worst <= 1e-3 * mass * GRAVITY,
            "seed {seed}, p {p}: {worst} N apart\nsvd {f}\nlcp {g}"
        );
    }
}

#[test]
fn svd_and_lemke_agree_along_every_bundled_drop() {
    for file in common::bundled_scenarios() {
        let loaded = LoadedScenario::load(&file).unwrap();
        let mg = loaded.model.weight();
        for (i, prob) in common::drop_problems(&loaded).iter().enumerate() {
            let f = solve_forces(prob, SvdThreshold::default()).unwrap();
            let g = lcp_contact_forces(prob).unwrap();
            let worst = (&f - &g).amax();
            assert!(
                worst <= 1e-3 * mg,
                "{} problem {i}: {worst} N apart\nsvd {f}\nlcp {g}",
                loaded.name
            );
        }
    }
}

#[test]
fn svd_and_lemke_agree_to_relative_precision() {
    let mut problems: Vec<(String, terrain_pose::ContactProblem)> = Vec::new();
    for file in common::bundled_scenarios() {
        let loaded = LoadedScenario::load(&file).unwrap();
        for (i, prob) in common::drop_problems(&loaded).into_iter().enumerate() {
            problems.push((format!("{} problem {i}", loaded.name), prob));
        }
    }
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 1 + (seed as usize % 24);
        problems.push((
            format!("seed {seed}"),
            common::random_contact_problem(&mut rng, p).0,
        ));
    }
    for (label, prob) in &problems {
        let f = solve_forces(prob, SvdThreshold::default()).unwrap();
        let g = lcp_contact_forces(prob).unwrap();
        assert!(
            (&f - &g).amax() <= 1e-6 * f.amax(),
            "{label}\nsvd {f}\nlcp {g}"
        );
    }
}

#[test]
fn lemke_is_complementary_on_bundled_problems() {
    for file in common::bundled_scenarios() {
        let loaded = LoadedScenario::load(&file).unwrap();
        for prob in common::drop_problems(&loaded) {
            let lcp = contact_lcp(&prob, CONTACT_REGULARIZATION);
            let sol = lemke_solve(&lcp, default_max_pivots(prob.size()));
            assert_eq!(sol.status, LcpStatus::Solved);
            let scale = 1.0 + sol.z.norm() * sol.w.norm();
            assert!(
                sol.complementarity().abs() <= 1e-9 * scale,
                "{}: {}",
                loaded.name,
                sol.complementarity()
            );
            assert!(sol.z.min() >= -1e-12);
            assert!(
                sol.w.min() >= -1e-12 * lcp.q.amax().max(1.0),
                "{}: {}",
                loaded.name,
                sol.w.min()
            );
        }
    }
}
