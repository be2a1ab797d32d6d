mod common;

use genre_embed::genregraph::Relation;
use genre_embed::retrofit::{retrofit, solve_direct, RetrofitConfig, Retrofitter, Scheme};
use genre_embed::translate::cosine;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Uniform), Just(Scheme::Typed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Fully known graphs settle within the default 100 iterations. Unknown
    // concepts (α = 0) only move by neighbour averaging, which Jacobi
    // propagates slowly along chains, so those families get a larger cap.
    #[test]
    fn converges_within_budget(
        seed in any::<u64>(),
        n in 2usize..=200,
        d in 1usize..=8,
        scheme in scheme(),
        (unknown_rate, max_iters) in prop_oneof![Just((0.0, 100)), Just((0.1, 1000)), Just((0.2, 1000))],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, m) = common::random_instance(&mut rng, n, d, unknown_rate);
        let cfg = RetrofitConfig { max_iters, ..RetrofitConfig::with_scheme(scheme) };
        let r = Retrofitter::new(&m, &g, &cfg).unwrap();
        let out = r.run(false).unwrap();
        prop_assert!(out.converged, "delta {} after {} iterations", out.final_delta, out.iterations);
        prop_assert!(out.final_delta <= cfg.tolerance);
        prop_assert!(out.iterations <= cfg.max_iters);

        // Stationarity residual α(q − q̂) + Σ w (q − q_j) = ∇Φ / 2.
        let residual = r.gradient(out.embeddings.vectors()).unwrap() / 2.0;
        let worst = residual.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        prop_assert!(worst <= 10.0 * cfg.tolerance, "residual {}", worst);

        let before = r.objective(m.vectors()).unwrap();
        let after = r.objective(out.embeddings.vectors()).unwrap();
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn shift_equivariant(seed in any::<u64>(), n in 2usize..30, shift in -3.0f64..3.0, scheme in scheme()) {
        // Adding a constant vector to every known anchor shifts the optimum
        // by the same vector.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, m) = common::random_instance(&mut rng, n, 3, 0.2);
        let mut shifted = m.vectors().clone();
        for (i, mut row) in shifted.rows_mut().into_iter().enumerate() {
            if m.known()[i] {
                row += shift;
            }
        }
        let m2 = m.with_vectors(shifted, m.known().to_vec()).unwrap();
        let cfg = RetrofitConfig::with_scheme(scheme);
        let a = solve_direct(&m, &g, &cfg).unwrap();
        let b = solve_direct(&m2, &g, &cfg).unwrap();
        let diff = (&b - &a - shift).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        prop_assert!(diff <= 1e-9);
    }
}

#[test]
fn bit_identical_across_runs_and_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (g, m) = common::random_instance(&mut rng, 150, 8, 0.2);
    let cfg = RetrofitConfig::default();
    let run = |threads: usize| -> Array2<f64> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| retrofit(&m, &g, &cfg).unwrap().embeddings.vectors().clone())
    };
    let reference = run(1);
    for threads in [1, 2, 4, 7] {
        let q = run(threads);
        assert!(
            q.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits()),
            "{threads} threads"
        );
    }
}

#[test]
fn typed_pulls_star_center_towards_equivalent() {
    let mut nodes = vec![("center", "en"), ("twin", "en")];
    let leaves: Vec<String> = (0..9).map(|i| format!("leaf{i}")).collect();
    nodes.extend(leaves.iter().map(|l| (l.as_str(), "en")));
    let mut edges = vec![("center", "twin", Relation::SameAs)];
    let rels = [
        Relation::StylisticOrigin,
        Relation::MusicSubgenre,
        Relation::Derivative,
        Relation::MusicFusionGenre,
    ];
    for (i, l) in leaves.iter().enumerate() {
        edges.push(("center", l.as_str(), rels[i % rels.len()]));
    }
    let g = common::graph(&nodes, &edges);

    let mut ids = vec!["center", "twin"];
    ids.extend(leaves.iter().map(String::as_str));
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]];
    for i in 0..9 {
        rows.push(vec![1.0, 0.0, 0.1 * i as f64]);
    }
    let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let m = common::matrix(&ids, &rows, &[true; 11]);

    let closeness = |scheme| {
        let out = retrofit(&m, &g, &RetrofitConfig::with_scheme(scheme)).unwrap();
        let q = out.embeddings;
        cosine(
            q.get("center").unwrap().as_slice().unwrap(),
            q.get("twin").unwrap().as_slice().unwrap(),
        )
        .unwrap()
    };
    let typed = closeness(Scheme::Typed);
    let uniform = closeness(Scheme::Uniform);
    assert!(typed > uniform, "typed {typed} vs uniform {uniform}");
}
