use distopt::linalg::spectral_norm;
use distopt::network::{
    decompose, mean_laplacian, AdjacencyMatrix, GeneratorGraph, GraphDistribution, GraphModel, MatrixNorm,
};
use distopt::{replication_rng, SimRng};
use nalgebra::DMatrix;
use rand::SeedableRng;

#[test]
fn gossip_atoms_are_drawn_uniformly() {
    let d = GraphDistribution::gossip(3, 1.0).unwrap();
    let mut rng = SimRng::seed_from_u64(2024);
    let mut counts = [0usize; 3];
    let draws = 30_000;
    for _ in 0..draws {
        counts[d.sample_index(&mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() <= 0.02);
    }
}

#[test]
fn sampled_laplacians_average_to_the_mean_laplacian() {
    let d = GraphDistribution::gossip(3, 1.0).unwrap();
    let lbar = mean_laplacian(&d).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]) / 3.0;
    assert!((&lbar - &expected).amax() < 1e-15);
    let mut rng = replication_rng(8, 0);
    let draws = 100_000;
    let mut acc = DMatrix::zeros(3, 3);
    for _ in 0..draws {
        acc += d.sample(&mut rng).laplacian();
    }
    let mean = acc / draws as f64;
    // Each entry is a scaled Bernoulli(1/3) mean: std-err about 0.0015.
    assert!((mean - lbar).amax() < 0.01);
}

#[test]
fn laplacian_variance_by_enumeration() {
    let d = GraphDistribution::gossip(3, 1.0).unwrap();
    let lbar = mean_laplacian(&d).unwrap();
    let brute: f64 = d
        .atoms()
        .map(|(a, p)| p * spectral_norm(&(a.laplacian() - &lbar)).powi(2))
        .sum();
    let c01 = d.laplacian_variance(MatrixNorm::Spectral);
    assert!((c01 - brute).abs() < 1e-12);
    assert!((c01 - 1.0).abs() < 1e-12);
    let scaled = GraphDistribution::new(d.atoms().map(|(a, p)| (a.scaled(3.0), p)).collect()).unwrap();
    assert!((scaled.laplacian_variance(MatrixNorm::Spectral) - 9.0 * c01).abs() < 1e-12);
}

#[test]
fn decomposition_of_the_gossip_mean() {
    let d = GraphDistribution::gossip(3, 1.0).unwrap();
    let dec = decompose(&mean_laplacian(&d).unwrap()).unwrap();
    assert!((dec.s[0] - 1.0).abs() < 1e-12 && (dec.s[1] - 1.0).abs() < 1e-12);
    assert!(dec.v2.iter().all(|v| (v - 1.0 / 3f64.sqrt()).abs() < 1e-15));
    let v = dec.v();
    let mut target = DMatrix::zeros(3, 3);
    target.view_mut((0, 0), (2, 2)).copy_from(&dec.s_matrix());
    assert!((v.transpose() * &dec.mean_laplacian * &v - target).amax() < 1e-12);
}

#[test]
fn generator_moments_approach_the_exact_ones() {
    let exact = GraphDistribution::gossip(3, 1.0).unwrap();
    let atoms: Vec<AdjacencyMatrix> = exact.atoms().map(|(a, _)| a.clone()).collect();
    let gen = GeneratorGraph::new(3, move |rng| {
        use rand::Rng;
        atoms[rng.random_range(0..3)].clone()
    });
    let approx = GraphModel::Generator(gen).moments(MatrixNorm::Spectral).unwrap();
    let truth = GraphModel::Finite(exact).moments(MatrixNorm::Spectral).unwrap();
    assert!(approx.estimated && !truth.estimated);
    assert!((approx.mean_laplacian - truth.mean_laplacian).amax() < 0.01);
    let diff = approx.edge_second_moments - &truth.edge_second_moments;
    for i in 0..3 {
        for j in 0..3 {
            let se = approx.edge_second_moments_std_err[(i, j)];
            assert!(diff[(i, j)].abs() <= 4.0 * se + 1e-15);
        }
    }
}

#[test]
fn disconnected_mean_graph_is_rejected() {
    let a = AdjacencyMatrix::from_edges(3, &[(0, 1, 1.0)], true).unwrap();
    assert!(matches!(
        GraphDistribution::single(a),
        Err(distopt::Error::MeanGraphDisconnected { .. })
    ));
}
