//! Mean Laplacian of the three-node gossip model and its spectral splitting.

use distopt::network::{decompose, mean_laplacian, GraphDistribution, MatrixNorm};

fn main() -> distopt::Result<()> {
    let gossip = GraphDistribution::gossip(3, 1.0)?;
    for (a, p) in gossip.atoms() {
        println!("p = {p:.4}, edges: {:?}", (0..3).flat_map(|i| (i + 1..3).map(move |j| (i, j))).filter(|&(i, j)| a.weight(i, j) > 0.0).collect::<Vec<_>>());
    }
    let lbar = mean_laplacian(&gossip)?;
    println!("mean Laplacian:{lbar}");
    let d = decompose(&lbar)?;
    println!("positive eigenvalues: {}", d.s.transpose());
    println!("kappa* = {:.6}", d.kappa_star);
    println!("V1:{}", d.v1);
    println!("E[a_ij^2]:{}", gossip.edge_second_moments());
    println!("E||L_k - Lbar||^2 (spectral) = {:.6}", gossip.laplacian_variance(MatrixNorm::Spectral));
    Ok(())
}
