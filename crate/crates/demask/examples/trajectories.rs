//! Sample entropy-sum decoding runs on a sticky binary chain and print the
//! batch structure: which positions each iteration reveals, the per-token
//! conditional entropies, and the dyadic size envelopes.
//!
//! Run with: `cargo run --example trajectories`

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use demask::decode::{sample_trajectory, Permutation, Strategy};
use demask::oracle::Oracle;
use demask::suite;

fn main() -> demask::Result<()> {
    let dist = suite::sticky_markov(8, 0.9)?;
    let oracle = Oracle::new(Arc::clone(&dist));
    println!(
        "sticky chain, L = {}, table entropy = {:.4} nats\n",
        dist.seq_len(),
        dist.entropy_nats()
    );

    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for eta in [0.1, 0.5, 1.5] {
        let strategy = Strategy::EntropySum { eta };
        let perm = Permutation::uniform(dist.seq_len(), &mut rng);
        let (tokens, traj) = sample_trajectory(&oracle, &strategy, &perm, &mut rng)?;
        println!("eta = {eta}: scan order {:?}", perm.order());
        println!("  emitted {tokens}");
        for (t, batch) in traj.batches().iter().enumerate() {
            let entropies: Vec<String> =
                batch.entropies.iter().map(|h| format!("{h:.3}")).collect();
            println!(
                "  iteration {:>2}: positions {:?}, entropies [{}], sum {:.3}",
                t + 1,
                batch.positions,
                entropies.join(", "),
                batch.entropy_sum
            );
        }
        println!(
            "  T = {}, batch sizes {:?}, envelopes {:?}, crossings {} (cap {})\n",
            traj.iterations(),
            traj.batch_sizes(),
            traj.envelopes(),
            traj.crossings(),
            (dist.seq_len() as f64).log2().floor() as usize + 1
        );
    }
    Ok(())
}
