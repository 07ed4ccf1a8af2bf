//! Lloyd's k-means for the IVF coarse quantizer.
//!
//! Training is fully deterministic for a given seed: initialization picks
//! input rows by distance-weighted sampling (k-means++) with a seeded
//! generator, assignment breaks distance ties toward the lower centroid
//! index, and means accumulate in f64 before narrowing back to f32
//! storage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::l2_sq;

pub(crate) struct KMeans {
    /// `nlist * dimension` row-major centroid matrix.
    pub centroids: Vec<f32>,
    /// Nearest-centroid index per input row.
    pub assignments: Vec<u32>,
}

/// Trains `nlist` centroids over `vectors` (row-major, `dimension` wide).
///
/// Callers guarantee at least `nlist` rows. Iteration stops early once an
/// assignment pass changes nothing; every exit path leaves `assignments`
/// consistent with the returned centroids.
pub(crate) fn train(
    vectors: &[f32],
    dimension: usize,
    nlist: usize,
    iterations: u32,
    seed: u64,
) -> KMeans {
    let count = vectors.len() / dimension;
    debug_assert!(count >= nlist && nlist >= 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(vectors, dimension, nlist, &mut rng);

    let mut assignments = vec![u32::MAX; count];
    assign(vectors, dimension, &centroids, &mut assignments);

    let mut sums = vec![0f64; nlist * dimension];
    let mut sizes = vec![0u64; nlist];
    for _ in 0..iterations {
        sums.fill(0.0);
        sizes.fill(0);
        for (row, &list) in assignments.iter().enumerate() {
            let list = list as usize;
            sizes[list] += 1;
            let v = &vectors[row * dimension..(row + 1) * dimension];
            let sum = &mut sums[list * dimension..(list + 1) * dimension];
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += f64::from(x);
            }
        }
        for list in 0..nlist {
            // An emptied cluster keeps its previous centroid.
            if sizes[list] == 0 {
                continue;
            }
            let divisor = sizes[list] as f64;
            let centroid = &mut centroids[list * dimension..(list + 1) * dimension];
            let sum = &sums[list * dimension..(list + 1) * dimension];
            for (c, s) in centroid.iter_mut().zip(sum) {
                *c = (s / divisor) as f32;
            }
        }
        if !assign(vectors, dimension, &centroids, &mut assignments) {
            break;
        }
    }

    KMeans {
        centroids,
        assignments,
    }
}

/// K-means++ seeding: the first centroid is a uniformly sampled row, each
/// further one a row sampled with probability proportional to its squared
/// distance from the nearest centroid chosen so far. Rows already chosen
/// carry zero mass, so duplicates appear only when every remaining row
/// coincides with a centroid.
fn init_plus_plus(
    vectors: &[f32],
    dimension: usize,
    nlist: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let count = vectors.len() / dimension;
    let row = |r: usize| &vectors[r * dimension..(r + 1) * dimension];

    let mut centroids = Vec::with_capacity(nlist * dimension);
    let first = rng.gen_range(0..count);
    centroids.extend_from_slice(row(first));

    let mut best_sq: Vec<f64> = (0..count)
        .map(|r| f64::from(l2_sq(row(r), row(first))))
        .collect();
    for _ in 1..nlist {
        let total: f64 = best_sq.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = count - 1;
            for (r, &mass) in best_sq.iter().enumerate() {
                target -= mass;
                if target <= 0.0 {
                    chosen = r;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..count)
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(chosen));
        let chosen_centroid = &centroids[start..];
        for (r, best) in best_sq.iter_mut().enumerate() {
            let sq = f64::from(l2_sq(row(r), chosen_centroid));
            if sq < *best {
                *best = sq;
            }
        }
    }
    centroids
}

/// Reassigns every row to its nearest centroid (ties toward the lower
/// index); returns whether anything moved.
fn assign(vectors: &[f32], dimension: usize, centroids: &[f32], assignments: &mut [u32]) -> bool {
    let nlist = centroids.len() / dimension;
    let mut changed = false;
    for (row, slot) in assignments.iter_mut().enumerate() {
        let v = &vectors[row * dimension..(row + 1) * dimension];
        let mut best = 0u32;
        let mut best_sq = f32::INFINITY;
        for list in 0..nlist {
            let sq = l2_sq(v, &centroids[list * dimension..(list + 1) * dimension]);
            if sq < best_sq {
                best_sq = sq;
                best = list as u32;
            }
        }
        if *slot != best {
            *slot = best;
            changed = true;
        }
    }
    changed
}
