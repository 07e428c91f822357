//! K-means over block vectors: k-means++ seeding, Lloyd iterations and
//! nearest-lego assignment.
//!
//! Distances are squared Euclidean, accumulated in f64. Ties go to the lowest
//! centroid index. Results depend only on the inputs and the seed, never on
//! the rayon pool size: assignment is per-point and every reduction runs
//! sequentially in block order.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::blocking::BlockSet;
use crate::error::{Error, Result};

/// PRNG behind seeding. Changing it changes every compressed output.
pub type SeedRng = Xoshiro256PlusPlus;
pub const SEED_RNG_NAME: &str = "xoshiro256++/rand_xoshiro-0.7";

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_REL_TOL: f64 = 1e-6;

/// The K legos, each `b*b` values, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    b: usize,
    legos: Vec<f32>,
}

impl Codebook {
    pub fn new(b: usize, legos: Vec<f32>) -> Result<Self> {
        let dim = b * b;
        if dim == 0 || legos.is_empty() || !legos.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: legos.len() });
        }
        if let Some(v) = legos.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite lego value {v}")));
        }
        Ok(Codebook { b, legos })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.b * self.b
    }

    pub fn k(&self) -> usize {
        self.legos.len() / self.dim()
    }

    pub fn lego(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.legos[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f32] {
        &self.legos
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.legos.chunks_exact(self.dim())
    }
}

/// Lego index for every block, in canonical block order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub indices: Vec<u32>,
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansParams { k, seed, max_iters: DEFAULT_MAX_ITERS, rel_tol: DEFAULT_REL_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub codebook: Codebook,
    pub assignment: Assignment,
    /// Inertia after the seeding assignment and after every Lloyd step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// The last Lloyd step left every assignment unchanged.
    pub converged: bool,
}

#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Nearest centroid, lowest index on ties.
#[inline]
fn nearest(point: &[f32], centroids: &[f32], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j as u32, d);
        }
    }
    best
}

fn assign_all(points: &[f32], dim: usize, centroids: &[f32]) -> (Vec<u32>, Vec<f64>) {
    points.par_chunks_exact(dim).map(|p| nearest(p, centroids, dim)).unzip()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if k > n {
        return Err(Error::TooFewBlocks { k, blocks: n });
    }
    Ok(())
}

/// Maps each block to its Euclidean-nearest lego.
pub fn assign(blocks: &BlockSet, codebook: &Codebook) -> Result<Assignment> {
    if blocks.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch { expected: codebook.dim(), actual: blocks.dim() });
    }
    let (indices, dists) = assign_all(blocks.values(), blocks.dim(), codebook.values());
    Ok(Assignment { indices, inertia: dists.iter().sum() })
}

/// k-means++ (D² weighting) initial centroids.
pub fn kmeanspp_seed(blocks: &BlockSet, k: usize, seed: u64) -> Result<Codebook> {
    check_k(k, blocks.len())?;
    let centroids = seed_points(blocks.values(), blocks.dim(), k, seed);
    Codebook::new(blocks.b(), centroids)
}

fn seed_points(points: &[f32], dim: usize, k: usize, seed: u64) -> Vec<f32> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = SeedRng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * dim);

    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = points.par_chunks_exact(dim).map(|p| squared_distance(p, point(first))).collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    last_positive = i;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            // fewer distinct points than K: duplicates are unavoidable
            rng.random_range(0..n)
        };
        let c = point(pick);
        centroids.extend_from_slice(c);
        d2.par_iter_mut().zip(points.par_chunks_exact(dim)).for_each(|(d, p)| {
            let nd = squared_distance(p, c);
            if nd < *d {
                *d = nd;
            }
        });
    }
    centroids
}

/// Moves empty centroids onto the points farthest from their current
/// centroid, then reassigns. Gives up once no point sits off a centroid.
fn repair_empty(points: &[f32], dim: usize, centroids: &mut [f32], indices: &mut Vec<u32>, dists: &mut Vec<f64>) {
    let k = centroids.len() / dim;
    for _ in 0..k {
        let mut counts = vec![0usize; k];
        for &i in indices.iter() {
            counts[i as usize] += 1;
        }
        let empties: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if empties.is_empty() {
            return;
        }
        let mut moved = false;
        for e in empties {
            let mut far = None;
            let mut far_d = 0.0;
            for (i, &d) in dists.iter().enumerate() {
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            let Some(p) = far else { break };
            let src = &points[p * dim..(p + 1) * dim];
            centroids[e * dim..(e + 1) * dim].copy_from_slice(src);
            for (q, pt) in points.chunks_exact(dim).enumerate() {
                let d = squared_distance(pt, src);
                if d < dists[q] {
                    dists[q] = d;
                }
            }
            moved = true;
        }
        let (i, d) = assign_all(points, dim, centroids);
        *indices = i;
        *dists = d;
        if !moved {
            return;
        }
    }
}

fn update_means(points: &[f32], dim: usize, indices: &[u32], centroids: &mut [f32]) {
    let k = centroids.len() / dim;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.chunks_exact(dim).zip(indices) {
        let j = j as usize;
        counts[j] += 1;
        for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
            *s += v as f64;
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let n = counts[j] as f64;
        for (c, s) in centroids[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
            *c = (s / n) as f32;
        }
    }
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Stops after `max_iters` update steps, when an update leaves every
/// assignment unchanged, or when the relative inertia improvement drops below
/// `rel_tol`.
pub fn kmeans(blocks: &BlockSet, params: &KmeansParams) -> Result<KmeansResult> {
    check_k(params.k, blocks.len())?;
    if params.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    if !(params.rel_tol >= 0.0 && params.rel_tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("rel_tol must be finite and >= 0, got {}", params.rel_tol)));
    }
    let (points, dim) = (blocks.values(), blocks.dim());

    let mut centroids = seed_points(points, dim, params.k, params.seed);
    let (mut indices, mut dists) = assign_all(points, dim, &centroids);
    repair_empty(points, dim, &mut centroids, &mut indices, &mut dists);
    let mut inertia: f64 = dists.iter().sum();
    let mut history = vec![inertia];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iters {
        iterations += 1;
        update_means(points, dim, &indices, &mut centroids);
        let (mut next, mut next_d) = assign_all(points, dim, &centroids);
        repair_empty(points, dim, &mut centroids, &mut next, &mut next_d);
        let next_inertia: f64 = next_d.iter().sum();
        history.push(next_inertia);
        let unchanged = next == indices;
        let improvement = if inertia > 0.0 { (inertia - next_inertia) / inertia } else { 0.0 };
        indices = next;
        inertia = next_inertia;
        if unchanged {
            converged = true;
            break;
        }
        if inertia == 0.0 || improvement < params.rel_tol {
            break;
        }
    }

    Ok(KmeansResult {
        codebook: Codebook::new(blocks.b(), centroids)?,
        assignment: Assignment { indices, inertia },
        inertia_history: history,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(b: usize, vecs: &[&[f32]]) -> BlockSet {
        BlockSet::from_vectors(b, vecs.concat()).unwrap()
    }

    #[test]
    fn two_point_masses() {
        let zero: &[f32] = &[0.0; 4];
        let one: &[f32] = &[1.0; 4];
        let mut vecs = vec![zero; 5];
        vecs.extend(vec![one; 5]);
        let r = kmeans(&set(2, &vecs), &KmeansParams::new(2, 7)).unwrap();
        let mut legos: Vec<_> = r.codebook.iter().map(|l| l.to_vec()).collect();
        legos.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(legos, vec![vec![0.0; 4], vec![1.0; 4]]);
        assert_eq!(r.assignment.inertia, 0.0);
    }

    #[test]
    fn exact_match_and_tie_break() {
        let cb = Codebook::new(
            1,
            vec![10.0, -1.0, 5.0, 3.0, 1.0], // lego 1 and lego 4 are both 1 away from 0.0
        )
        .unwrap();
        let blocks = set(1, &[&[3.0], &[0.0]]);
        let a = assign(&blocks, &cb).unwrap();
        assert_eq!(a.indices, vec![3, 1]);
        assert_eq!(a.inertia, 1.0);
    }

    #[test]
    fn assign_checks_dims() {
        let cb = Codebook::new(2, vec![0.0; 4]).unwrap();
        let blocks = set(1, &[&[3.0]]);
        assert!(matches!(assign(&blocks, &cb), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn too_many_clusters() {
        let blocks = set(1, &[&[1.0], &[2.0]]);
        assert!(matches!(kmeans(&blocks, &KmeansParams::new(3, 0)), Err(Error::TooFewBlocks { k: 3, blocks: 2 })));
        assert!(matches!(kmeanspp_seed(&blocks, 3, 0), Err(Error::TooFewBlocks { .. })));
        assert!(kmeans(&blocks, &KmeansParams::new(0, 0)).is_err());
    }

    #[test]
    fn seeding_exhausts_distinct_blocks() {
        let vals: Vec<f32> = (0..40).map(|i| i as f32 * 0.5).collect();
        let blocks = BlockSet::from_vectors(2, vals).unwrap();
        let cb = kmeanspp_seed(&blocks, 10, 3).unwrap();
        let mut got: Vec<Vec<f32>> = cb.iter().map(|l| l.to_vec()).collect();
        let mut want: Vec<Vec<f32>> = blocks.iter().map(|b| b.to_vec()).collect();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, want);
        assert_eq!(kmeanspp_seed(&blocks, 10, 3).unwrap(), cb);
    }

    #[test]
    fn d2_seeding_picks_the_outlier() {
        // If the first pick is a zero vector, the only positive D² weight is the 1-vector.
        let zero: &[f32] = &[0.0; 4];
        let mut vecs = vec![zero; 99];
        vecs.push(&[1.0; 4]);
        let blocks = set(2, &vecs);
        for seed in 0..200 {
            let cb = kmeanspp_seed(&blocks, 2, seed).unwrap();
            let mut firsts: Vec<f32> = cb.iter().map(|l| l[0]).collect();
            firsts.sort_by(f32::total_cmp);
            assert_eq!(firsts, vec![0.0, 1.0], "seed {seed}");
        }
    }

    #[test]
    fn k_equal_to_distinct_count_is_exact() {
        let distinct: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32, (i * i) as f32, -(i as f32), 0.25]).collect();
        let mut vals = Vec::new();
        for rep in 0..4 {
            for (i, d) in distinct.iter().enumerate() {
                if (i + rep) % 3 != 0 {
                    vals.extend_from_slice(d);
                }
            }
            vals.extend_from_slice(&distinct[rep]);
        }
        let blocks = BlockSet::from_vectors(2, vals).unwrap();
        let r = kmeans(&blocks, &KmeansParams::new(6, 11)).unwrap();
        assert_eq!(r.assignment.inertia, 0.0);
        let mut legos: Vec<Vec<f32>> = r.codebook.iter().map(|l| l.to_vec()).collect();
        legos.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(legos, distinct);
    }
}
