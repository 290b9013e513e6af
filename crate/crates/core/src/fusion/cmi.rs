//! k-nearest-neighbour conditional mutual information.
//!
//! `I(A;B|C)` is estimated with the Frenzel-Pompe form of the KSG estimator
//! under the max-norm:
//!
//! ```text
//! psi(k) - mean_i [ psi(n_ac(i) + 1) + psi(n_bc(i) + 1) - psi(n_c(i) + 1) ]
//! ```
//!
//! where `eps_i` is the distance from sample `i` to its k-th neighbour in the
//! joint space and `n_xy(i)` counts the other samples strictly within `eps_i`
//! in the `xy` subspace. Significance comes from a local permutation test:
//! `A` is shuffled only among samples whose `C` values are close, which keeps
//! the dependence between `A` and `C` while destroying any extra dependence
//! on `B`.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::par;
use crate::rng::{derive_seed, derived_rng};

pub const MIN_K: usize = 3;
pub const MAX_K: usize = 15;
pub const DEFAULT_K: usize = 5;
pub const MIN_PERMUTATIONS: usize = 200;
pub const JITTER: f64 = 1e-10;
/// Pairwise distances are cached in memory up to this many samples.
const CACHE_LIMIT: usize = 3000;

#[derive(Clone, Debug, PartialEq)]
pub struct CmiEstimate {
    /// Nats; may be slightly negative.
    pub value: f64,
    pub k: usize,
    pub num_samples: usize,
    pub permutation_pvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmiOptions {
    pub k: usize,
    pub permutations: usize,
    /// Size of the `C`-neighbourhood within which `A` is permuted.
    pub permutation_neighbours: usize,
    pub seed: u64,
}

impl Default for CmiOptions {
    fn default() -> Self {
        CmiOptions {
            k: DEFAULT_K,
            permutations: MIN_PERMUTATIONS,
            permutation_neighbours: 5,
            seed: 0,
        }
    }
}

/// Digamma at the positive integers, `psi(n) = -gamma + sum_{j<n} 1/j`.
fn digamma_table(max: usize) -> Vec<f64> {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut t = vec![f64::NAN; max + 1];
    let mut h = 0.0;
    for (n, slot) in t.iter_mut().enumerate().skip(1) {
        *slot = -EULER_GAMMA + h;
        h += 1.0 / n as f64;
    }
    t
}

enum Distances {
    Cached { n: usize, d: Vec<f64> },
    Raw { dim: usize, data: Vec<f64> },
}

impl Distances {
    fn new(rows: Vec<f64>, n: usize, dim: usize) -> Self {
        if n > CACHE_LIMIT {
            return Distances::Raw { dim, data: rows };
        }
        let raw = Distances::Raw { dim, data: rows };
        let d = par::map_indexed(n, |i| (0..n).map(|j| raw.get(i, j)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect();
        Distances::Cached { n, d }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Distances::Cached { n, d } => d[i * n + j],
            Distances::Raw { dim, data } => {
                let (a, b) = (&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
                a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
            }
        }
    }
}

fn rows_of(name: &str, m: &Tensor) -> Result<(usize, usize)> {
    match m.dims2() {
        Some((n, dim)) if m.shape().len() == 2 => Ok((n, dim)),
        _ => Err(Error::config(
            name,
            format!("expected a samples x features matrix, got {:?}", m.shape()),
        )),
    }
}

fn jittered(m: &Tensor, seed: u64, block: u64) -> Vec<f64> {
    let mut rng = derived_rng(seed, &[0, block]);
    m.data().iter().map(|v| v + JITTER * rng.random::<f64>()).collect()
}

/// Pairwise distances of the three blocks after seeded jitter.
struct Prepared {
    n: usize,
    a: Distances,
    b: Distances,
    c: Distances,
    psi: Vec<f64>,
}

fn prepare(a: &Tensor, b: &Tensor, c: &Tensor, k: usize, seed: u64) -> Result<Prepared> {
    let (na, da) = rows_of("A", a)?;
    let (nb, db) = rows_of("B", b)?;
    let (nc, dc) = rows_of("C", c)?;
    if na != nb || na != nc {
        return Err(Error::config(
            "samples",
            format!("unequal sample counts {na}, {nb}, {nc}"),
        ));
    }
    if !(MIN_K..=MAX_K).contains(&k) {
        return Err(Error::config("k", format!("{k} outside [{MIN_K}, {MAX_K}]")));
    }
    if na < 5 * k {
        return Err(Error::config(
            "samples",
            format!("{na} samples is fewer than 5k = {}", 5 * k),
        ));
    }
    if [a, b, c].iter().any(|m| !m.is_finite()) {
        return Err(Error::data("non-finite value in CMI input"));
    }
    Ok(Prepared {
        n: na,
        a: Distances::new(jittered(a, seed, 0), na, da),
        b: Distances::new(jittered(b, seed, 1), na, db),
        c: Distances::new(jittered(c, seed, 2), na, dc),
        psi: digamma_table(na + 1),
    })
}

impl Prepared {
    /// The estimate with `A` relabelled by `perm` (`A_i := A_perm[i]`).
    fn statistic(&self, k: usize, perm: Option<&[usize]>) -> f64 {
        let n = self.n;
        let pa = |i: usize| perm.map_or(i, |p| p[i]);
        let terms = par::map_indexed(n, |i| {
            let mut joint = Vec::with_capacity(n - 1);
            let mut sub = Vec::with_capacity(n - 1);
            for j in (0..n).filter(|&j| j != i) {
                let da = self.a.get(pa(i), pa(j));
                let db = self.b.get(i, j);
                let dc = self.c.get(i, j);
                joint.push(da.max(db).max(dc));
                sub.push((da.max(dc), db.max(dc), dc));
            }
            let eps = *joint.select_nth_unstable_by(k - 1, f64::total_cmp).1;
            let (mut n_ac, mut n_bc, mut n_c) = (0, 0, 0);
            for &(ac, bc, c) in &sub {
                n_ac += (ac < eps) as usize;
                n_bc += (bc < eps) as usize;
                n_c += (c < eps) as usize;
            }
            self.psi[n_ac + 1] + self.psi[n_bc + 1] - self.psi[n_c + 1]
        });
        self.psi[k] - terms.iter().sum::<f64>() / n as f64
    }

    /// Indices of the `m` nearest samples to each sample in `C`, itself included.
    fn c_neighbourhoods(&self, m: usize) -> Vec<Vec<usize>> {
        let n = self.n;
        par::map_indexed(n, |i| {
            let mut idx: Vec<usize> = (0..n).collect();
            let key = |j: &usize| (if *j == i { -1.0 } else { self.c.get(i, *j) }, *j);
            let m = m.min(n);
            idx.select_nth_unstable_by(m - 1, |x, y| key(x).partial_cmp(&key(y)).expect("finite"));
            idx.truncate(m);
            idx.sort_by(|x, y| key(x).partial_cmp(&key(y)).expect("finite"));
            idx
        })
    }
}

/// Draw a permutation of `A` that only moves values within `C`-neighbourhoods.
fn local_permutation(neighbours: &[Vec<usize>], seed: u64) -> Vec<usize> {
    let n = neighbours.len();
    let mut rng = derived_rng(seed, &[]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut used = vec![false; n];
    let mut perm = vec![0; n];
    for &i in &order {
        let mut cand = neighbours[i].clone();
        cand.shuffle(&mut rng);
        let j = cand.iter().copied().find(|&j| !used[j]).unwrap_or(cand[0]);
        used[j] = true;
        perm[i] = j;
    }
    perm
}

/// The point estimate alone, without a permutation test.
pub fn cmi_value(a: &Tensor, b: &Tensor, c: &Tensor, k: usize, seed: u64) -> Result<f64> {
    Ok(prepare(a, b, c, k, seed)?.statistic(k, None))
}

/// Estimate with the default options and the given `k`.
pub fn cmi_estimate(a: &Tensor, b: &Tensor, c: &Tensor, k: usize) -> Result<CmiEstimate> {
    cmi_estimate_with(
        a,
        b,
        c,
        &CmiOptions {
            k,
            ..Default::default()
        },
    )
}

/// Each argument is a `samples x features` matrix.
pub fn cmi_estimate_with(a: &Tensor, b: &Tensor, c: &Tensor, options: &CmiOptions) -> Result<CmiEstimate> {
    if options.permutations < MIN_PERMUTATIONS {
        return Err(Error::config(
            "permutations",
            format!("{} is fewer than {MIN_PERMUTATIONS}", options.permutations),
        ));
    }
    if options.permutation_neighbours == 0 {
        return Err(Error::config("permutation_neighbours", "must be positive"));
    }
    let k = options.k;
    let prep = prepare(a, b, c, k, options.seed)?;
    let value = prep.statistic(k, None);
    let neighbours = prep.c_neighbourhoods(options.permutation_neighbours);
    let exceed = par::map_indexed(options.permutations, |r| {
        let perm = local_permutation(&neighbours, derive_seed(options.seed, &[1, r as u64]));
        (prep.statistic(k, Some(&perm)) >= value) as usize
    })
    .into_iter()
    .sum::<usize>();
    Ok(CmiEstimate {
        value,
        k,
        num_samples: prep.n,
        permutation_pvalue: (1 + exceed) as f64 / (1 + options.permutations) as f64,
    })
}
