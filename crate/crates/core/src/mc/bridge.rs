use rayon::prelude::*;
use serde::Serialize;

use super::decay::median;
use super::{digest_of, with_workers};
use crate::error::{Error, Result};
use crate::model::Copula;
use crate::rng::{derive_seed, Substream};
use crate::special::compensated_sum;

/// One estimated covariance surface on the (0, 1) lattice with its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeSurface {
    pub name: &'static str,
    pub estimate: Vec<Vec<f64>>,
    pub standard_error: Vec<Vec<f64>>,
    pub theory: Vec<Vec<f64>>,
    pub sup_deviation: f64,
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeReport {
    pub copula: Copula,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub config_digest: String,
    pub lattice: Vec<f64>,
    pub margin1: BridgeSurface,
    pub margin2: BridgeSurface,
    pub cross: BridgeSurface,
    /// Median over replications of max over the lattice of |α_{i,n}(s) − ε_{i,n}(s)|, per margin.
    /// With ε = √n(s − U_(⌈ns⌉)) the empirical and quantile processes agree
    /// asymptotically, so this is the Bahadur–Kiefer distance.
    pub bahadur_kiefer_sup: [f64; 2],
    pub sup_tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KieferRung {
    pub n: usize,
    pub median_sup: [f64; 2],
}

#[derive(Serialize)]
struct BridgeKey<'a> {
    copula: &'a Copula,
    n: usize,
    replications: usize,
    seed: u64,
    lattice: &'a [f64],
}

struct Replication {
    quantile: [Vec<f64>; 2],
    kiefer: [f64; 2],
}

fn check_inputs(copula: &Copula, n: usize, replications: usize, lattice: &[f64]) -> Result<()> {
    copula.validate()?;
    if n < 100 {
        return Err(Error::config(format!("bridge check needs n >= 100, got {n}")));
    }
    if replications < 2 {
        return Err(Error::config("bridge check needs at least 2 replications"));
    }
    if lattice.is_empty() || lattice.iter().any(|&s| !(s > 0.0 && s < 1.0)) || lattice.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::config(
            "bridge lattice must be strictly increasing points in (0, 1)",
        ));
    }
    Ok(())
}

/// ε(s) = √n(s − U_(⌈ns⌉)) on the lattice and max |α(s) − ε(s)| with
/// α(s) = √n(F_n(s) − s), for one sorted margin.
fn margin(sorted: &[f64], lattice: &[f64]) -> (Vec<f64>, f64) {
    let n = sorted.len();
    let root = (n as f64).sqrt();
    let mut quantile = Vec::with_capacity(lattice.len());
    let mut kiefer = 0.0_f64;
    for &s in lattice {
        let k = ((n as f64 * s).ceil() as usize).clamp(1, n);
        let eps = root * (s - sorted[k - 1]);
        let alpha = root * (sorted.partition_point(|&u| u <= s) as f64 / n as f64 - s);
        quantile.push(eps);
        kiefer = kiefer.max((alpha - eps).abs());
    }
    (quantile, kiefer)
}

fn replicate(copula: &Copula, n: usize, lattice: &[f64], stream: Substream) -> Replication {
    let mut rng = stream.rng();
    let (mut u, mut v): (Vec<f64>, Vec<f64>) = (0..n).map(|_| copula.sample(&mut rng)).unzip();
    u.sort_by(f64::total_cmp);
    v.sort_by(f64::total_cmp);
    let (q1, k1) = margin(&u, lattice);
    let (q2, k2) = margin(&v, lattice);
    Replication {
        quantile: [q1, q2],
        kiefer: [k1, k2],
    }
}

fn simulate(
    copula: &Copula,
    n: usize,
    replications: usize,
    seed: u64,
    lattice: &[f64],
    workers: usize,
) -> Result<Vec<Replication>> {
    with_workers(workers, || {
        (0..replications as u64)
            .into_par_iter()
            .map(|r| replicate(copula, n, lattice, Substream::new(seed, r)))
            .collect()
    })
}

fn surface(
    name: &'static str,
    reps: &[Replication],
    a: usize,
    b: usize,
    lattice: &[f64],
    theory: impl Fn(f64, f64) -> f64,
) -> BridgeSurface {
    let g = lattice.len();
    let r = reps.len() as f64;
    let mean = |side: usize, k: usize| compensated_sum(reps.iter().map(|x| x.quantile[side][k])) / r;
    let means = [
        (0..g).map(|k| mean(0, k)).collect::<Vec<_>>(),
        (0..g).map(|k| mean(1, k)).collect(),
    ];
    let mut out = BridgeSurface {
        name,
        estimate: vec![vec![0.0; g]; g],
        standard_error: vec![vec![0.0; g]; g],
        theory: vec![vec![0.0; g]; g],
        sup_deviation: 0.0,
        max_abs_z: 0.0,
    };
    for i in 0..g {
        for j in 0..g {
            let products: Vec<f64> = reps
                .iter()
                .map(|x| (x.quantile[a][i] - means[a][i]) * (x.quantile[b][j] - means[b][j]))
                .collect();
            let mp = compensated_sum(products.iter().copied()) / r;
            let var = compensated_sum(products.iter().map(|p| (p - mp).powi(2))) / (r - 1.0);
            let estimate = mp * r / (r - 1.0);
            let se = (var / r).sqrt();
            let exact = theory(lattice[i], lattice[j]);
            let dev = (estimate - exact).abs();
            out.estimate[i][j] = estimate;
            out.standard_error[i][j] = se;
            out.theory[i][j] = exact;
            out.sup_deviation = out.sup_deviation.max(dev);
            if se > 0.0 {
                out.max_abs_z = out.max_abs_z.max(dev / se);
            }
        }
    }
    out
}

/// Estimates the covariance surfaces of the two marginal uniform quantile
/// processes of a copula sample and compares them with the Brownian-bridge
/// pair limit: min(s, t) − st on each margin and C(s, t) − st across.
pub fn bridge_check(
    copula: Copula,
    n: usize,
    replications: usize,
    seed: u64,
    lattice: &[f64],
    sup_tolerance: f64,
    workers: usize,
) -> Result<BridgeReport> {
    check_inputs(&copula, n, replications, lattice)?;
    let reps = simulate(&copula, n, replications, seed, lattice, workers)?;
    let bridge = |s: f64, t: f64| s.min(t) - s * t;
    let margin1 = surface("margin1", &reps, 0, 0, lattice, bridge);
    let margin2 = surface("margin2", &reps, 1, 1, lattice, bridge);
    let cross = surface("cross", &reps, 0, 1, lattice, |s, t| copula.cdf(s, t) - s * t);
    let mut k1: Vec<f64> = reps.iter().map(|x| x.kiefer[0]).collect();
    let mut k2: Vec<f64> = reps.iter().map(|x| x.kiefer[1]).collect();
    let passed = [&margin1, &margin2, &cross]
        .iter()
        .all(|s| s.sup_deviation <= sup_tolerance);
    Ok(BridgeReport {
        copula,
        n,
        replications,
        seed,
        config_digest: digest_of(&BridgeKey {
            copula: &copula,
            n,
            replications,
            seed,
            lattice,
        }),
        lattice: lattice.to_vec(),
        margin1,
        margin2,
        cross,
        bahadur_kiefer_sup: [median(&mut k1), median(&mut k2)],
        sup_tolerance,
        passed,
    })
}

/// Bahadur–Kiefer medians along a ladder of sample sizes.
pub fn bahadur_kiefer_ladder(
    copula: Copula,
    ns: &[usize],
    replications: usize,
    seed: u64,
    lattice: &[f64],
    workers: usize,
) -> Result<Vec<KieferRung>> {
    ns.iter()
        .map(|&n| {
            check_inputs(&copula, n, replications, lattice)?;
            let reps = simulate(
                &copula,
                n,
                replications,
                derive_seed(seed, &format!("kiefer-n{n}")),
                lattice,
                workers,
            )?;
            let mut k1: Vec<f64> = reps.iter().map(|x| x.kiefer[0]).collect();
            let mut k2: Vec<f64> = reps.iter().map(|x| x.kiefer[1]).collect();
            Ok(KieferRung {
                n,
                median_sup: [median(&mut k1), median(&mut k2)],
            })
        })
        .collect()
}
