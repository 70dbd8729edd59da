use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use crate::coarsening::{CoarseningScheme, CompleteAtom, DiscreteCompleteDistribution, Level};
use crate::error::Result;
use crate::scalar::Field;

/// Binary `X = (X1, X2)` with `C in {0, inf}` and `sigma_0(X) = X1`.
/// Coarsening depends on the hidden `X2`, so the outcome `X2` is not missing
/// at random, while follow-up is randomised within `X1`.
///
/// Returns the law and `g(X) = X2`.
pub fn mnar_example<P: Field>() -> (DiscreteCompleteDistribution<P>, Vec<P>) {
    let q = |n, d| P::from_ratio(n, d);
    let scheme = Arc::new(
        CoarseningScheme::from_projections(
            vec!["X1".into(), "X2".into()],
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            &[(0, vec![0])],
        )
        .expect("valid scheme"),
    );
    let mass = [q(3, 10), q(1, 5), q(3, 20), q(7, 20)];
    let coarsened = |x2: i64| if x2 == 0 { q(3, 10) } else { q(7, 10) };
    let eta = |x1: i64| if x1 == 0 { q(2, 5) } else { q(1, 4) };
    let mut atoms = Vec::new();
    for (i, p) in mass.into_iter().enumerate() {
        let x = scheme.point(i).to_vec();
        let c = coarsened(x[1]);
        let e = eta(x[0]);
        let atom = |level, follow_up| CompleteAtom {
            level,
            point: i,
            follow_up,
        };
        atoms.push((atom(Level::Full, false), p.clone() * (P::one() - c.clone())));
        atoms.push((atom(Level::Finite(0), true), p.clone() * c.clone() * e.clone()));
        atoms.push((atom(Level::Finite(0), false), p * c * (P::one() - e)));
    }
    let g = scheme.support().iter().map(|x| q(x[1] as u64, 1)).collect();
    (DiscreteCompleteDistribution::new(scheme, atoms).expect("valid law"), g)
}

/// A random law over `X in {0,1} x {0,1,2} x {0,1}` with up to three finite
/// levels observing nested sets of coordinates. Follow-up depends only on
/// `(C, sigma_C(X))` and is bounded away from zero, so the law can be
/// identified from its observed part. Probabilities are ratios of small
/// integers.
pub fn random_coarsened_law<P: Field, R: Rng + ?Sized>(rng: &mut R) -> Result<DiscreteCompleteDistribution<P>> {
    let mut support = Vec::new();
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..2 {
                support.push(vec![a, b, c]);
            }
        }
    }
    let candidates = [(0u32, vec![0usize]), (1, vec![0, 1]), (2, vec![])];
    let levels: Vec<(u32, Vec<usize>)> = loop {
        let chosen: Vec<_> = candidates.iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
        if !chosen.is_empty() {
            break chosen;
        }
    };
    let scheme = Arc::new(CoarseningScheme::from_projections(
        vec!["X1".into(), "X2".into(), "X3".into()],
        support,
        &levels,
    )?);

    // cell = (level, stratum members); the full level has one cell per point
    let mut cells: Vec<(Level, Vec<usize>)> = (0..scheme.support().len()).map(|i| (Level::Full, vec![i])).collect();
    for &(k, _) in &levels {
        let fragments: BTreeSet<Vec<i64>> = (0..scheme.support().len())
            .map(|i| scheme.sigma(Level::Finite(k), i).map(|s| s.to_vec()))
            .collect::<Result<_>>()?;
        for sigma in fragments {
            cells.push((Level::Finite(k), scheme.stratum(k, &sigma).to_vec()));
        }
    }
    let cell_weights: Vec<u64> = cells.iter().map(|_| rng.random_range(0..=5)).collect();
    let total: u64 = cell_weights.iter().sum::<u64>().max(1);
    let mut atoms = Vec::new();
    for ((level, members), w) in cells.iter().zip(cell_weights) {
        if w == 0 {
            continue;
        }
        let lambda: Vec<u64> = loop {
            let l: Vec<u64> = members.iter().map(|_| rng.random_range(0..=4)).collect();
            if l.iter().any(|&x| x > 0) {
                break l;
            }
        };
        let lambda_total: u64 = lambda.iter().sum();
        let den: u64 = rng.random_range(2..=5);
        let num: u64 = rng.random_range(1..=den);
        for (&i, &l) in members.iter().zip(&lambda) {
            let base = P::from_ratio(w, total) * P::from_ratio(l, lambda_total);
            let atom = |follow_up| CompleteAtom {
                level: *level,
                point: i,
                follow_up,
            };
            match level {
                Level::Full => atoms.push((atom(false), base)),
                Level::Finite(_) => {
                    atoms.push((atom(true), base.clone() * P::from_ratio(num, den)));
                    atoms.push((atom(false), base * P::from_ratio(den - num, den)));
                }
            }
        }
    }
    if atoms.is_empty() {
        // every cell drew weight zero; put all mass on the first point
        atoms.push((
            CompleteAtom {
                level: Level::Full,
                point: 0,
                follow_up: false,
            },
            P::one(),
        ));
    }
    DiscreteCompleteDistribution::new(scheme, atoms)
}
