//! Two-level factorial starts with recursive shrinking and combinatorial multistart.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::DesignPoint;
use crate::error::{DesignError, Result};
use crate::generators::candidates::DomainBox;

/// Default volume fraction kept at each shrink level.
pub const DEFAULT_SHRINK: f64 = 0.5;

/// Enumerating more combinations than this per stage switches to random sampling.
const ENUMERATION_LIMIT: u128 = 20_000;

/// Sign columns of the regular fraction: nonempty subsets of the `b`
/// pseudo-factors, singletons first, then by size, then lexicographically.
fn generator_columns(n: usize) -> (usize, Vec<Vec<usize>>) {
    let b = (usize::BITS - n.leading_zeros()) as usize; // ceil(log2(n + 1))
    let mut cols: Vec<Vec<usize>> = (1u32..(1 << b))
        .map(|mask| (0..b).filter(|j| mask >> j & 1 == 1).collect())
        .collect();
    cols.sort_by(|a: &Vec<usize>, c| a.len().cmp(&c.len()).then_with(|| a.cmp(c)));
    cols.truncate(n);
    (b, cols)
}

/// Corners as bit masks: bit `i` set means dimension `i` sits at its upper bound.
/// Reduced-design corners come first, then the remaining full-design corners in
/// binary counting order. Returns the list and the reduced size `S_r`.
pub fn ordered_corners(n: usize) -> (Vec<u64>, usize) {
    let (b, cols) = generator_columns(n);
    let mut reduced = Vec::with_capacity(1 << b);
    for run in 0u64..(1 << b) {
        let mut mask = 0u64;
        for (i, col) in cols.iter().enumerate() {
            let minus = col.iter().filter(|&&j| run >> j & 1 == 0).count();
            if minus % 2 == 0 {
                mask |= 1 << i;
            }
        }
        reduced.push(mask);
    }
    let s_r = reduced.len();
    let in_reduced: HashSet<u64> = reduced.iter().copied().collect();
    let rest = (0u64..(1 << n)).filter(|c| !in_reduced.contains(c));
    reduced.extend(rest);
    (reduced, s_r)
}

fn check(domain: &DomainBox, n_points: usize, shrink: f64) -> Result<()> {
    if n_points == 0 {
        return Err(DesignError::InvalidArgument("factorial design needs N >= 1".into()));
    }
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(DesignError::InvalidArgument("shrink must lie in (0, 1)".into()));
    }
    if domain.dim() > 30 {
        return Err(DesignError::Capability(format!(
            "full factorial enumeration in {} dimensions",
            domain.dim()
        )));
    }
    Ok(())
}

/// Points for a selection of positions in the level-wise corner sequence.
fn realize(domain: &DomainBox, shrink: f64, corners: &[u64], positions: &[usize]) -> Vec<DesignPoint> {
    let s_f = corners.len();
    let mut boxes = vec![domain.clone()];
    positions
        .iter()
        .map(|&pos| {
            let level = pos / s_f;
            while boxes.len() <= level {
                let next = boxes.last().unwrap().shrink(shrink);
                boxes.push(next);
            }
            let mask = corners[pos % s_f];
            boxes[level].corner(|i| mask >> i & 1 == 1)
        })
        .collect()
}

/// `N` corner points: reduced design first, then the rest of the full design,
/// then corners of successively shrunk centered boxes.
pub fn factorial(domain: &DomainBox, n_points: usize, shrink: f64) -> Result<Vec<DesignPoint>> {
    check(domain, n_points, shrink)?;
    let (corners, _) = ordered_corners(domain.dim());
    let positions: Vec<usize> = (0..n_points).collect();
    Ok(realize(domain, shrink, &corners, &positions))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Stage {
    fixed: Vec<usize>,
    pool: Vec<usize>,
    choose: usize,
}

impl Stage {
    fn candidates(&self, rng: &mut ChaCha8Rng, needed: usize) -> Vec<Vec<usize>> {
        let assemble = |pick: &[usize]| {
            let mut sel: Vec<usize> = self.fixed.clone();
            sel.extend(pick.iter().map(|&i| self.pool[i]));
            sel.sort_unstable();
            sel
        };
        let total = binomial(self.pool.len(), self.choose);
        if total <= ENUMERATION_LIMIT {
            let mut all: Vec<Vec<usize>> = combinations(self.pool.len(), self.choose)
                .iter()
                .map(|c| assemble(c))
                .collect();
            all.shuffle(rng);
            all
        } else {
            let mut idx: Vec<usize> = (0..self.pool.len()).collect();
            (0..needed.saturating_mul(4).max(16))
                .map(|_| {
                    idx.shuffle(rng);
                    assemble(&idx[..self.choose])
                })
                .collect()
        }
    }
}

/// `runs` distinct corner selections of size `N`. Run 0 is [`factorial`]; later
/// runs vary the free slots at the deepest level, first among completions of
/// the reduced design, then among all corners of that level, then across
/// further shrunk levels. Stage order is shuffled per seed.
pub fn factorial_multistart(
    domain: &DomainBox,
    n_points: usize,
    runs: usize,
    shrink: f64,
    seed: u64,
) -> Result<Vec<Vec<DesignPoint>>> {
    check(domain, n_points, shrink)?;
    if runs == 0 {
        return Err(DesignError::InvalidArgument("multistart needs runs >= 1".into()));
    }
    let (corners, s_r) = ordered_corners(domain.dim());
    let s_f = corners.len();
    let full_levels = (n_points - 1) / s_f;
    let base_offset = full_levels * s_f;
    let free = n_points - base_offset;
    let prefix: Vec<usize> = (0..base_offset).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut selections: Vec<Vec<usize>> = Vec::with_capacity(runs);
    let mut push = |sel: Vec<usize>, selections: &mut Vec<Vec<usize>>| {
        if seen.insert(sel.clone()) {
            selections.push(sel);
        }
    };
    push((0..free).collect(), &mut selections);

    let mut stages = Vec::new();
    if free <= s_r {
        stages.push(Stage { fixed: vec![], pool: (0..s_r).collect(), choose: free });
    } else {
        stages.push(Stage { fixed: (0..s_r).collect(), pool: (s_r..s_f).collect(), choose: free - s_r });
    }
    stages.push(Stage { fixed: vec![], pool: (0..s_f).collect(), choose: free });

    let mut depth = 2;
    let mut stage_iter = stages.into_iter();
    while selections.len() < runs {
        let stage = match stage_iter.next() {
            Some(s) => s,
            None => {
                if depth > 64 {
                    break;
                }
                let s = Stage { fixed: vec![], pool: (0..depth * s_f).collect(), choose: free };
                depth += 1;
                s
            }
        };
        for sel in stage.candidates(&mut rng, runs - selections.len()) {
            if selections.len() >= runs {
                break;
            }
            push(sel, &mut selections);
        }
    }

    Ok(selections
        .into_iter()
        .map(|sel| {
            let positions: Vec<usize> =
                prefix.iter().copied().chain(sel.iter().map(|&p| p + base_offset)).collect();
            realize(domain, shrink, &corners, &positions)
        })
        .collect())
}
