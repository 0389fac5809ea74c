#![allow(dead_code)]

use doric_core::matrix::CoverageMatrix;
use rand::Rng;

pub const MINMAX_CSV: &str = "\
test,u1,u2,u3,u4,error
t1,0,1,1,0,1
t2,0,0,1,1,1
t3,0,0,1,0,1
t4,1,0,0,1,0
t5,1,1,0,0,0
";

pub fn minmax() -> CoverageMatrix {
    CoverageMatrix::from_csv(MINMAX_CSV).unwrap()
}

pub fn build(cover: Vec<Vec<bool>>, error: Vec<bool>) -> CoverageMatrix {
    let units = cover[0].len();
    CoverageMatrix::new(
        (1..=units).map(|i| format!("u{i}")).collect(),
        (1..=cover.len()).map(|k| format!("t{k}")).collect(),
        cover,
        error,
    )
    .unwrap()
}

pub fn from_rows(rows: &[(&[u8], u8)]) -> CoverageMatrix {
    build(
        rows.iter()
            .map(|(r, _)| r.iter().map(|&b| b == 1).collect())
            .collect(),
        rows.iter().map(|&(_, e)| e == 1).collect(),
    )
}

/// Every matrix of the given shape whose failing tests each cover a unit.
pub fn all_matrices(tests: usize, units: usize) -> impl Iterator<Item = CoverageMatrix> {
    let cells = tests * units;
    (0u32..1 << cells).flat_map(move |cbits| {
        (0u32..1 << tests).filter_map(move |ebits| {
            let cover: Vec<Vec<bool>> = (0..tests)
                .map(|k| {
                    (0..units)
                        .map(|i| cbits >> (k * units + i) & 1 == 1)
                        .collect()
                })
                .collect();
            let error: Vec<bool> = (0..tests).map(|k| ebits >> k & 1 == 1).collect();
            let ok = (0..tests).all(|k| !error[k] || cover[k].iter().any(|&c| c));
            ok.then(|| build(cover, error))
        })
    })
}

/// A random matrix with 1..=max_tests tests and 1..=max_units units.
pub fn random_matrix(rng: &mut impl Rng, max_tests: usize, max_units: usize) -> CoverageMatrix {
    let tests = rng.random_range(1..=max_tests);
    let units = rng.random_range(1..=max_units);
    let cover: Vec<Vec<bool>> = (0..tests)
        .map(|_| (0..units).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    let error = cover
        .iter()
        .map(|row| rng.random_bool(0.5) && row.iter().any(|&c| c))
        .collect();
    build(cover, error)
}

/// Subsets of `0..n` with at most `max` elements.
pub fn small_subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|b| b.count_ones() as usize <= max)
        .map(|b| (0..n).filter(|&i| b >> i & 1 == 1).collect())
        .collect()
}
