//! Shared test utilities: an exact rational reference for small box LPs and
//! random LP generators.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use num::rational::BigRational;
use num::{BigInt, FromPrimitive, Zero};
use pma_core::lp::{LinearProgram, Relation, Row, Sense};
use pma_core::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum RefOutcome {
    Optimal(f64),
    Infeasible,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite data")
}

/// Exact reference for LPs whose variables live in finite boxes: enumerate
/// candidate vertices as solutions of square subsystems (constraint rows
/// taken tight plus variable bounds), keep the feasible ones, and optimize
/// over them. The feasible region is a polytope, so feasibility and the
/// optimum are both decided by vertices.
pub fn reference_box_lp(lp: &LinearProgram) -> RefOutcome {
    let n = lp.num_vars();
    assert!(
        lp.lower.iter().all(|l| l.is_finite()) && lp.upper.iter().all(|u| u.is_finite()),
        "reference solver needs bounded boxes"
    );
    // Tightenable rows: every constraint row plus both bounds per variable.
    let mut rows: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for row in &lp.rows {
        rows.push((row.coeffs.iter().map(|&c| rat(c)).collect(), rat(row.rhs)));
    }
    for j in 0..n {
        let mut lo = vec![BigRational::zero(); n];
        lo[j] = BigRational::from_i64(1).unwrap();
        rows.push((lo.clone(), rat(lp.lower[j])));
        rows.push((lo, rat(lp.upper[j])));
    }

    let obj: Vec<BigRational> = lp.objective.iter().map(|&c| rat(c)).collect();
    let mut best: Option<BigRational> = None;
    let total = rows.len();
    let mut combo: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&rows, &combo, n) {
            if feasible(lp, &x) {
                let value: BigRational = obj.iter().zip(&x).map(|(c, v)| c * v).sum();
                let better = match (&best, lp.sense) {
                    (None, _) => true,
                    (Some(b), Sense::Max) => value > *b,
                    (Some(b), Sense::Min) => value < *b,
                };
                if better {
                    best = Some(value);
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return match best {
                    Some(v) => RefOutcome::Optimal(rational_to_f64(&v)),
                    None => RefOutcome::Infeasible,
                };
            }
            i -= 1;
            if combo[i] < total - (n - i) {
                combo[i] += 1;
                for k in i + 1..n {
                    combo[k] = combo[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn rational_to_f64(v: &BigRational) -> f64 {
    let numer = v.numer();
    let denom = v.denom();
    big_to_f64(numer) / big_to_f64(denom)
}

fn big_to_f64(v: &BigInt) -> f64 {
    v.to_string().parse::<f64>().expect("bigint fits f64 range")
}

fn solve_square(
    rows: &[(Vec<BigRational>, BigRational)],
    picked: &[usize],
    n: usize,
) -> Option<Vec<BigRational>> {
    let mut a: Vec<Vec<BigRational>> = picked
        .iter()
        .map(|&r| {
            let mut v = rows[r].0.clone();
            v.push(rows[r].1.clone());
            v
        })
        .collect();
    // Gaussian elimination over the rationals.
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        let pivot = a[col][col].clone();
        for c in col..=n {
            a[col][c] = &a[col][c] / &pivot;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..=n {
                    let v = &a[col][c] * &factor;
                    a[r][c] = &a[r][c] - v;
                }
            }
        }
    }
    Some((0..n).map(|r| a[r][n].clone()).collect())
}

fn feasible(lp: &LinearProgram, x: &[BigRational]) -> bool {
    for (j, v) in x.iter().enumerate() {
        if *v < rat(lp.lower[j]) || *v > rat(lp.upper[j]) {
            return false;
        }
    }
    for row in &lp.rows {
        let lhs: BigRational = row.coeffs.iter().zip(x).map(|(c, v)| rat(*c) * v).sum();
        let rhs = rat(row.rhs);
        let ok = match row.rel {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => (lhs - rhs).is_zero(),
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Random box LP with small integer data.
pub fn random_box_lp(rng: &mut Rng) -> LinearProgram {
    let n = 2 + rng.next_index(3);
    let nrows = 2 + rng.next_index(5);
    let mut rows = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let coeffs: Vec<f64> = (0..n).map(|_| (rng.next_index(11) as f64) - 5.0).collect();
        let rel = match rng.next_index(3) {
            0 => Relation::Le,
            1 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = (rng.next_index(21) as f64) - 5.0;
        rows.push(Row { coeffs, rel, rhs });
    }
    let objective: Vec<f64> = (0..n).map(|_| (rng.next_index(11) as f64) - 5.0).collect();
    LinearProgram {
        sense: if rng.next_index(2) == 0 {
            Sense::Max
        } else {
            Sense::Min
        },
        objective,
        rows,
        lower: vec![0.0; n],
        upper: vec![6.0; n],
    }
}

/// Inequality system with a designed verdict: either built around an
/// interior point (feasible with margin) or with a contradictory pair
/// (infeasible with gap). Returns (rows incl. box rows, dim, verdict).
pub fn designed_feasibility_system(rng: &mut Rng) -> (Vec<Row>, usize, bool) {
    let n = 2 + rng.next_index(3);
    let x0: Vec<f64> = (0..n).map(|_| (rng.next_index(5) as f64) + 1.0).collect();
    let mut rows = Vec::new();
    for j in 0..n {
        let mut lo = vec![0.0; n];
        lo[j] = 1.0;
        rows.push(Row {
            coeffs: lo.clone(),
            rel: Relation::Ge,
            rhs: 0.0,
        });
        rows.push(Row {
            coeffs: lo,
            rel: Relation::Le,
            rhs: 6.0,
        });
    }
    let feasible = rng.next_index(2) == 0;
    let extra = 2 + rng.next_index(4);
    for _ in 0..extra {
        let coeffs: Vec<f64> = (0..n).map(|_| (rng.next_index(11) as f64) - 5.0).collect();
        let at_x0: f64 = coeffs.iter().zip(&x0).map(|(a, b)| a * b).sum();
        rows.push(Row {
            coeffs,
            rel: Relation::Le,
            rhs: at_x0 + 1.0,
        });
    }
    if !feasible {
        let coeffs: Vec<f64> = (0..n).map(|_| (rng.next_index(9) as f64) - 4.0).collect();
        let coeffs = if coeffs.iter().all(|&c| c == 0.0) {
            let mut c = coeffs;
            c[0] = 1.0;
            c
        } else {
            coeffs
        };
        let at_x0: f64 = coeffs.iter().zip(&x0).map(|(a, b)| a * b).sum();
        rows.push(Row {
            coeffs: coeffs.clone(),
            rel: Relation::Le,
            rhs: at_x0,
        });
        rows.push(Row {
            coeffs,
            rel: Relation::Ge,
            rhs: at_x0 + 2.0,
        });
    }
    (rows, n, feasible)
}
