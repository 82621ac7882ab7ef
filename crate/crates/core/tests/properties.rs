use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ilicast::epiweek::{Epiweek, Season};
use ilicast::geography::{AdjacencyGraph, DEFAULT_ADJACENCY_CSV};
use ilicast::ingest::{parse_canonical, Observation, ObservationTable};
use ilicast::regression::{fit_median, fit_ols, fit_poisson};
use ilicast::runner::sha256_hex;
use ilicast::states::state_codes;

fn design(n: usize, p: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (
        prop::collection::vec(-3.0..3.0f64, n * (p - 1)),
        prop::collection::vec(-5.0..5.0f64, n),
    )
        .prop_map(move |(xs, ys)| {
            let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { xs[i * (p - 1) + j - 1] });
            (x, DVector::from_vec(ys))
        })
}

fn sized() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (1usize..=5).prop_flat_map(|p| (p + 3..=30usize).prop_flat_map(move |n| design(n, p)))
}

proptest! {
    #[test]
    fn ols_residuals_orthogonal((x, y) in sized()) {
        let fit = fit_ols(&x, &y).unwrap();
        let r = &y - &x * &fit.coef;
        let g = x.transpose() * r;
        prop_assert!(g.amax() < 1e-8 * (1.0 + y.amax()) * x.nrows() as f64, "{g}");
    }

    #[test]
    fn lad_sign_counts((x, y) in sized()) {
        let fit = fit_median(&x, &y).unwrap();
        let r = &y - &x * &fit.coef;
        let half = x.nrows() as f64 / 2.0;
        let pos = r.iter().filter(|&&v| v > 1e-7).count() as f64;
        let neg = r.iter().filter(|&&v| v < -1e-7).count() as f64;
        prop_assert!(pos <= half && neg <= half, "{pos} positive, {neg} negative of {}", x.nrows());
    }

    #[test]
    fn poisson_score_equations(
        (x, _) in sized(),
        seed in 0u64..1000,
    ) {
        let n = x.nrows();
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as f64 / (1u64 << 31) as f64
        };
        let x = x.map(|v| v / 6.0);
        let off = DVector::from_fn(n, |_, _| (500.0 + 4000.0 * next()).ln());
        let counts = DVector::from_fn(n, |i, _| (off[i].exp() * 0.02 * (0.5 + next())).round());
        let fit = fit_poisson(&x, &counts, &off).unwrap();
        prop_assert!(fit.converged);
        let mu = (&x * &fit.coef + &off).map(f64::exp);
        let score = x.transpose() * (&counts - &mu);
        prop_assert!(score.amax() < 1e-6 * counts.sum().max(1.0), "{score}");
    }

    #[test]
    fn canonical_csv_round_trip(
        rows in prop::collection::btree_map(
            (0usize..50, 2010i32..2020, 1u8..=52),
            (0u64..5000, 0u64..100_000, prop::option::of(0u64..500)),
            1..40,
        )
    ) {
        let codes: Vec<&str> = state_codes().collect();
        let obs: Vec<Observation> = rows
            .into_iter()
            .map(|((s, y, w), (c, extra, providers))| {
                let total = c + extra;
                Observation {
                    location: codes[s].to_string(),
                    week: Epiweek::new(y, w).unwrap(),
                    ili_pct: if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 },
                    ili_count: c,
                    total_visits: total,
                    providers,
                }
            })
            .collect();
        let table = ObservationTable::from_rows(obs).unwrap();
        let text = table.to_csv_string();
        let again = parse_canonical(text.as_bytes()).unwrap();
        prop_assert!(again.rejects.is_empty());
        prop_assert_eq!(&again.table, &table);
        prop_assert_eq!(again.table.to_csv_string(), text);
    }

    #[test]
    fn epiweek_text_and_date_round_trip(y in 1990i32..2040, w in 1u8..=53) {
        if let Ok(e) = Epiweek::new(y, w) {
            prop_assert_eq!(e.to_string().parse::<Epiweek>().unwrap(), e);
            prop_assert_eq!(Epiweek::from_date(e.start_date()), e);
            prop_assert_eq!(e.succ().pred(), e);
        }
        let s = Season::new(y);
        prop_assert_eq!(s.to_string().parse::<Season>().unwrap(), s);
    }
}

#[test]
fn bundled_adjacency_is_pinned() {
    let digest = sha256_hex(DEFAULT_ADJACENCY_CSV.as_bytes());
    assert_eq!(
        digest,
        "4d640b3c3a781ca703299a75cd5fc328adba94754ee6bd26a1f4ca8f58e38de3"
    );
    let g = AdjacencyGraph::default();
    assert_eq!(g.states().count(), 50);
    let directed = g.edges().count();
    // 105 land borders both ways, AK→WA, HI→CA/OR/WA.
    assert_eq!(directed, 2 * 105 + 1 + 3);
}
