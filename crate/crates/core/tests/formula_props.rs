//! Formula-layer invariants over seeded random formulas and signals.

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use tubetree::formula::{evaluate, evaluate_realtime, horizon_steps, to_pnf, PredicateDef, PredicateTable, Shape, Signal};
use tubetree_oracle::gen::{signal_1d, FormulaGen};
use tubetree_oracle::stl::holds;

fn table() -> PredicateTable {
    [("a", 1.0, 3.0), ("b", 2.0, 5.0), ("c", 4.0, 4.0)]
        .into_iter()
        .map(|(id, lo, hi)| PredicateDef::new(id, Shape::Box { lower: vec![lo], upper: vec![hi] }).unwrap())
        .collect()
}

fn case(seed: u64) -> (tubetree::formula::Formula, Vec<Vec<f64>>, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut gen = FormulaGen::new(&["a", "b", "c"], 4, 3);
    gen.allow_not = true;
    let f = gen.sample(&mut rng);
    let h = horizon_steps(&f, 1.0).unwrap();
    let values: Vec<f64> = (0..7).map(f64::from).collect();
    let x = signal_1d(&mut rng, &values, h + 3);
    (f, x, h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluator_matches_reference(seed in any::<u64>()) {
        let (f, x, h) = case(seed);
        let t = table();
        let sig = Signal::new(x.clone(), 1.0);
        for k in 0..x.len() - h {
            prop_assert_eq!(evaluate(&f, &t, &sig, k).unwrap(), holds(&f, &t, &x, 1.0, k).unwrap(), "{} at {}", f, k);
        }
    }

    #[test]
    fn positive_normal_form_preserves_verdict(seed in any::<u64>()) {
        let (f, x, h) = case(seed);
        let t = table();
        let pnf = to_pnf(&f).unwrap();
        prop_assert!(pnf.is_pnf());
        let sig = Signal::new(x.clone(), 1.0);
        for k in 0..x.len() - h {
            prop_assert_eq!(evaluate(&pnf, &t, &sig, k).unwrap(), evaluate(&f, &t, &sig, k).unwrap());
        }
    }

    #[test]
    fn eventually_is_true_until(seed in any::<u64>()) {
        let (f, x, h) = case(seed);
        let t = table();
        let g = f.desugar_eventually();
        let sig = Signal::new(x.clone(), 1.0);
        for k in 0..x.len() - h {
            prop_assert_eq!(evaluate(&g, &t, &sig, k).unwrap(), evaluate(&f, &t, &sig, k).unwrap());
        }
    }

    #[test]
    fn realtime_degenerates_at_its_start(seed in any::<u64>()) {
        let (f, x, h) = case(seed);
        let t = table();
        let sig = Signal::new(x.clone(), 1.0);
        for k in 0..x.len() - h {
            let suffix = Signal::starting_at(x[k..].to_vec(), 1.0, k);
            prop_assert_eq!(evaluate_realtime(&f, &t, &suffix, k).unwrap(), evaluate(&f, &t, &sig, k).unwrap());
        }
    }
}
