use std::fs::File;

use brwcap::capacity::{cap_exact, cap_lower_bound, cap_upper_bound};
use brwcap::green::GreenEvaluator;
use brwcap::lattice::LatticeStepDistribution;
use brwcap::tree_walk::read_points_csv;

// A 4000-point walk path whose interior escape probabilities come out
// slightly negative from Green-value error.
#[test]
fn walk_path_at_the_solve_ceiling() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/walk_path_4000.csv");
    let pts = read_points_csv(File::open(path).unwrap()).unwrap();
    assert_eq!(pts.len(), 4000);
    let ev = GreenEvaluator::new(LatticeStepDistribution::lazy_srw(3, 0.5).unwrap()).unwrap();
    let res = cap_exact(&pts, &ev).unwrap();
    let e = res.escape_probs.as_ref().unwrap();
    assert!(e.iter().all(|&x| x > -1e-6 && x <= 1.0));
    let lo = cap_lower_bound(&pts, &ev, None).unwrap().value;
    let hi = cap_upper_bound(&pts, &ev).unwrap().value;
    assert!(
        lo <= res.value && res.value <= hi,
        "{lo} {} {hi}",
        res.value
    );
}
