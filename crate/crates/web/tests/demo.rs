use gossip_lab_web::{drift_curve, infection_growth, majority_trajectory};

#[test]
fn majority_trajectory_from_unanimity() {
    let t = majority_trajectory(256, 0.5, 256, 3, 1).unwrap();
    assert!(t.iter().all(|&x| x == 1.0));
    assert_eq!(t.len(), 4 * 8 + 2);
}

#[test]
fn majority_trajectory_breaks_symmetry() {
    let t = majority_trajectory(1024, 0.3, 0, 0, 2).unwrap();
    assert_eq!(t[0], 0.0);
    assert_eq!(t.last().unwrap().abs(), 1.0);
}

#[test]
fn drift_stays_above_bound() {
    let v = drift_curve(0.2, 10_000, 0.1, 50).unwrap();
    assert_eq!(v.len() % 3, 0);
    assert!(v.len() / 3 >= 50);
    for triple in v.chunks(3) {
        assert!(triple[1] >= triple[2]);
    }
}

#[test]
fn push_growth_at_most_doubles() {
    let g = infection_growth("push", 512, 6, 20, 3).unwrap();
    assert_eq!(g.len(), 7);
    for (t, &f) in g.iter().enumerate() {
        assert!(f * 512.0 <= (1u32 << t) as f64 + 1e-9);
    }
    let full = infection_growth("gossip", 64, 40, 5, 3).unwrap();
    assert_eq!(*full.last().unwrap(), 1.0);
}
