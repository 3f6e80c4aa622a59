use std::collections::{BTreeMap, BTreeSet};

use fetal_biometry::data::{make_split, SplitPolicy};

/// Subject `s` has a head image and a femur image; subjects 0..20.
fn fixture() -> Vec<(String, String)> {
    (0..20)
        .flat_map(|s| {
            [
                (format!("s{s:02}_head.png"), format!("subject{s:02}")),
                (format!("s{s:02}_femur.png"), format!("subject{s:02}")),
            ]
        })
        .collect()
}

#[test]
fn subject_images_share_a_side_for_every_seed() {
    let items = fixture();
    let refs: Vec<(&str, &str)> = items.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    for seed in 0..25 {
        let m = make_split(&refs, SplitPolicy::default(), seed).unwrap();
        let mut side: BTreeMap<&str, BTreeSet<bool>> = BTreeMap::new();
        for (image, subject) in &refs {
            assert!(m.is_train(image) ^ m.is_test(image), "{image} must be on exactly one side");
            side.entry(subject).or_default().insert(m.is_test(image));
        }
        assert!(side.values().all(|s| s.len() == 1), "seed {seed} splits a subject");
        // 20% of 20 subjects
        assert_eq!(m.test.len(), 8);
        assert_eq!(m.train.len(), 32);
    }
}

#[test]
fn measurement_subsets_stay_disjoint() {
    // restricting a subject-disjoint split to one measurement keeps it disjoint
    let items = fixture();
    let refs: Vec<(&str, &str)> = items.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let m = make_split(&refs, SplitPolicy::default(), 3).unwrap();
    for suffix in ["_head.png", "_femur.png"] {
        let train: BTreeSet<&str> = refs
            .iter()
            .filter(|(i, _)| i.ends_with(suffix) && m.is_train(i))
            .map(|(_, s)| *s)
            .collect();
        let test: BTreeSet<&str> = refs
            .iter()
            .filter(|(i, _)| i.ends_with(suffix) && m.is_test(i))
            .map(|(_, s)| *s)
            .collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 20);
    }
}

#[test]
fn image_level_policy_may_separate_a_subject() {
    let items = fixture();
    let refs: Vec<(&str, &str)> = items.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let policy = SplitPolicy {
        subject_disjoint: false,
        ..SplitPolicy::default()
    };
    let split_somewhere = (0..25).any(|seed| {
        let m = make_split(&refs, policy, seed).unwrap();
        (0..20).any(|s| m.is_test(&format!("s{s:02}_head.png")) != m.is_test(&format!("s{s:02}_femur.png")))
    });
    assert!(split_somewhere);
}
