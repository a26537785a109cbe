use proptest::prelude::*;
use vpl_core::segeval::{evaluate_dirs, ConfusionMatrix, LabelMap};

const IGNORE: u32 = 255;

fn labels(n_classes: u32, len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(prop_oneof![9 => 0..n_classes, 1 => Just(IGNORE)], len)
}

fn pair(n: u32) -> impl Strategy<Value = (usize, usize, Vec<u32>, Vec<u32>)> {
    (1usize..12, 1usize..12).prop_flat_map(move |(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec(0..n, w * h),
            labels(n, w * h),
        )
    })
}

/// Per-class IoU by direct pixel counting.
fn oracle(pred: &[u32], gt: &[u32], n: u32) -> Option<f64> {
    let mut ious = Vec::new();
    for c in 0..n {
        let (mut inter, mut union) = (0u64, 0u64);
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE {
                continue;
            }
            inter += (p == c && g == c) as u64;
            union += (p == c || g == c) as u64;
        }
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
}

fn score(w: usize, h: usize, pred: &[u32], gt: &[u32], n: usize) -> ConfusionMatrix {
    let p = LabelMap::new(w, h, pred.to_vec(), n, IGNORE).unwrap();
    let g = LabelMap::new(w, h, gt.to_vec(), n, IGNORE).unwrap();
    let mut c = ConfusionMatrix::new(n);
    c.accumulate(&p, &g).unwrap();
    c
}

proptest! {
    #[test]
    fn miou_matches_pixel_counting((w, h, pred, gt) in pair(5)) {
        let c = score(w, h, &pred, &gt, 5);
        match oracle(&pred, &gt, 5) {
            Some(want) => prop_assert!((c.miou().unwrap().miou - want).abs() < 1e-12),
            None => prop_assert!(c.miou().is_err()),
        }
        prop_assert_eq!(c.total() as usize, gt.iter().filter(|g| **g != IGNORE).count());
    }

    #[test]
    fn relabeling_both_maps_keeps_the_score((w, h, pred, gt) in pair(4), perm in Just([2u32, 0, 3, 1])) {
        let map = |v: &[u32]| v.iter().map(|l| if *l == IGNORE { IGNORE } else { perm[*l as usize] }).collect::<Vec<_>>();
        let a = score(w, h, &pred, &gt, 4).miou();
        let b = score(w, h, &map(&pred), &map(&gt), 4).miou();
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.miou - b.miou).abs() < 1e-12);
        }
    }

    #[test]
    fn fixing_a_wrong_pixel_never_hurts((w, h, pred, gt) in pair(3)) {
        let Some(i) = (0..pred.len()).find(|&i| gt[i] != IGNORE && pred[i] != gt[i]) else {
            return Ok(());
        };
        let before = score(w, h, &pred, &gt, 3).miou().unwrap().miou;
        let mut fixed = pred.clone();
        fixed[i] = gt[i];
        let after = score(w, h, &fixed, &gt, 3).miou().unwrap().miou;
        prop_assert!(after >= before - 1e-15, "{before} -> {after}");
    }

    #[test]
    fn merging_is_associative(a in prop::collection::vec(0u64..100, 9), b in prop::collection::vec(0u64..100, 9), c in prop::collection::vec(0u64..100, 9)) {
        let m = |v: &Vec<u64>| ConfusionMatrix::from_counts(3, v.clone()).unwrap();
        let mut left = m(&a);
        left.merge(&m(&b)).unwrap();
        left.merge(&m(&c)).unwrap();
        let mut bc = m(&b);
        bc.merge(&m(&c)).unwrap();
        let mut right = m(&a);
        right.merge(&bc).unwrap();
        prop_assert_eq!(left, right);
    }
}

#[test]
fn directory_evaluation_matches_in_memory_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let (pd, gd) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pd).unwrap();
    std::fs::create_dir_all(&gd).unwrap();
    let mut expected = ConfusionMatrix::new(19);
    for k in 0..4u32 {
        let (w, h) = (13, 9);
        let gt: Vec<u8> = (0..w * h)
            .map(|i| {
                if i % 17 == 0 {
                    255
                } else {
                    ((i as u32 + k) % 19) as u8
                }
            })
            .collect();
        let pred: Vec<u8> = (0..w * h)
            .map(|i| ((i as u32 * 3 + k) % 19) as u8)
            .collect();
        let name = format!("f{k}.png");
        image::GrayImage::from_raw(w as u32, h as u32, gt.clone())
            .unwrap()
            .save(gd.join(&name))
            .unwrap();
        image::GrayImage::from_raw(w as u32, h as u32, pred.clone())
            .unwrap()
            .save(pd.join(&name))
            .unwrap();
        let to32 = |v: &[u8]| v.iter().map(|x| *x as u32).collect::<Vec<_>>();
        expected
            .merge(&score(w, h, &to32(&pred), &to32(&gt), 19))
            .unwrap();
    }
    let (got, files) = evaluate_dirs(&pd, &gd, 19, 255).unwrap();
    assert_eq!(files, 4);
    assert_eq!(got, expected);
}
