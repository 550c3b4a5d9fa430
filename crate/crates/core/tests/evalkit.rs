use std::collections::{BTreeMap, BTreeSet};

use duoflow::evalkit::{
    motion_mask, mse, physics_iq_score, spatial_iou, spatiotemporal_iou, weighted_spatial_iou, MaskSeq,
    MetricsRecord,
};
use duoflow::physworld::FrameSeq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Cell = (usize, usize, usize);

fn random_mask(rng: &mut ChaCha8Rng, t: usize, h: usize, w: usize) -> (MaskSeq, BTreeSet<Cell>) {
    let density = rng.random_range(0.0..0.6);
    let mut set = BTreeSet::new();
    let mut bits = Vec::with_capacity(t * h * w);
    for f in 0..t {
        for r in 0..h {
            for c in 0..w {
                let on = rng.random::<f64>() < density;
                bits.push(on);
                if on {
                    set.insert((f, r, c));
                }
            }
        }
    }
    (MaskSeq::new(t, h, w, bits).unwrap(), set)
}

fn set_iou<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let uni = a.union(b).count();
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

#[test]
fn iou_family_matches_set_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for case in 0..100 {
        let (t, h, w) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..7));
        let (ma, sa) = random_mask(&mut rng, t, h, w);
        let (mb, sb) = random_mask(&mut rng, t, h, w);

        let project = |s: &BTreeSet<Cell>| s.iter().map(|&(_, r, c)| (r, c)).collect::<BTreeSet<_>>();
        let spatial = set_iou(&project(&sa), &project(&sb));
        assert_eq!(spatial_iou(&ma, &mb).unwrap(), spatial, "case {case}");

        let per_frame: f64 = (0..t)
            .map(|f| {
                let pick = |s: &BTreeSet<Cell>| s.iter().filter(|c| c.0 == f).map(|&(_, r, c)| (r, c)).collect::<BTreeSet<_>>();
                set_iou(&pick(&sa), &pick(&sb))
            })
            .sum();
        assert!((spatiotemporal_iou(&ma, &mb).unwrap() - per_frame / t as f64).abs() < 1e-12, "case {case}");

        let counts = |s: &BTreeSet<Cell>| {
            let mut m: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for &(_, r, c) in s {
                *m.entry((r, c)).or_default() += 1;
            }
            m
        };
        let (ca, cb) = (counts(&sa), counts(&sb));
        let keys: BTreeSet<_> = ca.keys().chain(cb.keys()).collect();
        let (mut num, mut den) = (0usize, 0usize);
        for k in keys {
            let (x, y) = (ca.get(k).copied().unwrap_or(0), cb.get(k).copied().unwrap_or(0));
            num += x.min(y);
            den += x.max(y);
        }
        let weighted = if den == 0 { 1.0 } else { num as f64 / den as f64 };
        assert!((weighted_spatial_iou(&ma, &mb).unwrap() - weighted).abs() < 1e-12, "case {case}");
    }
}

#[test]
fn mse_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (t, h, w) = (3, 4, 5);
        let a: Vec<f32> = (0..t * h * w).map(|_| rng.random()).collect();
        let b: Vec<f32> = (0..t * h * w).map(|_| rng.random()).collect();
        let fa = FrameSeq::from_data(t, h, w, a.clone()).unwrap();
        let fb = FrameSeq::from_data(t, h, w, b.clone()).unwrap();
        let mut s = 0.0;
        for f in 0..t {
            for r in 0..h {
                for c in 0..w {
                    let i = (f * h + r) * w + c;
                    s += (a[i] as f64 - b[i] as f64).powi(2);
                }
            }
        }
        assert!((mse(&fa, &fb).unwrap() - s / (t * h * w) as f64).abs() < 1e-12);
    }
}

#[test]
fn hand_cases() {
    let a = FrameSeq::from_data(2, 2, 2, vec![0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(motion_mask(&a, 0.05).unwrap().count(), 1);

    let x = FrameSeq::from_data(1, 1, 2, vec![0.5, 0.0]).unwrap();
    let y = FrameSeq::from_data(1, 1, 2, vec![0.1, 0.0]).unwrap();
    assert!((mse(&x, &y).unwrap() - 0.08).abs() < 1e-8);

    let ceiling = MetricsRecord {
        spatial_iou: 0.8,
        spatiotemporal_iou: 0.6,
        weighted_spatial_iou: 0.5,
        mse: 0.01,
        ..Default::default()
    };
    let m = MetricsRecord {
        spatial_iou: 0.8,
        spatiotemporal_iou: 0.3,
        weighted_spatial_iou: 0.25,
        mse: 0.01,
        ..Default::default()
    };
    assert!((physics_iq_score(&m, &ceiling) - 75.0).abs() < 1e-12);
    assert_eq!(physics_iq_score(&ceiling, &ceiling), 100.0);
}

#[test]
fn ceiling_against_itself_scores_100_on_random_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let c = MetricsRecord {
            spatial_iou: rng.random(),
            spatiotemporal_iou: rng.random(),
            weighted_spatial_iou: rng.random(),
            mse: rng.random::<f64>() * 0.1,
            ..Default::default()
        };
        assert_eq!(physics_iq_score(&c, &c), 100.0);
    }
}
