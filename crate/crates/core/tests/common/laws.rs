//! Tversky score laws checked on random feature-set pairs.

use std::collections::BTreeSet;

use itemsmith_core::item_model::ItemId;
use itemsmith_core::similarity::{overlap, tversky_score, FeatureSet, TverskyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

fn feature_set(id: &str, f: &BTreeSet<u8>) -> FeatureSet {
    FeatureSet::contextual(ItemId(id.into()), f.iter().map(|n| format!("f{n}")))
}

/// Set arithmetic done with plain loops over the universe.
fn brute(a: &BTreeSet<u8>, b: &BTreeSet<u8>, p: &TverskyParams) -> f64 {
    let (mut shared, mut only_a, mut only_b) = (0.0, 0.0, 0.0);
    for x in 0..=u8::MAX {
        match (a.contains(&x), b.contains(&x)) {
            (true, true) => shared += 1.0,
            (true, false) => only_a += 1.0,
            (false, true) => only_b += 1.0,
            _ => {}
        }
    }
    p.theta * shared - p.alpha * only_a - p.beta * only_b
}

fn random_set(rng: &mut ChaCha8Rng) -> BTreeSet<u8> {
    let n = rng.gen_range(0..25);
    (0..n).map(|_| rng.gen_range(0..40)).collect()
}

/// Checks every law on `pairs` random pairs and returns the first violation.
pub fn tversky_laws(pairs: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..pairs {
        let (a, b) = (random_set(&mut rng), random_set(&mut rng));
        let (fa, fb) = (feature_set("a", &a), feature_set("b", &b));
        let p = TverskyParams {
            theta: rng.gen_range(0.0..3.0),
            alpha: rng.gen_range(0.0..2.0),
            beta: rng.gen_range(0.0..2.0),
        };
        let score = |x: &FeatureSet, y: &FeatureSet, q: &TverskyParams| tversky_score(x, y, q).map_err(|e| e.to_string());
        let s = score(&fa, &fb, &p)?;
        let fail = |law: &str| Err(format!("pair {n}: {law} ({a:?}, {b:?}, {p:?})"));

        if (s - brute(&a, &b, &p)).abs() > EPS {
            return fail("set arithmetic");
        }
        let sym = TverskyParams { beta: p.alpha, ..p };
        if score(&fa, &fb, &sym)? != score(&fb, &fa, &sym)? {
            return fail("symmetry under alpha = beta");
        }
        if (score(&fa, &fa, &p)? - p.theta * a.len() as f64).abs() > EPS {
            return fail("self-similarity");
        }
        if a.is_disjoint(&b) && (s + p.alpha * a.len() as f64 + p.beta * b.len() as f64).abs() > EPS {
            return fail("disjoint sets");
        }

        let o = overlap(&fa, &fb);
        let d = rng.gen_range(0.01..1.0);
        let moved = [
            (TverskyParams { theta: p.theta + d, ..p }, d * o.shared as f64),
            (TverskyParams { theta: p.theta - d, ..p }, -d * o.shared as f64),
            (TverskyParams { alpha: p.alpha + d, ..p }, -d * o.only_a as f64),
            (TverskyParams { alpha: p.alpha - d, ..p }, d * o.only_a as f64),
            (TverskyParams { beta: p.beta + d, ..p }, -d * o.only_b as f64),
            (TverskyParams { beta: p.beta - d, ..p }, d * o.only_b as f64),
        ];
        for (q, change) in moved {
            if (score(&fa, &fb, &q)? - s - change).abs() > EPS {
                return fail("parameter perturbation");
            }
        }
    }
    Ok(())
}
