use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcgrid::sobolev::{all_subsets, check_iso, coarea_layers, coarea_sum, w11_indicator, w11_norm, SubsetFamily};
use tcgrid::{ExactGridFunction, GridShape, VertexSet};

#[test]
fn isoperimetry_holds_on_all_subsets_of_small_cubes() {
    for d in [2, 3] {
        let shape = GridShape::new(1, d).unwrap();
        for a in all_subsets(shape).unwrap() {
            let r = check_iso(&a);
            assert!(r.pass(), "{:?}", a.to_text());
        }
    }
}

#[test]
fn isoperimetry_on_sampled_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in [2, 3] {
        let shape = GridShape::new(n, 3).unwrap();
        for family in SubsetFamily::standard(3) {
            for _ in 0..40 {
                let a = family.sample(shape, &mut rng);
                assert!(check_iso(&a).pass(), "{}", family.name());
            }
        }
    }
}

#[test]
fn coarea_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in [2, 3] {
        let shape = GridShape::new(n, 3).unwrap();
        for _ in 0..15 {
            let f = ExactGridFunction::from_fn(shape, |_| {
                BigRational::new(rng.random_range(-20..=20).into(), rng.random_range(1..=4).into())
            })
            .unwrap();
            assert_eq!(coarea_sum(&coarea_layers(&f)), w11_norm(&f));
        }
    }
}

#[test]
fn seminorm_invariant_under_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let shape = GridShape::new(2, 3).unwrap();
    let top = shape.side() as u32 - 1;
    for _ in 0..20 {
        let a = VertexSet::from_predicate(shape, |_| rng.random_bool(0.3));
        let reflected = VertexSet::from_predicate(shape, |v| {
            let x = shape.coord(v, 0);
            a.contains(v - x as usize + (top - x) as usize)
        });
        let swapped = VertexSet::from_predicate(shape, |v| {
            let (x, y) = (shape.coord(v, 0) as usize, shape.coord(v, 1) as usize);
            a.contains(v - x - y * shape.stride(1) + y + x * shape.stride(1))
        });
        assert_eq!(w11_indicator(&a), w11_indicator(&reflected));
        assert_eq!(w11_indicator(&a), w11_indicator(&swapped));
    }
}
