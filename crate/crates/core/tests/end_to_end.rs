mod common;

use num::{BigInt, BigRational};
use proptest::prelude::*;
use twolevel_pir::algebra::{seeded_rng, Matrix};
use twolevel_pir::capacity::SystemParams;
use twolevel_pir::net::{retrieve, store_messages, RetrievalRequest, Transport};
use twolevel_pir::ns_engine::BuildOptions;
use twolevel_pir::plan::{build_plan, Scheme};
use twolevel_pir::{nb_engine, ns_engine, Error};

fn small() -> impl Strategy<Value = SystemParams> {
    (1usize..=4)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, t1)| (Just(n), Just(t1), 1..=t1, 1usize..=3))
        .prop_flat_map(|(n, t1, t2, k2)| (Just(n), Just(t1), 1..=k2, Just(t2), Just(k2)))
        .prop_map(|(n, t1, k1, t2, k2)| common::sys(n, t1, k1, t2, k2))
}

fn selector(p: &SystemParams, k: usize, l: usize) -> Matrix {
    let mut m = Matrix::zeros(l, p.k2 * l);
    for i in 0..l {
        m.set(i, (k - 1) * l + i, 1);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ns_recovers_any_target(p in small(), seed in any::<u64>(), pick in any::<usize>()) {
        let k = pick % p.k2 + 1;
        let t = retrieve(&RetrievalRequest::new(p, Scheme::Ns, k, seed, Transport::Inproc)).unwrap();
        prop_assert!(t.recovered_ok);
        prop_assert_eq!(t.cost(), common::cost_ns(&p));
    }

    #[test]
    fn nb_recovers_any_target(p in small().prop_filter("two tables", |p| p.k1 < p.k2), seed in any::<u64>(), pick in any::<usize>()) {
        let k = pick % p.k2 + 1;
        let t = retrieve(&RetrievalRequest::new(p, Scheme::Nb, k, seed, Transport::Inproc)).unwrap();
        prop_assert!(t.recovered_ok);
        prop_assert_eq!(t.cost(), common::cost_nb(&p));
    }

    #[test]
    fn decoder_selects_target(p in small(), seed in any::<u64>(), pick in any::<usize>()) {
        let k = pick % p.k2 + 1;
        let opts = BuildOptions::default();
        let mut schemes = vec![Scheme::Ns];
        if p.k1 < p.k2 {
            schemes.push(Scheme::Nb);
        }
        for scheme in schemes {
            let plan = build_plan(&p, scheme, k, seed, &opts).unwrap();
            prop_assert_eq!(plan.decoder_on_queries().unwrap(), selector(&p, k, plan.message_len()));
        }
    }
}

#[test]
fn unreduced_and_explicit_modulus() {
    let p = common::sys(4, 2, 2, 1, 4);
    let full = BuildOptions { modulus: None, reduce: false };
    for scheme in [Scheme::Ns, Scheme::Nb] {
        let mut req = RetrievalRequest::new(p, scheme, 2, 5, Transport::Inproc);
        req.options = full;
        let t = retrieve(&req).unwrap();
        assert_eq!(t.message_len, 256);
        assert_eq!(t.download_total, 464);
        req.options = BuildOptions { modulus: Some(1_000_000_007), reduce: true };
        let t = retrieve(&req).unwrap();
        assert_eq!((t.message_len, t.modulus, t.download_total), (64, 1_000_000_007, 116));
        req.options = BuildOptions { modulus: Some((1u64 << 61) - 1), reduce: true };
        assert!(retrieve(&req).unwrap().recovered_ok);
    }
    let bad = BuildOptions { modulus: Some(23), reduce: true };
    assert!(matches!(build_plan(&p, Scheme::Ns, 1, 0, &bad), Err(Error::Params(_))));
    let composite = BuildOptions { modulus: Some(91), reduce: true };
    assert!(build_plan(&p, Scheme::Ns, 1, 0, &composite).is_err());
}

#[test]
fn modulus_does_not_depend_on_target() {
    for p in common::matrix() {
        let qs: Vec<u64> = (1..=p.k2)
            .map(|k| build_plan(&p, Scheme::Ns, k, 0, &BuildOptions::default()).unwrap().field().q())
            .collect();
        assert!(qs.windows(2).all(|w| w[0] == w[1]), "{p}");
        let (_, _, f) = ns_engine::setup(&p, &BuildOptions::default()).unwrap();
        assert_eq!(f.q(), qs[0]);
    }
}

#[test]
fn nb_rejects_single_class() {
    let p = common::sys(4, 2, 2, 2, 2);
    assert!(matches!(
        nb_engine::build_query(&p, 1, &mut seeded_rng(0)),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn corrupted_answer_is_not_silently_accepted() {
    let p = common::sys(3, 2, 2, 1, 3);
    let plan = build_plan(&p, Scheme::Ns, 1, 9, &BuildOptions::default()).unwrap();
    let msgs = store_messages(plan.field(), p.k2, plan.message_len(), 9);
    let flat = msgs.concat();
    let mut answers: Vec<_> = (0..p.n).map(|s| plan.answer(s, &flat).unwrap()).collect();
    assert_eq!(plan.decode(&answers).unwrap(), msgs[0]);
    answers[1].symbols[0] = (answers[1].symbols[0] + 1) % plan.field().q();
    match plan.decode(&answers) {
        Ok(w) => assert_ne!(w, msgs[0]),
        Err(e) => assert!(matches!(e, Error::Corruption(_))),
    }
    answers[2].symbols.pop();
    assert!(matches!(plan.decode(&answers), Err(Error::Protocol(_))));
}

#[test]
fn worked_example_cost_is_116_over_64() {
    let p = common::sys(4, 2, 2, 1, 4);
    for k in 1..=4 {
        for scheme in [Scheme::Ns, Scheme::Nb] {
            let plan = build_plan(&p, scheme, k, 7, &BuildOptions::default()).unwrap();
            let cost = BigRational::new(BigInt::from(plan.download_total()), BigInt::from(plan.message_len()));
            assert_eq!(cost, common::q(116, 64));
            assert!((0..4).all(|s| plan.rows(s) == 29));
        }
    }
}
