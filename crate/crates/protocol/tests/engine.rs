use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rflpa_core::vss::Backend;
use rflpa_protocol::traffic::{simulate, SizeModel};
use rflpa_protocol::wire::{sealed_fields, Kind};
use rflpa_protocol::{CryptoMode, Engine, Fault, Offense, ProtocolConfig};

const Q: f64 = 65536.0;

fn small() -> ProtocolConfig {
    let mut c = ProtocolConfig::paper_rule(10, 16);
    c.d = 3;
    c.l = 2;
    c.p = 2;
    c.threshold = 8;
    c.corrupt = 2;
    c
}

fn data(n: usize, m: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g0: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let grads = (0..n)
        .map(|_| g0.iter().map(|x| x + rng.random_range(-0.4..0.4)).collect())
        .collect();
    (g0, grads)
}

/// Plain integer re-derivation of the quantized vectors.
fn oracle_vec(g: &[f64], target: f64, bound: i128) -> Vec<i64> {
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0; g.len()];
    }
    let mut v: Vec<i64> = g
        .iter()
        .map(|x| (x * target / n * Q).trunc() as i64)
        .collect();
    loop {
        let s: i128 = v.iter().map(|&x| x as i128 * x as i128).sum();
        if s <= bound {
            return v;
        }
        let (i, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .unwrap();
        v[i] -= v[i].signum();
    }
}

struct Oracle {
    dots: BTreeMap<u32, i64>,
    bound: i128,
    vs: BTreeMap<u32, Vec<i64>>,
}

fn oracle(g0: &[f64], grads: &[Vec<f64>], users: impl IntoIterator<Item = u32>) -> Oracle {
    let n0 = g0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let g0c: Vec<f64> = if n0 > 2.0 {
        g0.iter().map(|x| x * 2.0 / n0).collect()
    } else {
        g0.to_vec()
    };
    let v0: Vec<i64> = g0c.iter().map(|x| (x * Q).trunc() as i64).collect();
    let bound: i128 = v0.iter().map(|&x| x as i128 * x as i128).sum();
    let target = g0c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut dots = BTreeMap::new();
    let mut vs = BTreeMap::new();
    for j in users {
        let v = oracle_vec(&grads[j as usize], target, bound);
        dots.insert(j, v.iter().zip(&v0).map(|(a, b)| a * b).sum());
        vs.insert(j, v);
    }
    Oracle { dots, bound, vs }
}

impl Oracle {
    fn aggregate(&self, include: &BTreeSet<u32>, m: usize) -> Vec<f64> {
        let mut acc = vec![0i128; m];
        let mut total = 0i128;
        for (&j, v) in &self.vs {
            if !include.contains(&j) {
                continue;
            }
            let w = self.dots[&j].max(0) as i128;
            total += w;
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += w * x as i128;
            }
        }
        if total == 0 {
            return vec![0.0; m];
        }
        acc.iter().map(|&a| a as f64 / (Q * total as f64)).collect()
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

#[test]
fn honest_run_matches_plaintext() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 1);
    let mut e = Engine::new(cfg.clone(), 7).unwrap();
    let r = e.run_iteration(0, &vec![0.0; cfg.m], &g0, &grads).unwrap();
    assert!(r.abort.is_none(), "{:?}", r.abort);
    let o = oracle(&g0, &grads, 0..cfg.n as u32);
    assert_eq!(r.bound as i128, o.bound);
    assert_eq!(r.dots, o.dots);
    for (j, v) in &o.vs {
        assert_eq!(
            r.norms[j] as i128,
            v.iter().map(|&x| x as i128 * x as i128).sum::<i128>()
        );
    }
    assert!(r.offenses.is_empty());
    assert!(r.rejections.is_empty());
    assert!(r.state.is_monotone());
    let all: BTreeSet<u32> = (0..cfg.n as u32).collect();
    assert!(close(
        r.aggregate.as_ref().unwrap(),
        &o.aggregate(&all, cfg.m)
    ));
    for (_, s) in r.scores {
        assert!((0.0..=1.0).contains(&s));
    }
}

#[test]
fn second_iteration_reuses_setup() {
    let cfg = small();
    let mut e = Engine::new(cfg.clone(), 3).unwrap();
    for it in 0..2 {
        let (g0, grads) = data(cfg.n, cfg.m, 10 + it);
        let r = e.run_iteration(it, &[], &g0, &grads).unwrap();
        let o = oracle(&g0, &grads, 0..cfg.n as u32);
        let all: BTreeSet<u32> = (0..cfg.n as u32).collect();
        assert!(close(
            r.aggregate.as_ref().unwrap(),
            &o.aggregate(&all, cfg.m)
        ));
    }
}

#[test]
fn dropouts_in_every_round() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 2);
    // one silent from round 1, one from round 3; K = 8 keeps the rest going
    let mut e = Engine::new(cfg.clone(), 7).unwrap();
    e.set_dropouts(BTreeMap::from([(4, 1), (7, 3)]));
    let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
    assert!(r.abort.is_none(), "{:?}", r.abort);
    let u1: BTreeSet<u32> = r.state.respondents[0].iter().copied().collect();
    assert!(!u1.contains(&4) && u1.contains(&7));
    assert!(!r.state.respondents[2].contains(&7));
    assert!(r.state.is_monotone());
    let o = oracle(&g0, &grads, u1.iter().copied());
    assert_eq!(r.dots, o.dots);
    assert!(close(
        r.aggregate.as_ref().unwrap(),
        &o.aggregate(&u1, cfg.m)
    ));

    for round in [2u8, 4] {
        let mut e = Engine::new(cfg.clone(), 7).unwrap();
        e.set_dropouts(BTreeMap::from([(1, round)]));
        let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
        assert!(r.abort.is_none(), "round {round}: {:?}", r.abort);
        let all: BTreeSet<u32> = (0..cfg.n as u32).collect();
        let o = oracle(&g0, &grads, 0..cfg.n as u32);
        assert!(close(
            r.aggregate.as_ref().unwrap(),
            &o.aggregate(&all, cfg.m)
        ));
    }
}

#[test]
fn too_many_dropouts_abort() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 2);
    let mut e = Engine::new(cfg, 7).unwrap();
    e.set_dropouts(BTreeMap::from([(0, 1), (1, 1), (2, 1)]));
    let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
    let a = r.abort.expect("must abort");
    assert_eq!(a.round, 1);
    assert!(r.aggregate.is_none());
}

#[test]
fn faults_are_caught() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 3);
    // |Q2| - 2d - 1 = 3 syndromes locate one wrong re-sharer
    let cases = [
        (
            Fault::InvalidShares,
            Offense::InvalidShares,
            false,
            vec![5, 8],
        ),
        (
            Fault::InvalidReshares,
            Offense::InvalidReshares,
            false,
            vec![5, 8],
        ),
        (Fault::WrongPartial, Offense::WrongPartial, false, vec![5]),
        (Fault::WrongFinal, Offense::WrongFinal, false, vec![5, 8]),
        (
            Fault::WrongAggregate,
            Offense::WrongAggregate,
            true,
            vec![5, 8],
        ),
    ];
    for (fault, offense, counted, who) in cases {
        let mut e = Engine::new(cfg.clone(), 11).unwrap();
        for &j in &who {
            e.set_fault(j, fault);
        }
        let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
        assert!(r.abort.is_none(), "{fault:?}: {:?}", r.abort);
        let bad: BTreeSet<u32> = who.into_iter().collect();
        assert_eq!(
            r.offenses.keys().copied().collect::<BTreeSet<_>>(),
            bad,
            "{fault:?}"
        );
        assert!(
            r.offenses.values().all(|&o| o == offense),
            "{fault:?}: {:?}",
            r.offenses
        );
        let include: BTreeSet<u32> = r.state.qualified[0]
            .iter()
            .copied()
            .filter(|j| counted || !bad.contains(j))
            .collect();
        let o = oracle(&g0, &grads, 0..cfg.n as u32);
        assert!(
            close(r.aggregate.as_ref().unwrap(), &o.aggregate(&include, cfg.m)),
            "{fault:?}"
        );
    }
}

#[test]
fn too_many_wrong_partials_abort() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 3);
    let mut e = Engine::new(cfg, 11).unwrap();
    e.set_fault(5, Fault::WrongPartial);
    e.set_fault(8, Fault::WrongPartial);
    let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
    assert_eq!(r.abort.map(|a| a.round), Some(3));
}

#[test]
fn bit_flip_in_transit_is_rejected_not_blamed() {
    let cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 4);
    let mut e = Engine::new(cfg.clone(), 5).unwrap();
    e.mailbox_mut().add_hook(Box::new(|env| {
        if env.kind() == Some(Kind::Shares) && env.sender == 2 && env.recipient == 6 {
            let (ct, _) = sealed_fields(env.body.len());
            env.body[ct.start + 20] ^= 1;
        }
    }));
    let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
    assert!(r.abort.is_none(), "{:?}", r.abort);
    assert!(r
        .rejections
        .iter()
        .any(|x| x.sender == 2 && x.recipient == 6));
    assert!(r.offenses.is_empty(), "{:?}", r.offenses);
    // the complainer could not verify its shares and falls silent
    assert!(r.state.qualified[0].contains(&6));
    assert!(!r.state.respondents[1].contains(&6));
    let all: BTreeSet<u32> = (0..cfg.n as u32).collect();
    let o = oracle(&g0, &grads, 0..cfg.n as u32);
    assert!(close(
        r.aggregate.as_ref().unwrap(),
        &o.aggregate(&all, cfg.m)
    ));
}

#[test]
fn size_only_mode_counts_the_same_bytes() {
    for backend in [Backend::Feldman, Backend::Kzg] {
        let mut cfg = small();
        cfg.vss = backend;
        let (g0, grads) = data(cfg.n, cfg.m, 5);
        let mut e = Engine::new(cfg.clone(), 5).unwrap();
        let r = e.run_iteration(0, &vec![0.1; cfg.m], &g0, &grads).unwrap();
        assert!(r.abort.is_none());
        let sim = simulate(&cfg, SizeModel::of(&e.shared().vss));
        assert_eq!(sim.counters(), e.mailbox().counters(), "{backend:?}");
    }
}

#[test]
fn fast_sim_changes_no_sizes_or_results() {
    let mut cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 6);
    let mut real = Engine::new(cfg.clone(), 9).unwrap();
    let a = real.run_iteration(0, &[], &g0, &grads).unwrap();
    cfg.crypto = CryptoMode::FastSim;
    let mut fast = Engine::new(cfg, 9).unwrap();
    let b = fast.run_iteration(0, &[], &g0, &grads).unwrap();
    assert_eq!(a.dots, b.dots);
    assert_eq!(a.aggregate, b.aggregate);
    assert_eq!(real.mailbox().counters(), fast.mailbox().counters());
}

#[test]
fn kzg_backend_end_to_end() {
    let mut cfg = small();
    cfg.vss = Backend::Kzg;
    let (g0, grads) = data(cfg.n, cfg.m, 8);
    let mut e = Engine::new(cfg.clone(), 1).unwrap();
    e.set_fault(3, Fault::InvalidShares);
    let r = e.run_iteration(0, &[], &g0, &grads).unwrap();
    assert_eq!(r.offenses.get(&3), Some(&Offense::InvalidShares));
    let include: BTreeSet<u32> = (0..cfg.n as u32).filter(|&j| j != 3).collect();
    let o = oracle(&g0, &grads, 0..cfg.n as u32);
    assert!(close(
        r.aggregate.as_ref().unwrap(),
        &o.aggregate(&include, cfg.m)
    ));
}

#[test]
fn sequential_and_parallel_agree() {
    let mut cfg = small();
    let (g0, grads) = data(cfg.n, cfg.m, 12);
    cfg.exec = rflpa_core::Exec::Sequential;
    let a = Engine::new(cfg.clone(), 4)
        .unwrap()
        .run_iteration(0, &[], &g0, &grads)
        .unwrap();
    cfg.exec = rflpa_core::Exec::Parallel;
    let b = Engine::new(cfg, 4)
        .unwrap()
        .run_iteration(0, &[], &g0, &grads)
        .unwrap();
    assert_eq!(a.aggregate, b.aggregate);
    assert_eq!(a.dots, b.dots);
}
