//! Quick invariant suite behind `rflpa verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rflpa_core::dotprod::{run_pipeline, DotProductSetup, Faults};
use rflpa_core::field::{decode, encode, quantize};
use rflpa_core::packed::SharingConfig;
use rflpa_core::vss::{Backend, Vss};
use rflpa_core::{rs, Exec, Field, F61};
use rflpa_protocol::{Engine, ProtocolConfig};
use rflpa_sim::baseline::fltrust_quantized;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    vec![
        check("quantization", quantization(&mut rng)),
        check("packed_sharing", sharing(&mut rng)),
        check("reed_solomon", reed_solomon(&mut rng)),
        check("commitments", commitments(&mut rng)),
        check("dot_products", dot_products(&mut rng)),
        check("protocol", protocol(seed)),
    ]
}

fn quantization(rng: &mut ChaCha20Rng) -> Result<String, String> {
    let q = 1u64 << 16;
    for _ in 0..10_000 {
        let x: f64 = rng.random_range(-1e3..1e3);
        let v = quantize(x, q, F61::MODULUS).map_err(|e| e.to_string())?;
        if (v as f64 / q as f64 - x).abs() > 1.0 / q as f64 {
            return Err(format!("error above 1/q at {x}"));
        }
        let back = decode(encode::<F61>(v).map_err(|e| e.to_string())?);
        if back != v {
            return Err(format!("encode/decode changed {v} to {back}"));
        }
    }
    Ok("10000 values".into())
}

fn sharing(rng: &mut ChaCha20Rng) -> Result<String, String> {
    let cfg = SharingConfig::<F61>::standard(4, 9, 20, 4).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let s: Vec<F61> = (0..4).map(|_| F61::random(rng)).collect();
        let set = cfg.share(&s, rng).map_err(|e| e.to_string())?;
        if cfg.reconstruct_set(&set).map_err(|e| e.to_string())? != s {
            return Err("reconstruction mismatch".into());
        }
    }
    Ok("100 sharings".into())
}

fn reed_solomon(rng: &mut ChaCha20Rng) -> Result<String, String> {
    let (n, d) = (20, 5);
    let xs: Vec<F61> = (1..=n as u64).map(F61::new).collect();
    for _ in 0..50 {
        let coeffs: Vec<F61> = (0..=d).map(|_| F61::random(rng)).collect();
        let mut ys: Vec<Option<F61>> = xs
            .iter()
            .map(|&x| Some(rflpa_core::poly::eval(&coeffs, x)))
            .collect();
        ys[2] = None;
        ys[7] = ys[7].map(|y| y + F61::one());
        let out = rs::decode(&xs, &ys, d).map_err(|e| e.to_string())?;
        if out.coeffs != coeffs || out.errors != vec![7] {
            return Err("decoder missed the planted error".into());
        }
    }
    Ok("50 words".into())
}

fn commitments(rng: &mut ChaCha20Rng) -> Result<String, String> {
    for backend in [Backend::Feldman, Backend::Kzg] {
        let vss = Vss::setup(backend, 6, rng);
        let a: Vec<F61> = (0..7).map(|_| F61::random(rng)).collect();
        let c = vss.commit(&a).map_err(|e| e.to_string())?;
        let mut w = vss.open(&a, F61::new(3)).map_err(|e| e.to_string())?;
        if !vss.verify(&c, &w) {
            return Err(format!("{backend}: honest opening rejected"));
        }
        w.value += F61::one();
        if vss.verify(&c, &w) {
            return Err(format!("{backend}: wrong value accepted"));
        }
    }
    Ok("feldman, kzg".into())
}

fn dot_products(rng: &mut ChaCha20Rng) -> Result<String, String> {
    let (n, d, l, m) = (10, 3, 2, 20);
    let setup = DotProductSetup::<F61>::new(n, d, l, l, m).map_err(|e| e.to_string())?;
    let small = |rng: &mut ChaCha20Rng| -> Vec<i64> {
        (0..m).map(|_| rng.random_range(-1000..1000)).collect()
    };
    let v0 = small(rng);
    let users: Vec<Vec<i64>> = (0..n).map(|_| small(rng)).collect();
    let enc = |v: &[i64]| v.iter().map(|&x| F61::from_i64(x)).collect::<Vec<_>>();
    let active: Vec<usize> = (0..n).collect();
    let out = run_pipeline(
        &setup,
        &users.iter().map(|u| enc(u)).collect::<Vec<_>>(),
        &enc(&v0),
        &active,
        &Faults::default(),
        rng,
        Exec::default(),
    )
    .map_err(|e| e.to_string())?;
    for (j, u) in users.iter().enumerate() {
        let dot: i64 = u.iter().zip(&v0).map(|(a, b)| a * b).sum();
        let norm: i64 = u.iter().map(|a| a * a).sum();
        if out.dots[j].to_signed() != dot || out.norms[j].to_signed() != norm {
            return Err(format!("user {j} decoded wrongly"));
        }
    }
    Ok(format!("{n} users"))
}

fn protocol(seed: u64) -> Result<String, String> {
    let mut cfg = ProtocolConfig::paper_rule(10, 16);
    cfg.d = 3;
    cfg.l = 2;
    cfg.p = 2;
    cfg.threshold = 8;
    cfg.corrupt = 2;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g0: Vec<f64> = (0..cfg.m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let grads: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| g0.iter().map(|x| x + rng.random_range(-0.6..0.6)).collect())
        .collect();
    let mut engine = Engine::new(cfg.clone(), seed).map_err(|e| e.to_string())?;
    let rep = engine
        .run_iteration(0, &vec![0.0; cfg.m], &g0, &grads)
        .map_err(|e| e.to_string())?;
    let agg = rep
        .aggregate
        .ok_or_else(|| format!("aborted: {:?}", rep.abort))?;
    let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    let want = fltrust_quantized(&g0, &refs, cfg.field.scale, cfg.field.max_norm)
        .map_err(|e| e.to_string())?;
    let q = cfg.field.scale as f64;
    if agg
        .iter()
        .zip(&want.aggregate)
        .any(|(a, b)| (a - b).abs() > 1.0 / q)
    {
        return Err("aggregate differs from the plaintext rule".into());
    }
    Ok("10 clients, one iteration".into())
}
