//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//! `cargo test -p hype --test acceptance`

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hype::attention::{attend_multihead_explicit, attend_multihead_recorded, head_output};
use hype::grad::{
    attention_param_grads, attention_param_grads_concat, finite_difference_grads, Loss,
};
use hype::harness::verify::{GRAD_DIMS, GRAD_LENS, GRAD_MUS, GRAD_TAUS};
use hype::harness::{parse_csv, Tolerances};
use hype::metrics::{identity_error, max_rel_error, rel_diff};
use hype::storage::PeLedger;
use hype::{
    attend_grid, attend_hype_concat, attend_multihead, attend_vanilla, attend_with_bias,
    build_bias_alibi, build_bias_grid, build_bias_hype, build_eta_grid, build_eta_pair,
    recommend_mu_schedule, AttentionConfig, Error, Fill, GridShape, HeadWeights, HypeHeadParams,
    Matrix, Scalar, Width,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn qkv<T: Scalar>(len: usize, d: usize, seed: u64) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    (
        Matrix::random_fill(len, d, seed, Fill::StandardNormal),
        Matrix::random_fill(len, d, seed + 1, Fill::StandardNormal),
        Matrix::random_fill(len, d, seed + 2, Fill::StandardNormal),
    )
}

fn params(mu: f64, tau: f64) -> HypeHeadParams {
    HypeHeadParams::new(mu, tau).expect("finite parameters")
}

fn check(ok: bool, summary: String) -> Outcome {
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// 1. (Q̂K̂ᵀ - QKᵀ)/sqrt(d) reproduces the bias.

fn identity_worst<T: Scalar>(len: usize, d: usize, p: HypeHeadParams, seed: u64) -> (f64, f64) {
    let (q, k, _) = qkv::<T>(len, d, seed);
    let eta = build_eta_pair::<T>(len, d, p, 1).unwrap();
    let bias = build_bias_hype::<T>(len, p).unwrap();
    let err = identity_error(&q, &k, &eta, &bias).unwrap();
    (err.rel, err.abs)
}

fn identity_configs() -> Vec<(usize, usize, f64, f64)> {
    const LENS: [usize; 5] = [1, 2, 16, 128, 512];
    const DIMS: [usize; 3] = [1, 8, 64];
    const MUS: [f64; 3] = [0.0, 1e-4, 1e-2];
    const TAUS: [f64; 3] = [0.0, 1.0, 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|i| {
            // The first five cover every value of every axis; the rest are random.
            if i < LENS.len() {
                (LENS[i], DIMS[i % 3], MUS[i % 3], TAUS[(i + 1) % 3])
            } else {
                (
                    LENS[rng.random_range(0..LENS.len())],
                    DIMS[rng.random_range(0..DIMS.len())],
                    MUS[rng.random_range(0..MUS.len())],
                    TAUS[rng.random_range(0..TAUS.len())],
                )
            }
        })
        .collect()
}

fn criterion_identity() -> Outcome {
    let (mut f64_worst, mut f32_worst, mut abs_worst) = (0.0f64, 0.0f64, 0.0f64);
    let configs = identity_configs();
    for (i, &(len, d, mu, tau)) in configs.iter().enumerate() {
        let p = params(mu, tau);
        let (rel, abs) = identity_worst::<f64>(len, d, p, 10 * i as u64);
        f64_worst = f64_worst.max(rel);
        abs_worst = abs_worst.max(abs);
        f32_worst = f32_worst.max(identity_worst::<f32>(len, d, p, 10 * i as u64).0);
    }
    check(
        f64_worst <= 1e-12 && f32_worst <= 1e-4,
        format!(
            "{} configs; f64 worst {f64_worst:.2e} (limit 1e-12, abs {abs_worst:.2e}), f32 worst {f32_worst:.2e} (limit 1e-4)",
            configs.len()
        ),
    )
}

// 2. tau = 1 HyPE against ALiBi with the same slope.

fn criterion_alibi() -> Outcome {
    let sinh1 = 1f64.sinh();
    let (mut loose, mut tight, mut entries, mut tight_entries) = (0.0f64, 0.0f64, 0usize, 0usize);
    for len in [1usize, 8, 64, 512, 2048] {
        let l = len as f64;
        for mu in [
            0.0,
            1.0 / (64.0 * l),
            1.0 / (8.0 * l),
            1.0 / (4.0 * l),
            1.0 / (2.0 * l),
        ] {
            let hype = build_bias_hype::<f64>(len, params(mu, 1.0)).unwrap();
            let alibi = build_bias_alibi::<f64>(len, mu).unwrap();
            for i in 0..len {
                for j in 0..len {
                    let x = (mu * (j as f64 - i as f64)).abs();
                    let gap = (hype.values.get(i, j) - alibi.values.get(i, j)).abs();
                    entries += 1;
                    if gap == 0.0 {
                        continue;
                    }
                    loose = loose.max(gap / (x.powi(3) * sinh1));
                    if x <= 0.1 {
                        tight_entries += 1;
                        tight = tight.max(gap / (x.powi(3) / 6.0));
                    }
                }
            }
        }
    }
    check(
        loose <= 1.0 && tight <= 1.01,
        format!(
            "{entries} entries; worst gap / (|x|^3 sinh 1) = {loose:.4} (limit 1), worst gap / (|x|^3/6) over {tight_entries} entries with |x| <= 0.1 = {tight:.6} (limit 1.01)"
        ),
    )
}

// 3. Positional values materialised by each multi-head path.

fn criterion_storage() -> Outcome {
    let d = 4;
    let mut rows = Vec::new();
    let mut ok = true;
    for len in [64usize, 1024] {
        for n_heads in [1usize, 8] {
            let d_model = d * n_heads;
            let x = Matrix::<f32>::random_fill(len, d_model, len as u64, Fill::StandardNormal);
            let weights: Vec<_> = (0..n_heads)
                .map(|h| HeadWeights::random(d_model, d, 1 + 3 * h as u64).unwrap())
                .collect();
            for n_copies in [1usize, 4] {
                let config = AttentionConfig {
                    seq_len: len,
                    head_dim: d,
                    n_heads,
                    heads: recommend_mu_schedule(n_heads, 2 * len).unwrap(),
                    causal: false,
                    n_copies,
                    width: Width::F32,
                };
                let (concat, explicit) = (PeLedger::new(), PeLedger::new());
                let a = attend_multihead_recorded(&x, &weights, &config, &concat).unwrap();
                let b = attend_multihead_explicit(&x, &weights, &config, &explicit).unwrap();
                let (c, e) = (concat.counts(), explicit.counts());
                let good = c.eta_values == 4 * n_copies * len * n_heads
                    && c.mask_values == 0
                    && e.mask_values == len * len
                    && e.mask_allocations == 1
                    && e.eta_values == 0
                    && max_rel_error(&a, &b) <= 1e-3;
                ok &= good;
                if !good {
                    rows.push(format!(
                        "L={len} h={n_heads} n={n_copies}: concat {} explicit {}",
                        c.eta_values, e.mask_values
                    ));
                }
            }
        }
    }
    let detail = if rows.is_empty() {
        "8 configs; concat = 4nLh and explicit = L^2 (one shared mask) in every case".to_string()
    } else {
        rows.join("; ")
    };
    check(ok, detail)
}

// 4. Stacked eta pairs leave the output unchanged.

fn criterion_stacking() -> Outcome {
    let mut worst = 0.0f64;
    for (seed, (mu, tau, causal)) in [(0.01, 1.0, false), (0.05, 2.0, true), (1e-4, 0.5, false)]
        .into_iter()
        .enumerate()
    {
        let (q, k, v) = qkv::<f64>(64, 8, 40 + 3 * seed as u64);
        let p = params(mu, tau);
        let reference =
            attend_with_bias(&q, &k, &v, &build_bias_hype(64, p).unwrap(), causal).unwrap();
        let base = attend_hype_concat(&q, &k, &v, p, 1, causal).unwrap();
        worst = worst.max(max_rel_error(&base, &reference));
        for n in [2, 4, 8] {
            let out = attend_hype_concat(&q, &k, &v, p, n, causal).unwrap();
            worst = worst.max(max_rel_error(&out, &base));
            worst = worst.max(max_rel_error(&out, &reference));
        }
    }
    check(
        worst <= 1e-12,
        format!("n in {{1,2,4,8}}, 3 parameter sets; worst {worst:.2e} (limit 1e-12)"),
    )
}

// 5. Multi-head outputs, head by head.

fn criterion_multihead() -> Outcome {
    let (len, d) = (64, 8);
    let mut worst = 0.0f64;
    for n_heads in [1usize, 4, 8] {
        for causal in [false, true] {
            let heads: Vec<_> = recommend_mu_schedule(n_heads, 128)
                .unwrap()
                .into_iter()
                .enumerate()
                .map(|(h, p)| params(p.mu * 4.0, 0.5 + 0.25 * h as f64))
                .collect();
            let config = AttentionConfig {
                seq_len: len,
                head_dim: d,
                n_heads,
                heads: heads.clone(),
                causal,
                n_copies: 1,
                width: Width::F64,
            };
            let d_model = d * n_heads;
            let x = Matrix::<f64>::random_fill(len, d_model, 5, Fill::StandardNormal);
            let weights: Vec<_> = (0..n_heads)
                .map(|h| HeadWeights::random(d_model, d, 50 + 3 * h as u64).unwrap())
                .collect();
            let merged = attend_multihead(&x, &weights, &config).unwrap();
            for (h, (w, &p)) in weights.iter().zip(&heads).enumerate() {
                let (q, k, v) = w.project(&x).unwrap();
                let alone = attend_with_bias(&q, &k, &v, &build_bias_hype(len, p).unwrap(), causal)
                    .unwrap();
                worst = worst.max(max_rel_error(&head_output(&merged, h, d).unwrap(), &alone));
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("h in {{1,4,8}}, causal and not; worst per-head {worst:.2e} (limit 1e-12)"),
    )
}

// 6. Grids: concat path vs summed per-axis bias; 1-D grids are sequences.

fn criterion_grid() -> Outcome {
    let d = 8;
    let mut worst = 0.0f64;
    for dims in [vec![3, 4], vec![4, 4, 2], vec![2, 2, 2, 2]] {
        let shape = GridShape::new(dims.clone()).unwrap();
        let axis_params: Vec<_> = (0..dims.len())
            .map(|a| params(0.05 * (a + 1) as f64, 1.0 + 0.5 * a as f64))
            .collect();
        let (q, k, v) = qkv::<f64>(shape.len(), d, 70 + dims.len() as u64);
        let bias = build_bias_grid::<f64>(&shape, &axis_params).unwrap();
        for causal in [false, true] {
            let concat = attend_grid(&q, &k, &v, &shape, &axis_params, causal).unwrap();
            let explicit = attend_with_bias(&q, &k, &v, &bias, causal).unwrap();
            worst = worst.max(max_rel_error(&concat, &explicit));
        }
    }
    let mut reduces = true;
    for len in [1usize, 7, 32] {
        let p = params(0.03, 1.5);
        let shape = GridShape::new(vec![len]).unwrap();
        let (q, k, v) = qkv::<f64>(len, d, 90);
        let grid_eta = build_eta_grid::<f64>(&shape, d, &[p]).unwrap();
        let seq_eta = build_eta_pair::<f64>(len, d, p, 1).unwrap();
        reduces &= grid_eta.eta_q == seq_eta.eta_q && grid_eta.eta_k == seq_eta.eta_k;
        reduces &= build_bias_grid::<f64>(&shape, &[p]).unwrap().values
            == build_bias_hype::<f64>(len, p).unwrap().values;
        reduces &= attend_grid(&q, &k, &v, &shape, &[p], false).unwrap()
            == attend_hype_concat(&q, &k, &v, p, 1, false).unwrap();
    }
    check(
        worst <= 1e-12 && reduces,
        format!(
            "3x4, 4x4x2, 2x2x2x2; worst {worst:.2e} (limit 1e-12); 1-D grids bitwise equal to sequences: {reduces}"
        ),
    )
}

// 7. Analytic (mu, tau) gradients.

fn criterion_gradients() -> Outcome {
    let (mut fd_worst, mut path_worst, mut count) = (0.0f64, 0.0f64, 0usize);
    for &len in &GRAD_LENS {
        for &d in &GRAD_DIMS {
            for &mu in &GRAD_MUS {
                for &tau in &GRAD_TAUS {
                    for (variant, causal) in [(0, false), (1, true)] {
                        let (q, k, v) = qkv::<f64>(len, d, (len * 100 + d) as u64);
                        let p = params(mu, tau);
                        let ct = Matrix::<f64>::random_fill(len, d, 999, Fill::StandardNormal);
                        let loss = if variant == 0 {
                            Loss::Sum
                        } else {
                            Loss::Cotangent(&ct)
                        };
                        let a = attention_param_grads(&q, &k, &v, p, causal, loss).unwrap();
                        let f = finite_difference_grads(&q, &k, &v, p, causal, loss).unwrap();
                        fd_worst = fd_worst
                            .max(rel_diff(a.d_mu, f.d_mu))
                            .max(rel_diff(a.d_tau, f.d_tau));
                        for n in [1, 3] {
                            let c = attention_param_grads_concat(&q, &k, &v, p, n, causal, loss)
                                .unwrap();
                            path_worst = path_worst
                                .max(rel_diff(a.d_mu, c.d_mu))
                                .max(rel_diff(a.d_tau, c.d_tau));
                        }
                        count += 1;
                    }
                }
            }
        }
    }
    check(
        fd_worst <= 1e-5 && path_worst <= 1e-10,
        format!(
            "{count} configs; analytic vs finite difference {fd_worst:.2e} (limit 1e-5), concat vs explicit route {path_worst:.2e} (limit 1e-10)"
        ),
    )
}

// 8. Zero slope, a single token, overflow.

fn is_overflow<T>(r: &hype::Result<T>) -> bool {
    matches!(r, Err(Error::Overflow { .. }))
}

fn criterion_degenerate() -> Outcome {
    let mut notes = Vec::new();
    let (q, k, v) = qkv::<f64>(32, 8, 123);
    let mut zero_worst = 0.0f64;
    for causal in [false, true] {
        let vanilla = attend_vanilla(&q, &k, &v, causal).unwrap();
        for p in [params(0.0, 1.0), params(0.0, 0.0), params(0.3, 0.0)] {
            zero_worst = zero_worst.max(max_rel_error(
                &attend_hype_concat(&q, &k, &v, p, 2, causal).unwrap(),
                &vanilla,
            ));
            let explicit =
                attend_with_bias(&q, &k, &v, &build_bias_hype(32, p).unwrap(), causal).unwrap();
            zero_worst = zero_worst.max(max_rel_error(&explicit, &vanilla));
        }
    }
    let zero_ok = zero_worst <= 1e-12;
    notes.push(format!("zero bias vs vanilla {zero_worst:.2e}"));

    let (q1, k1, v1) = qkv::<f64>(1, 4, 7);
    let single = attend_hype_concat(&q1, &k1, &v1, params(0.5, 2.0), 1, true).unwrap();
    let single_explicit = attend_with_bias(
        &q1,
        &k1,
        &v1,
        &build_bias_hype(1, params(0.5, 2.0)).unwrap(),
        false,
    )
    .unwrap();
    let single_ok = single == v1 && single_explicit == v1;
    notes.push(format!("L=1 returns V: {single_ok}"));

    // Sweep slopes across the overflow boundary: every call either succeeds
    // with finite output or returns the overflow diagnostic.
    let (mut errors, mut finite, mut bad) = (0usize, 0usize, Vec::new());
    for len in [16usize, 128, 512] {
        let (q, k, v) = qkv::<f64>(len, 4, len as u64);
        let (qf, kf, vf) = (
            q.cast::<f32>().unwrap(),
            k.cast::<f32>().unwrap(),
            v.cast::<f32>().unwrap(),
        );
        for e in -3..=12 {
            let mu = 10f64.powf(e as f64 / 4.0);
            let p = params(mu, 1.0);
            let mut record = |label: &str, outcome: Result<bool, bool>| match outcome {
                Ok(true) => finite += 1,
                Err(true) => errors += 1,
                _ => bad.push(format!("{label} mu={mu:.3} L={len}")),
            };
            let f64_out = attend_hype_concat(&q, &k, &v, p, 1, false);
            record(
                "concat f64",
                f64_out
                    .as_ref()
                    .map(|m| m.max_abs().is_finite())
                    .map_err(|_| is_overflow(&f64_out)),
            );
            let f32_out = attend_hype_concat(&qf, &kf, &vf, p, 1, false);
            record(
                "concat f32",
                f32_out
                    .as_ref()
                    .map(|m| m.max_abs().is_finite())
                    .map_err(|_| is_overflow(&f32_out)),
            );
            let bias = build_bias_hype::<f64>(len, p);
            record(
                "bias f64",
                bias.as_ref()
                    .map(|b| b.values.max_abs().is_finite())
                    .map_err(|_| is_overflow(&bias)),
            );
            let grads = attention_param_grads(&q, &k, &v, p, false, Loss::Sum);
            record(
                "grad",
                grads
                    .as_ref()
                    .map(|g| g.d_mu.is_finite() && g.d_tau.is_finite())
                    .map_err(|_| is_overflow(&grads)),
            );
        }
    }
    let message = build_eta_pair::<f64>(128, 8, params(10.0, 1.0), 1)
        .unwrap_err()
        .to_string();
    let message_ok = message.contains("mu = 10") && message.contains("L = 128");
    notes.push(format!(
        "overflow sweep: {finite} finite, {errors} clean errors, {} silent failures; message \"{message}\"",
        bad.len()
    ));
    if !bad.is_empty() {
        notes.push(bad.join(", "));
    }
    check(
        zero_ok && single_ok && bad.is_empty() && errors > 0 && message_ok,
        notes.join("; "),
    )
}

// 9. The hype binary.

fn hype_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hype"))
}

fn verify_exit(config: &str) -> Option<i32> {
    let mut file = tempfile::NamedTempFile::new().expect("temp config");
    file.write_all(config.as_bytes()).expect("write config");
    let out = hype_bin()
        .arg("verify")
        .arg("--config")
        .arg(file.path())
        .output()
        .expect("run hype verify");
    out.status.code()
}

fn criterion_cli() -> Outcome {
    let mut notes = Vec::new();
    let default = hype_bin().arg("verify").output().expect("run hype verify");
    let default_ok = default.status.code() == Some(0);
    notes.push(format!("default verify exit {:?}", default.status.code()));

    let mut controls_ok = true;
    for key in Tolerances::KEYS {
        let code = verify_exit(&format!("tol.{key} = 1e-20\n"));
        if code != Some(1) {
            controls_ok = false;
            notes.push(format!("tol.{key} = 1e-20 exited {code:?}"));
        }
    }
    notes.push(format!(
        "{} single tightened tolerances exit 1: {controls_ok}",
        Tolerances::KEYS.len()
    ));

    let mut roundtrip_ok = true;
    for (len, mu, tau, width) in [
        (2, 0.1, 1.0, "f64"),
        (17, 0.0123, 2.5, "f64"),
        (64, 0.07, 0.3, "f32"),
        (1, 0.5, 1.0, "f64"),
    ] {
        let out = hype_bin()
            .args([
                "bias-dump",
                "-L",
                &len.to_string(),
                "--mu",
                &mu.to_string(),
                "--tau",
                &tau.to_string(),
            ])
            .args(["--width", width])
            .output()
            .expect("run hype bias-dump");
        let parsed =
            parse_csv(&String::from_utf8(out.stdout).expect("utf-8 csv")).expect("csv parses");
        let p = params(mu, tau);
        let same = if width == "f64" {
            let want = build_bias_hype::<f64>(len, p).unwrap();
            want.values.to_rows_f64().iter().zip(&parsed).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
        } else {
            let want = build_bias_hype::<f32>(len, p).unwrap();
            (0..len).all(|i| {
                want.values
                    .row(i)
                    .iter()
                    .zip(&parsed[i])
                    .all(|(x, y)| x.to_bits() == (*y as f32).to_bits())
            })
        };
        roundtrip_ok &= out.status.success() && parsed.len() == len && same;
    }
    notes.push(format!("bias-dump CSV bitwise round-trip: {roundtrip_ok}"));
    check(default_ok && controls_ok && roundtrip_ok, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("core identity", criterion_identity),
        ("alibi approximation", criterion_alibi),
        ("storage accounting", criterion_storage),
        ("stacking", criterion_stacking),
        ("multi-head", criterion_multihead),
        ("grids", criterion_grid),
        ("gradients", criterion_gradients),
        ("degenerate and overflow", criterion_degenerate),
        ("cli contract", criterion_cli),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
