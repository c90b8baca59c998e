//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use qshoot::coupled::{CoupledProblem, CoupledShooter};
use qshoot::fit::{fit_parameters, predict, CornellParams, FitOptions, FitTarget};
use qshoot::plugin::{ManifestError, PluginManifest};
use qshoot::potentials::{MatrixPotentialSpec, PotentialSpec};
use qshoot::radial::{integrate_product, propagate_radial, simpson, RadialMesh};
use qshoot::search::ShootingConfig;
use qshoot::shooting::{EigenSolution, Shooter, ShootingProblem};
use qshoot::spectrum::SpectrumModel;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn levels(potential: PotentialSpec, l: u32, mesh: RadialMesh, cfg: &ShootingConfig, ns: &[usize]) -> Vec<EigenSolution> {
    let problem = ShootingProblem::new(potential, l, 1.0, mesh).unwrap();
    Shooter::new(&problem).unwrap().solve_levels(cfg, ns).unwrap()
}

fn cornell_reference_levels() -> Outcome {
    let start = Instant::now();
    let problem = ShootingProblem::with_default_mesh(PotentialSpec::cornell(0.1, 0.5).unwrap(), 1, 1.0).unwrap();
    let shooter = Shooter::new(&problem).unwrap();
    let cfg = ShootingConfig::new(0.0, 20.0);
    let expected = [(0, 2.15789), (1, 3.10952), (2, 3.93850), (20, 13.5995)];
    let mut worst: f64 = 0.0;
    let mut found = Vec::new();
    for (n, e) in expected {
        let sol = shooter.solve(&cfg, n).map_err(|err| err.to_string())?;
        worst = worst.max(((sol.energy - e) / e).abs());
        found.push(format!("{:.5}", sol.energy));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 5e-4 && secs < 30.0,
        format!("E = [{}], max rel err {worst:.1e} (tol 5e-4), {secs:.2} s (limit 30 s)", found.join(", ")),
    )
}

fn hybrid_reference_levels() -> Outcome {
    let spec = MatrixPotentialSpec::hybrid_log(1.0, 0.5, 2.0, 0.1, 1, 1.0).unwrap();
    let mesh = RadialMesh::new(1e-5, 30.0, 20001).unwrap();
    let problem = CoupledProblem::new(spec, 1, 1.0, mesh).unwrap();
    let sols = CoupledShooter::new(&problem)
        .and_then(|s| s.solve_levels(&ShootingConfig::new(0.0, 3.0), &[0, 1]))
        .map_err(|e| e.to_string())?;
    let errs = [(sols[0].energy - 1.01727).abs(), (sols[1].energy - 1.18789).abs()];
    check(
        errs.iter().all(|&e| e < 5e-4),
        format!(
            "E = [{:.5}, {:.5}], errors [{:.1e}, {:.1e}] (tol 5e-4)",
            sols[0].energy, sols[1].energy, errs[0], errs[1]
        ),
    )
}

fn analytic_oracles() -> Outcome {
    let osc = PotentialSpec::power(0.25, 2.0).unwrap();
    let mut osc_err: f64 = 0.0;
    for l in 0..=2 {
        let mesh = RadialMesh::new(1e-5, 30.0, 20001).unwrap();
        for s in levels(osc.clone(), l, mesh, &ShootingConfig::new(0.0, 20.0), &[0, 1, 2, 3, 4, 5]) {
            osc_err = osc_err.max((s.energy - (2.0 * s.n as f64 + l as f64 + 1.5)).abs());
        }
    }
    let coulomb = PotentialSpec::power(-1.0, -1.0).unwrap();
    let mut coul_err: f64 = 0.0;
    for l in 0..=1 {
        let mesh = RadialMesh::new(1e-5, 300.0, 40001).unwrap();
        let cfg = ShootingConfig::new(-0.3, -0.001).with_scan_step(0.002);
        for s in levels(coulomb.clone(), l, mesh, &cfg, &[0, 1, 2, 3]) {
            let k = (s.n + l as usize + 1) as f64;
            coul_err = coul_err.max((s.energy + 0.25 / (k * k)).abs());
        }
    }
    check(
        osc_err < 1e-4 && coul_err < 1e-5,
        format!("oscillator max err {osc_err:.1e} (tol 1e-4), Coulomb max err {coul_err:.1e} (tol 1e-5)"),
    )
}

fn free_particle_ratio() -> f64 {
    // y'' = -y from y(r0) = r0, y'(r0) = 1
    let (r0, r1): (f64, f64) = (1e-5, 10.0);
    let exact = (r1 - r0).sin() + r0 * (r1 - r0).cos();
    let err = |points| {
        let mesh = RadialMesh::new(r0, r1, points).unwrap();
        let y = propagate_radial(|_| 0.0, 1.0, 0, 1.0, &mesh, r0, 1.0);
        y.values()[points - 1] - exact
    };
    let (e1, e2, e3) = (err(101), err(201), err(401));
    ((e1 - e2) / (e2 - e3)).abs()
}

fn invariants() -> Outcome {
    let cornell = PotentialSpec::cornell(0.1, 0.5).unwrap();
    let problem = ShootingProblem::with_default_mesh(cornell.clone(), 1, 1.0).unwrap();
    let shooter = Shooter::new(&problem).unwrap();

    let counts: Vec<usize> = (0..50).map(|k| shooter.nodes_at(0.4 * k as f64)).collect();
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]);

    let sols = shooter.solve_levels(&ShootingConfig::new(0.0, 20.0), &[0, 1, 2, 3]).unwrap();
    let h = problem.mesh.step();
    let norm_err = sols
        .iter()
        .map(|s| {
            let y2: Vec<f64> = s.wavefunction.values().iter().map(|y| y * y).collect();
            (simpson(&y2, h) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let mut overlap: f64 = 0.0;
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            let o = integrate_product(&sols[i].wavefunction, |_| 1.0, &sols[j].wavefunction).unwrap();
            overlap = overlap.max(o.abs());
        }
    }

    let a = PotentialSpec::power(0.25, 2.0).unwrap();
    let b = PotentialSpec::power(0.5, 1.0).unwrap();
    let mesh = RadialMesh::new(1e-5, 30.0, 20001).unwrap();
    let cfg = ShootingConfig::new(0.0, 6.0);
    let mut merged: Vec<f64> = [a.clone(), b.clone()]
        .into_iter()
        .flat_map(|v| levels(v, 0, mesh, &cfg, &[0, 1, 2]).into_iter().map(|s| s.energy))
        .collect();
    merged.sort_by(f64::total_cmp);
    let coupled = CoupledProblem::new(MatrixPotentialSpec::diagonal(vec![a, b]).unwrap(), 0, 1.0, mesh).unwrap();
    let got = CoupledShooter::new(&coupled)
        .and_then(|s| s.solve_levels(&cfg, &[0, 1, 2, 3]))
        .map_err(|e| e.to_string())?;
    let decoupled_err = got.iter().zip(&merged).map(|(s, e)| (s.energy - e).abs()).fold(0.0, f64::max);

    let ratio = free_particle_ratio();
    check(
        monotone && norm_err < 1e-10 && overlap < 1e-5 && decoupled_err < 1e-6 && (12.0..=20.0).contains(&ratio),
        format!(
            "monotone over 50 energies: {monotone}; norm err {norm_err:.1e} (tol 1e-10); max overlap {overlap:.1e} \
             (tol 1e-5); decoupled err {decoupled_err:.1e} (tol 1e-6); RK4 ratio {ratio:.2} (want 12..20)"
        ),
    )
}

fn perturbation_consistency() -> Outcome {
    let v0 = PotentialSpec::cornell(0.1, 0.5).unwrap();
    let cfg = ShootingConfig::new(0.0, 10.0);
    let first_order_error = |delta: f64| -> (f64, f64) {
        let dv = PotentialSpec::power(delta, -1.0).unwrap();
        let model = SpectrumModel::new(v0.clone(), 0, 1.0, cfg).unwrap().with_v_1m(Some(dv.clone()));
        let b = model.mass_at_order(0).unwrap();
        let exact = Shooter::new(&ShootingProblem::with_default_mesh(PotentialSpec::Sum(vec![v0.clone(), dv]), 0, 1.0).unwrap())
            .unwrap()
            .solve(&cfg, 0)
            .unwrap()
            .energy;
        (exact - (b.e0 + b.nlo), b.nnlo_sum)
    };
    let (err1, sum1) = first_order_error(0.01);
    let (err2, _) = first_order_error(0.005);
    let order = err1 / err2;

    let tails: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&k| {
            SpectrumModel::new(v0.clone(), 0, 1.0, cfg)
                .unwrap()
                .with_v_1m(Some(PotentialSpec::power(0.01, -1.0).unwrap()))
                .with_basis_max(k)
                .unwrap()
                .mass_at_order(0)
                .unwrap()
                .sum_tail
        })
        .collect();
    let tails_fall = tails.windows(2).all(|w| w[1] < w[0]);
    check(
        (3.0..=5.0).contains(&order) && sum1 <= 0.0 && tails_fall,
        format!(
            "first-order error {err1:.2e} at 0.01/r, ratio on halving {order:.2} (want ~4); second-order sum \
             {sum1:.2e} (want <= 0); tails {:?} decreasing: {tails_fall}",
            tails.iter().map(|t| format!("{t:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn fit_round_trip() -> Outcome {
    let truth = CornellParams { a: 0.1, k: 0.5, m: 1.0 };
    let options = FitOptions::default();
    let mut targets = [
        FitTarget { n: 0, l: 0, mass: 0.0 },
        FitTarget { n: 1, l: 0, mass: 0.0 },
        FitTarget { n: 0, l: 1, mass: 0.0 },
    ];
    let masses = predict(truth, &targets, &options).map_err(|e| e.to_string())?;
    for (t, m) in targets.iter_mut().zip(masses) {
        t.mass = m;
    }
    let guess = CornellParams { a: 0.12, k: 0.6, m: 1.2 };
    let start = Instant::now();
    let report = fit_parameters(&targets, guess, &options).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let p = report.params;
    let rel = [(p.a - 0.1) / 0.1, (p.k - 0.5) / 0.5, p.m - 1.0].map(f64::abs);
    let worst = rel.iter().copied().fold(0.0, f64::max);
    check(
        worst < 1e-3 && secs < 60.0,
        format!(
            "recovered ({:.6}, {:.6}, {:.6}) in {} iterations, max rel err {worst:.1e} (tol 1e-3), {secs:.2} s (limit 60 s)",
            p.a, p.k, p.m, report.iterations
        ),
    )
}

#[derive(Debug, Clone, Copy)]
enum Mutation {
    Arity,
    Type,
    Length,
}

fn manifest_strategy() -> impl Strategy<Value = (Vec<(usize, usize)>, usize, Mutation, usize, String)> {
    // (in arity, out arity) per function, target function, class, target slot, junk token
    (
        prop::collection::vec((1usize..5, 1usize..5), 1..4),
        any::<usize>(),
        prop_oneof![Just(Mutation::Arity), Just(Mutation::Type), Just(Mutation::Length)],
        any::<usize>(),
        "[A-Za-z0-9_.-]{1,8}",
    )
}

fn render(functions: &[(usize, usize)], target: usize, mutation: Mutation, slot: usize, junk: &str) -> (String, usize) {
    const TYPES: [&str; 3] = ["INT32", "FLOAT32", "FLOAT64"];
    let mut text = String::from("# generated\n");
    let mut line = 1;
    let mut bad_line = 0;
    for (f, &(ins, outs)) in functions.iter().enumerate() {
        let mut out_lengths: Vec<String> = (0..outs).map(|i| (i + 1).to_string()).collect();
        let mut out_types: Vec<String> = (0..outs).map(|i| TYPES[i % 3].to_string()).collect();
        let in_lengths: Vec<String> = (0..ins).map(|i| (i + 2).to_string()).collect();
        let in_types: Vec<String> = (0..ins).map(|i| TYPES[(i + 1) % 3].to_string()).collect();
        let hit = f == target % functions.len();
        if hit {
            match mutation {
                Mutation::Arity => {
                    out_types.push("FLOAT64".into());
                }
                Mutation::Type => {
                    let i = slot % outs;
                    out_types[i] = if TYPES.contains(&junk) { format!("{junk}x") } else { junk.to_string() };
                }
                Mutation::Length => {
                    let i = slot % outs;
                    out_lengths[i] = if junk.parse::<usize>().is_ok_and(|v| v >= 1) { "0".into() } else { junk.to_string() };
                }
            }
        }
        text.push_str(&format!("[function f{f}]\n"));
        line += 1;
        let keys = [
            ("out_lengths", out_lengths),
            ("out_types", out_types),
            ("in_lengths", in_lengths),
            ("in_types", in_types),
        ];
        for (key, values) in keys {
            text.push_str(&format!("{key} = {}\n", values.join(", ")));
            line += 1;
            let reported = match mutation {
                Mutation::Length => key == "out_lengths",
                Mutation::Type => key == "out_types",
                Mutation::Arity => key == "out_types",
            };
            if hit && reported {
                bad_line = line;
            }
        }
    }
    (text, bad_line)
}

fn manifest_fuzz() -> Outcome {
    const CASES: u32 = 1500;
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let seen: [Cell<usize>; 3] = Default::default();
    let result = runner.run(&manifest_strategy(), |(functions, target, mutation, slot, junk)| {
        let (text, bad_line) = render(&functions, target, mutation, slot, &junk);
        let parsed = catch_unwind(AssertUnwindSafe(|| PluginManifest::parse(&text)))
            .map_err(|_| TestCaseError::fail(format!("parser panicked on\n{text}")))?;
        let err = parsed.err().ok_or_else(|| TestCaseError::fail(format!("accepted\n{text}")))?;
        let ok = match (mutation, &err) {
            (Mutation::Arity, ManifestError::ArityMismatch { .. }) => {
                seen[0].set(seen[0].get() + 1);
                true
            }
            (Mutation::Type, ManifestError::UnknownType { .. }) => {
                seen[1].set(seen[1].get() + 1);
                true
            }
            (Mutation::Length, ManifestError::InvalidLength { .. }) => {
                seen[2].set(seen[2].get() + 1);
                true
            }
            _ => false,
        };
        prop_assert!(ok, "{mutation:?} gave {err:?} for\n{text}");
        // arity is only detectable once both lists of a direction are read
        if !matches!(mutation, Mutation::Arity) {
            prop_assert_eq!(err.line(), bad_line);
        }
        Ok(())
    });

    let mut garbage = TestRunner::new(Config {
        cases: 500,
        failure_persistence: None,
        ..Config::default()
    });
    let crash_free = garbage.run(&"(\\PC|\n|\\[|\\]|=|,){0,200}", |text| {
        catch_unwind(|| {
            let _ = PluginManifest::parse(&text);
        })
        .map_err(|_| TestCaseError::fail(format!("parser panicked on {text:?}")))?;
        Ok(())
    });

    match (result, crash_free) {
        (Ok(()), Ok(())) if seen.iter().all(|c| c.get() > 0) => Ok(format!(
            "{CASES} malformed manifests (arity {}, type {}, length {}) each rejected with its own error; \
             500 free-form inputs, no panics",
            seen[0].get(), seen[1].get(), seen[2].get()
        )),
        (Err(e), _) => Err(e.to_string()),
        (_, Err(e)) => Err(e.to_string()),
        _ => Err(format!("a class was never generated: {seen:?}")),
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("cornell reference levels", cornell_reference_levels),
        ("hybrid coupled levels", hybrid_reference_levels),
        ("analytic oracles", analytic_oracles),
        ("invariant suite", invariants),
        ("perturbation consistency", perturbation_consistency),
        ("fit round trip", fit_round_trip),
        ("manifest fuzz", manifest_fuzz),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
