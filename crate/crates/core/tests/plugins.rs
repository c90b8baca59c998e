mod common;

use std::sync::Arc;

use qshoot::plugin::{load_with_manifest_file, NumericArray, PluginError, ShapeError};
use qshoot::potentials::{eval_scalar, potential_from_plugin, PotentialSpec};
use qshoot::search::ShootingConfig;
use qshoot::shooting::{solve_eigen, ShootingProblem};
use rand::{Rng, SeedableRng};

fn listings() -> qshoot::plugin::LoadedPlugin {
    load_with_manifest_file(None, &common::example_plugin("listings")).unwrap()
}

#[test]
fn fun_returns_42() {
    let p = listings();
    let names: Vec<&str> = p.function_names().collect();
    assert_eq!(names, ["fun", "fun2"]);
    let out = p.call("fun", &[NumericArray::Int32(vec![0])]).unwrap();
    assert_eq!(out, [NumericArray::Int32(vec![42])]);
}

#[test]
fn fun2_two_inputs_two_outputs() {
    let p = listings();
    let out = p
        .call("fun2", &[NumericArray::Int32(vec![3]), NumericArray::Float32(vec![2.0, 5.0])])
        .unwrap();
    assert_eq!(out, [NumericArray::Int32(vec![126]), NumericArray::Float32(vec![10.0, 32.0])]);
}

#[test]
fn shape_mismatches_are_distinct() {
    let p = listings();
    let err = p.call("fun", &[NumericArray::Int32(vec![0, 1])]).unwrap_err();
    assert!(matches!(err, PluginError::Shape(ShapeError::Length { index: 0, expected: 1, got: 2, .. })));
    let err = p.call("fun", &[NumericArray::Float64(vec![0.0])]).unwrap_err();
    assert!(matches!(err, PluginError::Shape(ShapeError::Type { index: 0, .. })));
    let err = p.call("fun", &[]).unwrap_err();
    assert!(matches!(err, PluginError::Shape(ShapeError::Arity { expected: 1, got: 0, .. })));
    let err = p.call("nope", &[]).unwrap_err();
    assert!(matches!(err, PluginError::UnknownFunction(_)));
}

#[test]
fn length_override_changes_validation() {
    let p = listings();
    p.override_lengths("fun", &[10], &[1]).unwrap();
    let out = p.call("fun", &[NumericArray::Int32((0..10).collect())]).unwrap();
    assert_eq!(out, [NumericArray::Int32(vec![42])]);
    assert!(matches!(
        p.call("fun", &[NumericArray::Int32(vec![0])]),
        Err(PluginError::Shape(ShapeError::Length { expected: 10, got: 1, .. }))
    ));
    assert!(matches!(p.override_lengths("fun", &[10, 1], &[1]), Err(PluginError::OverrideArity { .. })));
    assert!(matches!(p.override_lengths("fun2", &[1, 2], &[1, 2]), Err(PluginError::NotOverridable(_))));

    // identity override restores the declared behaviour
    p.override_lengths("fun", &[1], &[1]).unwrap();
    assert!(p.call("fun", &[NumericArray::Int32(vec![7])]).is_ok());
}

#[test]
fn sum_plugin_matches_loop() {
    let plugin = load_with_manifest_file(None, &common::example_plugin("sum")).unwrap();
    let x: Vec<f64> = (1..=7).map(|i| 0.5 * i as f64 - 1.3).collect();
    plugin.override_lengths("sum", &[7, 1], &[1]).unwrap();
    let out = plugin
        .call("sum", &[NumericArray::Float64(x.clone()), NumericArray::Int32(vec![7])])
        .unwrap();
    let mut expected = 0.0;
    for v in &x {
        expected += v;
    }
    assert_eq!(out[0].as_f64().unwrap(), [expected]);
}

#[test]
fn missing_symbol_is_named() {
    let manifest = common::inline_plugin(
        "onlyfun",
        "#include <stdint.h>\nvoid fun(int32_t *o, const int32_t *i) { (void)i; *o = 1; }\n",
        "[function fun]\nout_lengths = 1\nout_types = INT32\nin_lengths = 1\nin_types = INT32\n\
         [function absent]\nout_lengths = 1\nout_types = INT32\nin_lengths = 1\nin_types = INT32\n",
    );
    match load_with_manifest_file(None, &manifest) {
        Err(PluginError::MissingSymbol { symbol, .. }) => assert_eq!(symbol, "absent"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn overrun_hits_canary() {
    let manifest = common::inline_plugin(
        "overrun",
        "void spill(double *o, const double *i) { o[0] = i[0]; o[1] = -1.0; }\n",
        "[function spill]\nout_lengths = 1\nout_types = FLOAT64\nin_lengths = 1\nin_types = FLOAT64\n",
    );
    let p = load_with_manifest_file(None, &manifest).unwrap();
    let err = p.call("spill", &[NumericArray::Float64(vec![2.0])]).unwrap_err();
    assert!(matches!(err, PluginError::Overrun { output: 0, .. }), "{err:?}");
}

#[test]
fn plugin_cornell_matches_native() {
    let plugin = Arc::new(load_with_manifest_file(None, &common::example_plugin("cornell")).unwrap());
    let spec = potential_from_plugin(plugin, "cornell").unwrap();
    let native = PotentialSpec::cornell(0.1, 0.5).unwrap();
    let PotentialSpec::Plugin(pp) = &spec else { panic!() };

    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let rs: Vec<f64> = (0..1000).map(|_| rng.gen_range(1e-4..50.0)).collect();
    let batch = pp.sample(&rs).unwrap();
    for (&r, &b) in rs.iter().zip(&batch) {
        let v = eval_scalar(&native, r).unwrap();
        let single = pp.eval(r).unwrap();
        assert!((single - v).abs() <= 1e-12 * v.abs().max(1.0), "r = {r}");
        assert_eq!(single, b);
    }
}

#[test]
fn plugin_eigenvalue_equals_native() {
    let plugin = Arc::new(load_with_manifest_file(None, &common::example_plugin("cornell")).unwrap());
    let spec = potential_from_plugin(plugin, "cornell").unwrap();
    let cfg = ShootingConfig::new(0.0, 20.0);
    let via_plugin = solve_eigen(&ShootingProblem::with_default_mesh(spec, 1, 1.0).unwrap(), &cfg, 0).unwrap();
    let native = solve_eigen(
        &ShootingProblem::with_default_mesh(PotentialSpec::cornell(0.1, 0.5).unwrap(), 1, 1.0).unwrap(),
        &cfg,
        0,
    )
    .unwrap();
    assert!((via_plugin.energy - native.energy).abs() <= cfg.bisect_tol);
}

#[test]
fn adapter_rejects_wrong_shape() {
    let p = Arc::new(listings());
    assert!(matches!(potential_from_plugin(p.clone(), "fun"), Err(PluginError::Adapter { .. })));
    assert!(matches!(potential_from_plugin(p, "fun2"), Err(PluginError::Adapter { .. })));
}
