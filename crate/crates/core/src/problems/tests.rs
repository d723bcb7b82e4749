use super::*;

#[test]
fn defaults_match_the_model_problems() {
    let e = ProblemSpec::elasticity();
    assert_eq!((e.young, e.nu, e.force), (1e10, 1.0 / 3.0, [0.0, 0.0, -1e5]));
    let a = ProblemSpec::poisson_arctan(3);
    assert_eq!(a.s, 60.0);
    let x = a.exact().unwrap();
    assert_eq!(x.centre, [1.25, -0.25, -0.25]);
    assert!((x.radius - PI / 3.0).abs() < 1e-15);
    assert!(ProblemSpec::poisson_const(3).exact().is_none());
    assert!(matches!(ProblemSpec { nu: 0.5, ..e }.validate(), Err(ProblemError::Invalid(_))));
    assert!(ProblemSpec { dim: 2, ..e }.validate().is_err());
    assert!(ProblemSpec::poisson_const(4).validate().is_err());
}

#[test]
fn arctan_derivatives_match_finite_differences() {
    for dim in [2, 3] {
        let u = ArctanSolution::new(dim, 60.0);
        let val = |x: [f64; 3]| {
            let mut v = [0.0];
            u.value(x, &mut v);
            v[0]
        };
        for x in [[0.3, 0.7, 0.2], [0.55, 0.41, 0.9], [0.1, 0.1, 0.1]] {
            let mut g = [[0.0; 3]];
            u.gradient(x, &mut g);
            let h = 1e-6;
            let mut lap = 0.0;
            for a in 0..dim {
                let (mut xp, mut xm) = (x, x);
                xp[a] += h;
                xm[a] -= h;
                let fd = (val(xp) - val(xm)) / (2.0 * h);
                assert!((fd - g[0][a]).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", g[0][a]);
                let h2 = 1e-4;
                let (mut xp, mut xm) = (x, x);
                xp[a] += h2;
                xm[a] -= h2;
                lap += (val(xp) - 2.0 * val(x) + val(xm)) / (h2 * h2);
            }
            let f = u.minus_laplacian(x);
            assert!((f + lap).abs() <= 1e-3 * (1.0 + f.abs()), "{f} vs {}", -lap);
        }
    }
}

#[test]
fn lattice_recipes() {
    let f = ForestRecipe::Lattice { h_ratio: 4 }.build(3, 27).unwrap();
    assert_eq!(f.len(), 27 * 64);
    assert_eq!(f.brick_size(), 3);
    let f = ForestRecipe::Lattice { h_ratio: 4 }.build(3, 64).unwrap();
    assert_eq!(f.len(), 4096);
    assert_eq!(f.brick_size(), 1);
    let f = ForestRecipe::Lattice { h_ratio: 2 }.build(2, 9).unwrap();
    assert_eq!(f.len(), 36);
    assert!(matches!(ForestRecipe::Lattice { h_ratio: 4 }.build(3, 10), Err(ProblemError::Lattice { .. })));
    assert!(matches!(ForestRecipe::Lattice { h_ratio: 3 }.build(3, 8), Err(ProblemError::Lattice { .. })));
    let r = ForestRecipe::Refined { level: 2, circle: 1, square: 1 }.build(2, 1).unwrap();
    assert!(r.len() > 16 && r.is_balanced());
}

#[test]
fn lattice_partition_is_regular() {
    let preset = &builtin_presets()[0];
    let f = preset.meshes[0].build(3, 27).unwrap();
    let part = f.partition_equal(27).unwrap();
    for s in 0..27 {
        let trees: std::collections::BTreeSet<u32> = part.elements(s).iter().map(|&e| f.leaf(e).tree_id).collect();
        assert_eq!(trees.len(), 1);
    }
}

const CONFIG: &str = r#"
[[preset]]
name = "small"
meshes = [{ kind = "lattice", h_ratio = 2 }, { kind = "uniform", level = 2 }]
subdomains = [8]
problem = { kind = "poisson_const", dim = 3 }

[[preset]]
name = "elastic"
meshes = [{ kind = "refined", level = 2, circle = 1, square = 0 }]
subdomains = [4, 5]
problem = { kind = "elasticity", nu = 0.3 }
levels = 3
weights = "stiffness"
order = 2
"#;

#[test]
fn config_file_roundtrip() {
    let presets = parse_presets(CONFIG).unwrap();
    assert_eq!(presets.len(), 2);
    assert_eq!(presets[0].order, 1);
    assert_eq!(presets[0].levels, 2);
    assert_eq!(presets[0].weights, WeightMode::Cardinality);
    assert_eq!(presets[1].problem.kind, ProblemKind::Elasticity);
    assert_eq!(presets[1].problem.nu, 0.3);
    assert_eq!(presets[1].problem.young, 1e10);
    assert_eq!(presets[1].weights, WeightMode::Stiffness);
    assert_eq!(presets[1].meshes[0], ForestRecipe::Refined { level: 2, circle: 1, square: 0 });
    let text = toml::to_string(&PresetOut { preset: presets.clone() }).unwrap();
    assert_eq!(parse_presets(&text).unwrap(), presets);
    assert!(matches!(parse_presets("[[preset]]\nname = 1\n"), Err(ProblemError::Config(_))));
    assert!(matches!(parse_presets(&CONFIG.replace("h_ratio", "hratio")), Err(ProblemError::Config(_))));
    assert!(matches!(parse_presets(&CONFIG.replace("nu = 0.3", "nu = 0.6")), Err(ProblemError::Invalid(_))));
    assert!(matches!(find_preset(&presets, "nope"), Err(ProblemError::UnknownPreset(_))));
}

#[derive(Serialize)]
struct PresetOut {
    preset: Vec<ExperimentPreset>,
}

#[test]
fn builtin_presets_are_valid_and_unique() {
    let p = builtin_presets();
    let names: std::collections::BTreeSet<&str> = p.iter().map(|x| x.name.as_str()).collect();
    assert_eq!(names.len(), p.len());
    for x in &p {
        x.problem.validate().unwrap();
        assert!(!x.meshes.is_empty());
    }
}

#[test]
fn empty_subdomain_list_gives_empty_table() {
    let mut p = find_preset(&builtin_presets(), "poisson-weak").unwrap();
    p.subdomains.clear();
    let rows = run_preset(&p);
    assert!(rows.is_empty());
    assert_eq!(table_csv(&rows), format!("{TABLE_CSV_HEADER}\n"));
}

#[test]
fn table_schema_is_stable() {
    assert_eq!(
        TABLE_CSV_HEADER,
        "mesh,N_S,N_S2,n,n_per_subdomain,n_interface,n_interface2,n_coarse,n_coarse2,iterations,condition,t_setup,t_pcg,\
coarse_min,coarse_max,coarse_avg,fact_min,fact_max,fact_avg,sol_min,sol_max,sol_avg,status"
    );
    let row = TableRow { mesh: "R_U=2".into(), n_subdomains: 4, n: 100, second_level: Some((2, 5, 3)), error: Some("x \"y\"".into()), ..Default::default() };
    let csv = table_csv(&[row]);
    let line = csv.lines().nth(1).unwrap();
    assert!(line.starts_with("R_U=2,4,2,100,25.0,0,5,0,3,0,"));
    assert!(line.ends_with("\"error: x 'y'\""));
    assert_eq!(line.split(',').count(), TABLE_CSV_HEADER.split(',').count());
}

#[test]
fn failures_are_recorded_per_row() {
    let mut p = find_preset(&builtin_presets(), "poisson-weak").unwrap();
    p.subdomains = vec![10, 8];
    let rows = run_preset(&p);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.as_ref().unwrap().contains("lattice"));
    assert!(rows[1].error.is_none());
    assert_eq!(rows[1].local_coarse.min, 6.0);
    assert_eq!(rows[1].n_coarse, 18);
}

#[test]
fn preset_runs_are_reproducible() {
    let p = ExperimentPreset::new("t", ProblemSpec::poisson_const(3), vec![ForestRecipe::Refined { level: 2, circle: 1, square: 1 }], vec![5]);
    let a = run_preset(&p);
    let b = run_preset(&p);
    let key = |r: &TableRow| (r.n, r.n_interface, r.n_coarse, r.iterations, r.condition.to_bits(), r.local_coarse);
    assert_eq!(key(&a[0]), key(&b[0]));
    assert!(a[0].error.is_none());
}

#[test]
fn three_level_rows_report_the_second_level() {
    let mut p = find_preset(&builtin_presets(), "poisson-weak-3l").unwrap();
    p.subdomains = vec![27];
    let rows = run_preset(&p);
    let (ns2, _, nc2) = rows[0].second_level.unwrap();
    assert_eq!(ns2, 5);
    assert!(nc2 > 0);
}

#[test]
fn uniform_rates_on_coarse_meshes() {
    let setup = ConvergenceSetup { initial_level: 2, steps: 2, n_subdomains: 2, marker: None };
    let c = convergence_report(&ProblemSpec::poisson_arctan(2), &[1], RefinementMode::Uniform, &setup).unwrap();
    assert_eq!(c[0].points.len(), 3);
    assert!(c[0].points.windows(2).all(|w| w[1].n_dofs > w[0].n_dofs));
    let g = c[0].to_gnuplot();
    assert_eq!(g.lines().count(), 5);
    let mid = c[0].points[1].n_dofs as f64;
    assert!((c[0].h1_at(mid).unwrap() - c[0].points[1].h1).abs() < 1e-12);
    assert!(c[0].h1_at(1.0).is_none());
    assert!(convergence_report(&ProblemSpec::poisson_const(2), &[1], RefinementMode::Uniform, &setup).is_err());
}
