//! Acceptance gate: eleven end-to-end checks with pinned tolerances.
//! Each test prints one verdict line; a failing check fails its test.

use std::sync::OnceLock;
use std::time::Instant;

use eqforge::cocycle::{FlatPotential, PotentialSpec};
use eqforge::conditions::{check_c2, check_c3, covering_time, estimate_contraction};
use eqforge::leaf::{seed_leaf, LeafSegment};
use eqforge::measures::{
    best_convex_fit, discrepancy_to_uniform, fourier_discrepancy, frequency_dictionary,
    leaf_weight_table, mass_in_ball, EmpiricalMeasure, LeafWeightTable,
};
use eqforge::pressure::{
    change_of_variables_table, pressure_integral, pressure_separated, pressure_spanning,
    ulam_pressure,
};
use eqforge::systems::{SystemSpec, TorusPoint};

const LOG_LAMBDA_U: f64 = 0.9624236501192069;
const SPACING: f64 = 2.5e-5;

fn zero() -> FlatPotential {
    FlatPotential::flatten(&PotentialSpec::Zero)
}

fn trig() -> FlatPotential {
    FlatPotential::flatten(&PotentialSpec::TrigPoly(vec![((1, 0), 0.1)]))
}

fn tgeo(t: f64) -> FlatPotential {
    FlatPotential::flatten(&PotentialSpec::TGeometric(t))
}

struct CatCtx {
    sys: SystemSpec,
    leaf: LeafSegment,
    table_zero: LeafWeightTable,
}

fn cat() -> &'static CatCtx {
    static CTX: OnceLock<CatCtx> = OnceLock::new();
    CTX.get_or_init(|| {
        let sys = SystemSpec::cat();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.5, 0.5), 0.3, SPACING, 0).unwrap();
        let table_zero = leaf_weight_table(&sys, &leaf, &zero(), 30).unwrap();
        CatCtx {
            sys,
            leaf,
            table_zero,
        }
    })
}

struct KatokCtx {
    table_t2: LeafWeightTable,
    table_t1: LeafWeightTable,
}

fn katok() -> &'static KatokCtx {
    static CTX: OnceLock<KatokCtx> = OnceLock::new();
    CTX.get_or_init(|| {
        let sys = SystemSpec::katok_default();
        let leaf = seed_leaf(&sys, &TorusPoint::new(0.3, 0.7), 0.3, SPACING, 0).unwrap();
        let table_t2 = leaf_weight_table(&sys, &leaf, &tgeo(2.0), 40).unwrap();
        let table_t1 = leaf_weight_table(&sys, &leaf, &tgeo(1.0), 40).unwrap();
        KatokCtx { table_t2, table_t1 }
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn pairwise_spread(vals: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in vals {
        for b in vals {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn criterion_01_cat_pressure_from_defaults() {
    let start = Instant::now();
    let sys = SystemSpec::cat();
    let leaf = seed_leaf(&sys, &TorusPoint::new(0.5, 0.5), 0.3, SPACING, 0).unwrap();
    let est = pressure_integral(&sys, &leaf, &zero(), 25).unwrap();
    let elapsed = start.elapsed();
    let err = (est.extrapolated - LOG_LAMBDA_U).abs();
    let pass = leaf.samples().len() >= 20_000 && err <= 0.02 && elapsed.as_secs_f64() <= 60.0;
    println!(
        "criterion 01 cat pressure, integral route: {} (pressure {:.6}, |err| {:.2e} <= 0.02, \
         {} samples, {:.2?} <= 60s)",
        verdict(pass),
        est.extrapolated,
        err,
        leaf.samples().len(),
        elapsed
    );
    assert!(pass);
}

#[test]
fn criterion_02_geometric_family_is_linear_in_t() {
    let ctx = cat();
    let mut worst: f64 = 0.0;
    for t in [0.0, 0.5, 1.0, 1.5] {
        let est = pressure_integral(&ctx.sys, &ctx.leaf, &tgeo(t), 25).unwrap();
        worst = worst.max((est.extrapolated - (1.0 - t) * LOG_LAMBDA_U).abs());
    }
    let pass = worst <= 0.02;
    println!(
        "criterion 02 pressure linear in t over {{0, 0.5, 1, 1.5}}: {} (max residual {:.2e} <= 0.02)",
        verdict(pass),
        worst
    );
    assert!(pass);
}

#[test]
fn criterion_03_estimators_agree_pairwise() {
    let ctx = cat();
    let mut pass = true;
    let mut detail = String::new();
    for (name, pot) in [("zero", zero()), ("trig", trig())] {
        let integral = pressure_integral(&ctx.sys, &ctx.leaf, &pot, 25)
            .unwrap()
            .extrapolated;
        let spanning = pressure_spanning(&ctx.sys, &ctx.leaf, &pot, 0.05, 25, 0.02, 10_000_000)
            .unwrap()
            .extrapolated;
        let separated = pressure_separated(&ctx.sys, &ctx.leaf, &pot, 0.05, 25, 0.02, 10_000_000)
            .unwrap()
            .extrapolated;
        let ulam = ulam_pressure(&ctx.sys, &pot, 200, 64, 500, 1e-9, 40)
            .unwrap()
            .pressure;
        let spread = pairwise_spread(&[integral, spanning, separated, ulam]);
        pass &= spread <= 0.05;
        detail.push_str(&format!("{name} spread {spread:.4}; "));
    }
    println!(
        "criterion 03 integral/spanning/separated/Ulam pairwise within 0.05: {} ({detail})",
        verdict(pass)
    );
    assert!(pass);
}

#[test]
fn criterion_04_change_of_variables_closes() {
    let ctx = cat();
    let ns: Vec<usize> = (1..=15).collect();
    let mut worst: f64 = 0.0;
    for pot in [zero(), trig()] {
        let rows =
            change_of_variables_table(&ctx.sys, &ctx.leaf, &pot, &ns, 0.02, 10_000_000).unwrap();
        for row in rows {
            worst = worst.max((row.transported - row.direct).exp_m1().abs());
        }
    }
    let pass = worst <= 1e-3;
    println!(
        "criterion 04 change-of-variables identity, n <= 15, both potentials: {} \
         (max rel err {:.2e} <= 1e-3)",
        verdict(pass),
        worst
    );
    assert!(pass);
}

#[test]
fn criterion_05_cesaro_limit_recovers_equilibrium_measure() {
    let sys = SystemSpec::cat();
    let leaf = seed_leaf(&sys, &TorusPoint::new(0.15, 0.45), 0.4, SPACING, 0).unwrap();

    let table = leaf_weight_table(&sys, &leaf, &zero(), 30).unwrap();
    let d_haar = discrepancy_to_uniform(&table.cesaro_measure(30).unwrap(), 4);

    let table_t = leaf_weight_table(&sys, &leaf, &trig(), 30).unwrap();
    let gibbs = ulam_pressure(&sys, &trig(), 200, 64, 500, 1e-9, 40)
        .unwrap()
        .gibbs_measure()
        .unwrap();
    let d_gibbs = fourier_discrepancy(&table_t.cesaro_measure(30).unwrap(), &gibbs, 4);

    let pass = d_haar <= 0.05 && d_gibbs <= 0.05;
    println!(
        "criterion 05 equilibrium-measure recovery at n=30: {} \
         (phi=0 vs Haar {:.4} <= 0.05; trig vs Ulam Gibbs {:.4} <= 0.05)",
        verdict(pass),
        d_haar,
        d_gibbs
    );
    assert!(pass);
}

#[test]
fn criterion_06_pressure_is_leaf_independent() {
    let sys = SystemSpec::cat();
    let mut vals = Vec::new();
    for (x, y) in [
        (0.5, 0.5),
        (0.3, 0.7),
        (0.15, 0.45),
        (0.8, 0.2),
        (0.62, 0.33),
    ] {
        for delta in [0.1, 0.3] {
            let leaf = seed_leaf(&sys, &TorusPoint::new(x, y), delta, SPACING, 0).unwrap();
            vals.push(
                pressure_integral(&sys, &leaf, &zero(), 25)
                    .unwrap()
                    .extrapolated,
            );
        }
    }
    let spread = pairwise_spread(&vals);
    let pass = spread <= 0.03;
    println!(
        "criterion 06 leaf independence over 5 base points x 2 radii: {} \
         (pairwise spread {:.2e} <= 0.03)",
        verdict(pass),
        spread
    );
    assert!(pass);
}

#[test]
fn criterion_07_katok_t2_mass_concentrates_at_origin() {
    let ctx = katok();
    let origin = TorusPoint::new(0.0, 0.0);
    let masses: Vec<f64> = [10usize, 20, 30, 40]
        .iter()
        .map(|&n| mass_in_ball(&ctx.table_t2.cesaro_measure(n).unwrap(), &origin, 0.1))
        .collect();
    let monotone = masses.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let pass = monotone && masses[3] >= 0.8;
    println!(
        "criterion 07 Katok t=2 concentration: {} (masses {:?}, nondecreasing {}, final >= 0.8)",
        verdict(pass),
        masses
            .iter()
            .map(|m| (m * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        monotone
    );
    assert!(pass);
}

#[test]
fn criterion_08_katok_t1_decomposes_as_atom_plus_volume() {
    let ctx = katok();
    let mu = ctx.table_t1.cesaro_measure(40).unwrap();
    let (alpha, residual) = best_convex_fit(&mu, 4);
    let pass = residual <= 0.1;
    println!(
        "criterion 08 Katok t=1 convex fit alpha*dirac + (1-alpha)*volume: {} \
         (alpha {:.3}, residual {:.4} <= 0.1)",
        verdict(pass),
        alpha,
        residual
    );
    assert!(pass);
}

fn invariance_defect(table: &LeafWeightTable, n: usize) -> f64 {
    let mut atoms = Vec::new();
    for j in 1..=n {
        let m = table.pushforward_reference(n, j).unwrap();
        for (p, w) in m.atoms() {
            atoms.push((*p, w / n as f64));
        }
    }
    let pushed = EmpiricalMeasure::from_atoms(atoms).unwrap();
    let mu = table.cesaro_measure(n).unwrap();
    frequency_dictionary(4)
        .into_iter()
        .map(|k| (pushed.fourier(k) - mu.fourier(k)).norm())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_09_invariance_defect_obeys_telescoping_bound() {
    let mut pass = true;
    let mut detail = String::new();
    for (name, table, ns) in [
        ("cat", &cat().table_zero, [10usize, 25]),
        ("katok", &katok().table_t1, [10usize, 20]),
    ] {
        for n in ns {
            let defect = invariance_defect(table, n);
            let bound = 2.0 / n as f64;
            pass &= defect <= bound + 1e-9;
            detail.push_str(&format!("{name} n={n}: {defect:.3e} <= {bound:.1e}; "));
        }
    }
    println!(
        "criterion 09 invariance defect within 2/n for every dictionary character: {} ({detail})",
        verdict(pass)
    );
    assert!(pass);
}

#[test]
fn criterion_10_contraction_and_covering_checks() {
    let cat_sys = SystemSpec::cat();
    let contraction = estimate_contraction(&cat_sys, 0.05, 25, 1000, 7).unwrap();
    let c2 = check_c2(&contraction).unwrap();
    let cat_c2_ok = c2.pass && c2.statistic.abs() <= 1e-6;

    let covering =
        covering_time(&cat_sys, &TorusPoint::new(0.5, 0.5), 0.3, 0.02, 40, 0.02).unwrap();
    let c3 = check_c3(&covering, 40).unwrap();
    let h_star = covering.rows.first().map(|&(_, h)| h).unwrap_or(usize::MAX);
    let ratio = h_star as f64 / 40.0;
    let cat_c3_ok = covering.covered && h_star <= 40 && ratio <= 0.1 && c3.pass;

    let katok_sys = SystemSpec::katok_default();
    let kat = estimate_contraction(&katok_sys, 0.05, 18, 1000, 7).unwrap();
    let kat_c2 = check_c2(&kat).unwrap();
    let kat_ok = kat_c2.pass && kat.rows.iter().all(|&(_, g)| g.is_finite());
    let g_max = kat.rows.iter().map(|&(_, g)| g).fold(0.0, f64::max);

    let pass = cat_c2_ok && cat_c3_ok && kat_ok;
    println!(
        "criterion 10 hypothesis checks: {} (cat contraction slope {:.1e} <= 1e-6; \
         cat covering h*={h_star}, h*/40 = {ratio} <= 0.1; katok g_min bounded by {g_max})",
        verdict(pass),
        c2.statistic
    );
    assert!(pass);
}

#[test]
fn criterion_11_binary_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "n_max = 8\nmax_spacing = 0.001\ngrid_n = 40\nsamples_per_cell = 4\niters = 200\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();

    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (run, workers) in [(0, "1"), (1, "1"), (2, "1"), (3, "4")] {
        let out = dir.path().join(format!("run{run}"));
        for args in [
            vec!["construct"],
            vec!["pressure", "--method", "integral"],
            vec!["pressure", "--method", "ulam"],
            vec!["compare", "--reference", "haar"],
            vec!["conditions", "--check", "c2"],
        ] {
            let mut full = vec![
                "--config",
                cfg,
                "--out",
                out.to_str().unwrap(),
                "--workers",
                workers,
            ];
            full.extend(args);
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_eqforge"))
                .args(&full)
                .status()
                .unwrap();
            assert!(status.success());
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().into_string().unwrap(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    let pass = snapshots.iter().all(|s| *s == snapshots[0]);
    println!(
        "criterion 11 determinism across 3 runs and workers {{1, 4}}: {} \
         ({} files byte-compared)",
        verdict(pass),
        snapshots[0].len()
    );
    assert!(pass);
}
