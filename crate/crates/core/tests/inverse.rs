use num_complex::Complex64;
use proptest::prelude::*;
use twostate::carleman::WeightConfig;
use twostate::coefficients::{AdmissiblePerturbation, CoefficientSet, PerturbationMask};
use twostate::geometry::{build_grid, l2_norm, select_observation_boundary, Domain, SpatialGrid};
use twostate::inverse::*;

const M: f64 = 2.0;

fn line(n: usize, t: f64) -> SpatialGrid {
    build_grid(&Domain::interval(0.0, 1.0, t).unwrap(), &[n]).unwrap()
}

fn square(n: usize, t: f64) -> SpatialGrid {
    build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], t).unwrap(), &[n, n]).unwrap()
}

fn baseline(grid: &SpatialGrid) -> CoefficientSet {
    let mut c = CoefficientSet::zero(grid, M);
    c.a = (0..grid.dim()).map(|k| vec![0.3 - 0.1 * k as f64; grid.len()]).collect();
    c.p = grid.sample(|x| 0.5 + 0.2 * x[0]);
    c.qplus = vec![0.4; grid.len()];
    c.qminus = grid.sample(|x| -0.3 * x[0] + 0.1 * x.get(1).copied().unwrap_or(0.0));
    c
}

fn x0(dim: usize) -> Vec<f64> {
    if dim == 1 {
        vec![-0.5]
    } else {
        vec![-0.5, -0.5]
    }
}

#[test]
fn halving_the_amplitude_quarters_both_sides() {
    let g = line(101, 0.5);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let obs = select_observation_boundary(&g, &x0(1)).unwrap();
    let amps = [0.1 * M, 0.05 * M];
    let spec = StudySpec {
        amplitudes: &amps,
        seeds: &[11],
        mask: PerturbationMask::ALL,
        dt: 0.5 / 200.0,
        weighted: None,
    };
    let rows = stability_scaling_study(&g, &b, &probes, &obs, &spec).unwrap();
    assert!((rows[1].lhs / rows[0].lhs - 0.25).abs() < 1e-12);
    assert!((rows[1].rhs_raw / rows[0].rhs_raw - 0.25).abs() < 0.01);
}

#[test]
fn pair_experiment_matches_study_row() {
    let g = line(51, 0.2);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let obs = select_observation_boundary(&g, &x0(1)).unwrap();
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.1, 5, PerturbationMask::ALL).unwrap();
    let direct = run_pair_experiment(&g, &pert.perturbed(), &b, &probes, 0.002, &obs).unwrap();
    let spec = StudySpec {
        amplitudes: &[0.1],
        seeds: &[5],
        mask: PerturbationMask::ALL,
        dt: 0.002,
        weighted: None,
    };
    let row = &stability_scaling_study(&g, &b, &probes, &obs, &spec).unwrap()[0];
    assert_eq!(direct.lhs, row.lhs);
    assert_eq!(direct.rhs_raw, row.rhs_raw);
    assert_eq!(row.per_probe.len(), 3);
    assert_eq!(row.grid, "51");
    let sum: f64 = row.per_probe.iter().map(|(p, m)| p + m).sum();
    assert_eq!(sum, row.rhs_raw);
}

#[test]
fn ratios_are_finite_and_seed_stable() {
    let g = line(101, 0.5);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let obs = select_observation_boundary(&g, &x0(1)).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let spec = StudySpec {
        amplitudes: &[0.05 * M],
        seeds: &seeds,
        mask: PerturbationMask::ALL,
        dt: 0.5 / 200.0,
        weighted: None,
    };
    let rows = stability_scaling_study(&g, &b, &probes, &obs, &spec).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap()).collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo < 10.0, "{lo} {hi}");
}

#[test]
fn zero_amplitude_row_is_zero_and_weighted_norm_is_reported() {
    let g = line(41, 0.2);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 1.0, 2).unwrap();
    let obs = select_observation_boundary(&g, &x0(1)).unwrap();
    let cfg = WeightConfig {
        x0: x0(1),
        r: 1.1,
        lambda: 0.1,
        t_final: 0.2,
    };
    let spec = StudySpec {
        amplitudes: &[0.0, 0.1],
        seeds: &[1],
        mask: PerturbationMask::ALL,
        dt: 0.005,
        weighted: Some((&cfg, 2.0)),
    };
    let rows = stability_scaling_study(&g, &b, &probes, &obs, &spec).unwrap();
    assert_eq!((rows[0].lhs, rows[0].rhs_raw, rows[0].ratio), (0.0, 0.0, None));
    assert_eq!(rows[0].rhs_weighted, Some(0.0));
    let w = rows[1].rhs_weighted.unwrap();
    assert!(w > 0.0 && w.is_finite());
}

#[test]
fn a_only_snapshot_gives_the_vector_potential() {
    let g = square(41, 0.02);
    let b = baseline(&g);
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.1, 2, PerturbationMask::A_ONLY).unwrap();
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    for k in 0..2 {
        let v = snapshot_v0(&g, &pert.perturbed(), &b, &probes.probes[k + 2], 0.02 / 400.0).unwrap();
        let re: Vec<f64> = v.uplus.iter().map(|z| (z * Complex64::new(0.0, 1.0)).re).collect();
        let diff: Vec<f64> = re.iter().zip(&pert.delta.a[k]).map(|(a, b)| a - b).collect();
        assert!(l2_norm(&g, &diff) < 0.05 * l2_norm(&g, &pert.delta.a[k]));
    }
}

#[test]
fn reconstruction_in_one_dimension() {
    let g = line(201, 0.05);
    let b = baseline(&g);
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.05 * M, 9, PerturbationMask::ALL).unwrap();
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let snaps = snapshots(&g, &pert.perturbed(), &b, &probes, 0.05 / 400.0).unwrap();
    let r = linearized_reconstruct(&g, &snaps, &probes, Some(&pert.delta)).unwrap();
    for e in r.errors.as_ref().unwrap() {
        assert!(*e <= 1e-3, "{:?}", r.errors);
    }
    assert!(r.p_cross <= 1e-3);
    assert!(r.imag_residual <= 1e-2);
    r.check_cross(1e-3).unwrap();
}

#[test]
fn reconstruction_in_two_dimensions() {
    let g = square(41, 0.05);
    let b = baseline(&g);
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.05 * M, 9, PerturbationMask::ALL).unwrap();
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let snaps = snapshots(&g, &pert.perturbed(), &b, &probes, 0.05 / 400.0).unwrap();
    let r = linearized_reconstruct(&g, &snaps, &probes, Some(&pert.delta)).unwrap();
    assert_eq!(r.errors.as_ref().unwrap().len(), 5);
    assert!(r.max_error().unwrap() <= 2e-3, "{:?}", r.errors);
    assert!(r.imag_residual <= 1e-2);
}

#[test]
fn p_only_perturbation_has_no_cross_talk() {
    let g = line(201, 0.05);
    let b = baseline(&g);
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.1, 3, PerturbationMask::P_ONLY).unwrap();
    let probes = build_probes(&g, &b, 1.0, 3).unwrap();
    let snaps = snapshots(&g, &pert.perturbed(), &b, &probes, 0.05 / 400.0).unwrap();
    let r = linearized_reconstruct(&g, &snaps, &probes, Some(&pert.delta)).unwrap();
    let scale = l2_norm(&g, &pert.delta.p);
    for f in [&r.recovered.a[0], &r.recovered.qplus, &r.recovered.qminus] {
        assert!(l2_norm(&g, f) < 1e-3 * scale);
    }
}

#[test]
fn coarse_grid_fails_the_cross_check() {
    let g = square(9, 0.5);
    let b = baseline(&g);
    let pert = AdmissiblePerturbation::sample(&g, &b, 0.2, 1, PerturbationMask::ALL).unwrap();
    let probes = build_probes(&g, &b, 1.0, 2).unwrap();
    let snaps = snapshots(&g, &pert.perturbed(), &b, &probes, 0.25).unwrap();
    let r = linearized_reconstruct(&g, &snaps, &probes, None).unwrap();
    assert!(r.check_cross(1e-3).is_err());
}

#[test]
fn identical_pairs_recover_zero_in_2d() {
    let g = square(15, 0.05);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 0.7, 2).unwrap();
    let snaps = snapshots(&g, &b, &b, &probes, 0.005).unwrap();
    assert!(snaps.iter().all(|s| s.max_abs() == 0.0));
    let r = linearized_reconstruct(&g, &snaps, &probes, Some(&CoefficientSet::zero(&g, M))).unwrap();
    assert!(r.recovered.fields().flatten().all(|&v| v == 0.0));
    assert_eq!((r.p_cross, r.imag_residual), (0.0, 0.0));
}

#[test]
fn wrong_snapshot_count_is_rejected() {
    let g = line(21, 0.05);
    let b = baseline(&g);
    let probes = build_probes(&g, &b, 1.0, 2).unwrap();
    let snaps = snapshots(&g, &b, &b, &probes, 0.005).unwrap();
    assert!(linearized_reconstruct(&g, &snaps[..2], &probes, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn lhs_is_quadratic_in_the_amplitude(seed in 0u64..1000, amp in 0.01f64..0.3) {
        let g = line(31, 0.1);
        let b = baseline(&g);
        let one = AdmissiblePerturbation::sample(&g, &b, amp, seed, PerturbationMask::ALL).unwrap();
        let half = AdmissiblePerturbation::sample(&g, &b, amp / 2.0, seed, PerturbationMask::ALL).unwrap();
        let (l1, l2) = (one.delta.squared_l2(&g), half.delta.squared_l2(&g));
        prop_assert!((l2 / l1 - 0.25).abs() < 1e-12);
    }
}
