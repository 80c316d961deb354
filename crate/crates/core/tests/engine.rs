use hjm_lv::curve::{discounts_from_forwards, TimeGrid};
use hjm_lv::engine::{SimConfig, SimInputs, SimMode, VolModel};
use hjm_lv::localvol::{LocalVolSurface, LvParams};
use hjm_lv::market::fixtures;
use hjm_lv::pricer::{price_ensemble, AtmReading, SwaptionSpec};
use hjm_lv::smallvol::{Calibration, ForwardVolGrid};
use hjm_lv::smile::SmileKnots;

const N: usize = 80;

fn specs() -> Vec<SwaptionSpec<f64>> {
    [(2.0, 5.0), (5.0, 10.0), (10.0, 5.0)]
        .iter()
        .flat_map(|&(e, t)| [-0.01, 0.0, 0.01].map(|x| SwaptionSpec::otm(e, t, x)))
        .collect()
}

#[test]
fn flat_local_vol_matches_constant_vol_run() {
    let grid = TimeGrid::new(0.25, N).unwrap();
    let curve = fixtures::forward_curve(&grid);
    let disc = discounts_from_forwards(&curve, &grid).unwrap();
    let c = 0.0091;
    let flat = ForwardVolGrid::constant(N, c);
    let cal = Calibration {
        offsets: vec![-0.01, 0.0, 0.01],
        grids: vec![flat.clone(); 3],
        last_calibrated_row: 40,
    };
    let lv = LocalVolSurface::from_calibration(&cal, 0.25, 60, SmileKnots::default(), LvParams::default()).unwrap();
    let run = |mode, model| {
        let cfg = SimConfig {
            n_paths: 2000,
            mode,
            long_expiry_cutoff: None,
            ..SimConfig::default()
        };
        let inputs = SimInputs {
            grid,
            base: &curve,
            model,
            fallback: None,
        };
        price_ensemble(&cfg, &inputs, &disc, &specs(), &[1.0, 5.0, 10.0], AtmReading::Forward).unwrap()
    };
    let a = run(SimMode::ConstantVol, VolModel::Constant(&flat));
    let b = run(SimMode::LocalVol, VolModel::Local(&lv));
    assert_eq!(b.lv_stats.clamp_rate_from(0), 0.0);
    for (x, y) in a.swaptions.iter().zip(&b.swaptions) {
        assert!((x.mc_price - y.mc_price).abs() <= 1e-12 * x.mc_price.abs().max(1e-6));
    }
    for (x, y) in a.bonds.iter().zip(&b.bonds) {
        assert!((x.mc_mean - y.mc_mean).abs() < 1e-14);
    }
}

#[test]
fn doubling_paths_shrinks_standard_error() {
    let grid = TimeGrid::new(0.25, N).unwrap();
    let curve = fixtures::forward_curve(&grid);
    let disc = discounts_from_forwards(&curve, &grid).unwrap();
    let vg = ForwardVolGrid::constant(N, 0.009);
    let inputs = SimInputs {
        grid,
        base: &curve,
        model: VolModel::Constant(&vg),
        fallback: None,
    };
    let se = |n| {
        let cfg = SimConfig {
            n_paths: n,
            mode: SimMode::ConstantVol,
            ..SimConfig::default()
        };
        price_ensemble(&cfg, &inputs, &disc, &specs(), &[], AtmReading::Forward).unwrap()
    };
    let (a, b) = (se(8000), se(16000));
    for (x, y) in a.swaptions.iter().zip(&b.swaptions) {
        let ratio = y.std_error / x.std_error;
        assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{:?}: {ratio}", x.spec);
    }
}

#[test]
fn seed_changes_results_and_worker_count_does_not() {
    let grid = TimeGrid::new(0.25, N).unwrap();
    let curve = fixtures::forward_curve(&grid);
    let disc = discounts_from_forwards(&curve, &grid).unwrap();
    let vg = ForwardVolGrid::constant(N, 0.009);
    let inputs = SimInputs {
        grid,
        base: &curve,
        model: VolModel::Constant(&vg),
        fallback: None,
    };
    let run = |seed, workers, batch_size| {
        let cfg = SimConfig {
            n_paths: 3001,
            seed,
            workers,
            batch_size,
            mode: SimMode::ConstantVol,
            ..SimConfig::default()
        };
        price_ensemble(&cfg, &inputs, &disc, &specs(), &[5.0], AtmReading::Forward).unwrap()
    };
    let base = run(1, 1, 256);
    let same = run(1, 3, 256);
    let other = run(2, 1, 256);
    for ((x, y), z) in base.swaptions.iter().zip(&same.swaptions).zip(&other.swaptions) {
        assert_eq!(x.mc_price.to_bits(), y.mc_price.to_bits());
        assert_eq!(x.std_error.to_bits(), y.std_error.to_bits());
        assert_ne!(x.mc_price, z.mc_price);
    }
    assert_eq!(base.n_paths, 3002);
}
