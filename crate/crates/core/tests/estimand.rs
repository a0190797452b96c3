mod common;

use common::*;
use mmwloc::estimand::{
    efim, oeb, peb, schur_complement, transformation_matrix, veb, Efim, Estimand, Ktt,
    PositionParam,
};
use mmwloc::fim_exact::{ChannelParam, FisherMatrix, Mode};
use mmwloc::geometry::Side;
use nalgebra::DMatrix;

fn check_jacobian(mode: Mode, side: Side, ktt: Ktt<f64>, seed: u64) -> f64 {
    let mut r = rng(seed);
    let tx = uca(8, 0.4);
    let rx = uca(8, -2.0);
    let mut pl = random_placement(&mut r, 2);
    if mode == Mode::Dynamic {
        pl = random_motion(&mut r, pl, side);
    }
    let est = Estimand::new(side, mode, ktt);
    let g = mmwloc::geometry::channel_geometry(&pl, (&tx, &rx)).unwrap();
    let t = transformation_matrix(&g, &est).unwrap();
    let angle_cols: Vec<bool> = t
        .cols
        .iter()
        .map(|c| {
            matches!(
                c,
                ChannelParam::DepartureAngle(_) | ChannelParam::ArrivalAngle(_)
            )
        })
        .collect();
    let fd = jacobian_fd(&pl, (&tx, &rx), &est, &t.rows, &angle_cols);
    jacobian_error(&t.values, &fd)
}

#[test]
fn jacobians_match_finite_differences() {
    for (k, mode) in [Mode::Static, Mode::Dynamic].into_iter().enumerate() {
        for side in [Side::Rx, Side::Tx] {
            for ktt in [Ktt::None, Ktt::Perfect, Ktt::Imperfect { sigma: 2e-9 }] {
                for s in 0..5 {
                    let e = check_jacobian(mode, side, ktt, 100 * k as u64 + s);
                    assert!(e < 1e-5, "{mode:?} {side:?} {ktt:?}: {e:e}");
                }
            }
        }
    }
}

#[test]
fn orientation_column_is_minus_one() {
    let mut r = rng(3);
    let tx = uca(4, 0.0);
    let rx = uca(4, 1.0);
    let pl = random_placement(&mut r, 3);
    let g = mmwloc::geometry::channel_geometry(&pl, (&tx, &rx)).unwrap();
    let t = transformation_matrix(&g, &Estimand::new(Side::Rx, Mode::Static, Ktt::None)).unwrap();
    let row = t
        .rows
        .iter()
        .position(|&p| p == PositionParam::Orientation)
        .unwrap();
    for (j, c) in t.cols.iter().enumerate() {
        let want = if matches!(c, ChannelParam::ArrivalAngle(_)) {
            -1.0
        } else {
            0.0
        };
        assert_eq!(t.values[(row, j)], want);
    }
    assert_eq!(t.rows.len(), 4 * 4 + 2);
    let td = transformation_matrix(
        &mmwloc::geometry::channel_geometry(
            &pl.clone()
                .with_motion(nalgebra::Vector2::new(1.0, 0.0), Side::Rx),
            (&tx, &rx),
        )
        .unwrap(),
        &Estimand::new(Side::Rx, Mode::Dynamic, Ktt::None),
    )
    .unwrap();
    assert_eq!(td.rows.len(), 4 * 5);
    assert_eq!(td.cols.len(), 6 * 4);
}

#[test]
fn collinear_scatterer_has_no_delay_sensitivity_to_rx() {
    use nalgebra::Vector2;
    // scatterer behind the Tx on the Tx-Rx line: both paths arrive from the same angle
    let pl = mmwloc::geometry::Placement::new(
        Vector2::new(0.0, 0.0),
        Vector2::new(10.0, 0.0),
        vec![Vector2::new(-10.0, 0.0)],
    );
    let tx = uca(4, 0.0);
    let g = mmwloc::geometry::channel_geometry(&pl, (&tx, &tx)).unwrap();
    let t = transformation_matrix(&g, &Estimand::new(Side::Rx, Mode::Static, Ktt::None)).unwrap();
    let j = t
        .cols
        .iter()
        .position(|&c| c == ChannelParam::ExcessDelay(1))
        .unwrap();
    assert!(t.values[(0, j)].abs() < 1e-20 && t.values[(1, j)].abs() < 1e-20);
}

#[test]
fn mode_mismatch_is_rejected() {
    let mut r = rng(1);
    let tx = uca(4, 0.0);
    let pl = random_placement(&mut r, 1);
    let g = mmwloc::geometry::channel_geometry(&pl, (&tx, &tx)).unwrap();
    assert!(transformation_matrix(&g, &Estimand::new(Side::Rx, Mode::Dynamic, Ktt::None)).is_err());
    let moving = pl.with_motion(nalgebra::Vector2::new(3.0, 1.0), Side::Tx);
    let g = mmwloc::geometry::channel_geometry(&moving, (&tx, &tx)).unwrap();
    assert!(transformation_matrix(&g, &Estimand::new(Side::Rx, Mode::Dynamic, Ktt::None)).is_err());
    assert!(transformation_matrix(&g, &Estimand::new(Side::Tx, Mode::Static, Ktt::None)).is_err());
}

fn labeled(m: DMatrix<f64>) -> FisherMatrix<f64> {
    let labels = (0..m.nrows()).map(|i| format!("p{i}")).collect();
    FisherMatrix::new(labels, m).unwrap()
}

#[test]
fn bounds_on_simple_matrices() {
    let e: Efim<f64> = labeled(DMatrix::identity(3, 3));
    assert!((peb(&e).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!((oeb(&e).unwrap() - 1.0).abs() < 1e-15);
    let e = labeled(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        4.0, 4.0, 1.0,
    ])));
    assert!((peb(&e).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    assert!(veb(&e).is_err());
    let e5 = labeled(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        1.0, 1.0, 1.0, 4.0, 16.0,
    ])));
    assert!((veb(&e5).unwrap() - (0.25f64 + 1.0 / 16.0).sqrt()).abs() < 1e-15);
    let singular = labeled(DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    ));
    assert!(peb(&singular).unwrap().is_infinite());
}

#[test]
fn block_diagonal_full_matrix_keeps_leading_block() {
    let mut m = DMatrix::zeros(5, 5);
    m.view_mut((0, 0), (3, 3))
        .copy_from(&DMatrix::from_row_slice(
            3,
            3,
            &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0],
        ));
    m.view_mut((3, 3), (2, 2))
        .copy_from(&DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 2.0]));
    let s = schur_complement(&m, 3).unwrap();
    assert!((s - m.view((0, 0), (3, 3))).amax() < 1e-14);
}

#[test]
fn efim_rejects_mismatched_labels() {
    let mut r = rng(5);
    let tx = uca(4, 0.0);
    let pl = random_placement(&mut r, 1);
    let g = mmwloc::geometry::channel_geometry(&pl, (&tx, &tx)).unwrap();
    let t = transformation_matrix(&g, &Estimand::new(Side::Rx, Mode::Static, Ktt::None)).unwrap();
    let j = labeled(DMatrix::identity(10, 10));
    assert!(efim(&j, &t, 3).is_err());
}

use mmwloc::asymptotic::efim_asym_numeric;
use mmwloc::Error;
use proptest::prelude::*;

fn psd(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |r, c| entries[r * n + c]);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

proptest! {
    #[test]
    fn schur_complement_inverts_leading_block_of_inverse(
        entries in prop::collection::vec(-2.0f64..2.0, 36),
        keep in 1usize..6,
    ) {
        let m = psd(6, &entries);
        let s = schur_complement(&m, keep).unwrap();
        let inv = m.clone().try_inverse().unwrap();
        let lead = inv.view((0, 0), (keep, keep)).into_owned().try_inverse().unwrap();
        prop_assert!(mmwloc::fim_exact::relative_frobenius(&s, &lead) < 1e-10);
    }

    #[test]
    fn schur_complement_is_scale_covariant(
        entries in prop::collection::vec(-2.0f64..2.0, 25),
        scales in prop::collection::vec(-6.0f64..6.0, 5),
    ) {
        // rescaling parameters (units) rescales the kept block accordingly
        let m = psd(5, &entries);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(5, scales.iter().map(|s| 10f64.powf(*s))));
        let scaled = &d * &m * &d;
        let a = schur_complement(&m, 2).unwrap();
        let b = schur_complement(&scaled, 2).unwrap();
        let dk = d.view((0, 0), (2, 2)).into_owned();
        prop_assert!(mmwloc::fim_exact::relative_frobenius(&b, &(&dk * a * &dk)) < 1e-9);
    }
}

fn scenario(
    seed: u64,
    n_scatterers: usize,
) -> (
    mmwloc::geometry::ArrayGeometry<f64>,
    mmwloc::geometry::ArrayGeometry<f64>,
    mmwloc::geometry::Placement<f64>,
) {
    let mut r = rng(seed);
    (
        uca(16, 0.3),
        uca(16, -1.1),
        random_placement(&mut r, n_scatterers),
    )
}

#[test]
fn los_only_needs_transmit_time() {
    let cfg = full_config(0, 1, 0.1);
    let (tx, rx, pl) = scenario(31, 0);
    let (g, h) = random_channel(&mut rng(32), &pl, &tx, &rx);
    let none = efim_asym_numeric(
        &cfg,
        (&tx, &rx),
        &g,
        &h,
        &Estimand::new(Side::Rx, Mode::Static, Ktt::None),
    );
    assert!(
        matches!(none, Err(Error::NotIdentifiable { .. })),
        "{none:?}"
    );
    let perfect = efim_asym_numeric(
        &cfg,
        (&tx, &rx),
        &g,
        &h,
        &Estimand::new(Side::Rx, Mode::Static, Ktt::Perfect),
    )
    .unwrap();
    assert!(peb(&perfect).unwrap().is_finite());
}

#[test]
fn transmit_time_knowledge_never_hurts() {
    let cfg = full_config(0, 1, 0.1);
    for seed in 0..10 {
        let (tx, rx, pl) = scenario(40 + seed, 2);
        let (g, h) = random_channel(&mut rng(seed), &pl, &tx, &rx);
        let bound = |k| {
            peb(&efim_asym_numeric(
                &cfg,
                (&tx, &rx),
                &g,
                &h,
                &Estimand::new(Side::Rx, Mode::Static, k),
            )
            .unwrap())
            .unwrap()
        };
        let (none, partial, perfect) = (
            bound(Ktt::None),
            bound(Ktt::Imperfect { sigma: 1e-9 }),
            bound(Ktt::Perfect),
        );
        assert!(
            none >= partial * (1.0 - 1e-9) && partial >= perfect * (1.0 - 1e-9),
            "{none} {partial} {perfect}"
        );
    }
}

#[test]
fn bounds_ignore_scatterer_order() {
    let cfg = full_config(0, 1, 0.1);
    let (tx, rx, pl) = scenario(50, 3);
    let (g, h) = random_channel(&mut rng(51), &pl, &tx, &rx);
    let mut swapped = pl.clone();
    swapped.scatterers.reverse();
    let gs = mmwloc::geometry::channel_geometry(&swapped, (&tx, &rx)).unwrap();
    let mut hs = h.clone();
    hs.gains[1..].reverse();
    for est in [
        Estimand::new(Side::Rx, Mode::Static, Ktt::None),
        Estimand::new(Side::Tx, Mode::Static, Ktt::Perfect),
    ] {
        let a = efim_asym_numeric(&cfg, (&tx, &rx), &g, &h, &est).unwrap();
        let b = efim_asym_numeric(&cfg, (&tx, &rx), &gs, &hs, &est).unwrap();
        assert!(mmwloc::fim_exact::relative_frobenius(&a.values, &b.values) < 1e-10);
    }
}

#[test]
fn bound_covariance_of_labeled_efim() {
    let e = labeled(DMatrix::from_row_slice(
        3,
        3,
        &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.25],
    ));
    // inverse of [[2,1],[1,2]] has trace 4/3
    assert!((peb(&e).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-14);
    assert!((oeb(&e).unwrap() - 2.0).abs() < 1e-14);
    assert!(peb(&labeled(DMatrix::zeros(3, 3))).unwrap().is_infinite());
    assert!(schur_complement(&DMatrix::<f64>::identity(3, 3), 4).is_err());
}
