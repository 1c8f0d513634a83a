use kdgrid_core::bench::roundtrip_error;
use kdgrid_core::decomposition::DEFAULT_N_MAX;
use kdgrid_core::synth::{dense_centre_sample, five_cluster_mixture, gen_gaussian_mixture, Cluster, SyntheticField};
use kdgrid_core::{
    bounding_box, decompose, grid_to_points, scatter_to_grid, GridShape, Partition, PointCloud, SubdomainGrid,
};
use ndarray::Array2;

fn cloud_2d(seed: u64, m: usize) -> PointCloud {
    let cluster = Cluster {
        center: vec![0.35, 0.6],
        sigma: 0.06,
        weight: 0.6,
    };
    gen_gaussian_mixture(seed, 2, m, &[cluster], 0.4).unwrap()
}

fn shape_over(c: &PointCloud, dims: Vec<usize>) -> GridShape {
    GridShape::new(dims, bounding_box(c).unwrap()).unwrap()
}

#[test]
fn constant_grid_survives_backward_then_forward() {
    let c = cloud_2d(1, 700);
    let shape = shape_over(&c, vec![9, 13]);
    let g = SubdomainGrid::from_fn(shape.clone(), 2, |_, out| {
        out[0] = -1.25;
        out[1] = 4.0;
    });
    let at_points = grid_to_points(&g, &c).unwrap();
    let back = scatter_to_grid(&c.with_values(at_points).unwrap(), &shape).unwrap();
    assert_eq!(back.values, g.values);
}

#[test]
fn multilinear_grid_round_trip_is_limited_by_idw() {
    let f = |x: &[f64]| 1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[0] * x[1];
    let c = cloud_2d(2, 1500);
    let shape = shape_over(&c, vec![12, 10]);
    let g = SubdomainGrid::from_fn(shape.clone(), 1, |x, out| out[0] = f(x));

    let at_points = grid_to_points(&g, &c).unwrap();
    for r in 0..c.len() {
        assert!((at_points[[r, 0]] - f(c.point(r))).abs() < 1e-12);
    }
    let round = scatter_to_grid(&c.clone().with_values(at_points).unwrap(), &shape).unwrap();

    // reproduction error of IDW fed with exact samples
    let exact = Array2::from_shape_fn((c.len(), 1), |(r, _)| f(c.point(r)));
    let idw = scatter_to_grid(&c.with_values(exact).unwrap(), &shape).unwrap();
    let mut worst = 0.0f64;
    for ((a, b), t) in round.values.iter().zip(&idw.values).zip(&g.values) {
        assert!((a - b).abs() < 1e-12);
        worst = worst.max((a - t).abs());
    }
    let idw_worst = idw
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, t)| (a - t).abs())
        .fold(0.0, f64::max);
    assert!(worst <= idw_worst + 1e-12);
}

#[test]
fn finer_grids_never_hurt_the_round_trip() {
    let ratios = [0.5, 1.0, 2.0, 4.0];
    let mut clouds: Vec<PointCloud> = (0..3).map(|s| dense_centre_sample(s).unwrap()).collect();
    for seed in 0..2 {
        let field = SyntheticField::random(seed, 2, vec![0.5, 0.5], 0.1);
        clouds.push(field.attach(five_cluster_mixture(seed, 2, 3000, 0.1).unwrap()).unwrap());
    }
    for (j, c) in clouds.iter().enumerate() {
        for p in [Partition::identity(c).unwrap(), decompose(c, 5, DEFAULT_N_MAX).unwrap()] {
            let errs: Vec<f64> = ratios.iter().map(|&r| roundtrip_error(c, &p, r).unwrap()).collect();
            assert!(
                errs.windows(2).all(|w| w[1] <= w[0]),
                "cloud {j}, {} leaves: {errs:?}",
                p.len()
            );
        }
    }
}
