use proptest::prelude::*;
use sobolev_topo::fields::{
    circle_lift, fractional_seminorm, mean_oscillation, project_to_sphere, Grid, GridField, Target,
};
use sobolev_topo::geometry::AxisBox;

fn square(n: usize) -> Grid {
    Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[n, n]).unwrap()
}

/// Average over the 3 x 3 node block around each node, clipped at the box.
fn box_average(v: &GridField) -> GridField {
    let g = v.grid();
    let (nx, ny) = (g.dims()[0], g.dims()[1]);
    let nu = v.nu();
    let mut out = vec![0.0; g.len() * nu];
    for i in 0..nx {
        for j in 0..ny {
            let mut count = 0.0;
            let mut acc = vec![0.0; nu];
            for a in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                for b in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                    for (s, x) in acc.iter_mut().zip(v.value(g.flat(&[a, b]))) {
                        *s += x;
                    }
                    count += 1.0;
                }
            }
            let n = g.flat(&[i, j]);
            for c in 0..nu {
                out[n * nu + c] = acc[c] / count;
            }
        }
    }
    GridField::from_values(g.clone(), nu, Target::Unconstrained, out, vec![false; g.len()]).unwrap()
}

fn scalar_corpus(g: &Grid) -> Vec<(&'static str, GridField)> {
    let f = |name, h: fn(&[f64]) -> f64| {
        (
            name,
            GridField::sample(g.clone(), 1, Target::Unconstrained, None, |x| Some(vec![h(x)])).unwrap(),
        )
    };
    vec![
        f("wave", |x| (4.0 * x[0]).sin() * x[1]),
        f("step", |x| if x[0] >= 0.1 { 1.0 } else { -1.0 }),
        f("loglog", |x| {
            let r = x[0].hypot(x[1]).max(1e-3);
            r.ln().abs().max(1.0).ln()
        }),
    ]
}

#[test]
fn smoothing_does_not_raise_the_oscillation_much() {
    let g = square(129);
    let s = g.h_max();
    let radii = [0.5, 0.2, 0.1, 0.05];
    for (name, v) in scalar_corpus(&g) {
        let vs = box_average(&v);
        let doubled: Vec<f64> = radii.iter().map(|r| 2.0 * r).collect();
        let a = mean_oscillation(&vs, &radii, None).unwrap().values;
        let b = mean_oscillation(&v, &doubled, None).unwrap().values;
        let c = mean_oscillation(&v, &[2.0 * s], None).unwrap().values[0];
        for k in 0..radii.len() {
            assert!(
                a[k] <= 10.0 * b[k].max(c),
                "{name} at {}: {} vs {} / {c}",
                radii[k],
                a[k],
                b[k]
            );
        }
    }
}

#[test]
fn averaged_sphere_field_stays_near_the_sphere() {
    let g = square(129);
    let h = g.h_max();
    let v = GridField::sample(g.clone(), 2, Target::Sphere(1), None, |x| {
        let t = 3.0 * x[0] + x[1] * x[1];
        Some(vec![t.cos(), t.sin()])
    })
    .unwrap();
    // |grad t| <= sqrt(9 + 4) on the square
    let lip = 13f64.sqrt();
    let vs = box_average(&v);
    let osc = mean_oscillation(&v, &[h], None).unwrap().values[0];
    let worst = (0..g.len())
        .map(|n| {
            let w = vs.value(n);
            (1.0 - w[0].hypot(w[1])).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= osc + 2.0 * h * lip, "{worst} vs {osc} + {}", 2.0 * h * lip);
}

#[test]
fn lift_round_trip_reproduces_the_field() {
    let v = GridField::sample(square(65), 2, Target::Sphere(1), None, |x| {
        let t = 5.0 * x[0] * x[1] - 2.0 * x[1] + 7.0;
        Some(vec![t.cos(), t.sin()])
    })
    .unwrap();
    let th = circle_lift(&v).unwrap();
    for n in 0..v.grid().len() {
        let t = th.value(n)[0];
        assert!((t.cos() - v.value(n)[0]).abs() <= 1e-9 && (t.sin() - v.value(n)[1]).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(scale in 0.85..1.15f64, a in -3.0..3.0f64, b in -3.0..3.0f64, wobble in 0.0..0.1f64) {
        let v = GridField::sample(square(17), 3, Target::Unconstrained, None, |x| {
            let t = a * x[0] + b * x[1];
            let r = scale + wobble * (7.0 * x[0]).sin();
            Some(vec![r * t.cos() * 0.6, r * t.sin() * 0.6, r * 0.8])
        })
        .unwrap();
        let p = project_to_sphere(&v, 0.3).unwrap();
        let q = project_to_sphere(&p, 0.3).unwrap();
        prop_assert!(p.values().iter().zip(q.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn fractional_seminorm_of_smooth_and_jump_fields() {
    let smooth = |n: usize, s: f64| {
        let v = GridField::sample(square(n), 1, Target::Unconstrained, None, |x| {
            Some(vec![(2.0 * x[0]).sin() * x[1]])
        })
        .unwrap();
        fractional_seminorm(&v, s, 1.5, 0).unwrap()
    };
    // the truncated sum misses pairs within one cell, an error of order
    // h^{p(1-s)} that the near-diagonal term restores
    for s in [0.5, 0.9, 0.99] {
        let (a, b) = (smooth(32, s), smooth(64, s));
        assert!(a.seminorm < a.corrected_seminorm && b.seminorm < b.corrected_seminorm);
        let (x, y) = (a.corrected_seminorm, b.corrected_seminorm);
        assert!(x.is_finite() && (y / x - 1.0).abs() <= 0.1, "s = {s}: {x} -> {y}");
    }
    let (a, b) = (smooth(32, 0.5), smooth(64, 0.5));
    assert!(
        (b.seminorm / a.seminorm - 1.0).abs() <= 0.1,
        "{} -> {}",
        a.seminorm,
        b.seminorm
    );

    // across a jump the energy behaves like h^{1 - sp} once the cutoff is
    // one cell, so it more than doubles per refinement when sp > 2
    let jump = |n: usize| {
        let v = GridField::sample(square(n), 1, Target::Unconstrained, None, |x| {
            Some(vec![if x[0] > 0.013 { 1.0 } else { 0.0 }])
        })
        .unwrap();
        fractional_seminorm(&v, 0.9, 3.0, 0).unwrap().energy
    };
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| jump(n)).collect();
    assert!(e[1] > 2.0 * e[0] && e[2] > 2.0 * e[1], "{e:?}");
}
