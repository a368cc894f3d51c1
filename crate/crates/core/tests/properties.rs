use proptest::prelude::*;
use std::collections::BTreeMap;

use regkit_core::expr::{parse_expr, Axis};
use regkit_core::kernel::{
    caratheodory_reduce, num_rank, positive_linear_dependent, VecFamily,
};

const N: usize = 2;
const M: usize = 2;

/// Expression text with every composite parenthesized, so the generator does
/// not have to reason about precedence. The printer strips the redundancy.
fn expr_text(depth: u32, with_div: bool) -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x1".to_string()),
        Just("x2".to_string()),
        Just("y1".to_string()),
        Just("y2".to_string()),
        Just("2".to_string()),
        Just("0.5".to_string()),
        Just("1.25".to_string()),
        Just("3".to_string()),
    ];
    leaf.prop_recursive(depth, 16, 2, move |inner| {
        let pair = (inner.clone(), inner.clone());
        let mut arms = vec![
            pair.clone().prop_map(|(a, b)| format!("({a} + {b})")).boxed(),
            pair.clone().prop_map(|(a, b)| format!("({a} - {b})")).boxed(),
            pair.clone().prop_map(|(a, b)| format!("({a})*({b})")).boxed(),
            inner.clone().prop_map(|a| format!("(-({a}))")).boxed(),
            (inner.clone(), 2..=3)
                .prop_map(|(a, k)| format!("(({a})^{k})"))
                .boxed(),
        ];
        if with_div {
            arms.push(pair.prop_map(|(a, b)| format!("({a})/({b})")).boxed());
        }
        proptest::strategy::Union::new(arms)
    })
}

fn sample_points() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![0.3, -0.7], vec![0.9, -0.2]),
        (vec![-1.1, 0.4], vec![0.1, 1.3]),
        (vec![0.0, 0.0], vec![0.5, -0.5]),
    ]
}

proptest! {
    /// Print then parse is the identity on the printed form, and preserves
    /// values wherever the original expression is defined.
    #[test]
    fn printed_expression_reparses_to_the_same_text_and_values(
        text in expr_text(4, true),
    ) {
        let e0 = parse_expr(&text, N, M).expect("generator stays inside the grammar");
        let printed = e0.to_string();
        let e1 = parse_expr(&printed, N, M)
            .unwrap_or_else(|err| panic!("printed form must reparse: {printed:?}: {err}"));
        prop_assert_eq!(&printed, &e1.to_string());
        for (x, y) in sample_points() {
            match (e0.eval(&x, &y), e1.eval(&x, &y)) {
                (Ok(a), Ok(b)) => {
                    if a.is_finite() && b.is_finite() {
                        let scale = 1.0f64.max(a.abs());
                        prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b} at {x:?} {y:?}");
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "defined-ness must agree: {a:?} vs {b:?}"),
            }
        }
    }

    /// Symbolic partial derivatives agree with central differences on
    /// division-free expressions.
    #[test]
    fn gradient_matches_central_differences(
        text in expr_text(3, false),
        xs in proptest::collection::vec(-1.5f64..1.5, N),
        ys in proptest::collection::vec(-1.5f64..1.5, M),
    ) {
        let e = parse_expr(&text, N, M).expect("generator stays inside the grammar");
        let f0 = e.eval(&xs, &ys).unwrap();
        prop_assume!(f0.is_finite() && f0.abs() < 1e6);
        let h = 1e-5;
        for (axis, dim) in [(Axis::X, N), (Axis::Y, M)] {
            let partials = e.grad(axis);
            prop_assert_eq!(partials.len(), dim);
            for i in 0..dim {
                let d = partials[i].eval(&xs, &ys).unwrap();
                prop_assume!(d.is_finite() && d.abs() < 1e6);
                let mut xp = xs.clone();
                let mut xm = xs.clone();
                let mut yp = ys.clone();
                let mut ym = ys.clone();
                match axis {
                    Axis::X => {
                        xp[i] += h;
                        xm[i] -= h;
                    }
                    Axis::Y => {
                        yp[i] += h;
                        ym[i] -= h;
                    }
                }
                let fd = (e.eval(&xp, &yp).unwrap() - e.eval(&xm, &ym).unwrap()) / (2.0 * h);
                let scale = 1.0f64.max(d.abs()).max(f0.abs());
                prop_assert!(
                    (d - fd).abs() <= 1e-5 * scale,
                    "axis {axis:?} i {i}: symbolic {d} vs fd {fd} for {text}"
                );
            }
        }
    }

    /// Positive-linear dependence is invariant under positive rescaling of
    /// the sign-constrained vectors and nonzero rescaling of the free ones.
    #[test]
    fn pld_verdict_survives_rescaling(
        dim in 2usize..4,
        pos_raw in proptest::collection::vec(proptest::collection::vec(-2i32..=2, 4), 0..4),
        free_raw in proptest::collection::vec(proptest::collection::vec(-2i32..=2, 4), 0..3),
        pos_scales in proptest::collection::vec(prop_oneof![Just(0.5f64), Just(2.0), Just(3.0)], 4),
        free_scales in proptest::collection::vec(prop_oneof![Just(-2.0f64), Just(0.5), Just(1.5)], 3),
    ) {
        let truncate = |vs: &[Vec<i32>]| -> Vec<Vec<f64>> {
            vs.iter()
                .map(|v| v.iter().take(dim).map(|&k| k as f64).collect())
                .collect()
        };
        let pos_vecs = truncate(&pos_raw);
        let free_vecs = truncate(&free_raw);
        let family = |vecs: &[Vec<f64>], base: usize| {
            VecFamily::from_pairs(dim, vecs.iter().cloned().enumerate().map(|(i, v)| (base + i, v)))
        };
        let verdict = |pos: &VecFamily, free: &VecFamily| {
            positive_linear_dependent(pos, free, 1e-8).unwrap().0
        };
        let before = verdict(&family(&pos_vecs, 0), &family(&free_vecs, 100));

        let scaled = |vecs: &[Vec<f64>], scales: &[f64]| -> Vec<Vec<f64>> {
            vecs.iter()
                .zip(scales)
                .map(|(v, s)| v.iter().map(|a| a * s).collect())
                .collect()
        };
        let after = verdict(
            &family(&scaled(&pos_vecs, &pos_scales), 0),
            &family(&scaled(&free_vecs, &free_scales), 100),
        );
        prop_assert_eq!(before, after);
    }

    /// A dependence certificate really is one: nonnegative weights on the
    /// sign-constrained side, nonzero total weight, vanishing combination.
    #[test]
    fn pld_certificate_describes_a_vanishing_combination(
        dim in 2usize..4,
        pos_raw in proptest::collection::vec(proptest::collection::vec(-2i32..=2, 4), 1..4),
        free_raw in proptest::collection::vec(proptest::collection::vec(-2i32..=2, 4), 0..3),
    ) {
        let truncate = |vs: &[Vec<i32>]| -> Vec<Vec<f64>> {
            vs.iter()
                .map(|v| v.iter().take(dim).map(|&k| k as f64).collect())
                .collect()
        };
        let pos_vecs = truncate(&pos_raw);
        let free_vecs = truncate(&free_raw);
        let pos = VecFamily::from_pairs(dim, pos_vecs.iter().cloned().enumerate());
        let free = VecFamily::from_pairs(
            dim,
            free_vecs.iter().cloned().enumerate().map(|(i, v)| (100 + i, v)),
        );
        let (dependent, cert) = positive_linear_dependent(&pos, &free, 1e-8).unwrap();
        prop_assume!(dependent);
        let cert = cert.expect("dependence carries a certificate");
        prop_assert!(cert.norm > 1e-10, "weights must not all vanish");
        let mut combo = vec![0.0; dim];
        for (label, alpha) in &cert.alphas {
            prop_assert!(*alpha >= -1e-12, "alpha[{label}] = {alpha}");
            for (c, v) in combo.iter_mut().zip(&pos_vecs[*label]) {
                *c += alpha * v;
            }
        }
        for (label, beta) in &cert.betas {
            for (c, v) in combo.iter_mut().zip(&free_vecs[label - 100]) {
                *c += beta * v;
            }
        }
        let norm = combo.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= 1e-6, "combination norm {norm}");
    }

    /// Reduction keeps the represented point and returns an independent
    /// family with positive kept coefficients.
    #[test]
    fn caratheodory_keeps_the_point_and_reaches_independence(
        dim in 2usize..4,
        vecs_raw in proptest::collection::vec(proptest::collection::vec(-2i32..=2, 4), 1..5),
        coeffs_raw in proptest::collection::vec(1u8..=3, 5),
    ) {
        let vecs: Vec<Vec<f64>> = vecs_raw
            .iter()
            .map(|v| v.iter().take(dim).map(|&k| k as f64).collect())
            .collect();
        let coeffs: BTreeMap<usize, f64> = vecs
            .iter()
            .enumerate()
            .map(|(i, _)| (i, coeffs_raw[i] as f64))
            .collect();
        let mut z = vec![0.0; dim];
        for (i, v) in vecs.iter().enumerate() {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += coeffs[&i] * vi;
            }
        }
        prop_assume!(z.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-9);
        let positive = VecFamily::from_pairs(dim, vecs.iter().cloned().enumerate());
        let indep = VecFamily::new(dim);
        let result = caratheodory_reduce(&z, &indep, &positive, &coeffs, 1e-8).unwrap();

        let mut rebuilt = vec![0.0; dim];
        for label in &result.kept {
            let c = result.coefficients[label];
            prop_assert!(c > 0.0, "kept coefficient must stay positive");
            for (ri, vi) in rebuilt.iter_mut().zip(&vecs[*label]) {
                *ri += c * vi;
            }
        }
        let err = z
            .iter()
            .zip(&rebuilt)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        prop_assert!(err <= 1e-6, "rebuilt point off by {err}");

        let kept_family =
            VecFamily::from_pairs(dim, result.kept.iter().map(|&l| (l, vecs[l].clone())));
        prop_assert_eq!(num_rank(&kept_family, 1e-8), kept_family.len());
    }
}
