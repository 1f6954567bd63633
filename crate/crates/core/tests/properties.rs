use blockggm::crp::{crp_predictive, log_prior_partition, multi_crp_predictive, CrpCounts};
use blockggm::io::data::quantile_normalize;
use blockggm::model::compute_mu;
use blockggm::posterior::{harmonic_mean_log_ml, rand_index, similarity_matrix};
use blockggm::probit::{log_sum_exp, norm_cdf, norm_quantile};
use blockggm::{Graph, Partition};
use proptest::prelude::*;

fn labels(p: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..p.max(1), p)
}

fn partition(max_p: usize) -> impl Strategy<Value = Partition> {
    (1..=max_p).prop_flat_map(labels).prop_map(|l| Partition::new(&l))
}

fn partition_pair(max_p: usize) -> impl Strategy<Value = (Partition, Partition)> {
    (1..=max_p).prop_flat_map(|p| (labels(p), labels(p))).prop_map(|(a, b)| (Partition::new(&a), Partition::new(&b)))
}

proptest! {
    #[test]
    fn predictive_is_a_distribution(counts in prop::collection::vec(1usize..100, 0..10), conc in 1e-3f64..50.0) {
        let c = CrpCounts::new(counts.clone(), conc).unwrap();
        for probs in [crp_predictive(&c), multi_crp_predictive(&c)] {
            prop_assert_eq!(probs.len(), counts.len() + 1);
            prop_assert!(probs.iter().all(|&v| v > 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let c32 = CrpCounts::new(counts, conc as f32).unwrap();
        prop_assert!((crp_predictive(&c32).iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn partition_prior_ignores_label_names(labels in labels(7), shift in 1usize..50, nu in 0.05f64..10.0) {
        let a = Partition::new(&labels);
        let renamed: Vec<usize> = labels.iter().map(|l| 1000 - l * shift).collect();
        let b = Partition::new(&renamed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(log_prior_partition(&a, nu), log_prior_partition(&b, nu));
    }

    #[test]
    fn rand_index_is_a_similarity((a, b) in partition_pair(9)) {
        let r = rand_index(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(r, rand_index(&b, &a).unwrap());
        prop_assert_eq!(r == 1.0, a == b);
        prop_assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal(zs in prop::collection::vec(labels(6), 1..20)) {
        let parts: Vec<Partition> = zs.iter().map(|l| Partition::new(l)).collect();
        let s = similarity_matrix(&parts).unwrap();
        for i in 0..6 {
            prop_assert_eq!(s[(i, i)], 1.0);
            for j in 0..6 {
                prop_assert_eq!(s[(i, j)], s[(j, i)]);
                prop_assert!((0.0..=1.0).contains(&s[(i, j)]));
            }
        }
    }

    #[test]
    fn quantile_normalize_keeps_order_and_symmetry(xs in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let q = quantile_normalize(&xs);
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if xs[i] < xs[j] {
                    prop_assert!(q[i] < q[j]);
                } else if xs[i] == xs[j] {
                    prop_assert_eq!(q[i], q[j]);
                }
            }
        }
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let qn = quantile_normalize(&neg);
        for (a, b) in q.iter().zip(&qn) {
            prop_assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn quantile_inverts_cdf(u in 1e-12f64..(1.0 - 1e-12)) {
        let x = norm_quantile(u);
        prop_assert!((norm_cdf(x) - u).abs() <= 1e-12 * u.max(1e-3));
    }

    #[test]
    fn mu_is_symmetric(z in partition(8), seed in any::<u64>()) {
        let p = z.p();
        let theta: Vec<f64> = (0..p).map(|i| ((seed >> (i % 60)) & 7) as f64 / 4.0 - 1.0).collect();
        let beta: Vec<f64> = (0..p).map(|i| z.label(i) as f64 * 0.5 - 0.7).collect();
        let mu = compute_mu(&theta, &beta, &z).unwrap();
        for i in 0..p {
            for j in 0..p {
                prop_assert_eq!(mu.get(i, j), mu.get(j, i));
                if i != j {
                    let want = theta[i] + theta[j] + if z.same_block(i, j) { beta[i] } else { 0.0 };
                    prop_assert!((mu.get(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn harmonic_mean_is_bounded(ls in prop::collection::vec(-500f64..500.0, 1..50)) {
        let hm = harmonic_mean_log_ml(&ls).unwrap();
        let lo = ls.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(hm >= lo - 1e-9 && hm <= hi + 1e-9);
    }

    #[test]
    fn log_sum_exp_shift(xs in prop::collection::vec(-700f64..700.0, 1..20), c in -100f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() < 1e-9);
    }

    #[test]
    fn toggling_twice_restores_graph(p in 2usize..10, pairs in prop::collection::vec((0usize..10, 0usize..10), 0..30)) {
        let mut g = Graph::empty(p);
        for &(i, j) in &pairs {
            let (i, j) = (i % p, j % p);
            if i != j {
                g.toggle(i, j);
            }
        }
        let before = g.clone();
        let key = g.key();
        g.toggle(0, 1);
        prop_assert_ne!(g.key(), key.clone());
        g.toggle(1, 0);
        prop_assert_eq!(&g, &before);
        prop_assert_eq!(g.n_edges(), g.edges().len());
    }
}
