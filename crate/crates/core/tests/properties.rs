use proptest::prelude::*;

use overlap_core::bandit::{boxed, run_selection, sources_with_densities, Detector, Policy, SelectionConfig};
use overlap_core::changepoint::binseg_single;
use overlap_core::concentration::{theorem2_bound, ConcentrationParams};
use overlap_core::detection::{detect, overlap_at_threshold, DetectConfig, OverlapMetric};
use overlap_core::expansion::{random_instance, robust_neighborhood_size};
use overlap_core::experiments::{paper_spec, NoiseType};
use overlap_core::linear::{confidences, loss_and_grad, train_on_dataset, LabelSource, TrainConfig};
use overlap_core::mixture::{sample_dataset, GenerationMode, Label, MixtureSpec, Region, RegionCounts};
use overlap_core::rng::rng_for;
use overlap_core::smooth::derived_c;

fn small_spec(seed: u64) -> MixtureSpec {
    MixtureSpec::with_uniform_means(3, 3, 1.0, [1.0 / 3.0; 3], (0.0, 1.0), seed).unwrap()
}

fn fast_train() -> TrainConfig {
    TrainConfig { max_iters: 300, ..TrainConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_hits_counts_and_is_seeded(e in 0usize..30, h in 0usize..30, o in 1usize..30, seed in any::<u64>()) {
        let spec = small_spec(1);
        let counts = RegionCounts::new(e, h, o);
        let a = sample_dataset(&spec, counts, GenerationMode::Gaussian, seed).unwrap();
        prop_assert_eq!(a.region_counts(), counts);
        let b = sample_dataset(&spec, counts, GenerationMode::Gaussian, seed).unwrap();
        prop_assert_eq!(a.features(), b.features());
        prop_assert_eq!(a.labels(), b.labels());
        let c = sample_dataset(&spec, counts, GenerationMode::Gaussian, seed ^ 1).unwrap();
        prop_assert_ne!(a.features(), c.features());
    }

    #[test]
    fn gradient_matches_finite_differences(
        x in prop::collection::vec(-2.0f64..2.0, 12),
        y in prop::collection::vec(any::<bool>(), 4),
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        lambda in 0.0f64..0.1,
    ) {
        let labels: Vec<Label> = y.iter().map(|&b| if b { Label::Pos } else { Label::Neg }).collect();
        let (_, g) = loss_and_grad(&x, 3, &labels, &theta, lambda).unwrap();
        for j in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += 1e-5;
            dn[j] -= 1e-5;
            let fd = (loss_and_grad(&x, 3, &labels, &up, lambda).unwrap().0 - loss_and_grad(&x, 3, &labels, &dn, lambda).unwrap().0) / 2e-5;
            prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "coordinate {}: fd {} vs {}", j, fd, g[j]);
        }
    }

    #[test]
    fn label_swap_keeps_confidences(seed in 0u64..1000) {
        let spec = small_spec(seed);
        let data = sample_dataset(&spec, RegionCounts::new(20, 20, 20), GenerationMode::Gaussian, seed).unwrap();
        let flipped: Vec<Label> = data.labels().iter().map(|l| l.flip()).collect();
        let mut swapped = data.clone();
        swapped.set_pseudolabels(flipped).unwrap();
        let (m1, _) = train_on_dataset(&data, LabelSource::TrueLabels, None, &fast_train()).unwrap();
        let (m2, _) = train_on_dataset(&swapped, LabelSource::Pseudolabels, None, &fast_train()).unwrap();
        for (t1, t2) in m1.theta.iter().zip(&m2.theta) {
            prop_assert!((t1 + t2).abs() < 1e-9);
        }
        let c1 = confidences(&m1, &data, None).unwrap();
        let c2 = confidences(&m2, &data, None).unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn changepoint_matches_scan_and_is_equivariant(
        scores in prop::collection::vec(-50.0f64..50.0, 4..60),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
        rot in 0usize..60,
    ) {
        let Ok(cp) = binseg_single(&scores, 2) else { return Ok(()) };
        let mut s = scores.clone();
        s.sort_by(f64::total_cmp);
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let best = (2..=s.len() - 2).map(|k| sse(&s[..k]) + sse(&s[k..])).fold(f64::INFINITY, f64::min);
        let got = sse(&s[..cp.split_index]) + sse(&s[cp.split_index..]);
        prop_assert!(got <= best + 1e-9 * best.max(1.0));

        let scaled: Vec<f64> = scores.iter().map(|x| a * x + b).collect();
        if let Ok(cs) = binseg_single(&scaled, 2) {
            prop_assert_eq!(cs.split_index, cp.split_index);
            prop_assert!((cs.threshold - (a * cp.threshold + b)).abs() < 1e-8 * (1.0 + cs.threshold.abs()));
        }
        let mut rotated = scores.clone();
        let r = rot % rotated.len();
        rotated.rotate_left(r);
        prop_assert_eq!(binseg_single(&rotated, 2).unwrap(), cp);
    }

    #[test]
    fn detection_partitions_and_threshold_is_monotone(seed in 0u64..500, bump in 0.0f64..5.0) {
        let spec = small_spec(seed);
        let data = sample_dataset(&spec, RegionCounts::new(15, 15, 15), GenerationMode::Gaussian, seed).unwrap();
        let (weak, _) = train_on_dataset(&data, LabelSource::TrueLabels, Some(3), &fast_train()).unwrap();
        let cfg = DetectConfig { project_easy: Some(3), ..DetectConfig::default() };
        let Ok(res) = detect(&data, &weak, &cfg) else { return Ok(()) };
        let mut seen = vec![0u8; data.len()];
        for i in res.hard_only_idx.iter().chain(&res.easy_only_idx).chain(&res.overlap_idx) {
            seen[*i] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let tau = res.tau_overlap.unwrap();
        let base = overlap_at_threshold(&res, tau);
        prop_assert_eq!(&base, &res.overlap_idx);
        let raised = overlap_at_threshold(&res, tau + bump);
        prop_assert!(raised.iter().all(|i| base.contains(i)));
    }

    #[test]
    fn metrics_agree_on_equal_norms(seed in 0u64..500) {
        let spec = small_spec(seed);
        let mut data = sample_dataset(&spec, RegionCounts::new(15, 15, 15), GenerationMode::Gaussian, seed).unwrap();
        let (weak, _) = train_on_dataset(&data, LabelSource::TrueLabels, Some(3), &fast_train()).unwrap();
        // put every row on the unit sphere
        let dim = data.dim();
        let rows: Vec<f64> = data.rows().flat_map(|r| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(move |v| v / n)
        }).collect();
        data = overlap_core::mixture::RegionDataset::new(dim, rows, data.labels().to_vec(), data.regions().to_vec(), None).unwrap();
        let ip = detect(&data, &weak, &DetectConfig { project_easy: Some(3), ..DetectConfig::default() });
        let cos = detect(&data, &weak, &DetectConfig { project_easy: Some(3), metric: OverlapMetric::AbsCosine, ..DetectConfig::default() });
        if let (Ok(a), Ok(b)) = (ip, cos) {
            prop_assert_eq!(a.overlap_idx, b.overlap_idx);
        }
    }

    #[test]
    fn bandit_pulls_and_pools_are_conserved(seed in 0u64..1000, horizon in 5usize..25) {
        let spec = small_spec(seed);
        let mut sources = boxed(sources_with_densities(&spec, &[0.1, 0.5, 0.9], GenerationMode::Gaussian).unwrap());
        let cfg = SelectionConfig { horizon, per_round: 10, policy: Policy::Ucb, keep_pool: true };
        let run = run_selection(&mut sources, &cfg, &Detector::Oracle, seed).unwrap();
        prop_assert_eq!(run.state.pulls.iter().sum::<usize>(), horizon);
        prop_assert_eq!(run.trace.len(), horizon);
        for (s, (&det, &sam)) in run.state.detected.iter().zip(&run.state.sampled).enumerate() {
            prop_assert!(det <= sam, "source {}", s);
        }
        let pool = run.pooled.unwrap();
        prop_assert_eq!(pool.len(), run.state.sampled.iter().sum::<usize>());
        prop_assert!(run.pooled_overlap.iter().all(|&i| i < pool.len() && pool.regions()[i] == Region::Overlap));
        prop_assert!(run.trace.iter().all(|r| (0.0..=1.0).contains(&r.o_bar)));
    }

    #[test]
    fn robust_size_is_monotone_in_eta(seed in any::<u64>(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
        let mut rng = rng_for(seed, &[]);
        let g = random_instance(&mut rng, 4, 10, 0.0).unwrap().graph;
        for x in 0..g.len() {
            for y in 0..g.len() {
                prop_assert_eq!(g.adjacent(x, y), g.adjacent(y, x));
            }
        }
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let all = g.all();
        let u = (seed & all) | 1;
        let a = ((seed >> 17) & all) | 1;
        let p_lo = robust_neighborhood_size(&g, u, a, lo).unwrap();
        let p_hi = robust_neighborhood_size(&g, u, a, hi).unwrap();
        prop_assert!(p_hi <= p_lo + 1e-12);
    }

    #[test]
    fn derived_c_is_monotone(rp in 0.0f64..0.9, sh in 0.1f64..5.0, alpha in 0.05f64..0.95, q in 0.0f64..1.0, d in 0.001f64..0.1) {
        prop_assert!(derived_c(rp + d, alpha, q, sh) > derived_c(rp, alpha, q, sh));
        if q < 1.0 {
            prop_assert!(derived_c(rp, alpha, q, sh + d) < derived_c(rp, alpha, q, sh));
        }
    }

    #[test]
    fn theorem2_forms_agree(m in 0.1f64..100.0, c in 0.05f64..10.0, d in 2usize..500) {
        let b = theorem2_bound(&ConcentrationParams { mu_hard_norm_sq: m, c, d, trials: 1, seed: 0 });
        prop_assert!((b.value - b.value_alt_form).abs() <= 1e-12);
        prop_assert!(b.value > 0.0 && b.value <= 1.0);
    }

    #[test]
    fn noise_composition_preserves_size(eps in 0.0f64..1.0, n in 0usize..200) {
        for t in [NoiseType::N1, NoiseType::N2, NoiseType::N3] {
            let (e, h, o) = t.composition(eps, n);
            prop_assert_eq!(e + h + o, n);
            let k = (eps * n as f64).round() as usize;
            prop_assert_eq!(o, n - k);
            match t {
                NoiseType::N1 => prop_assert_eq!((e, h), (k, 0)),
                NoiseType::N2 => prop_assert_eq!((e, h), (0, k)),
                NoiseType::N3 => prop_assert_eq!((e, h), (k / 2, k - k / 2)),
            }
        }
    }
}

#[test]
fn paper_spec_is_the_protocol_mixture() {
    let s = paper_spec(0).unwrap();
    assert_eq!((s.d_easy, s.d_hard, s.variance_c), (20, 20, 5.0));
}
