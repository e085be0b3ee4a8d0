//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use sewerwatch::calibrate::{fit_gamma_mle, fit_gmm_em, roc, youden_threshold, HypothesisModels, ModelMetadata, SampleCounts};
use sewerwatch::eval::f1_score;
use sewerwatch::fcdd::{explain, gradient, loss, LayerShape, NetworkWeights};
use sewerwatch::pipeline::{run, PipelineConfig};
use sewerwatch::sprt::{bounds, step, Decision, ErrorSpec, SprtState};
use sewerwatch::{Frame, Label};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    println!(
        "{} {name}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let nets = 20;
    for _ in 0..nets {
        let (c1, c2) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let shapes = [
            LayerShape::new(1, c1, 3, 1, 1),
            LayerShape::new(c1, c2, 3, 2, 1),
            LayerShape::new(c2, 1, 1, 1, 0),
        ];
        let mut net = NetworkWeights::init(&shapes, rng.random()).unwrap();
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        let n = rng.random_range(2..=4);
        let batch: Vec<Frame> = (0..n)
            .map(|i| {
                let label = Label::from(i % 2 == 1);
                let pixels = (0..64).map(|_| rng.random::<f64>()).collect();
                Frame::new(8, 8, pixels, label, None).unwrap()
            })
            .collect();
        let (_, grad) = gradient(&batch, &net, 1e-6).unwrap();
        for (k, &a) in grad.params().enumerate() {
            let mut plus = net.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (loss(&batch, &plus, 1e-6).unwrap() - loss(&batch, &minus, 1e-6).unwrap()) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < 1e-4 && elapsed < Duration::from_secs(60),
        detail: format!("max relative error {worst:.2e} over {nets} networks (< 1e-4, < 60 s)"),
    }
}

fn sprt_bounds() -> Outcome {
    let b = bounds(ErrorSpec::new(1e-6, 0.01).unwrap()).unwrap();
    let mut asym: f64 = 0.0;
    for p in [1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.49] {
        let s = bounds(ErrorSpec::new(p, p).unwrap()).unwrap();
        asym = asym.max((s.a + s.b).abs());
    }
    Outcome {
        pass: (b.a - -4.6052).abs() < 5e-5 && (b.b - 13.8055).abs() < 5e-5 && asym < 1e-12,
        detail: format!("a = {:.6}, b = {:.6}, max |a + b| at alpha = beta {asym:.1e}", b.a, b.b),
    }
}

fn wald_guarantee() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Gamma::new(4.0, 0.25).unwrap();
    let h0_samples: Vec<f64> = (0..5000).map(|_| g.sample(&mut rng)).collect();
    let (n1, n2) = (Normal::new(2.5, 0.3).unwrap(), Normal::new(3.2, 0.4).unwrap());
    let h1_samples: Vec<f64> = (0..5000)
        .map(|i| if i % 2 == 0 { n1.sample(&mut rng) } else { n2.sample(&mut rng) })
        .collect();
    let models = HypothesisModels {
        h0: fit_gamma_mle(&h0_samples).unwrap(),
        h1: fit_gmm_em(&h1_samples, 2, 1, 1e-9, 500).unwrap().params,
        tau: 1.8,
        metadata: ModelMetadata { seed: 5, k: 2, sample_counts: SampleCounts { normal: 5000, anomaly: 5000 } },
    };
    let (alpha, beta) = (0.05, 0.05);
    let bnd = bounds(ErrorSpec::new(alpha, beta).unwrap()).unwrap();
    let streams = 10_000;
    let h0 = Gamma::new(models.h0.k, models.h0.theta).unwrap();
    let first_verdict = |draw: &mut dyn FnMut(&mut ChaCha8Rng) -> f64, rng: &mut ChaCha8Rng| {
        let mut state = SprtState::default();
        for _ in 0..100_000 {
            let s = step(state, draw(rng), bnd, &models);
            if let Some((d, _)) = s.verdict {
                return d;
            }
            state = s.state;
        }
        Decision::Undecided
    };
    let mut false_alarms = 0;
    let mut misses = 0;
    for _ in 0..streams {
        if first_verdict(&mut |r| h0.sample(r), &mut rng) != Decision::Normal {
            false_alarms += 1;
        }
        let h1 = models.h1.clone();
        if first_verdict(&mut |r| h1.sample(r), &mut rng) != Decision::Anomaly {
            misses += 1;
        }
    }
    let n = streams as f64;
    let (fpr, miss) = (false_alarms as f64 / n, misses as f64 / n);
    let fpr_cap = alpha / (1.0 - beta);
    let miss_cap = beta / (1.0 - alpha);
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    let elapsed = start.elapsed();
    Outcome {
        pass: fpr <= fpr_cap + 3.0 * se(fpr_cap) && miss <= miss_cap + 3.0 * se(miss_cap) && elapsed < Duration::from_secs(120),
        detail: format!(
            "FPR {fpr:.4} (cap {:.4}), miss {miss:.4} (cap {:.4}) over {streams} streams per hypothesis",
            fpr_cap + 3.0 * se(fpr_cap),
            miss_cap + 3.0 * se(miss_cap)
        ),
    }
}

fn calibration_fits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Gamma::new(3.0, 2.0).unwrap();
    let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
    let fit = fit_gamma_mle(&xs).unwrap();
    let gamma_ok = (fit.k / 3.0 - 1.0).abs() < 0.05 && (fit.theta / 2.0 - 1.0).abs() < 0.05;

    let (a, b) = (Normal::new(0.0, 0.5).unwrap(), Normal::new(10.0, 0.5).unwrap());
    let ys: Vec<f64> = (0..2000)
        .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
        .collect();
    let mut means = fit_gmm_em(&ys, 2, 3, 1e-10, 500).unwrap().params.means;
    means.sort_by(f64::total_cmp);
    let em_ok = means[0].abs() < 0.1 && (means[1] - 10.0).abs() < 0.1;

    let mut worst_drop: f64 = 0.0;
    for trial in 0..100 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(5 * k..300);
        let centres: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let zs: Vec<f64> = (0..n)
            .map(|_| centres[rng.random_range(0..3)] + rng.sample::<f64, _>(StandardNormal) * rng.random_range(0.1..2.0))
            .collect();
        let ll = fit_gmm_em(&zs, k, trial, 1e-10, 300).unwrap().log_likelihood;
        for w in ll.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    Outcome {
        pass: gamma_ok && em_ok && worst_drop <= 1e-9,
        detail: format!(
            "gamma k = {:.4}, theta = {:.4}; EM means {:.4}, {:.4}; largest log-likelihood drop over 100 datasets {worst_drop:.1e}",
            fit.k, fit.theta, means[0], means[1]
        ),
    }
}

fn roc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst_auc: f64 = 0.0;
    let mut youden_mismatch = 0;
    let mut sets = 0;
    while sets < 200 {
        let n = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 4.0).collect();
        let labels: Vec<Label> = (0..n).map(|_| Label::from(rng.random_bool(0.4))).collect();
        let pos = labels.iter().filter(|l| l.is_anomaly()).count();
        if pos == 0 || pos == n {
            continue;
        }
        sets += 1;
        let curve = roc(&scores, &labels).unwrap();

        let (mut wins, mut pairs) = (0.0, 0.0);
        for (zi, li) in scores.iter().zip(&labels) {
            for (zj, lj) in scores.iter().zip(&labels) {
                if li.is_anomaly() && !lj.is_anomaly() {
                    pairs += 1.0;
                    wins += if zi > zj { 1.0 } else if zi == zj { 0.5 } else { 0.0 };
                }
            }
        }
        worst_auc = worst_auc.max((curve.auc - wins / pairs).abs());

        // exhaustive J, ties to lower FPR then higher tau
        let neg = (n - pos) as f64;
        let mut best: Option<(f64, f64, f64)> = None;
        for &tau in &scores {
            let hits = |anom: bool| scores.iter().zip(&labels).filter(|(z, l)| **z >= tau && l.is_anomaly() == anom).count() as f64;
            let (tpr, fpr) = (hits(true) / pos as f64, hits(false) / neg);
            let j = tpr - fpr;
            let better = match best {
                None => true,
                Some((bj, bf, bt)) => j > bj || (j == bj && (fpr < bf || (fpr == bf && tau > bt))),
            };
            if better {
                best = Some((j, fpr, tau));
            }
        }
        let t = youden_threshold(&curve);
        let (bj, _, btau) = best.unwrap();
        if t.tau != btau || (t.youden_j - bj).abs() > 1e-12 {
            youden_mismatch += 1;
        }
    }
    Outcome {
        pass: worst_auc < 1e-12 && youden_mismatch == 0,
        detail: format!("max AUC error {worst_auc:.1e}, Youden mismatches {youden_mismatch} over {sets} sets"),
    }
}

fn f1_identity() -> Outcome {
    let f1 = f1_score(0.9785, 0.9112).unwrap();
    Outcome {
        pass: (f1 - 0.9437).abs() <= 5e-4,
        detail: format!("F1 = {f1:.5} from precision 0.9785, recall 0.9112 (target 0.9437 +- 0.0005)"),
    }
}

/// Inside-mask and outside-mask means of the upsampled heatmap, summed over
/// the masked frames of a run.
fn mask_means(weights: &NetworkWeights, frames: &[Frame]) -> (f64, f64, usize) {
    let (mut inside, mut outside, mut count) = (0.0, 0.0, 0);
    for f in frames {
        let Some(mask) = f.mask.as_ref().filter(|m| m.iter().any(|&b| b)) else { continue };
        let map = explain(weights, f).unwrap();
        let up = map.upsampled.unwrap();
        let (mut si, mut ni, mut so, mut no) = (0.0, 0, 0.0, 0);
        for (v, &m) in up.values.iter().zip(mask) {
            if m {
                si += v;
                ni += 1;
            } else {
                so += v;
                no += 1;
            }
        }
        inside += si / ni as f64;
        outside += so / no as f64;
        count += 1;
    }
    (inside, outside, count)
}

fn main() {
    let mut ok = true;
    ok &= check("gradient check", gradient_check);
    ok &= check("SPRT bounds", sprt_bounds);
    ok &= check("Wald error guarantee", wald_guarantee);
    ok &= check("gamma MLE and EM", calibration_fits);
    ok &= check("ROC oracle and Youden", roc_oracle);
    ok &= check("F1 identity", f1_identity);

    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];
    let mut rows = Vec::new();
    let (mut inside, mut outside, mut masked) = (0.0, 0.0, 0);
    for &seed in &seeds {
        let r = run(&PipelineConfig { seed, ..Default::default() }).expect("pipeline run");
        let (t, s) = (&r.report.rows[0].metrics, &r.report.rows[1].metrics);
        println!(
            "  seed {seed}: AUC {:.4}, threshold F1 {:.2} FPR {:.2}, SPRT F1 {:.2} FPR {:.2}, undecided {}",
            r.video_auc,
            100.0 * t.f1,
            100.0 * t.fpr,
            100.0 * s.f1,
            100.0 * s.fpr,
            r.report.rows[1].confusion.excluded_undecided
        );
        rows.push((r.video_auc, t.f1, t.fpr, s.f1, s.fpr));
        let (i, o, c) = mask_means(&r.weights, &r.data.video);
        inside += i;
        outside += o;
        masked += c;
    }
    let elapsed = start.elapsed();
    ok &= check("end-to-end directional reproduction", || Outcome {
        pass: rows.iter().all(|&(auc, tf1, tfpr, sf1, sfpr)| auc >= 0.95 && sf1 > tf1 && sfpr < tfpr)
            && elapsed < Duration::from_secs(15 * 60),
        detail: format!(
            "{} seeds, min AUC {:.4}, SPRT better on F1 and FPR for {} of {}, {:.0} s",
            seeds.len(),
            rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
            rows.iter().filter(|r| r.3 > r.1 && r.4 < r.2).count(),
            seeds.len(),
            elapsed.as_secs_f64()
        ),
    });
    ok &= check("explanation sanity", || {
        let ratio = inside / outside;
        Outcome {
            pass: masked > 0 && ratio >= 2.0,
            detail: format!("inside/outside heatmap mean ratio {ratio:.2} over {masked} masked test frames"),
        }
    });

    if !ok {
        std::process::exit(1);
    }
}
