//! Fits the keypoint density model to a small synthetic set of frames and
//! probes densities and the shaped recovery gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ocr::geom::{KeypointSet, Point2};
use ocr::manifold::{calibrate, fit_manifold, ManifoldConfig};

fn main() -> ocr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 5.0).unwrap();
    // two keypoints, each jittering around one of two resting places
    let frames: Vec<KeypointSet> = (0..400)
        .map(|i| {
            let base = if i % 2 == 0 {
                Point2::new(100.0, 100.0)
            } else {
                Point2::new(160.0, 120.0)
            };
            let mut jitter = || Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            KeypointSet::new(vec![base + jitter(), base + Point2::new(20.0, 0.0) + jitter()])
        })
        .collect();

    let cfg = ManifoldConfig {
        components: 2,
        ..ManifoldConfig::default()
    };
    let model = calibrate(&fit_manifold(&frames, &cfg, 1)?, &frames, &cfg)?;
    println!(
        "phi {:.3e}  eta {:.3e}  eps_rec {:.3e}",
        model.q_phi, model.q_eta, model.eps_rec
    );
    for f in &model.fit {
        println!(
            "fit: {} components, mean log-likelihood {:.3}, {} iterations",
            f.components, f.log_likelihood, f.iterations
        );
    }

    for (name, at) in [
        ("on data", Point2::new(100.0, 100.0)),
        ("off data", Point2::new(300.0, 300.0)),
    ] {
        let kps = KeypointSet::new(vec![at, at + Point2::new(20.0, 0.0)]);
        let t = model.recovery_tuple(&kps);
        println!(
            "{name}: eta_rec {:.3e}  in-distribution {}  delta_rec ({:.2}, {:.2})",
            t.eta_rec,
            model.is_in_distribution(&kps),
            t.delta_rec.x,
            t.delta_rec.y
        );
    }
    Ok(())
}
