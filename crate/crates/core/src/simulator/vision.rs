use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::config::VisionNoiseConfig;
use crate::geometry::Pose6;

/// Visual detection of `true_pose` (already delayed by the caller): absent
/// with the dropout probability, otherwise perturbed by Gaussian noise or,
/// with the outlier probability, by a gross error of the configured
/// magnitude in a random direction.
pub fn corrupt_vision<R: Rng>(true_pose: &Pose6, spec: &VisionNoiseConfig, rng: &mut R) -> Option<Pose6> {
    if spec.dropout > 0.0 && rng.gen_bool(spec.dropout) {
        return None;
    }
    let mut v = true_pose.to_array();
    if spec.outlier_prob > 0.0 && rng.gen_bool(spec.outlier_prob) {
        let dt: [f64; 3] = UnitSphere.sample(rng);
        let dr: [f64; 3] = UnitSphere.sample(rng);
        for k in 0..3 {
            v[k] += spec.outlier_translation * dt[k];
            v[k + 3] += spec.outlier_rotation * dr[k];
        }
    } else {
        for (k, v) in v.iter_mut().enumerate() {
            let s = if k < 3 { spec.translation_std } else { spec.rotation_std };
            if s > 0.0 {
                *v += Normal::new(0.0, s).expect("finite std").sample(rng);
            }
        }
    }
    Some(Pose6::new(v[0], v[1], v[2], v[3], v[4], v[5]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_is_exact_and_full_dropout_is_absent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Pose6::new(0.01, 0.02, 0.03, 0.1, 0.2, 0.3);
        assert_eq!(corrupt_vision(&p, &VisionNoiseConfig::noiseless(), &mut rng), Some(p));
        let spec = VisionNoiseConfig { dropout: 1.0, ..VisionNoiseConfig::noiseless() };
        assert!((0..100).all(|_| corrupt_vision(&p, &spec, &mut rng).is_none()));
    }

    #[test]
    fn empirical_std_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = VisionNoiseConfig { dropout: 0.0, outlier_prob: 0.0, ..VisionNoiseConfig::default() };
        let n = 100_000;
        let (mut sx, mut sxx, mut sr, mut srr) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let p = corrupt_vision(&Pose6::identity(), &spec, &mut rng).unwrap();
            sx += p.x;
            sxx += p.x * p.x;
            sr += p.yaw;
            srr += p.yaw * p.yaw;
        }
        let nf = n as f64;
        let std_x = (sxx / nf - (sx / nf).powi(2)).sqrt();
        let std_r = (srr / nf - (sr / nf).powi(2)).sqrt();
        assert!((std_x / spec.translation_std - 1.0).abs() < 0.05);
        assert!((std_r / spec.rotation_std - 1.0).abs() < 0.05);
    }
}
