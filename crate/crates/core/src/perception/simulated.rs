use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{Detection, PerceptionError, PerceptionProfile, Perceiver, SPURIOUS_DISTANCE_M};
use crate::env::{EnvGraph, NodeId};
use crate::geom::{normalize_bearing, rel_pos, RelPos};

fn quantize(bearing: f64, step: f64) -> f64 {
    if step <= 0.0 {
        return bearing;
    }
    normalize_bearing((bearing / step).round() * step)
}

/// Samples detections at `node` under `profile`.
///
/// Every landmark consumes exactly four draws (detect, noise, bearing,
/// distance) whether or not it is reported, so two profiles fed the same
/// stream make the same per-landmark decisions up to their thresholds.
pub fn perceive(
    env: &EnvGraph,
    node: NodeId,
    profile: &PerceptionProfile,
    rng: &mut dyn RngCore,
) -> Result<Vec<Detection>, PerceptionError> {
    let here = env.coord(node)?;
    let mut out = Vec::new();
    for lm in env.landmarks() {
        let u_detect: f64 = rng.random();
        let z: f64 = StandardNormal.sample(rng);
        let u_bearing: f64 = rng.random();
        let u_dist: f64 = rng.random();

        let truth = rel_pos(here, lm.coord);
        let visible = truth.distance_m <= lm.visibility_radius_m;
        if visible {
            if u_detect < profile.recall {
                let noise = (profile.distance_noise_sigma * z).exp();
                out.push(Detection {
                    landmark: lm.id,
                    rel: RelPos {
                        bearing_deg: quantize(truth.bearing_deg, profile.bearing_quantization_deg),
                        distance_m: truth.distance_m * noise,
                    },
                    true_positive: true,
                });
            }
        } else if u_detect < profile.false_positive_rate {
            let (lo, hi) = SPURIOUS_DISTANCE_M;
            out.push(Detection {
                landmark: lm.id,
                rel: RelPos {
                    bearing_deg: quantize(360.0 * u_bearing, profile.bearing_quantization_deg),
                    distance_m: lo + (hi - lo) * u_dist,
                },
                true_positive: false,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimulatedPerceiver {
    name: String,
    profile: PerceptionProfile,
}

impl SimulatedPerceiver {
    pub fn new(name: impl Into<String>, profile: PerceptionProfile) -> Self {
        SimulatedPerceiver {
            name: name.into(),
            profile,
        }
    }

    pub fn profile(&self) -> &PerceptionProfile {
        &self.profile
    }
}

impl Perceiver for SimulatedPerceiver {
    fn name(&self) -> &str {
        &self.name
    }

    fn perceive(
        &self,
        env: &EnvGraph,
        node: NodeId,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Detection>, PerceptionError> {
        perceive(env, node, &self.profile, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{gen_synthetic, SynthSpec};
    use crate::perception::{profile_from_table, ProfileKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn city() -> EnvGraph {
        let mut spec = SynthSpec::grid(12, 12);
        spec.landmark_count = 3;
        spec.target_visible_fraction = 0.5;
        spec.seed = 3;
        gen_synthetic(&spec).unwrap()
    }

    #[test]
    fn oracle_matches_ground_truth() {
        let env = city();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in env.nodes() {
            let got = perceive(&env, n.id, &PerceptionProfile::ORACLE, &mut rng).unwrap();
            let want = env.visible_landmarks(n.id).unwrap();
            assert_eq!(got.len(), want.len());
            for (d, (lm, rel)) in got.iter().zip(&want) {
                assert_eq!(d.landmark, lm.id);
                assert_eq!(d.rel, *rel);
                assert!(d.true_positive);
            }
        }
    }

    #[test]
    fn bearings_are_quantized() {
        let env = city();
        let mut p = profile_from_table(ProfileKind::Zeroshot, 0.3).unwrap();
        p.bearing_quantization_deg = 30.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = 0;
        for n in env.nodes() {
            for d in perceive(&env, n.id, &p, &mut rng).unwrap() {
                let k = d.rel.bearing_deg / 30.0;
                assert!((k - k.round()).abs() < 1e-9, "{}", d.rel.bearing_deg);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn spurious_distances_in_range() {
        let env = city();
        let p = PerceptionProfile {
            recall: 0.0,
            false_positive_rate: 1.0,
            distance_noise_sigma: 0.0,
            bearing_quantization_deg: 45.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in env.nodes() {
            for d in perceive(&env, n.id, &p, &mut rng).unwrap() {
                assert!(!d.true_positive);
                assert!((200.0..=2000.0).contains(&d.rel.distance_m));
            }
        }
    }

    #[test]
    fn unknown_node_errors() {
        let env = city();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(perceive(&env, NodeId(99_999), &PerceptionProfile::ORACLE, &mut rng).is_err());
    }
}
