//! Labeled synthetic gesture data for desk-scale runs.
//!
//! Each gesture type has a sinusoid/ramp template; each user bends it with a
//! personal amplitude, phase and pressure offset, so a user's gestures stay
//! similar across sessions while differing from other users'.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GestureSeries, SplitTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub types: usize,
    /// Repetitions of every type per user, spread round-robin over sessions.
    pub reps: usize,
    pub sessions: usize,
    /// Nominal samples per gesture; actual lengths vary by up to an eighth.
    pub length: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 10,
            types: 4,
            reps: 20,
            sessions: 2,
            length: 64,
            noise: 0.02,
            seed: 0,
        }
    }
}

pub const FEATURES: [&str; 3] = ["pressure", "x_pos", "y_pos"];

struct UserStyle {
    amplitude: f64,
    phase: f64,
    pressure: f64,
}

pub fn generate(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.noise.max(0.0)).expect("non-negative noise");
    let styles: Vec<UserStyle> = (0..cfg.users)
        .map(|_| UserStyle {
            amplitude: rng.random_range(0.6..1.4),
            phase: rng.random_range(0.0..0.5),
            pressure: rng.random_range(0.2..0.8),
        })
        .collect();
    let spread = (cfg.length / 8).max(1) as i64;
    let sessions = cfg.sessions.max(1);

    let mut series = Vec::new();
    for (ui, style) in styles.iter().enumerate() {
        let user_id = format!("user{ui:02}");
        let mut next_gesture = vec![0u64; sessions];
        for rep in 0..cfg.reps {
            for kind in 0..cfg.types {
                let session = rep % sessions;
                let gesture_id = next_gesture[session];
                next_gesture[session] += 1;
                let len = (cfg.length as i64 + rng.random_range(-spread..=spread)).max(5) as usize;
                let k = kind as f64;
                let freq_x = 0.5 + 0.5 * k;
                let freq_y = 1.0 + 0.25 * k;
                let ramp = (k - cfg.types as f64 / 2.0) * 0.5;
                let mut pressure = Vec::with_capacity(len);
                let mut x = Vec::with_capacity(len);
                let mut y = Vec::with_capacity(len);
                for i in 0..len {
                    let s = i as f64 / (len - 1) as f64;
                    pressure.push(
                        style.pressure
                            + 0.15 * (1.0 + 0.2 * k) * (PI * s).sin()
                            + jitter.sample(&mut rng),
                    );
                    x.push(
                        style.amplitude
                            * ((2.0 * PI * (freq_x * s + style.phase)).sin() + ramp * s)
                            + jitter.sample(&mut rng),
                    );
                    y.push(
                        style.amplitude
                            * ((2.0 * PI * (freq_y * s + style.phase)).cos() - ramp * s)
                            + jitter.sample(&mut rng),
                    );
                }
                for (feature, values) in FEATURES.iter().zip([pressure, x, y]) {
                    series.push(GestureSeries {
                        user_id: user_id.clone(),
                        session_id: format!("s{session}"),
                        gesture_id,
                        feature_name: (*feature).into(),
                        label: Some(format!("type{kind}")),
                        values,
                    });
                }
            }
        }
    }
    let mut d = Dataset {
        series,
        feature_names: FEATURES.iter().map(|f| (*f).into()).collect(),
        split: SplitTag::Unsplit,
    };
    d.sort();
    d
}
