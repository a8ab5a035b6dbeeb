//! Exact two-qubit state-vector simulation.
//!
//! The entangled resource is the state (|00> + |11>)/sqrt(2). Measurements
//! are spin observables in the Bloch x-z plane, parameterized by a single
//! angle; that plane is enough to reach the quantum optimum of the game.
//! Outcome +1 corresponds to the spin-up eigenstate along the measurement
//! direction.
//!
//! Everything here is exact Born-rule arithmetic on four complex
//! amplitudes; sampling consumes a caller-supplied random stream so that
//! identical seeds replay identical histories.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::game::{Outcome, Party, Setting, SettingPair};

/// Norm slack accepted on states supplied from outside.
pub const STATE_NORM_TOLERANCE: f64 = 1e-9;

/// The game's quantum optimum, (2 + sqrt(2))/4 = cos^2(pi/8).
pub const TSIRELSON_WIN_RATE: f64 = 0.853_553_390_593_273_7;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("state is not normalized: |amplitudes|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },
    #[error("measurement angle must be finite, got {0}")]
    NonFiniteAngle(f64),
}

/// Four complex amplitudes over the basis |00>, |01>, |10>, |11>, unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    amps: [Complex64; 4],
}

impl TwoQubitState {
    /// Accepts any vector whose squared norms sum to 1 within
    /// [`STATE_NORM_TOLERANCE`].
    pub fn new(amps: [Complex64; 4]) -> Result<TwoQubitState, QuantumError> {
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > STATE_NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized { norm_sq });
        }
        Ok(TwoQubitState { amps })
    }

    /// The maximally entangled state (|00> + |11>)/sqrt(2).
    pub fn phi_plus() -> TwoQubitState {
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        TwoQubitState {
            amps: [r, zero, zero, r],
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amps
    }

    /// Amplitude of basis state `index` (0..4, bits ordered Alice, Bob).
    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// A measurement direction in the Bloch x-z plane, canonicalized to
/// (-pi, pi].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct MeasurementAngle {
    radians: f64,
}

impl MeasurementAngle {
    pub fn new(radians: f64) -> Result<MeasurementAngle, QuantumError> {
        if !radians.is_finite() {
            return Err(QuantumError::NonFiniteAngle(radians));
        }
        let mut t = radians % (2.0 * PI);
        if t <= -PI {
            t += 2.0 * PI;
        } else if t > PI {
            t -= 2.0 * PI;
        }
        Ok(MeasurementAngle { radians: t })
    }

    pub fn radians(self) -> f64 {
        self.radians
    }
}

/// The setting-to-angle map of a quantum strategy: which direction each
/// party measures for each of its two settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleQuadruple {
    pub alice1: MeasurementAngle,
    pub alice2: MeasurementAngle,
    pub bob1: MeasurementAngle,
    pub bob2: MeasurementAngle,
}

impl AngleQuadruple {
    pub fn new(
        alice1: MeasurementAngle,
        alice2: MeasurementAngle,
        bob1: MeasurementAngle,
        bob2: MeasurementAngle,
    ) -> AngleQuadruple {
        AngleQuadruple {
            alice1,
            alice2,
            bob1,
            bob2,
        }
    }

    pub fn from_radians(
        a1: f64,
        a2: f64,
        b1: f64,
        b2: f64,
    ) -> Result<AngleQuadruple, QuantumError> {
        Ok(AngleQuadruple {
            alice1: MeasurementAngle::new(a1)?,
            alice2: MeasurementAngle::new(a2)?,
            bob1: MeasurementAngle::new(b1)?,
            bob2: MeasurementAngle::new(b2)?,
        })
    }

    pub fn angle_for(&self, party: Party, setting: Setting) -> MeasurementAngle {
        match (party, setting) {
            (Party::Alice, Setting::S1) => self.alice1,
            (Party::Alice, Setting::S2) => self.alice2,
            (Party::Bob, Setting::S1) => self.bob1,
            (Party::Bob, Setting::S2) => self.bob2,
        }
    }

    pub fn as_radians(&self) -> [f64; 4] {
        [
            self.alice1.radians(),
            self.alice2.radians(),
            self.bob1.radians(),
            self.bob2.radians(),
        ]
    }
}

/// The angle quadruple that attains the quantum optimum with `phi_plus`:
/// Alice measures at 0 and pi/2, Bob at -pi/4 and -3pi/4. Every setting
/// pair then wins with probability (2 + sqrt(2))/4.
pub fn optimal_angles() -> AngleQuadruple {
    AngleQuadruple {
        alice1: MeasurementAngle { radians: 0.0 },
        alice2: MeasurementAngle { radians: FRAC_PI_2 },
        bob1: MeasurementAngle {
            radians: -FRAC_PI_4,
        },
        bob2: MeasurementAngle {
            radians: -3.0 * FRAC_PI_4,
        },
    }
}

/// Spin eigenvector components for direction `theta` in the x-z plane.
/// Real for every angle, which is why this plane keeps the whole
/// simulation real-valued on `phi_plus`.
fn eigenvector(theta: f64, outcome: Outcome) -> [f64; 2] {
    let half = theta / 2.0;
    match outcome {
        Outcome::Plus => [half.cos(), half.sin()],
        Outcome::Minus => [-half.sin(), half.cos()],
    }
}

/// Born-rule joint distribution over the four outcome pairs, in the order
/// (+,+), (+,-), (-,+), (-,-).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointDistribution {
    probs: [f64; 4],
}

impl JointDistribution {
    fn slot(x: Outcome, y: Outcome) -> usize {
        usize::from(x == Outcome::Minus) * 2 + usize::from(y == Outcome::Minus)
    }

    pub fn probability(&self, x: Outcome, y: Outcome) -> f64 {
        self.probs[Self::slot(x, y)]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.probs
    }

    /// P(x = y).
    pub fn p_same(&self) -> f64 {
        self.probs[0] + self.probs[3]
    }

    /// E[x y].
    pub fn correlation(&self) -> f64 {
        self.probs[0] - self.probs[1] - self.probs[2] + self.probs[3]
    }

    pub fn alice_plus_marginal(&self) -> f64 {
        self.probs[0] + self.probs[1]
    }

    pub fn bob_plus_marginal(&self) -> f64 {
        self.probs[0] + self.probs[2]
    }

    /// Probability of winning the game at `pair` if outcomes follow this
    /// distribution.
    pub fn win_probability(&self, pair: SettingPair) -> f64 {
        if pair.both_one() {
            self.p_same()
        } else {
            1.0 - self.p_same()
        }
    }

    /// One inverse-transform draw over the four outcome pairs.
    pub fn sample(&self, rng: &mut dyn RngCore) -> (Outcome, Outcome) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (slot, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                let x = if slot < 2 {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                };
                let y = if slot % 2 == 0 {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                };
                return (x, y);
            }
        }
        (Outcome::Minus, Outcome::Minus)
    }
}

fn check_normalized(state: &TwoQubitState) -> Result<(), QuantumError> {
    let norm_sq = state.norm_sq();
    if (norm_sq - 1.0).abs() > STATE_NORM_TOLERANCE {
        return Err(QuantumError::NotNormalized { norm_sq });
    }
    Ok(())
}

/// Joint outcome distribution when Alice measures at `alpha` and Bob at
/// `beta`, by projecting onto the four eigenstate tensor products.
pub fn joint_distribution(
    state: &TwoQubitState,
    alpha: MeasurementAngle,
    beta: MeasurementAngle,
) -> Result<JointDistribution, QuantumError> {
    check_normalized(state)?;
    let mut probs = [0.0; 4];
    for x in Outcome::ALL {
        let u = eigenvector(alpha.radians(), x);
        for y in Outcome::ALL {
            let v = eigenvector(beta.radians(), y);
            let mut amp = Complex64::new(0.0, 0.0);
            for (j, uj) in u.iter().enumerate() {
                for (k, vk) in v.iter().enumerate() {
                    amp += uj * vk * state.amplitude(2 * j + k);
                }
            }
            probs[JointDistribution::slot(x, y)] = amp.norm_sqr();
        }
    }
    Ok(JointDistribution { probs })
}

/// Expectation of the outcome product, in [-1, 1]. For `phi_plus` this
/// equals cos(alpha - beta).
pub fn correlation(
    state: &TwoQubitState,
    alpha: MeasurementAngle,
    beta: MeasurementAngle,
) -> Result<f64, QuantumError> {
    Ok(joint_distribution(state, alpha, beta)?.correlation())
}

/// Draw one joint outcome pair from the Born distribution.
pub fn sample_outcomes(
    state: &TwoQubitState,
    alpha: MeasurementAngle,
    beta: MeasurementAngle,
    rng: &mut dyn RngCore,
) -> Result<(Outcome, Outcome), QuantumError> {
    Ok(joint_distribution(state, alpha, beta)?.sample(rng))
}

/// Measure one party's qubit along `angle`: draws the outcome from that
/// party's marginal and returns the collapsed (renormalized) state.
///
/// Measuring Alice then Bob, or Bob then Alice, reproduces exactly the
/// distribution of [`joint_distribution`]; the two local measurements
/// commute.
pub fn measure_party(
    state: &TwoQubitState,
    party: Party,
    angle: MeasurementAngle,
    rng: &mut dyn RngCore,
) -> Result<(Outcome, TwoQubitState), QuantumError> {
    check_normalized(state)?;

    // Coefficients of the partner's basis after projecting this party's
    // qubit on the candidate eigenvector.
    let project = |outcome: Outcome| -> [Complex64; 2] {
        let u = eigenvector(angle.radians(), outcome);
        let mut coeff = [Complex64::new(0.0, 0.0); 2];
        for (partner_bit, c) in coeff.iter_mut().enumerate() {
            for (own_bit, uj) in u.iter().enumerate() {
                let index = match party {
                    Party::Alice => 2 * own_bit + partner_bit,
                    Party::Bob => 2 * partner_bit + own_bit,
                };
                *c += uj * state.amplitude(index);
            }
        }
        coeff
    };

    let plus_coeff = project(Outcome::Plus);
    let p_plus: f64 = plus_coeff.iter().map(|c| c.norm_sqr()).sum();
    let u: f64 = rng.gen();
    let outcome = if u < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    };

    let coeff = match outcome {
        Outcome::Plus => plus_coeff,
        Outcome::Minus => project(Outcome::Minus),
    };
    let p: f64 = coeff.iter().map(|c| c.norm_sqr()).sum();
    let norm = p.sqrt();
    let e = eigenvector(angle.radians(), outcome);

    let mut amps = [Complex64::new(0.0, 0.0); 4];
    for (own_bit, own_component) in e.iter().enumerate() {
        for (partner_bit, partner_coeff) in coeff.iter().enumerate() {
            let index = match party {
                Party::Alice => 2 * own_bit + partner_bit,
                Party::Bob => 2 * partner_bit + own_bit,
            };
            amps[index] = own_component * partner_coeff / norm;
        }
    }
    Ok((outcome, TwoQubitState { amps }))
}

/// Win probability of the strategy (state, angles) at one setting pair.
pub fn setting_win_probability(
    state: &TwoQubitState,
    angles: &AngleQuadruple,
    pair: SettingPair,
) -> Result<f64, QuantumError> {
    let dist = joint_distribution(
        state,
        angles.angle_for(Party::Alice, pair.a),
        angles.angle_for(Party::Bob, pair.b),
    )?;
    Ok(dist.win_probability(pair))
}

/// Win probability averaged over uniform setting pairs.
pub fn average_win_probability(
    state: &TwoQubitState,
    angles: &AngleQuadruple,
) -> Result<f64, QuantumError> {
    let mut total = 0.0;
    for pair in SettingPair::ALL {
        total += setting_win_probability(state, angles, pair)?;
    }
    Ok(total / 4.0)
}
