//! Occupancy class labels, one-hot vectors and argmax decoding.

use thiserror::Error;

/// Number of occupancy classes, 0 through 15 people.
pub const NUM_CLASSES: usize = 16;

/// Largest representable count; anything above collapses into it.
pub const MAX_COUNT: u32 = NUM_CLASSES as u32 - 1;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("probability vector has {0} entries, expected {NUM_CLASSES}")]
    WrongLength(usize),
    #[error("non-finite probability at index {0}")]
    NonFiniteInput(usize),
}

/// An occupancy class in `0..=15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(u8);

impl ClassLabel {
    /// Returns `None` for values above 15.
    pub fn new(value: u32) -> Option<Self> {
        (value <= MAX_COUNT).then_some(ClassLabel(value as u8))
    }

    pub fn value(self) -> u32 {
        self.0 as u32
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (0..NUM_CLASSES as u8).map(ClassLabel)
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Collapses counts above 15 into the top class.
pub fn clamp_count(people: u32) -> ClassLabel {
    ClassLabel(people.min(MAX_COUNT) as u8)
}

/// Sixteen entries, exactly one of them 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneHotVector([f64; NUM_CLASSES]);

impl OneHotVector {
    pub fn bits(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn hot_index(&self) -> usize {
        self.0.iter().position(|&b| b == 1.0).expect("one-hot vector has a hot bit")
    }
}

pub fn one_hot_encode(label: ClassLabel) -> OneHotVector {
    let mut bits = [0.0; NUM_CLASSES];
    bits[label.index()] = 1.0;
    OneHotVector(bits)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn decode_argmax(probs: &[f64]) -> Result<ClassLabel, EncodingError> {
    if probs.len() != NUM_CLASSES {
        return Err(EncodingError::WrongLength(probs.len()));
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
        return Err(EncodingError::NonFiniteInput(i));
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(ClassLabel(best as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_count(0).value(), 0);
        assert_eq!(clamp_count(13).value(), 13);
        assert_eq!(clamp_count(23).value(), 15);
    }

    #[test]
    fn encode_examples() {
        let zero = one_hot_encode(clamp_count(0));
        assert_eq!(zero.bits()[0], 1.0);
        assert_eq!(zero.bits().iter().sum::<f64>(), 1.0);
        let top = one_hot_encode(clamp_count(15));
        assert_eq!(top.bits()[15], 1.0);
        assert!(top.bits()[..15].iter().all(|&b| b == 0.0));
        assert_eq!(one_hot_encode(clamp_count(3)).hot_index(), 3);
    }

    #[test]
    fn decode_published_output() {
        let probs = [
            3.1594791e-02, 1.1173296e-03, 1.9875835e-01, 1.2148099e-01, 1.7412059e-01, 9.9778280e-04,
            7.6386752e-04, 3.7641544e-02, 1.0577185e-03, 4.6020711e-04, 8.2410325e-04, 7.5649790e-04,
            4.2702064e-01, 2.0497683e-03, 9.2915818e-04, 4.2664449e-04,
        ];
        assert_eq!(decode_argmax(&probs).unwrap().value(), 12);
    }

    #[test]
    fn decode_ties_and_errors() {
        assert_eq!(decode_argmax(&[1.0 / 16.0; 16]).unwrap().value(), 0);
        let mut bad = [0.0; 16];
        bad[4] = f64::NAN;
        assert_eq!(decode_argmax(&bad), Err(EncodingError::NonFiniteInput(4)));
        assert_eq!(decode_argmax(&[0.5, 0.5]), Err(EncodingError::WrongLength(2)));
    }

    #[test]
    fn round_trip_exhaustive() {
        for k in ClassLabel::all() {
            assert_eq!(decode_argmax(one_hot_encode(k).bits()).unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn clamp_idempotent_and_monotone(a in 0u32..1000, b in 0u32..1000) {
            let ca = clamp_count(a);
            prop_assert_eq!(clamp_count(ca.value()), ca);
            if a <= b {
                prop_assert!(ca <= clamp_count(b));
            }
        }
    }
}
