//! The phoneme inventory: 39 romanized Korean phonemes plus silence.
//!
//! Labels follow Yale romanization (so `kulcasayk` is k u l c a s ay k).
//! The rare diphthong `yey` is folded into `ey`.

pub const SILENCE: &str = "SIL";

pub const KOREAN_PHONEMES: [&str; 39] = [
    // consonants
    "k", "kk", "n", "t", "tt", "l", "m", "p", "pp", "s", "ss", "ng", "c", "cc", "ch", "kh", "th", "ph", "h",
    // vowels
    "a", "ay", "ya", "yay", "e", "ey", "ye", "o", "wa", "way", "oy", "yo", "wu", "we", "wey", "wi", "yu", "u", "uy", "i",
];

pub fn is_phoneme(label: &str) -> bool {
    label == SILENCE || KOREAN_PHONEMES.contains(&label)
}

/// All 39 phonemes followed by silence.
pub fn all_labels() -> impl Iterator<Item = &'static str> {
    KOREAN_PHONEMES.iter().copied().chain(std::iter::once(SILENCE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_is_39_distinct_plus_silence() {
        let mut v: Vec<_> = KOREAN_PHONEMES.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 39);
        assert_eq!(all_labels().count(), 40);
        assert!(is_phoneme("SIL") && is_phoneme("ay") && !is_phoneme("zz"));
    }
}
