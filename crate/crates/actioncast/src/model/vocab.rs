//! Word <-> id bijection for the phrase decoder, with fixed reserved ids.

use std::collections::HashMap;

/// Reserved token ids.
pub const PAD: u32 = 0;
pub const START: u32 = 1;
pub const END: u32 = 2;
pub const UNK: u32 = 3;

const RESERVED: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from an iterator of phrases (training split only). Words are
    /// lowercased, deduplicated and sorted, so construction order does not
    /// matter.
    pub fn build<'a>(phrases: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut uniq: Vec<String> = phrases
            .into_iter()
            .flatten()
            .map(|w| w.to_lowercase())
            .filter(|w| !RESERVED.contains(&w.as_str()))
            .collect();
        uniq.sort();
        uniq.dedup();
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        words.extend(uniq);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        self.words
            .get(id as usize)
            .map(|s| s.as_str())
            .unwrap_or("<unk>")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    /// Encodes a phrase and appends `<end>`, truncating/padding to
    /// exactly `max_len` ids.
    pub fn encode_target(&self, words: &[String], max_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = words
            .iter()
            .take(max_len.saturating_sub(1))
            .map(|w| self.id(w))
            .collect();
        ids.push(END);
        ids.resize(max_len, PAD);
        ids
    }

    /// Decodes generated ids to surface words, stopping at `<end>` and
    /// skipping other reserved ids.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        let mut out = Vec::new();
        for &id in ids {
            if id == END {
                break;
            }
            if id == PAD || id == START {
                continue;
            }
            out.push(self.word(id).to_string());
        }
        out
    }
}

impl serde::Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.words.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        if words.len() < 4 || words[..4] != RESERVED.map(String::from) {
            return Err(serde::de::Error::custom("vocabulary missing reserved tokens"));
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(Vocabulary { words, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phrase(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::build([&phrase("in toolbar")[..], &phrase("in popup")[..]]);
        assert_eq!(v.word(PAD), "<pad>");
        assert_eq!(v.word(START), "<start>");
        assert_eq!(v.word(END), "<end>");
        assert_eq!(v.word(UNK), "<unk>");
        assert_eq!(v.len(), 4 + 3);
    }

    #[test]
    fn ids_are_bijective_and_oov_maps_to_unk() {
        let v = Vocabulary::build([&phrase("in popup menu")[..]]);
        for w in ["in", "popup", "menu"] {
            assert_eq!(v.word(v.id(w)), w);
        }
        assert_eq!(v.id("zanzibar"), UNK);
        assert_eq!(v.id("In"), v.id("in"));
    }

    #[test]
    fn build_is_order_independent() {
        let a = Vocabulary::build([&phrase("in toolbar")[..], &phrase("at top")[..]]);
        let b = Vocabulary::build([&phrase("at top")[..], &phrase("in toolbar")[..]]);
        assert_eq!(a, b);
    }

    #[test]
    fn encode_target_pads_and_terminates() {
        let v = Vocabulary::build([&phrase("in popup")[..]]);
        let ids = v.encode_target(&phrase("in popup"), 6);
        assert_eq!(ids.len(), 6);
        assert_eq!(ids[2], END);
        assert_eq!(&ids[3..], &[PAD, PAD, PAD]);
        assert_eq!(v.decode(&ids), phrase("in popup"));
        // Over-long phrases keep the terminator.
        let long = phrase("a b c d e f g h");
        let ids = v.encode_target(&long, 4);
        assert_eq!(ids.len(), 4);
        assert_eq!(ids[3], END);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::build([&phrase("in side panel")[..]]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>("[\"a\"]").is_err());
    }
}
