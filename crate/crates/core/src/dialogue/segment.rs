use serde::{Deserialize, Serialize};

/// A reply split at the chat model's pause markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedResponse {
    pub segments: Vec<String>,
    pub marker: String,
}

impl SegmentedResponse {
    /// Segments joined by single spaces; the text stored in chat history.
    pub fn joined(&self) -> String {
        self.segments.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Splits `text` on `marker`, trimming each piece and dropping empty ones.
/// An empty marker yields the whole trimmed text as a single segment.
pub fn segment_response(text: &str, marker: &str) -> SegmentedResponse {
    let segments: Vec<String> = if marker.is_empty() {
        vec![text.trim().to_string()]
    } else {
        text.split(marker).map(|s| s.trim().to_string()).collect()
    };
    SegmentedResponse {
        segments: segments.into_iter().filter(|s| !s.is_empty()).collect(),
        marker: marker.to_string(),
    }
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_way_split() {
        assert_eq!(
            segment_response("Hello.\n§\nHow are you?", "§").segments,
            vec!["Hello.", "How are you?"]
        );
    }

    #[test]
    fn markerless_is_identity() {
        assert_eq!(
            segment_response("No markers here", "§").segments,
            vec!["No markers here"]
        );
    }

    #[test]
    fn empty_fragments_dropped() {
        assert_eq!(segment_response("§§A§§", "§").segments, vec!["A"]);
        assert!(segment_response("§ § §", "§").is_empty());
    }

    #[test]
    fn multi_char_marker() {
        assert_eq!(
            segment_response("one <|> two<|>three", "<|>").segments,
            vec!["one", "two", "three"]
        );
    }

    proptest! {
        #[test]
        fn segments_never_contain_marker(text in "[a-z §.\n]{0,80}") {
            let r = segment_response(&text, "§");
            for s in &r.segments {
                prop_assert!(!s.contains('§'));
                prop_assert!(!s.is_empty());
            }
        }

        #[test]
        fn joined_equals_marker_free_source(words in prop::collection::vec("[a-zA-Z,.?!]{1,8}", 0..30), cuts in prop::collection::vec(any::<bool>(), 30)) {
            let mut text = String::new();
            for (i, w) in words.iter().enumerate() {
                text.push_str(w);
                text.push(' ');
                if cuts[i] { text.push('§'); }
            }
            let expected = normalize_whitespace(&text.replace('§', ""));
            prop_assert_eq!(normalize_whitespace(&segment_response(&text, "§").joined()), expected);
        }
    }
}
