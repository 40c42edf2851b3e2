mod common;

use common::{naive_all_occurrences, naive_leftmost_longest};
use proptest::prelude::*;
use wsner::gazetteer::{Matcher, NameDictionary};

fn build(surfaces: &[String]) -> Option<Matcher> {
    let mut d = NameDictionary::new(1);
    for s in surfaces {
        d.add(s);
    }
    Matcher::build(&d).ok()
}

fn chars(v: &[String]) -> Vec<Vec<char>> {
    v.iter().map(|s| s.chars().collect()).collect()
}

// Small alphabets make overlaps, shared prefixes and suffix links common.
fn surface() -> impl Strategy<Value = String> {
    "[ab公司c]{1,5}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn leftmost_longest_matches_naive_scan(
        dict in prop::collection::vec(surface(), 1..12),
        text in "[ab公司cd]{0,40}",
    ) {
        let m = build(&dict).unwrap();
        let got: Vec<(usize, usize)> = m.find(&text).iter().map(|s| (s.start, s.end)).collect();
        let chars_text: Vec<char> = text.chars().collect();
        prop_assert_eq!(got, naive_leftmost_longest(&chars(&dict), &chars_text));
    }

    #[test]
    fn all_occurrences_match_naive_scan(
        dict in prop::collection::vec(surface(), 1..12),
        text in "[ab公司cd]{0,40}",
    ) {
        let m = build(&dict).unwrap();
        let got: Vec<(usize, usize)> = m.find_all(&text).iter().map(|o| (o.start, o.end)).collect();
        let chars_text: Vec<char> = text.chars().collect();
        prop_assert_eq!(got, naive_all_occurrences(&chars(&dict), &chars_text));
    }

    #[test]
    fn matches_are_disjoint_and_in_dictionary(
        dict in prop::collection::vec(surface(), 1..12),
        text in "[ab公司cd]{0,40}",
    ) {
        let m = build(&dict).unwrap();
        let spans = m.find(&text);
        let chars_text: Vec<char> = text.chars().collect();
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for s in &spans {
            let surface: String = chars_text[s.start..s.end].iter().collect();
            prop_assert!(dict.contains(&surface));
        }
    }
}

#[test]
fn empty_dictionary_is_rejected() {
    assert!(build(&[]).is_none());
}
