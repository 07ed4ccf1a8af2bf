//! Coordinate extraction from free-form model output.
//!
//! The parser scans for decimal-degree pairs in three shapes: a bare
//! "lat, lon" pair, the same pair in parentheses, and labeled values
//! ("latitude: ... longitude: ...", case-insensitive, either order).
//! Values may carry a trailing hemisphere letter; S and W negate. Pairs
//! that fail coordinate range checks are skipped, and the LAST range-valid
//! pair in the text wins, because models commonly restate their final
//! answer at the end. Absence of a coordinate is a normal outcome, never
//! an error: the parser is total over arbitrary input.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use crate::geodesy::GeoCoord;

/// Result of scanning one piece of text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    /// The last range-valid coordinate pair, if any.
    pub coord: Option<GeoCoord>,
    /// Byte range of the winning pair within the input text.
    pub matched_span: Option<Range<usize>>,
    /// How many range-valid pairs the text contained in total.
    pub candidates_seen: usize,
}

const NUMBER: &str = r"[-+]?(?:[0-9]+(?:\.[0-9]+)?|\.[0-9]+)";

static PAIR_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)\(?\s*({NUMBER})\s*([NS])?\b\s*,\s*({NUMBER})\s*([EW])?\b\s*\)?"
    ))
    .expect("pair pattern compiles")
});

static LABEL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)\b(lat(?:itude)?|long?(?:itude)?)\b\s*[:=]?\s*({NUMBER})\s*([NSEW])?\b"
    ))
    .expect("label pattern compiles")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Lat,
    Lon,
}

struct LabeledValue {
    span: Range<usize>,
    axis: Axis,
    value: f64,
}

/// Scans for coordinate pairs and returns the last range-valid one.
pub fn parse_coordinates(text: &str) -> ParseOutcome {
    let candidates = scan_coordinates(text);
    let candidates_seen = candidates.len();
    match candidates.into_iter().last() {
        Some((span, coord)) => ParseOutcome {
            coord: Some(coord),
            matched_span: Some(span),
            candidates_seen,
        },
        None => ParseOutcome {
            coord: None,
            matched_span: None,
            candidates_seen: 0,
        },
    }
}

/// All range-valid coordinate pairs in order of appearance.
pub(crate) fn scan_coordinates(text: &str) -> Vec<(Range<usize>, GeoCoord)> {
    let mut raw: Vec<(Range<usize>, f64, f64)> = Vec::new();

    // Labeled values pair up with the nearest following value of the other
    // axis; a repeated axis abandons the earlier dangling value.
    let mut pending: Option<LabeledValue> = None;
    for single in labeled_values(text) {
        match pending.take() {
            Some(first) if first.axis != single.axis => {
                let (lat, lon) = match first.axis {
                    Axis::Lat => (first.value, single.value),
                    Axis::Lon => (single.value, first.value),
                };
                raw.push((first.span.start..single.span.end, lat, lon));
            }
            _ => pending = Some(single),
        }
    }

    // Unlabeled pairs are read lat-first. A pair overlapping a completed
    // labeled pair would double-count the same digits, so it is dropped;
    // overlap with a lone dangling label is fine ("Latitude: 48.8, 2.3"
    // still parses as a pair).
    let labeled_spans: Vec<Range<usize>> = raw.iter().map(|(span, ..)| span.clone()).collect();
    for caps in PAIR_RE.captures_iter(text) {
        let whole = caps.get(0).expect("group 0 always present");
        let span = whole.start()..whole.end();
        if labeled_spans.iter().any(|s| overlaps(s, &span)) {
            continue;
        }
        let lat = apply_hemisphere(parse_number(&caps[1]), caps.get(2).map(|m| m.as_str()));
        let lon = apply_hemisphere(parse_number(&caps[3]), caps.get(4).map(|m| m.as_str()));
        raw.push((span, lat, lon));
    }

    raw.sort_by_key(|(span, ..)| (span.start, span.end));
    raw.into_iter()
        .filter_map(|(span, lat, lon)| GeoCoord::new(lat, lon).ok().map(|c| (span, c)))
        .collect()
}

fn labeled_values(text: &str) -> Vec<LabeledValue> {
    LABEL_RE
        .captures_iter(text)
        .map(|caps| {
            let whole = caps.get(0).expect("group 0 always present");
            let axis = if caps[1].to_ascii_lowercase().starts_with("lat") {
                Axis::Lat
            } else {
                Axis::Lon
            };
            let hemisphere = caps.get(3).map(|m| m.as_str());
            // A hemisphere letter for the wrong axis (e.g. "latitude: 5 E")
            // is ignored rather than misapplied.
            let applicable = match (axis, hemisphere) {
                (Axis::Lat, Some(h)) if h.eq_ignore_ascii_case("e") || h.eq_ignore_ascii_case("w") => None,
                (Axis::Lon, Some(h)) if h.eq_ignore_ascii_case("n") || h.eq_ignore_ascii_case("s") => None,
                (_, h) => h,
            };
            let value = apply_hemisphere(parse_number(&caps[2]), applicable);
            LabeledValue {
                span: whole.start()..whole.end(),
                axis,
                value,
            }
        })
        .collect()
}

fn parse_number(s: &str) -> f64 {
    // The pattern admits only ordinary decimal forms; absurdly long digit
    // runs overflow to infinity and fail the later range check.
    s.parse::<f64>().unwrap_or(f64::INFINITY)
}

/// A hemisphere letter overrides the numeric sign: N/E force positive,
/// S/W force negative.
fn apply_hemisphere(value: f64, hemisphere: Option<&str>) -> f64 {
    match hemisphere {
        Some(h) if h.eq_ignore_ascii_case("s") || h.eq_ignore_ascii_case("w") => -value.abs(),
        Some(_) => value.abs(),
        None => value,
    }
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parsed(text: &str) -> (f64, f64) {
        let coord = parse_coordinates(text).coord.expect("expected a coordinate");
        (coord.lat(), coord.lon())
    }

    #[test]
    fn canonical_pair() {
        assert_eq!(parsed("48.8566, 2.3522"), (48.8566, 2.3522));
        let outcome = parse_coordinates("48.8566, 2.3522");
        assert_eq!(outcome.candidates_seen, 1);
        assert_eq!(outcome.matched_span, Some(0..15));
    }

    #[test]
    fn parenthesized_pair() {
        assert_eq!(parsed("(10.0, 20.0)"), (10.0, 20.0));
        assert_eq!(parsed("answer: ( -5.25 , 100.5 )"), (-5.25, 100.5));
    }

    #[test]
    fn last_valid_pair_wins() {
        let text = "Maybe (10.0, 20.0). Final answer: Latitude: -33.9, Longitude: 151.2";
        let outcome = parse_coordinates(text);
        let coord = outcome.coord.unwrap();
        assert_eq!((coord.lat(), coord.lon()), (-33.9, 151.2));
        assert_eq!(outcome.candidates_seen, 2);
        let span = outcome.matched_span.unwrap();
        assert!(text[span].starts_with("Latitude"));
    }

    #[test]
    fn out_of_range_pairs_are_skipped_not_clamped() {
        let outcome = parse_coordinates("91.0, 10.0");
        assert!(outcome.coord.is_none());
        assert_eq!(outcome.candidates_seen, 0);
        // An invalid pair must not shadow an earlier valid one.
        assert_eq!(parsed("(1.0, 2.0) then 95.0, 3.0"), (1.0, 2.0));
        assert!(parse_coordinates("12.0, 185.0").coord.is_none());
    }

    #[test]
    fn labeled_values_pair_in_either_order() {
        assert_eq!(parsed("latitude: -33.9, longitude: 151.2"), (-33.9, 151.2));
        assert_eq!(parsed("longitude: 151.2, latitude: -33.9"), (-33.9, 151.2));
        assert_eq!(parsed("LAT = 10.5 LON = -20.25"), (10.5, -20.25));
        assert_eq!(parsed("Lat 7 Long 8"), (7.0, 8.0));
    }

    #[test]
    fn repeated_label_keeps_the_latest_value() {
        assert_eq!(
            parsed("latitude: 10.0, latitude: 12.0, longitude: 30.0"),
            (12.0, 30.0)
        );
    }

    #[test]
    fn dangling_single_label_is_not_a_pair() {
        assert!(parse_coordinates("latitude: 48.85").coord.is_none());
        assert!(parse_coordinates("longitude: 2.35 and nothing else").coord.is_none());
    }

    #[test]
    fn label_followed_by_bare_pair_still_parses() {
        assert_eq!(parsed("Latitude: 48.85, 2.35"), (48.85, 2.35));
    }

    #[test]
    fn hemisphere_letters_set_the_sign() {
        assert_eq!(parsed("33.9 S, 151.2 E"), (-33.9, 151.2));
        assert_eq!(parsed("33.9S, 18.4E"), (-33.9, 18.4));
        assert_eq!(parsed("40.7 N, 74.0 W"), (40.7, -74.0));
        // The letter wins over an explicit sign.
        assert_eq!(parsed("-33.9 S, -151.2 E"), (-33.9, 151.2));
        assert_eq!(parsed("latitude: 33.9 S longitude: 18.4 W"), (-33.9, -18.4));
    }

    #[test]
    fn mismatched_hemisphere_letter_on_label_is_ignored() {
        assert_eq!(parsed("latitude: 5.0 E longitude: 6.0"), (5.0, 6.0));
    }

    #[test]
    fn unlabeled_is_lat_first() {
        assert_eq!(parsed("12.5, 99.5"), (12.5, 99.5));
    }

    #[test]
    fn no_digits_means_no_candidates() {
        for text in ["", "somewhere in Europe", "(none)", "lat lon", "n/a, n/a"] {
            let outcome = parse_coordinates(text);
            assert!(outcome.coord.is_none(), "{text:?}");
            assert!(outcome.matched_span.is_none());
            assert_eq!(outcome.candidates_seen, 0);
        }
    }

    #[test]
    fn integer_and_fractional_forms_parse() {
        assert_eq!(parsed("45, -120"), (45.0, -120.0));
        assert_eq!(parsed(".5, .25"), (0.5, 0.25));
        assert_eq!(parsed("+45.0, +120.0"), (45.0, 120.0));
    }

    #[test]
    fn enormous_numbers_do_not_panic() {
        let huge = format!("{}, 10.0", "9".repeat(400));
        assert!(parse_coordinates(&huge).coord.is_none());
    }

    #[test]
    fn span_slices_cleanly_on_multibyte_text() {
        let text = "réponse finale → (48.8566, 2.3522) ✓";
        let outcome = parse_coordinates(text);
        let span = outcome.matched_span.unwrap();
        assert!(text[span].contains("48.8566"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn parser_is_total(text in "\\PC*") {
            let outcome = parse_coordinates(&text);
            if let Some(coord) = outcome.coord {
                prop_assert!(outcome.matched_span.is_some());
                prop_assert!(outcome.candidates_seen >= 1);
                prop_assert!((-90.0..=90.0).contains(&coord.lat()));
                prop_assert!((-180.0..=180.0).contains(&coord.lon()));
            } else {
                prop_assert!(outcome.matched_span.is_none());
            }
        }

        #[test]
        fn parser_is_total_on_coordinate_like_noise(
            a in -200.0_f64..200.0,
            b in -200.0_f64..200.0,
            noise in "[a-zA-Z ,.()0-9:-]{0,40}",
        ) {
            let text = format!("{noise}{a:.4}, {b:.4}{noise}");
            let _ = parse_coordinates(&text);
        }
    }
}
