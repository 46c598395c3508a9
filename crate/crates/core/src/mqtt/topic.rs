//! Topic name and filter handling: single-level `+` and multi-level `#`
//! wildcards, matched level-wise on `/` separators.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid topic filter {0:?}: {1}")]
pub struct InvalidFilter(pub String, pub &'static str);

/// Validates a subscription filter: nonempty, `#` only as the final level,
/// and wildcards occupying whole levels.
pub fn validate_filter(filter: &str) -> Result<(), InvalidFilter> {
    if filter.is_empty() {
        return Err(InvalidFilter(filter.into(), "filter is empty"));
    }
    let levels: Vec<&str> = filter.split('/').collect();
    for (i, level) in levels.iter().enumerate() {
        match *level {
            "#" => {
                if i != levels.len() - 1 {
                    return Err(InvalidFilter(filter.into(), "'#' must be the last level"));
                }
            }
            "+" => {}
            other => {
                if other.contains('#') || other.contains('+') {
                    return Err(InvalidFilter(
                        filter.into(),
                        "wildcards must occupy a whole level",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Validates a publish topic: nonempty and wildcard-free.
pub fn validate_topic(topic: &str) -> Result<(), InvalidFilter> {
    if topic.is_empty() {
        return Err(InvalidFilter(topic.into(), "topic is empty"));
    }
    if topic.contains('+') || topic.contains('#') {
        return Err(InvalidFilter(
            topic.into(),
            "topic must not contain wildcards",
        ));
    }
    Ok(())
}

/// True iff `topic` matches `filter` under level-wise comparison.
/// `+` matches exactly one level; a trailing `#` matches the remaining
/// levels, including none.
pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, InvalidFilter> {
    validate_filter(filter)?;
    Ok(matches_unchecked(filter, topic))
}

/// Matching core for filters already known to be valid.
pub(crate) fn matches_unchecked(filter: &str, topic: &str) -> bool {
    let mut filter_levels = filter.split('/');
    let mut topic_levels = topic.split('/');
    loop {
        match (filter_levels.next(), topic_levels.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(f), Some(t)) if f == t => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent level-wise oracle over pre-split segments.
    fn match_oracle(filter: &[&str], topic: &[&str]) -> bool {
        match (filter.first(), topic.first()) {
            (Some(&"#"), _) => true,
            (Some(&"+"), Some(_)) => match_oracle(&filter[1..], &topic[1..]),
            (Some(f), Some(t)) if f == t => match_oracle(&filter[1..], &topic[1..]),
            (None, None) => true,
            _ => false,
        }
    }

    fn check(filter: &str, topic: &str) -> bool {
        let got = topic_matches(filter, topic).unwrap();
        let want = match_oracle(
            &filter.split('/').collect::<Vec<_>>(),
            &topic.split('/').collect::<Vec<_>>(),
        );
        assert_eq!(got, want, "oracle disagrees for {filter:?} vs {topic:?}");
        got
    }

    #[test]
    fn wildcard_matching() {
        assert!(check("#", "iot/dev1/data"));
        assert!(check("iot/+/data", "iot/dev1/data"));
        assert!(!check("iot/+/data", "iot/dev1/extra/data"));
        assert!(!check("iot/+/data", "iot/data"));
        assert!(check("iot/#", "iot"));
        assert!(check("iot/#", "iot/a/b/c"));
        assert!(check("iot/query/+", "iot/query/gw-client-7"));
        assert!(!check("iot/query/+", "iot/query/a/b"));
        assert!(check("a/b/c", "a/b/c"));
        assert!(!check("a/b/c", "a/b"));
    }

    #[test]
    fn filter_validation() {
        assert!(validate_filter("iot/+/data").is_ok());
        assert!(validate_filter("#").is_ok());
        assert!(validate_filter("a/#/b").is_err());
        assert!(validate_filter("a/b+").is_err());
        assert!(validate_filter("a/#b").is_err());
        assert!(validate_filter("").is_err());
        assert!(topic_matches("a/#/b", "a/x/b").is_err());
    }

    #[test]
    fn topic_validation() {
        assert!(validate_topic("iot/mqtt-1/data").is_ok());
        assert!(validate_topic("iot/+/data").is_err());
        assert!(validate_topic("#").is_err());
        assert!(validate_topic("").is_err());
    }

    proptest! {
        #[test]
        fn matcher_agrees_with_oracle(
            filter_levels in proptest::collection::vec(
                prop_oneof![Just("+".to_string()), "[ab]{1,2}".prop_map(String::from)],
                1..4
            ),
            hash_tail in any::<bool>(),
            topic_levels in proptest::collection::vec("[ab]{1,2}", 1..5),
        ) {
            let mut filter = filter_levels.join("/");
            if hash_tail {
                filter.push_str("/#");
            }
            let topic = topic_levels.join("/");
            let got = topic_matches(&filter, &topic).unwrap();
            let want = match_oracle(
                &filter.split('/').collect::<Vec<_>>(),
                &topic.split('/').collect::<Vec<_>>(),
            );
            prop_assert_eq!(got, want);
        }
    }
}
