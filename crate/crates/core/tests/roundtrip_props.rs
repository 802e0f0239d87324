use erd_mentor_core::arbitrary::{schema, token_soup};
use erd_mentor_core::{format, from_json, parse, to_dot, to_json, validate};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 1000,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn parse_of_format_is_identity(s in schema()) {
        let text = format(&s);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        prop_assert_eq!(back.schema, s);
    }

    #[test]
    fn from_json_of_to_json_is_identity(s in schema()) {
        let text = to_json(&s);
        prop_assert_eq!(from_json(&text).unwrap(), s.clone());
        prop_assert_eq!(to_json(&s), text);
    }

    #[test]
    fn spans_cover_every_declaration_in_order(s in schema()) {
        let text = format(&s);
        let parsed = parse(&text).unwrap();
        let decls = s.entities.len() + s.relationships.len() + s.specializations.len() + s.unions.len();
        prop_assert_eq!(parsed.spans.len(), decls);
        let chars = text.chars().count();
        for pair in parsed.spans.windows(2) {
            prop_assert!(pair[0].end <= pair[1].start);
        }
        for span in &parsed.spans {
            prop_assert!(span.start < span.end && span.end <= chars);
        }
    }

    #[test]
    fn validate_and_dot_are_total(s in schema()) {
        let violations = validate(&s);
        let dot = to_dot(&s);
        let dangling = violations.iter().any(|v| v.code() == "UnresolvedEntity");
        prop_assert_eq!(dot.is_err(), dangling);
        if let Ok(dot) = dot {
            prop_assert!(erd_mentor_core::check_dot_syntax(&dot).is_ok(), "{}", dot);
            prop_assert_eq!(to_dot(&s).unwrap(), dot);
        }
    }

    #[test]
    fn parse_is_total_on_token_soup(text in token_soup()) {
        check_errors(&text)?;
    }

    #[test]
    fn parse_is_total_on_arbitrary_text(text in any::<String>()) {
        check_errors(&text)?;
    }
}

fn check_errors(text: &str) -> Result<(), TestCaseError> {
    if let Err(errors) = parse(text) {
        prop_assert!(!errors.is_empty());
        let lines: Vec<&str> = text.split('\n').collect();
        for e in &errors {
            prop_assert!(!e.message.is_empty());
            prop_assert!(e.line >= 1 && e.line <= lines.len(), "{:?}", e);
            let width = lines[e.line - 1].chars().count().max(1);
            prop_assert!(
                e.column >= 1 && e.column <= width + 1,
                "{:?} in {:?}",
                e,
                text
            );
        }
    }
    Ok(())
}
