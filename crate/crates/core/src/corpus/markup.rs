//! MediaWiki / HTML markup stripping.
//!
//! Rules, applied in order on every pass:
//!
//! | # | pattern                         | replacement          |
//! |---|---------------------------------|----------------------|
//! | 1 | `<!-- ... -->`                  | removed              |
//! | 2 | `{{ ... }}` (innermost first)   | removed              |
//! | 3 | HTML tags `<b>`, `</b>`, `<br/>`| a space              |
//! | 4 | `[[target\|label]]`             | `label`              |
//! | 5 | `[[target]]`                    | `target`             |
//! | 6 | `[http://url label]`            | `label`              |
//! | 7 | `[http://url]`                  | removed              |
//! | 8 | runs of 2+ apostrophes          | removed              |
//! | 9 | runs of 3+ tildes (signatures)  | removed              |
//! |10 | `== heading ==` lines           | heading text         |
//! |11 | leading `:` `*` `#` `;` markers | removed              |
//! |12 | `----` rules                    | removed              |
//! |13 | whitespace runs                 | one space, trimmed   |
//!
//! Passes repeat until the text stops changing, which makes the function
//! idempotent. No rule lengthens the text, so the loop terminates.

use std::borrow::Cow;
use std::sync::LazyLock;

use regex::Regex;

struct Rule {
    pattern: Regex,
    replacement: &'static str,
}

static RULES: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    let table: &[(&str, &str)] = &[
        (r"(?s)<!--.*?-->", ""),
        (r"\{\{[^{}]*\}\}", ""),
        (r"</?[A-Za-z][A-Za-z0-9]*(?:\s[^<>]*)?/?>", " "),
        (r"\[\[[^\[\]|]*\|([^\[\]]*)\]\]", "$1"),
        (r"\[\[([^\[\]|]*)\]\]", "$1"),
        (r"\[(?:https?|ftp)://[^\s\[\]]+\s+([^\[\]]*)\]", "$1"),
        (r"\[(?:https?|ftp)://[^\s\[\]]*\]", ""),
        (r"'{2,}", ""),
        (r"~{3,}", ""),
        (r"(?m)^[ \t]*=+[ \t]*(.*?)[ \t]*=+[ \t]*$", "$1"),
        (r"(?m)^[ \t]*[:*#;]+", ""),
        (r"(?m)^[ \t]*-{4,}", ""),
    ];
    table
        .iter()
        .map(|(p, r)| Rule {
            pattern: Regex::new(p).expect("markup rule compiles"),
            replacement: r,
        })
        .collect()
});

static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

fn pass(text: &str) -> String {
    let mut cur = Cow::Borrowed(text);
    for rule in RULES.iter() {
        if let Cow::Owned(s) = rule.pattern.replace_all(&cur, rule.replacement) {
            cur = Cow::Owned(s);
        }
    }
    WHITESPACE.replace_all(&cur, " ").trim().to_string()
}

/// Strip HTML and wiki markup, returning plain text.
pub fn strip_markup(wikitext: &str) -> String {
    let mut cur = pass(wikitext);
    loop {
        let next = pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_cases() {
        let cases = [
            ("plain words", "plain words"),
            ("[[Page|shown]]", "shown"),
            ("<b>hi</b> ~~~~", "hi"),
            ("see [[Talk:Foo]] now", "see Talk:Foo now"),
            ("'''bold''' and ''italic''", "bold and italic"),
            ("{{unsigned|1.2.3.4}} hello", "hello"),
            ("{{outer|{{inner}}}}kept", "kept"),
            ("[http://example.com the site] and [http://x.org]", "the site and"),
            ("== Heading ==\n:reply here\n::deeper", "Heading reply here deeper"),
            ("a<br/>b", "a b"),
            ("<!-- hidden -->visible", "visible"),
            ("----\nafter rule", "after rule"),
            ("", ""),
        ];
        for (input, want) in cases {
            assert_eq!(strip_markup(input), want, "input {input:?}");
        }
    }

    #[test]
    fn malformed_markup_does_not_panic() {
        for s in ["[[unclosed", "{{ {{", "<b", "]]]][[[[", "'''", "<<b>b>", "~~"] {
            let once = strip_markup(s);
            assert_eq!(strip_markup(&once), once);
        }
    }

    proptest! {
        #[test]
        fn idempotent(s in r"[a-c \n\[\]\|{}<>/'~=:*#!-]{0,40}") {
            let once = strip_markup(&s);
            prop_assert_eq!(strip_markup(&once), once);
        }

        #[test]
        fn idempotent_unicode(s in "\\PC{0,60}") {
            let once = strip_markup(&s);
            prop_assert_eq!(strip_markup(&once), once);
        }
    }
}
