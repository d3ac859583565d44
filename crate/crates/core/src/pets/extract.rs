/// Returns the body of the first fenced code block, or the whole response
/// when there is no complete fence. Surrounding whitespace is trimmed.
pub fn extract_code(response: &str) -> String {
    fenced_body(response).unwrap_or(response).trim().to_string()
}

fn fenced_body(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // The info string (language tag) runs to the end of the opening line. A
    // fence closed on the same line (```code```) has no info string.
    let body_start = match (after.find('\n'), after.find("```")) {
        (Some(nl), Some(close)) if close < nl => {
            return Some(&after[..close]);
        }
        (Some(nl), _) => nl + 1,
        (None, Some(close)) => return Some(&after[..close]),
        (None, None) => return None,
    };
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_block_wins() {
        assert_eq!(extract_code("```python\nx=1\n```"), "x=1");
        assert_eq!(extract_code("Here is code:\n```\na=2\n```\nand notes ```b=3```"), "a=2");
        assert_eq!(extract_code("def f(): return 1"), "def f(): return 1");
        assert_eq!(extract_code(""), "");
        assert_eq!(extract_code("```b=3```"), "b=3");
        assert_eq!(extract_code("  ```py\n  def f():\n      pass\n```  "), "def f():\n      pass");
    }

    #[test]
    fn unclosed_fence_passes_through() {
        assert_eq!(extract_code("```python\nx = 1\n"), "```python\nx = 1");
    }

    proptest! {
        #[test]
        fn idempotent(s in "(```[a-z]{0,6}\n)?[ -~\n]{0,60}(```)?[ -~\n]{0,20}") {
            let once = extract_code(&s);
            prop_assert_eq!(extract_code(&once), once);
        }
    }
}
