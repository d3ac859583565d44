//! Regenerates the hermetic bundle under `tests/fixtures/bundle/`: a small
//! MBPP-style dataset, categories, an exemplar pool, embedding vectors, a
//! manifest and a replay cache recorded against a scripted chat backend.
//!
//! ```text
//! cargo run --example build_fixture
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use pet_router::config::Config;
use pet_router::harness::{
    benchmark, load_dataset, ChatBackend, ChatClient, ChatRequest, ChatResponse, HarnessError, RunSettings, Sandbox,
    TaskInstance, Usage,
};
use pet_router::pets::{ExemplarPool, PetId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

struct Spec {
    id: u32,
    text: &'static str,
    category: &'static str,
    code: &'static str,
    buggy: &'static str,
    tests: [&'static str; 3],
}

const EASY: &[Spec] = &[
    Spec {
        id: 1,
        text: "Write a function add_numbers(a, b) that returns the sum of two numbers",
        category: "MathematicalComputation",
        code: "def add_numbers(a, b):\n    return a + b\n",
        buggy: "def add_numbers(a, b):\n    return a - b\n",
        tests: ["assert add_numbers(2, 3) == 5", "assert add_numbers(-1, 1) == 0", "assert add_numbers(0, 0) == 0"],
    },
    Spec {
        id: 2,
        text: "Write a function square_value(x) that returns x multiplied by itself",
        category: "MathematicalComputation",
        code: "def square_value(x):\n    return x * x\n",
        buggy: "def square_value(x):\n    return x + x\n",
        tests: ["assert square_value(3) == 9", "assert square_value(-4) == 16", "assert square_value(0) == 0"],
    },
    Spec {
        id: 3,
        text: "Write a function check_even(n) that tells whether an integer is even",
        category: "MathematicalComputation",
        code: "def check_even(n):\n    return n % 2 == 0\n",
        buggy: "def check_even(n):\n    return n % 2 == 1\n",
        tests: ["assert check_even(4) is True", "assert check_even(7) is False", "assert check_even(0) is True"],
    },
    Spec {
        id: 4,
        text: "Write a function larger_of(a, b) that returns the larger of two values",
        category: "MathematicalComputation",
        code: "def larger_of(a, b):\n    return max(a, b)\n",
        buggy: "def larger_of(a, b):\n    return min(a, b)\n",
        tests: ["assert larger_of(3, 9) == 9", "assert larger_of(5, -2) == 5", "assert larger_of(1, 1) == 1"],
    },
    Spec {
        id: 5,
        text: "Write a function reverse_text(s) that returns the characters of a string in reverse order",
        category: "StringManipulation",
        code: "def reverse_text(s):\n    return s[::-1]\n",
        buggy: "def reverse_text(s):\n    return s\n",
        tests: [
            "assert reverse_text('abc') == 'cba'",
            "assert reverse_text('') == ''",
            "assert reverse_text('level') == 'level'",
        ],
    },
    Spec {
        id: 6,
        text: "Write a function total_of(items) that returns the sum of a list of numbers",
        category: "ListProcessing",
        code: "def total_of(items):\n    return sum(items)\n",
        buggy: "def total_of(items):\n    return len(items)\n",
        tests: ["assert total_of([1, 2, 3]) == 6", "assert total_of([]) == 0", "assert total_of([5]) == 5"],
    },
    Spec {
        id: 7,
        text: "Write a function head_of(items) that returns the first element of a non-empty list",
        category: "ListProcessing",
        code: "def head_of(items):\n    return items[0]\n",
        buggy: "def head_of(items):\n    return items[-1]\n",
        tests: ["assert head_of([4, 5, 6]) == 4", "assert head_of(['x']) == 'x'", "assert head_of([0, 1]) == 0"],
    },
    Spec {
        id: 8,
        text: "Write a function shout(s) that converts a string to upper case",
        category: "StringManipulation",
        code: "def shout(s):\n    return s.upper()\n",
        buggy: "def shout(s):\n    return s.lower()\n",
        tests: ["assert shout('hi') == 'HI'", "assert shout('MiXed') == 'MIXED'", "assert shout('') == ''"],
    },
    Spec {
        id: 9,
        text: "Write a function count_item(items, x) that counts how often x occurs in a list",
        category: "ListProcessing",
        code: "def count_item(items, x):\n    return items.count(x)\n",
        buggy: "def count_item(items, x):\n    return len(items)\n",
        tests: [
            "assert count_item([1, 2, 1, 3], 1) == 2",
            "assert count_item([], 5) == 0",
            "assert count_item(['a', 'a'], 'a') == 2",
        ],
    },
    Spec {
        id: 10,
        text: "Write a function smallest_in(items) that returns the minimum of a non-empty list",
        category: "ListProcessing",
        code: "def smallest_in(items):\n    return min(items)\n",
        buggy: "def smallest_in(items):\n    return max(items)\n",
        tests: [
            "assert smallest_in([3, 1, 2]) == 1",
            "assert smallest_in([7]) == 7",
            "assert smallest_in([-5, 0, 5]) == -5",
        ],
    },
];

const HARD: &[Spec] = &[
    Spec {
        id: 11,
        text: "Write a function fizz_buzz(n) that returns the FizzBuzz strings for 1 to n as a list",
        category: "StringManipulation",
        code: r#"def fizz_buzz(n):
    out = []
    for i in range(1, n + 1):
        if i % 15 == 0:
            out.append("FizzBuzz")
        elif i % 3 == 0:
            out.append("Fizz")
        elif i % 5 == 0:
            out.append("Buzz")
        else:
            out.append(str(i))
    return out
"#,
        buggy: r#"def fizz_buzz(n):
    out = []
    for i in range(1, n + 1):
        if i % 3 == 0:
            out.append("Fizz")
        elif i % 5 == 0:
            out.append("Buzz")
        else:
            out.append(str(i))
    return out
"#,
        tests: [
            "assert fizz_buzz(15)[-1] == 'FizzBuzz'",
            "assert fizz_buzz(5) == ['1', '2', 'Fizz', '4', 'Buzz']",
            "assert fizz_buzz(0) == []",
        ],
    },
    Spec {
        id: 12,
        text: "Write a function prime_check(n) that decides whether an integer is a prime number",
        category: "MathematicalComputation",
        code: r#"def prime_check(n):
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    i = 3
    while i * i <= n:
        if n % i == 0:
            return False
        i += 2
    return True
"#,
        buggy: r#"def prime_check(n):
    if n < 2:
        return False
    if n == 2:
        return True
    return n % 2 == 1
"#,
        tests: ["assert prime_check(25) is False", "assert prime_check(13) is True", "assert prime_check(1) is False"],
    },
    Spec {
        id: 13,
        text: "Write a function common_prefix(words) that returns the longest common prefix of a list of strings",
        category: "StringManipulation",
        code: r#"def common_prefix(words):
    if not words:
        return ""
    prefix = words[0]
    for w in words[1:]:
        while not w.startswith(prefix):
            prefix = prefix[:-1]
            if not prefix:
                return ""
    return prefix
"#,
        buggy: r#"def common_prefix(words):
    if not words:
        return ""
    prefix = words[0]
    for w in words[1:]:
        if not w.startswith(prefix):
            prefix = prefix[:-1]
    return prefix
"#,
        tests: [
            "assert common_prefix(['flower', 'flow', 'flight']) == 'fl'",
            "assert common_prefix(['dog', 'racecar']) == ''",
            "assert common_prefix([]) == ''",
        ],
    },
    Spec {
        id: 14,
        text: "Write a function run_length(s) that run-length encodes a string such as aaab into a3b1",
        category: "StringManipulation",
        code: r#"def run_length(s):
    if not s:
        return ""
    out = []
    prev = s[0]
    count = 1
    for ch in s[1:]:
        if ch == prev:
            count += 1
        else:
            out.append(prev + str(count))
            prev = ch
            count = 1
    out.append(prev + str(count))
    return "".join(out)
"#,
        buggy: r#"def run_length(s):
    if not s:
        return ""
    out = []
    prev = s[0]
    count = 1
    for ch in s[1:]:
        if ch == prev:
            count += 1
        else:
            out.append(prev + str(count))
            prev = ch
            count = 1
    return "".join(out)
"#,
        tests: [
            "assert run_length('aaab') == 'a3b1'",
            "assert run_length('') == ''",
            "assert run_length('abc') == 'a1b1c1'",
        ],
    },
    Spec {
        id: 15,
        text: "Write a function bin_search(items, target) that returns the index of target in a sorted list or -1",
        category: "ListProcessing",
        code: r#"def bin_search(items, target):
    lo, hi = 0, len(items) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        if items[mid] == target:
            return mid
        elif items[mid] < target:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1
"#,
        buggy: r#"def bin_search(items, target):
    lo, hi = 0, len(items) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if items[mid] == target:
            return mid
        elif items[mid] < target:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1
"#,
        tests: [
            "assert bin_search([1, 3, 5, 7], 7) == 3",
            "assert bin_search([1, 3, 5, 7], 4) == -1",
            "assert bin_search([], 1) == -1",
        ],
    },
    Spec {
        id: 16,
        text: "Write a function balanced(s) that checks whether the brackets ()[]{} in a string are balanced",
        category: "StringManipulation",
        code: r#"def balanced(s):
    pairs = {")": "(", "]": "[", "}": "{"}
    stack = []
    for ch in s:
        if ch in "([{":
            stack.append(ch)
        elif ch in pairs:
            if not stack or stack[-1] != pairs[ch]:
                return False
            stack.pop()
    return not stack
"#,
        buggy: r#"def balanced(s):
    depth = 0
    for ch in s:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0
"#,
        tests: ["assert balanced('([)]') is False", "assert balanced('{[()]}') is True", "assert balanced('(') is False"],
    },
    Spec {
        id: 17,
        text: "Write a function roman_value(s) that converts a Roman numeral string to an integer",
        category: "StringManipulation",
        code: r#"def roman_value(s):
    values = {"I": 1, "V": 5, "X": 10, "L": 50, "C": 100, "D": 500, "M": 1000}
    total = 0
    for i, ch in enumerate(s):
        v = values[ch]
        if i + 1 < len(s) and values[s[i + 1]] > v:
            total -= v
        else:
            total += v
    return total
"#,
        buggy: r#"def roman_value(s):
    values = {"I": 1, "V": 5, "X": 10, "L": 50, "C": 100, "D": 500, "M": 1000}
    total = 0
    for ch in s:
        if ch in values:
            total += values[ch]
    return total
"#,
        tests: ["assert roman_value('IX') == 9", "assert roman_value('LVIII') == 58", "assert roman_value('MCMXCIV') == 1994"],
    },
    Spec {
        id: 18,
        text: "Write a function gcd_lcm(a, b) that returns a tuple of the greatest common divisor and least common multiple",
        category: "MathematicalComputation",
        code: r#"def gcd_lcm(a, b):
    x, y = abs(a), abs(b)
    while y:
        x, y = y, x % y
    if x == 0:
        return (0, 0)
    lcm = abs(a * b) // x
    return (x, lcm)
"#,
        buggy: r#"def gcd_lcm(a, b):
    x, y = abs(a), abs(b)
    while y:
        x, y = y, x % y
    if x == 0:
        return (0, 0)
    return (x, a * b)
"#,
        tests: ["assert gcd_lcm(4, 6) == (2, 12)", "assert gcd_lcm(7, 5) == (1, 35)", "assert gcd_lcm(0, 0) == (0, 0)"],
    },
    Spec {
        id: 19,
        text: "Write a function merge_sorted(a, b) that merges two sorted lists into one sorted list",
        category: "ListProcessing",
        code: r#"def merge_sorted(a, b):
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] <= b[j]:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out
"#,
        buggy: r#"def merge_sorted(a, b):
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] <= b[j]:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    return out
"#,
        tests: [
            "assert merge_sorted([1, 4], [2, 3, 5]) == [1, 2, 3, 4, 5]",
            "assert merge_sorted([], [1]) == [1]",
            "assert merge_sorted([], []) == []",
        ],
    },
    Spec {
        id: 20,
        text: "Write a function top_words(text, k) that returns the k most frequent words, ties broken alphabetically",
        category: "StringManipulation",
        code: r#"def top_words(text, k):
    counts = {}
    for word in text.lower().split():
        if word:
            counts[word] = counts.get(word, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    result = []
    for word, n in ranked:
        if len(result) >= k:
            break
        result.append(word)
    return result
"#,
        buggy: r#"def top_words(text, k):
    counts = {}
    for word in text.split():
        counts[word] = counts.get(word, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    return [w for w, n in ranked[:k]]
"#,
        tests: [
            "assert top_words('B a b a c', 2) == ['a', 'b']",
            "assert top_words('x y z', 1) == ['x']",
            "assert top_words('', 3) == []",
        ],
    },
];

const EXEMPLARS: &[(&str, &str, &str, &str)] = &[
    (
        "ex-1",
        "Write a function double_all(items) that doubles every number in a list",
        "def double_all(items):\n    return [2 * x for x in items]\n",
        "1. Walk the list.\n2. Multiply each element by two.\n3. Return the new list.",
    ),
    (
        "ex-2",
        "Write a function vowel_count(s) that counts the vowels in a string",
        "def vowel_count(s):\n    return sum(1 for ch in s.lower() if ch in 'aeiou')\n",
        "1. Lower-case the string.\n2. Count characters that are vowels.\n3. Return the count.",
    ),
    (
        "ex-3",
        "Write a function factorial_of(n) that returns n factorial",
        "def factorial_of(n):\n    out = 1\n    for i in range(2, n + 1):\n        out *= i\n    return out\n",
        "1. Start from one.\n2. Multiply by every integer up to n.\n3. Return the product.",
    ),
    (
        "ex-4",
        "Write a function dedupe(items) that removes duplicates while keeping order",
        "def dedupe(items):\n    seen = set()\n    out = []\n    for x in items:\n        if x not in seen:\n            seen.add(x)\n            out.append(x)\n    return out\n",
        "1. Track seen values in a set.\n2. Keep each value the first time it appears.\n3. Return the kept values.",
    ),
    (
        "ex-5",
        "Write a function is_palindrome(s) that checks whether a string reads the same backwards",
        "def is_palindrome(s):\n    return s == s[::-1]\n",
        "1. Reverse the string.\n2. Compare it with the original.\n3. Return the comparison.",
    ),
];

const WEIGHTS: [f64; 5] = [0.5, 1.0, 0.01, 1.0, 0.3];
const DIM: usize = 32;

struct Scripted {
    tasks: Vec<(String, String, bool, String, String)>,
}

fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4).max(1)
}

fn fenced(code: &str) -> String {
    format!("```python\n{code}```")
}

impl ChatBackend for Scripted {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, HarnessError> {
        let first = &request.messages.first().expect("non-empty request").content;
        let last = &request.messages.last().expect("non-empty request").content;
        let (_, _, hard, code, buggy) = self
            .tasks
            .iter()
            .find(|(_, text, ..)| first.contains(text.as_str()))
            .unwrap_or_else(|| panic!("no task matches prompt {first:?}"));
        let text = if last.contains("How about this intent:") {
            "1. Parse the inputs.\n2. Compute the answer step by step.\n3. Return the result.".to_string()
        } else if last.contains("Please review the code") {
            "The code looks reasonable. Consider checking edge cases such as empty inputs.".to_string()
        } else if *hard {
            if last.contains("The code above is wrong. Please fix it.") {
                fenced(code)
            } else {
                fenced(buggy)
            }
        } else if first.contains("Your code should pass the test:") {
            fenced(buggy)
        } else {
            fenced(code)
        };
        let prompt: u64 = request.messages.iter().map(|m| approx_tokens(&m.content)).sum();
        let usage = Usage { prompt_tokens: prompt, completion_tokens: approx_tokens(&text) };
        Ok(ChatResponse { text, usage })
    }
}

fn write(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn main() {
    let bundle = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bundle");
    if bundle.exists() {
        std::fs::remove_dir_all(&bundle).expect("clear old bundle");
    }
    std::fs::create_dir_all(bundle.join("cache")).expect("create bundle");

    let specs: Vec<(&Spec, bool)> = EASY.iter().map(|s| (s, false)).chain(HARD.iter().map(|s| (s, true))).collect();

    let mut tasks = String::new();
    let mut categories = BTreeMap::new();
    for (s, _) in &specs {
        let row = json!({ "task_id": s.id, "text": s.text, "code": s.code, "test_list": s.tests });
        tasks.push_str(&serde_json::to_string(&row).unwrap());
        tasks.push('\n');
        categories.insert(s.id.to_string(), s.category);
    }
    write(&bundle.join("tasks.jsonl"), &tasks);
    write(&bundle.join("categories.json"), &(serde_json::to_string_pretty(&categories).unwrap() + "\n"));

    let pool: Vec<_> = EXEMPLARS
        .iter()
        .map(|(id, prompt, solution, reasoning)| {
            json!({ "task_id": id, "prompt": prompt, "solution": solution, "reasoning": reasoning })
        })
        .collect();
    write(&bundle.join("exemplars.json"), &(serde_json::to_string_pretty(&pool).unwrap() + "\n"));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let centers: [Vec<f64>; 2] = [
        (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
    ];
    let mut vectors = String::new();
    for (s, hard) in &specs {
        let c = &centers[usize::from(*hard)];
        let v: Vec<f64> = c.iter().map(|x| x + noise.sample(&mut rng)).collect();
        vectors.push_str(&serde_json::to_string(&json!({ "task_id": s.id.to_string(), "vector": v })).unwrap());
        vectors.push('\n');
    }
    write(&bundle.join("embeddings.jsonl"), &vectors);

    let manifest = format!(
        r#"seed = 0
jobs = 4
output_dir = "out"

[dataset]
path = "tasks.jsonl"
format = "mbpp"
categories = "categories.json"

[llm]
model = "gpt-3.5-turbo"
temperature = 0.0
max_debug_rounds = 1
cache_mode = "replay"
cache_dir = "cache"

[sandbox]
python = "python3"
timeout_secs = 10.0

[exemplars]
pool = "exemplars.json"
seed = 0

[embedding]
fixture = "embeddings.jsonl"

[metrics]
weights = {weights:?}

[triplet]
epochs = 15

[select]
epochs = 10

[eval]
folds = 5
label = "fixture"
"#,
        weights = WEIGHTS
    );
    write(&bundle.join("config.toml"), &manifest);

    let cfg = Config::load(&bundle.join("config.toml")).expect("manifest loads");
    let loaded: Vec<TaskInstance> = load_dataset(&bundle.join("tasks.jsonl"), cfg.dataset.format).expect("dataset loads");
    let weights = cfg.metrics.weights;
    for t in &loaded {
        let r = pet_router::metrics::analyze(&t.reference_solution, &weights).expect("reference parses");
        println!("task {:>2}: combined {:.2} {:?}", t.id, r.combined, r.values());
    }

    let backend = Scripted {
        tasks: specs
            .iter()
            .map(|(s, hard)| (s.id.to_string(), s.text.to_string(), *hard, s.code.to_string(), s.buggy.to_string()))
            .collect(),
    };
    let client = ChatClient::record(Box::new(backend), bundle.join("cache"));
    let exclude = loaded.iter().map(|t| t.id.clone()).collect();
    let pool = ExemplarPool::load(&bundle.join("exemplars.json")).expect("pool loads");
    let exemplars = pool.draw(cfg.exemplars.seed, &exclude).expect("draw exemplars");
    let settings = RunSettings {
        model: cfg.llm.model.clone(),
        temperature: cfg.llm.temperature,
        max_debug_rounds: cfg.llm.max_debug_rounds,
    };
    let sandbox = Sandbox::new(&cfg.sandbox.python, Duration::from_secs_f64(cfg.sandbox.timeout_secs)).expect("python");
    let scratch = tempfile::tempdir().expect("scratch dir");
    let report =
        benchmark(&loaded, &PetId::ALL, &client, Some(&exemplars), &settings, &sandbox, scratch.path(), 4).expect("sweep");
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    for t in &loaded {
        let row: Vec<String> = report
            .records
            .iter()
            .filter(|r| r.task_id == t.id)
            .map(|r| format!("{}:{}/{}", r.pet.slug(), u8::from(r.passed), r.total_tokens))
            .collect();
        println!("task {:>2}: {}", t.id, row.join(" "));
    }
    println!("recorded {} responses", client.backend_calls());
}
