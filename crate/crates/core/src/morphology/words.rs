//! Lowercase English cardinals ("twenty-one", "three hundred five") and their
//! inverse.

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [(u64, &str); 3] = [
    (1_000_000_000, "billion"),
    (1_000_000, "million"),
    (1_000, "thousand"),
];

fn below_thousand(n: u64, out: &mut Vec<String>) {
    debug_assert!(n < 1000);
    let hundreds = n / 100;
    let rest = n % 100;
    if hundreds > 0 {
        out.push(ONES[hundreds as usize].to_string());
        out.push("hundred".to_string());
    }
    if rest == 0 {
        return;
    }
    if rest < 20 {
        out.push(ONES[rest as usize].to_string());
    } else if rest % 10 == 0 {
        out.push(TENS[(rest / 10) as usize].to_string());
    } else {
        out.push(format!("{}-{}", TENS[(rest / 10) as usize], ONES[(rest % 10) as usize]));
    }
}

pub fn cardinal(n: u64) -> String {
    if n == 0 {
        return ONES[0].to_string();
    }
    let mut words = Vec::new();
    let mut rest = n;
    for (scale, name) in SCALES {
        if rest >= scale {
            let chunk = rest / scale;
            // chunk can exceed 999 only above the billions.
            if chunk >= 1000 {
                words.push(cardinal(chunk));
            } else {
                below_thousand(chunk, &mut words);
            }
            words.push(name.to_string());
            rest %= scale;
        }
    }
    below_thousand(rest, &mut words);
    words.join(" ")
}

fn small_value(word: &str) -> Option<u64> {
    if let Some(i) = ONES.iter().position(|w| *w == word) {
        return Some(i as u64);
    }
    if let Some(i) = TENS.iter().position(|w| !w.is_empty() && *w == word) {
        return Some(10 * i as u64);
    }
    let (tens, ones) = word.split_once('-')?;
    let t = TENS.iter().position(|w| !w.is_empty() && *w == tens)?;
    let o = ONES.iter().position(|w| *w == ones).filter(|&o| (1..10).contains(&o))?;
    Some(10 * t as u64 + o as u64)
}

/// Parses text produced by [`cardinal`]. Returns `None` for anything else,
/// including non-canonical spellings.
pub fn parse_cardinal(text: &str) -> Option<u64> {
    let mut total = 0u64;
    let mut group = 0u64;
    for word in text.split(' ') {
        match word {
            "hundred" => group = group.checked_mul(100)?,
            "thousand" | "million" | "billion" => {
                let scale = SCALES.iter().find(|(_, n)| *n == word)?.0;
                total = total.checked_add(group.checked_mul(scale)?)?;
                group = 0;
            }
            _ => group = group.checked_add(small_value(word)?)?,
        }
    }
    let value = total.checked_add(group)?;
    (cardinal(value) == text).then_some(value)
}
