/// Lowercases, splits on whitespace and peels leading and trailing
/// punctuation into tokens of their own. Spelling is left untouched.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.split_whitespace() {
        let word = word.to_lowercase();
        if word.chars().all(|c| !c.is_alphanumeric()) {
            out.push(word);
            continue;
        }
        let chars: Vec<char> = word.chars().collect();
        let first = chars.iter().position(|c| c.is_alphanumeric()).unwrap_or(0);
        let last = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap_or(0);
        out.extend(chars[..first].iter().map(|c| c.to_string()));
        out.push(chars[first..=last].iter().collect());
        out.extend(chars[last + 1..].iter().map(|c| c.to_string()));
    }
    out
}
