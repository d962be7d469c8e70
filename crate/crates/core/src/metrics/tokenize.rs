/// Lowercases, splits on whitespace, then splits each chunk into maximal
/// runs of alphanumeric and non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lower.split_whitespace() {
        let mut current = String::new();
        let mut current_alnum = None;
        for c in chunk.chars() {
            let alnum = c.is_alphanumeric();
            if current_alnum.is_some_and(|a| a != alnum) {
                tokens.push(std::mem::take(&mut current));
            }
            current.push(c);
            current_alnum = Some(alnum);
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}
