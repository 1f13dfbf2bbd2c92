use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

/// A token together with the byte offset where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

/// Splits `src` into tokens. Numbers are `digits[.digits][e[+-]digits]` or
/// `.digits[...]`; identifiers are `[A-Za-z_][A-Za-z0-9_]*`.
pub fn tokenize(src: &str) -> Result<Vec<Spanned>, DslError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'^' => Some(Token::Caret),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(token) = single {
            out.push(Spanned { token, offset: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            i = scan_number(bytes, start)?;
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| DslError::MalformedNumber {
                offset: start,
                text: text.to_string(),
            })?;
            out.push(Spanned { token: Token::Num(value), offset: start });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Spanned { token: Token::Ident(src[start..i].to_string()), offset: start });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(DslError::UnexpectedChar { offset: start, ch });
    }
    Ok(out)
}

fn scan_number(bytes: &[u8], start: usize) -> Result<usize, DslError> {
    let malformed = |end: usize| DslError::MalformedNumber {
        offset: start,
        text: String::from_utf8_lossy(&bytes[start..end]).into_owned(),
    };
    let digits = |mut j: usize| {
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        j
    };
    let mut i = digits(start);
    let int_digits = i - start;
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        let j = digits(i + 1);
        frac_digits = j - i - 1;
        i = j;
    }
    if int_digits + frac_digits == 0 {
        return Err(malformed(i.max(start + 1)));
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let k = digits(j);
        if k == j {
            return Err(malformed(k.max(i + 1)));
        }
        i = k;
    }
    // a literal running straight into another '.' or letter is malformed ("1..2", "1.2.3", "3x")
    if i < bytes.len() && (bytes[i] == b'.' || bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
        let mut j = i;
        while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'.' || bytes[j] == b'_') {
            j += 1;
        }
        return Err(malformed(j));
    }
    Ok(i)
}
