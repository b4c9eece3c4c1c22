use alloc::vec::Vec;

/// Token id: bytes map to `0..=255`, followed by three special tokens.
pub type Token = u32;

pub const BOS: Token = 256;
pub const EOS: Token = 257;
pub const PAD: Token = 258;
pub const VOCAB_SIZE: usize = 259;

pub fn tokenize(text: &[u8], add_bos: bool, add_eos: bool) -> Vec<Token> {
    let mut out = Vec::with_capacity(text.len() + 2);
    if add_bos {
        out.push(BOS);
    }
    out.extend(text.iter().map(|&b| Token::from(b)));
    if add_eos {
        out.push(EOS);
    }
    out
}

/// Inverse of [`tokenize`]; special tokens are dropped.
pub fn detokenize(tokens: &[Token]) -> Vec<u8> {
    tokens.iter().filter(|&&t| t < 256).map(|&t| t as u8).collect()
}
