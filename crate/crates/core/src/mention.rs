//! Tokenization and trie-based mention extraction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeGraph, SenseId};

/// A token with character offsets into the source string (`end` exclusive).
/// Byte offsets are kept alongside for slicing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    #[serde(skip)]
    pub byte_start: usize,
    #[serde(skip)]
    pub byte_end: usize,
}

impl Token {
    pub fn normalized(&self) -> String {
        self.text.to_lowercase()
    }
}

/// Splits on whitespace; each maximal alphanumeric run is a token and every
/// other non-space character is a token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    // (char_start, byte_start) of the alphanumeric run in progress
    let mut run: Option<(usize, usize)> = None;
    let mut char_pos = 0;

    let flush = |run: &mut Option<(usize, usize)>, tokens: &mut Vec<Token>, cend, bend| {
        if let Some((cs, bs)) = run.take() {
            tokens.push(Token {
                text: text[bs..bend].to_string(),
                start: cs,
                end: cend,
                byte_start: bs,
                byte_end: bend,
            });
        }
    };

    for (byte_pos, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run.is_none() {
                run = Some((char_pos, byte_pos));
            }
        } else {
            flush(&mut run, &mut tokens, char_pos, byte_pos);
            if !ch.is_whitespace() {
                let bend = byte_pos + ch.len_utf8();
                tokens.push(Token {
                    text: text[byte_pos..bend].to_string(),
                    start: char_pos,
                    end: char_pos + 1,
                    byte_start: byte_pos,
                    byte_end: bend,
                });
            }
        }
        char_pos += 1;
    }
    flush(&mut run, &mut tokens, char_pos, text.len());
    tokens
}

/// Tokenizes and lower-cases, dropping offsets.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    tokenize(text).iter().map(Token::normalized).collect()
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: HashMap<String, usize>,
    payload: Vec<SenseId>,
}

/// Trie over normalized token sequences; terminal nodes hold sense ids.
#[derive(Clone, Debug)]
pub struct MentionTrie {
    nodes: Vec<Node>,
    key_count: usize,
}

impl Default for MentionTrie {
    fn default() -> Self {
        MentionTrie {
            nodes: vec![Node::default()],
            key_count: 0,
        }
    }
}

impl MentionTrie {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes every surface form of every sense.
    pub fn build(graph: &KnowledgeGraph) -> Self {
        let mut trie = MentionTrie::new();
        for sense in graph.senses() {
            for form in graph.surface_forms(&sense.lemma) {
                let key = normalized_tokens(&form);
                trie.insert(&key, sense.sense_id.clone());
            }
        }
        trie
    }

    pub fn insert(&mut self, key: &[String], sense: SenseId) {
        if key.is_empty() {
            return;
        }
        let mut node = 0;
        for tok in key {
            node = match self.nodes[node].children.get(tok) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(tok.clone(), next);
                    next
                }
            };
        }
        let payload = &mut self.nodes[node].payload;
        if payload.is_empty() {
            self.key_count += 1;
        }
        if let Err(pos) = payload.binary_search(&sense) {
            payload.insert(pos, sense);
        }
    }

    pub fn get(&self, key: &[String]) -> Option<&[SenseId]> {
        let mut node = 0;
        for tok in key {
            node = *self.nodes[node].children.get(tok)?;
        }
        let payload = &self.nodes[node].payload;
        (!payload.is_empty()).then_some(payload.as_slice())
    }

    pub fn len(&self) -> usize {
        self.key_count
    }

    pub fn is_empty(&self) -> bool {
        self.key_count == 0
    }

    /// All stored keys, sorted.
    pub fn keys(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::<String>::new())];
        while let Some((node, prefix)) = stack.pop() {
            if !self.nodes[node].payload.is_empty() {
                out.push(prefix.clone());
            }
            for (tok, &child) in &self.nodes[node].children {
                let mut next = prefix.clone();
                next.push(tok.clone());
                stack.push((child, next));
            }
        }
        out.sort();
        out
    }

    /// Length (in tokens) and payload of the longest key starting at `tokens[0]`.
    fn longest_prefix<'a>(&'a self, tokens: &[String]) -> Option<(usize, &'a [SenseId])> {
        let mut node = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate() {
            match self.nodes[node].children.get(tok) {
                Some(&next) => node = next,
                None => break,
            }
            if !self.nodes[node].payload.is_empty() {
                best = Some((i + 1, self.nodes[node].payload.as_slice()));
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// Token index of the first token.
    pub first: usize,
    /// Token index one past the last token.
    pub last: usize,
    /// Character span in the source text.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub candidate_senses: Vec<SenseId>,
}

/// Leftmost-longest, non-overlapping scan over normalized tokens.
pub fn extract_mentions(trie: &MentionTrie, tokens: &[Token]) -> Vec<Mention> {
    let norm: Vec<String> = tokens.iter().map(Token::normalized).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match trie.longest_prefix(&norm[i..]) {
            Some((len, senses)) => {
                let span = &tokens[i..i + len];
                out.push(Mention {
                    first: i,
                    last: i + len,
                    start: span[0].start,
                    end: span[len - 1].end,
                    surface: span
                        .iter()
                        .map(|t| t.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" "),
                    candidate_senses: senses.to_vec(),
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}
