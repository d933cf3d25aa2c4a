#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace phenotag {

struct Token {
  std::string text;   // lowercased surface
  std::size_t begin;  // byte offset into the source text
  std::size_t end;    // one past the last byte
};

using TokenSequence = std::vector<Token>;

// Lowercases ASCII letters, splits on whitespace, and emits every punctuation
// character and every run of digits as its own token. Bytes >= 0x80 are
// treated as word characters so UTF-8 sequences are never split.
TokenSequence tokenize(std::string_view text);

// Token texts only.
std::vector<std::string> token_texts(const TokenSequence& tokens);

// Tokenized, space-joined normal form used as a matching key.
std::string normalize_surface(std::string_view text);

}  // namespace phenotag
