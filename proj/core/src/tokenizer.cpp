#include "phenotag/tokenizer.hpp"

namespace phenotag {
namespace {

enum class CharClass { kSpace, kDigit, kPunct, kWord };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return CharClass::kSpace;
  if (c >= '0' && c <= '9') return CharClass::kDigit;
  if (c < 0x80 && !((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return CharClass::kPunct;
  return CharClass::kWord;
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == CharClass::kSpace) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (cls != CharClass::kPunct) {
      while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == cls) ++j;
    }
    Token tok{std::string(text.substr(i, j - i)), i, j};
    for (auto& c : tok.text) c = lower(c);
    out.push_back(std::move(tok));
    i = j;
  }
  return out;
}

std::vector<std::string> token_texts(const TokenSequence& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

std::string normalize_surface(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t.text;
  }
  return out;
}

}  // namespace phenotag
