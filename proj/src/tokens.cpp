#include "dpolab/tokens.hpp"

#include <fstream>

#include "dpolab/errors.hpp"

namespace dpolab {

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) {
      throw DataError("vocabulary token " + std::to_string(i) + " is empty");
    }
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    throw DataError("unknown token '" + std::string(token) + "'");
  }
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DomainError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(std::span<const std::string> words) const {
  TokenSequence out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId t : ids) out.push_back(token(t));
  return out;
}

std::string Vocabulary::render(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId t : ids) {
    if (!out.empty()) out += ' ';
    out += token(t);
  }
  return out;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

}  // namespace dpolab
