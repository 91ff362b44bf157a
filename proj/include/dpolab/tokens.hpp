#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dpolab {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Reserved ids. Every vocabulary built or loaded by this project keeps these
// three tokens in the first three lines.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";

/// Closed token inventory. Token id is the position in the list, which is
/// also the line index in the on-disk vocabulary file.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;

  /// Throws DataError when the token is unknown.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;

  TokenSequence encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  std::string render(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Fixed function words of the synthetic description grammar.
namespace words {
inline constexpr std::string_view kThe = "the";
inline constexpr std::string_view kContains = "contains";
inline constexpr std::string_view kA = "a";
inline constexpr std::string_view kAnd = "and";
inline constexpr std::string_view kIs = "is";
inline constexpr std::string_view kPeriod = ".";
inline constexpr std::string_view kQuestion = "?";

inline constexpr std::string_view kNumerals[] = {"one", "two", "three", "four",
                                                 "five"};
inline constexpr std::string_view kRelations[] = {"left-of", "right-of",
                                                  "above", "below", "near"};
inline constexpr std::string_view kMarkers[] = {
    "indeed", "clearly", "certainly", "truly",
    "overall", "notably", "honestly", "basically"};
inline constexpr std::string_view kPromptWords[] = {
    "describe", "what", "in", "list", "objects", "tell", "me", "about"};
}  // namespace words

}  // namespace dpolab
