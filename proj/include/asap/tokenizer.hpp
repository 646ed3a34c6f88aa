#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace asap {

// Ordered token ids with the surface piece of each. Position 0 is always the
// synthetic start-of-review token.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::string> pieces;

  int length() const { return static_cast<int>(ids.size()); }
  bool operator==(const TokenSequence&) const = default;
};

// Fallback segmentation: one piece per CJK ideograph, one piece per
// contiguous ASCII letter/digit run (lowercased), one piece per other
// non-whitespace code point. Whitespace only separates.
std::vector<std::string> segment_text(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kStart = 1;
  static constexpr std::int32_t kUnknown = 2;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> pieces);

  // Pieces seen at least `min_count` times, most frequent first (ties by
  // piece bytes), capped at `max_size` entries including the 3 specials.
  static Vocabulary build(std::span<const std::string> texts, int min_count = 1,
                          std::size_t max_size = 30000);

  std::int32_t id(std::string_view piece) const;
  const std::string& piece(std::int32_t id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::int32_t> index_;
};

using Segmenter = std::function<std::vector<std::string>(std::string_view)>;

class Tokenizer {
 public:
  // `segmenter` is the hook for an external tokenizer; defaults to segment_text.
  explicit Tokenizer(Vocabulary vocab, Segmenter segmenter = {});

  // Keeps at most max_len - 1 content tokens after the start token.
  // Throws Error(EmptyText) if the text has no pieces, InvalidArgument if
  // max_len < 2.
  TokenSequence tokenize(std::string_view text, int max_len) const;

  const Vocabulary& vocab() const { return vocab_; }

 private:
  Vocabulary vocab_;
  Segmenter segmenter_;
};

// Rows padded with Vocabulary::kPad to the longest sequence; valid[r*width+z]
// marks real tokens.
struct PaddedBatch {
  int rows = 0;
  int width = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> valid;
};

PaddedBatch pad_batch(std::span<const TokenSequence> sequences);

}  // namespace asap
