#include "asap/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "asap/error.hpp"
#include "asap/utf8.hpp"

namespace asap {

std::vector<std::string> segment_text(std::string_view text) {
  std::vector<std::string> pieces;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) pieces.push_back(std::move(run));
    run.clear();
  };
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_ascii_alnum(cp)) {
      if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
      run.push_back(static_cast<char>(cp));
      continue;
    }
    flush();
    if (utf8::is_whitespace(cp)) continue;
    std::string piece;
    utf8::append(piece, cp);
    pieces.push_back(std::move(piece));
  }
  flush();
  return pieces;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> pieces) {
  pieces_ = {"[PAD]", "[START]", "[UNK]"};
  for (auto& p : pieces) {
    if (p == pieces_[0] || p == pieces_[1] || p == pieces_[2]) continue;
    pieces_.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!index_.emplace(pieces_[i], static_cast<std::int32_t>(i)).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate vocabulary piece " + pieces_[i]);
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, int min_count,
                             std::size_t max_size) {
  std::map<std::string, long> counts;
  for (const auto& text : texts) {
    for (auto& piece : segment_text(text)) ++counts[std::move(piece)];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> pieces;
  for (auto& [piece, count] : ranked) {
    if (count < min_count || pieces.size() + 3 >= max_size) break;
    pieces.push_back(piece);
  }
  return Vocabulary(std::move(pieces));
}

std::int32_t Vocabulary::id(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? kUnknown : it->second;
}

Tokenizer::Tokenizer(Vocabulary vocab, Segmenter segmenter)
    : vocab_(std::move(vocab)), segmenter_(std::move(segmenter)) {
  if (!segmenter_) segmenter_ = segment_text;
}

TokenSequence Tokenizer::tokenize(std::string_view text, int max_len) const {
  if (max_len < 2) throw Error(ErrorKind::InvalidArgument, "max_len must be >= 2");
  auto pieces = segmenter_(text);
  if (pieces.empty()) throw Error(ErrorKind::EmptyText, "text has no tokens");
  const std::size_t keep = std::min(pieces.size(), static_cast<std::size_t>(max_len - 1));
  TokenSequence seq;
  seq.ids.reserve(keep + 1);
  seq.pieces.reserve(keep + 1);
  seq.ids.push_back(Vocabulary::kStart);
  seq.pieces.push_back(vocab_.piece(Vocabulary::kStart));
  for (std::size_t i = 0; i < keep; ++i) {
    seq.ids.push_back(vocab_.id(pieces[i]));
    seq.pieces.push_back(std::move(pieces[i]));
  }
  return seq;
}

PaddedBatch pad_batch(std::span<const TokenSequence> sequences) {
  PaddedBatch batch;
  batch.rows = static_cast<int>(sequences.size());
  for (const auto& s : sequences) batch.width = std::max(batch.width, s.length());
  const auto cells = static_cast<std::size_t>(batch.rows) * static_cast<std::size_t>(batch.width);
  batch.ids.assign(cells, Vocabulary::kPad);
  batch.valid.assign(cells, 0);
  for (int r = 0; r < batch.rows; ++r) {
    const auto& s = sequences[static_cast<std::size_t>(r)];
    for (int z = 0; z < s.length(); ++z) {
      const auto at = static_cast<std::size_t>(r * batch.width + z);
      batch.ids[at] = s.ids[static_cast<std::size_t>(z)];
      batch.valid[at] = 1;
    }
  }
  return batch;
}

}  // namespace asap
