#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asap/csv.hpp"
#include "asap/taxonomy.hpp"

namespace asap {

// One user review with its star rating and per-aspect polarity labels.
// The mention mask and K are derived from `labels`, so they cannot disagree.
struct Review {
  std::string id;
  std::string text;
  int rating = 0;
  std::vector<std::optional<Polarity>> labels;

  bool mentioned(int aspect) const {
    return labels.at(static_cast<std::size_t>(aspect)).has_value();
  }
  std::vector<std::uint8_t> mask() const;
  int mentioned_count() const;

  bool operator==(const Review&) const = default;
};

enum class Split { Train, Dev, Test, Unsplit };

std::string_view to_string(Split split);

class Dataset {
 public:
  // Validates label widths against the taxonomy and id uniqueness.
  Dataset(AspectTaxonomy taxonomy, std::vector<Review> reviews,
          Split split = Split::Unsplit);

  const AspectTaxonomy& taxonomy() const { return taxonomy_; }
  const std::vector<Review>& reviews() const { return reviews_; }
  Split split() const { return split_; }
  std::size_t size() const { return reviews_.size(); }
  bool empty() const { return reviews_.empty(); }
  const Review& operator[](std::size_t i) const { return reviews_[i]; }

  Dataset with_split(Split split) const { return Dataset(taxonomy_, reviews_, split); }

 private:
  AspectTaxonomy taxonomy_;
  std::vector<Review> reviews_;
  Split split_;
};

struct ParseOptions {
  // Numeric cell value that also means "not mentioned" (the released corpus
  // uses -2). Empty cells are always "not mentioned".
  std::optional<int> not_mentioned_sentinel = -2;
};

inline constexpr std::string_view kIdColumn = "id";
inline constexpr std::string_view kTextColumn = "review";
inline constexpr std::string_view kStarColumn = "star";

Review parse_review(const TextRecord& record, const AspectTaxonomy& taxonomy,
                    const ParseOptions& options = {});

// Not-mentioned aspects serialize as empty cells.
TextRecord serialize_review(const Review& review, const AspectTaxonomy& taxonomy);

std::vector<std::string> csv_header(const AspectTaxonomy& taxonomy);

// Throws on the first malformed row with the row's line number in the message.
Dataset read_dataset_csv(std::istream& in, const AspectTaxonomy& taxonomy,
                         Split split = Split::Unsplit,
                         const ParseOptions& options = {});
Dataset load_dataset_csv(const std::string& path, const AspectTaxonomy& taxonomy,
                         Split split = Split::Unsplit,
                         const ParseOptions& options = {});
void write_dataset_csv(std::ostream& out, const Dataset& dataset);
void save_dataset_csv(const std::string& path, const Dataset& dataset);

// ---- text measures ------------------------------------------------------

std::size_t count_chinese_chars(std::string_view text);
// Non-Chinese share of the non-whitespace code points; 0 for blank text.
double non_chinese_ratio(std::string_view text);
// Segments delimited by 。！？.!? that contain at least one other
// non-whitespace character.
std::size_t count_sentences(std::string_view text);

// ---- curation -------------------------------------------------------------

struct CurationConfig {
  std::size_t min_chinese_chars = 50;
  std::size_t max_chinese_chars = 1000;
  double max_non_chinese_ratio = 0.70;
  std::vector<std::string> strip_fields = {
      "user_id", "userid", "user_name", "username", "nickname",
      "avatar",  "post_time", "timestamp", "time",   "date"};
  // Keeps a review when it returns true. Unset means keep everything.
  std::function<bool(const Review&)> quality_filter;
  ParseOptions parse;
};

struct CurationReport {
  std::size_t kept = 0;
  std::size_t dropped_malformed = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_long = 0;
  std::size_t dropped_non_chinese = 0;
  std::size_t dropped_low_quality = 0;
  std::vector<std::string> dropped_fields;

  std::size_t input_count() const {
    return kept + dropped_malformed + dropped_short + dropped_long +
           dropped_non_chinese + dropped_low_quality;
  }
};

struct CurationResult {
  Dataset dataset;
  CurationReport report;
};

// Never throws on bad records; they are tallied as dropped_malformed.
// Filter order: malformed, non-Chinese ratio, length bounds, quality hook.
CurationResult curate(std::span<const TextRecord> raw, const CurationConfig& config,
                      const AspectTaxonomy& taxonomy);

std::string curation_report_json(const CurationReport& report);

// ---- statistics -----------------------------------------------------------

struct CorpusStats {
  std::size_t review_count = 0;
  double avg_sentences_per_review = 0.0;
  double avg_aspects_per_review = 0.0;
  double avg_length_chars = 0.0;  // Chinese characters
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t neutral = 0;
  std::array<std::size_t, 5> rating_histogram{};  // 1..5 stars
  std::vector<std::size_t> aspect_mentions;       // per taxonomy entry
};

// Throws Error(EmptyDataset) for an empty dataset.
CorpusStats compute_stats(const Dataset& dataset);

std::string stats_json(const CorpusStats& stats, const AspectTaxonomy& taxonomy);
std::string stats_table(const CorpusStats& stats, std::string_view label);

// ---- splits -------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct SplitResult {
  Dataset train;
  Dataset dev;
  Dataset test;
};

// Seeded Fisher-Yates permutation; part sizes by largest remainder.
SplitResult split(const Dataset& dataset, std::uint64_t seed, SplitRatios ratios);

}  // namespace asap
