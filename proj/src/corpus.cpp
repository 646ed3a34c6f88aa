#include "asap/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "asap/error.hpp"
#include "asap/rng.hpp"
#include "asap/utf8.hpp"

namespace asap {

std::vector<std::uint8_t> Review::mask() const {
  std::vector<std::uint8_t> m(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] ? 1 : 0;
  return m;
}

int Review::mentioned_count() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                        [](const auto& l) { return l.has_value(); }));
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Unsplit: return "unsplit";
  }
  return "?";
}

Dataset::Dataset(AspectTaxonomy taxonomy, std::vector<Review> reviews, Split split)
    : taxonomy_(std::move(taxonomy)), reviews_(std::move(reviews)), split_(split) {
  std::unordered_set<std::string> ids;
  for (const auto& r : reviews_) {
    if (static_cast<int>(r.labels.size()) != taxonomy_.size()) {
      throw Error(ErrorKind::ShapeMismatch,
                  "review " + r.id + " has " + std::to_string(r.labels.size()) +
                      " labels for a taxonomy of " + std::to_string(taxonomy_.size()));
    }
    if (!ids.insert(r.id).second) {
      throw Error(ErrorKind::DuplicateId, "review id " + r.id);
    }
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Parses an integral value written either as "3" or "3.0". Returns nullopt
// for anything else, including fractional values.
std::optional<long long> parse_integral(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec == std::errc() && ptr == s.data() + s.size()) return value;
  double d = 0.0;
  auto [dptr, dec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (dec != std::errc() || dptr != s.data() + s.size() || !std::isfinite(d) ||
      d != std::floor(d) || std::fabs(d) > 1e15) {
    return std::nullopt;
  }
  return static_cast<long long>(d);
}

const std::string& require(const TextRecord& record, std::string_view column) {
  auto it = record.find(column);
  if (it == record.end()) {
    throw Error(ErrorKind::MissingColumn, std::string(column));
  }
  return it->second;
}

}  // namespace

Review parse_review(const TextRecord& record, const AspectTaxonomy& taxonomy,
                    const ParseOptions& options) {
  Review review;
  review.id = std::string(trim(require(record, kIdColumn)));
  review.text = require(record, kTextColumn);

  const std::string& star = require(record, kStarColumn);
  const auto rating = parse_integral(star);
  if (!rating || *rating < 1 || *rating > 5) {
    throw Error(ErrorKind::MalformedRating,
                "review " + review.id + ": star '" + star + "'");
  }
  review.rating = static_cast<int>(*rating);

  review.labels.resize(static_cast<std::size_t>(taxonomy.size()));
  for (const auto& aspect : taxonomy.entries()) {
    const std::string& cell = require(record, aspect.name());
    if (trim(cell).empty()) continue;
    const auto code = parse_integral(cell);
    if (!code) {
      throw Error(ErrorKind::UnknownPolarity,
                  "review " + review.id + ", " + aspect.name() + ": '" + cell + "'");
    }
    if (options.not_mentioned_sentinel && *code == *options.not_mentioned_sentinel) {
      continue;
    }
    if (*code < -1 || *code > 1) {
      throw Error(ErrorKind::UnknownPolarity,
                  "review " + review.id + ", " + aspect.name() + ": '" + cell + "'");
    }
    review.labels[static_cast<std::size_t>(aspect.index)] =
        polarity_from_code(static_cast<int>(*code));
  }
  return review;
}

TextRecord serialize_review(const Review& review, const AspectTaxonomy& taxonomy) {
  TextRecord record;
  record.emplace(kIdColumn, review.id);
  record.emplace(kTextColumn, review.text);
  record.emplace(kStarColumn, std::to_string(review.rating));
  for (const auto& aspect : taxonomy.entries()) {
    const auto& label = review.labels.at(static_cast<std::size_t>(aspect.index));
    record.emplace(aspect.name(), label ? std::to_string(polarity_code(*label)) : "");
  }
  return record;
}

std::vector<std::string> csv_header(const AspectTaxonomy& taxonomy) {
  std::vector<std::string> header{std::string(kIdColumn), std::string(kTextColumn),
                                  std::string(kStarColumn)};
  for (auto& name : taxonomy.names()) header.push_back(std::move(name));
  return header;
}

Dataset read_dataset_csv(std::istream& in, const AspectTaxonomy& taxonomy, Split split,
                         const ParseOptions& options) {
  const CsvTable table = read_csv(in);
  for (const auto& column : csv_header(taxonomy)) {
    if (std::find(table.header.begin(), table.header.end(), column) == table.header.end()) {
      throw Error(ErrorKind::MissingColumn, column);
    }
  }
  const auto records = to_records(table);
  std::vector<Review> reviews;
  reviews.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      reviews.push_back(parse_review(records[i], taxonomy, options));
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(table.row_lines[i]) + ": " + e.what());
    }
  }
  return Dataset(taxonomy, std::move(reviews), split);
}

Dataset load_dataset_csv(const std::string& path, const AspectTaxonomy& taxonomy, Split split,
                         const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_dataset_csv(in, taxonomy, split, options);
}

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  const auto header = csv_header(dataset.taxonomy());
  write_csv_row(out, header);
  std::vector<std::string> cells(header.size());
  for (const auto& review : dataset.reviews()) {
    const auto record = serialize_review(review, dataset.taxonomy());
    for (std::size_t i = 0; i < header.size(); ++i) cells[i] = record.at(header[i]);
    write_csv_row(out, cells);
  }
}

void save_dataset_csv(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_dataset_csv(out, dataset);
}

// ---- text measures ------------------------------------------------------

std::size_t count_chinese_chars(std::string_view text) {
  const auto cps = utf8::decode(text);
  return static_cast<std::size_t>(std::count_if(cps.begin(), cps.end(), utf8::is_cjk_ideograph));
}

double non_chinese_ratio(std::string_view text) {
  std::size_t total = 0;
  std::size_t chinese = 0;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_whitespace(cp)) continue;
    ++total;
    if (utf8::is_cjk_ideograph(cp)) ++chinese;
  }
  if (total == 0) return 0.0;
  return static_cast<double>(total - chinese) / static_cast<double>(total);
}

std::size_t count_sentences(std::string_view text) {
  const auto is_terminator = [](char32_t cp) {
    return cp == U'。' || cp == U'！' || cp == U'？' || cp == U'.' || cp == U'!' || cp == U'?';
  };
  std::size_t count = 0;
  bool open = false;
  for (char32_t cp : utf8::decode(text)) {
    if (is_terminator(cp)) {
      if (open) ++count;
      open = false;
    } else if (!utf8::is_whitespace(cp)) {
      open = true;
    }
  }
  return count + (open ? 1 : 0);
}

// ---- curation -------------------------------------------------------------

CurationResult curate(std::span<const TextRecord> raw, const CurationConfig& config,
                      const AspectTaxonomy& taxonomy) {
  CurationReport report;
  std::set<std::string> stripped;
  std::vector<Review> kept;
  std::unordered_set<std::string> ids;

  for (const auto& record : raw) {
    for (const auto& field : config.strip_fields) {
      if (record.find(field) != record.end()) stripped.insert(field);
    }

    Review review;
    try {
      review = parse_review(record, taxonomy, config.parse);
    } catch (const Error&) {
      ++report.dropped_malformed;
      continue;
    }
    if (trim(review.text).empty() || review.id.empty() || ids.count(review.id)) {
      ++report.dropped_malformed;
      continue;
    }
    if (non_chinese_ratio(review.text) > config.max_non_chinese_ratio) {
      ++report.dropped_non_chinese;
      continue;
    }
    const std::size_t chinese = count_chinese_chars(review.text);
    if (chinese < config.min_chinese_chars) {
      ++report.dropped_short;
      continue;
    }
    if (chinese > config.max_chinese_chars) {
      ++report.dropped_long;
      continue;
    }
    if (config.quality_filter && !config.quality_filter(review)) {
      ++report.dropped_low_quality;
      continue;
    }
    ids.insert(review.id);
    kept.push_back(std::move(review));
  }
  report.kept = kept.size();
  report.dropped_fields.assign(stripped.begin(), stripped.end());
  return {Dataset(taxonomy, std::move(kept)), std::move(report)};
}

std::string curation_report_json(const CurationReport& report) {
  nlohmann::ordered_json j;
  j["input"] = report.input_count();
  j["kept"] = report.kept;
  j["dropped_malformed"] = report.dropped_malformed;
  j["dropped_short"] = report.dropped_short;
  j["dropped_long"] = report.dropped_long;
  j["dropped_non_chinese"] = report.dropped_non_chinese;
  j["dropped_low_quality"] = report.dropped_low_quality;
  j["dropped_fields"] = report.dropped_fields;
  return j.dump(2);
}

// ---- statistics -----------------------------------------------------------

CorpusStats compute_stats(const Dataset& dataset) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "no reviews");
  CorpusStats stats;
  stats.review_count = dataset.size();
  stats.aspect_mentions.assign(static_cast<std::size_t>(dataset.taxonomy().size()), 0);
  std::size_t sentences = 0;
  std::size_t aspects = 0;
  std::size_t chars = 0;
  for (const auto& review : dataset.reviews()) {
    sentences += count_sentences(review.text);
    chars += count_chinese_chars(review.text);
    ++stats.rating_histogram.at(static_cast<std::size_t>(review.rating - 1));
    for (std::size_t i = 0; i < review.labels.size(); ++i) {
      const auto& label = review.labels[i];
      if (!label) continue;
      ++aspects;
      ++stats.aspect_mentions[i];
      switch (*label) {
        case Polarity::Positive: ++stats.positive; break;
        case Polarity::Negative: ++stats.negative; break;
        case Polarity::Neutral: ++stats.neutral; break;
      }
    }
  }
  const auto n = static_cast<double>(stats.review_count);
  stats.avg_sentences_per_review = static_cast<double>(sentences) / n;
  stats.avg_aspects_per_review = static_cast<double>(aspects) / n;
  stats.avg_length_chars = static_cast<double>(chars) / n;
  return stats;
}

std::string stats_json(const CorpusStats& stats, const AspectTaxonomy& taxonomy) {
  nlohmann::ordered_json j;
  j["review_count"] = stats.review_count;
  j["avg_sentences_per_review"] = stats.avg_sentences_per_review;
  j["avg_aspects_per_review"] = stats.avg_aspects_per_review;
  j["avg_length_chars"] = stats.avg_length_chars;
  j["polarity_counts"] = {{"positive", stats.positive},
                          {"negative", stats.negative},
                          {"neutral", stats.neutral}};
  nlohmann::ordered_json hist;
  for (int s = 1; s <= 5; ++s) {
    hist[std::to_string(s)] = stats.rating_histogram[static_cast<std::size_t>(s - 1)];
  }
  j["rating_histogram"] = hist;
  nlohmann::ordered_json mentions;
  for (const auto& aspect : taxonomy.entries()) {
    mentions[aspect.name()] = stats.aspect_mentions.at(static_cast<std::size_t>(aspect.index));
  }
  j["aspect_mentions"] = mentions;
  return j.dump(2);
}

std::string stats_table(const CorpusStats& stats, std::string_view label) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "Split" << std::right << std::setw(9) << "Reviews"
      << std::setw(8) << "Sent." << std::setw(8) << "Aspects" << std::setw(9) << "Length"
      << std::setw(10) << "Positive" << std::setw(10) << "Negative" << std::setw(10)
      << "Neutral";
  for (int s = 1; s <= 5; ++s) out << std::setw(8) << (std::to_string(s) + "-star");
  out << '\n';
  out << std::left << std::setw(8) << label << std::right << std::setw(9) << stats.review_count
      << std::fixed << std::setprecision(1) << std::setw(8) << stats.avg_sentences_per_review
      << std::setw(8) << stats.avg_aspects_per_review << std::setw(9) << stats.avg_length_chars
      << std::setw(10) << stats.positive << std::setw(10) << stats.negative << std::setw(10)
      << stats.neutral;
  for (auto count : stats.rating_histogram) out << std::setw(8) << count;
  out << '\n';
  return out.str();
}

// ---- splits -------------------------------------------------------------

SplitResult split(const Dataset& dataset, std::uint64_t seed, SplitRatios ratios) {
  const double parts[3] = {ratios.train, ratios.dev, ratios.test};
  for (double p : parts) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw Error(ErrorKind::BadRatios, "ratios must be positive");
    }
  }
  if (std::fabs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw Error(ErrorKind::BadRatios, "ratios must sum to 1");
  }

  const std::size_t n = dataset.size();
  std::size_t sizes[3];
  double remainders[3];
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = parts[k] * static_cast<double>(n);
    // Snap values within rounding noise of an integer (0.1 * 100 = 10.000000000000002).
    const double snapped = std::fabs(exact - std::round(exact)) < 1e-9 ? std::round(exact) : exact;
    sizes[k] = static_cast<std::size_t>(std::floor(snapped));
    remainders[k] = snapped - std::floor(snapped);
    assigned += sizes[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);

  std::vector<Review> out[3];
  std::size_t cursor = 0;
  for (int k = 0; k < 3; ++k) {
    out[k].reserve(sizes[k]);
    for (std::size_t i = 0; i < sizes[k]; ++i) out[k].push_back(dataset[perm[cursor++]]);
  }
  return {Dataset(dataset.taxonomy(), std::move(out[0]), Split::Train),
          Dataset(dataset.taxonomy(), std::move(out[1]), Split::Dev),
          Dataset(dataset.taxonomy(), std::move(out[2]), Split::Test)};
}

}  // namespace asap
