#include "asap/taxonomy.hpp"

#include <set>

#include "asap/error.hpp"

namespace asap {

Polarity polarity_from_code(int code) {
  switch (code) {
    case -1: return Polarity::Negative;
    case 0: return Polarity::Neutral;
    case 1: return Polarity::Positive;
    default:
      throw Error(ErrorKind::UnknownPolarity,
                  "polarity code " + std::to_string(code));
  }
}

Polarity polarity_from_class(int cls) {
  if (cls < 0 || cls >= kNumPolarityClasses) {
    throw Error(ErrorKind::IndexOutOfRange,
                "polarity class " + std::to_string(cls));
  }
  return polarity_from_code(cls - 1);
}

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
    case Polarity::Positive: return "positive";
  }
  return "?";
}

AspectTaxonomy::AspectTaxonomy(std::vector<AspectCategory> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) {
    throw Error(ErrorKind::InvalidArgument, "taxonomy has no entries");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].index != static_cast<int>(i)) {
      throw Error(ErrorKind::InvalidArgument,
                  "taxonomy indices must be contiguous from 0");
    }
    if (!seen.insert(entries_[i].name()).second) {
      throw Error(ErrorKind::InvalidArgument,
                  "duplicate aspect category " + entries_[i].name());
    }
  }
}

AspectTaxonomy AspectTaxonomy::restaurant18() {
  struct Row {
    const char* coarse;
    const char* fine;
    const char* definition;
  };
  static constexpr Row kRows[] = {
      {"Location", "Transportation", "Convenient public transportation to the restaurant"},
      {"Location", "Downtown", "Whether the restaurant is located near downtown"},
      {"Location", "Easy_to_find", "Whether the restaurant is easy to find"},
      {"Service", "Queue", "Whether the queue time is acceptable"},
      {"Service", "Hospitality", "Waiters/waitresses' attitude/hospitality"},
      {"Service", "Parking", "Parking convenience"},
      {"Service", "Timely", "Order/Serving time"},
      {"Price", "Level", "Price level"},
      {"Price", "Cost_effective", "Whether the restaurant is cost-effective"},
      {"Price", "Discount", "Discount strength"},
      {"Ambience", "Decoration", "Decoration level"},
      {"Ambience", "Noise", "Whether the restaurant is noisy"},
      {"Ambience", "Space", "Dining Space and Seat Size"},
      {"Ambience", "Sanitary", "Sanitary condition"},
      {"Food", "Portion", "Food portion"},
      {"Food", "Taste", "Food taste"},
      {"Food", "Appearance", "Food appearance"},
      {"Food", "Recommend", "Whether the food is worth being recommended"},
  };
  std::vector<AspectCategory> entries;
  int index = 0;
  for (const auto& row : kRows) {
    entries.push_back({index++, row.coarse, row.fine, row.definition});
  }
  return AspectTaxonomy(std::move(entries));
}

std::vector<std::string> AspectTaxonomy::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name());
  return out;
}

std::optional<int> AspectTaxonomy::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name() == name) return e.index;
  }
  return std::nullopt;
}

TaxonomyFingerprint AspectTaxonomy::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& e : entries_) {
    for (char c : e.name()) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return {size(), h};
}

}  // namespace asap
