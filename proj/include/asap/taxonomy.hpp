#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace asap {

inline constexpr int kNumPolarityClasses = 3;

// Numeric codes follow the released annotation: -1, 0, +1.
enum class Polarity : std::int8_t { Negative = -1, Neutral = 0, Positive = 1 };

constexpr int polarity_code(Polarity p) { return static_cast<int>(p); }

// Throws Error(UnknownPolarity) for codes outside {-1, 0, 1}.
Polarity polarity_from_code(int code);

// Class index used by the classifier heads: Negative=0, Neutral=1, Positive=2.
constexpr int polarity_class(Polarity p) { return polarity_code(p) + 1; }
Polarity polarity_from_class(int cls);

std::string_view polarity_name(Polarity p);

struct AspectCategory {
  int index = 0;
  std::string coarse;
  std::string fine;
  std::string definition;

  // "Coarse#Fine", the column name used in corpus files.
  std::string name() const { return coarse + "#" + fine; }
};

struct TaxonomyFingerprint {
  int count = 0;
  std::uint64_t names_hash = 0;

  bool operator==(const TaxonomyFingerprint&) const = default;
};

class AspectTaxonomy {
 public:
  // Validates unique names and contiguous indices 0..N-1.
  explicit AspectTaxonomy(std::vector<AspectCategory> entries);

  // The 18 restaurant categories, in the column order of the released corpus.
  static AspectTaxonomy restaurant18();

  int size() const { return static_cast<int>(entries_.size()); }
  const AspectCategory& operator[](int i) const { return entries_.at(static_cast<std::size_t>(i)); }
  const std::vector<AspectCategory>& entries() const { return entries_; }

  std::vector<std::string> names() const;
  std::optional<int> find(std::string_view name) const;

  // FNV-1a over the newline-joined names, plus N.
  TaxonomyFingerprint fingerprint() const;

  bool operator==(const AspectTaxonomy& other) const {
    return fingerprint() == other.fingerprint();
  }

 private:
  std::vector<AspectCategory> entries_;
};

}  // namespace asap
