#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asap/corpus.hpp"
#include "asap/joint_model.hpp"
#include "asap/tokenizer.hpp"

namespace asap {

// Metrics over (review, mentioned aspect) pairs pooled across all aspects.
// Class indices follow polarity_class: 0 negative, 1 neutral, 2 positive.
struct AcsaMetrics {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::array<double, 3> per_class_f1{};
  // Classes absent from gold are excluded from the macro average.
  std::array<bool, 3> class_in_gold{};
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][predicted]
  std::size_t pairs = 0;
};

struct RpMetrics {
  double mae = 0.0;
  double accuracy = 0.0;  // after map_to_star
  std::size_t count = 0;
};

AcsaMetrics acsa_metrics_from_pairs(std::span<const int> gold, std::span<const int> predicted);

// Predicted class = argmax of each mentioned row. Throws LengthMismatch when
// sizes disagree.
AcsaMetrics evaluate_acsa(std::span<const JointPrediction> predictions, const Dataset& gold);
std::vector<AcsaMetrics> evaluate_acsa_per_aspect(std::span<const JointPrediction> predictions,
                                                  const Dataset& gold);

RpMetrics evaluate_rp(std::span<const JointPrediction> predictions, const Dataset& gold);
RpMetrics rp_metrics(std::span<const double> predicted, std::span<const int> gold);

// Nearest star: round half away from zero, clamp to [1, 5]. Throws
// NonFiniteInput for NaN/inf.
int map_to_star(double predicted);

inline constexpr double kDefaultUnreliableThreshold = 2.0;

struct Reliability {
  bool flagged = false;
  double margin = 0.0;  // |predicted - rating|
};

// Flags content-rating disagreement: margin >= threshold (inclusive).
Reliability detect_unreliable(const Review& review, double predicted,
                              double threshold = kDefaultUnreliableThreshold);

// ---- attention export -----------------------------------------------------

struct AttentionTrace {
  std::string review_id;
  std::vector<std::string> tokens;
  std::vector<std::string> aspects;          // mentioned aspects only
  std::vector<std::vector<double>> weights;  // one vector per aspect, over tokens
};

// Throws MissingTrace if the prediction carries no attention.
AttentionTrace build_attention_trace(const Review& review, const TokenSequence& tokens,
                                     const JointPrediction& prediction,
                                     const AspectTaxonomy& taxonomy);

// One record per aspect: {"review_id","aspect","tokens","weights"}.
void write_attention_jsonl(std::ostream& out, const AttentionTrace& trace);
// Self-contained page, one panel per (review, aspect); cell shading is
// proportional to weight / max weight in that row.
void write_attention_html(std::ostream& out, std::span<const AttentionTrace> traces);

// Writes <jsonl_path> and, when html_path is set, the heatmap page. Throws Io.
void export_attention(std::span<const AttentionTrace> traces, const std::string& jsonl_path,
                      const std::optional<std::string>& html_path);

// ---- prediction records ---------------------------------------------------

struct PredictionRecord {
  std::string id;
  JointPrediction prediction;
};

// {"id", "rating", "probs": {"<aspect>": [neg, neu, pos], ...}} per line,
// all N aspects.
void write_predictions_jsonl(std::ostream& out, std::span<const PredictionRecord> records,
                             const AspectTaxonomy& taxonomy);
std::vector<PredictionRecord> read_predictions_jsonl(std::istream& in,
                                                     const AspectTaxonomy& taxonomy);

// Reorders records to follow `gold`. Throws LengthMismatch on count
// mismatch or unmatched ids.
std::vector<JointPrediction> align_predictions(std::vector<PredictionRecord> records,
                                               const Dataset& gold);

// ---- reports --------------------------------------------------------------

std::string metrics_json(const AcsaMetrics& acsa, const RpMetrics& rp);
// Two blocks mirroring the usual result tables: Macro-F1 / Acc and MAE / Acc.
std::string metrics_table(const AcsaMetrics& acsa, const RpMetrics& rp, std::string_view label);

}  // namespace asap
