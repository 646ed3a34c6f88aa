#include "asap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "asap/error.hpp"

namespace asap {

namespace {

void check_aligned(std::size_t predictions, const Dataset& gold) {
  if (predictions != gold.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(predictions) + " predictions for " +
                                               std::to_string(gold.size()) + " reviews");
  }
}

std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

AcsaMetrics acsa_metrics_from_pairs(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorKind::LengthMismatch, "gold and predicted pair counts differ");
  }
  AcsaMetrics m;
  m.pairs = gold.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i];
    const int p = predicted[i];
    if (g < 0 || g > 2 || p < 0 || p > 2) {
      throw Error(ErrorKind::IndexOutOfRange, "class index outside [0, 2]");
    }
    ++m.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
    if (g == p) ++correct;
  }
  if (m.pairs == 0) return m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.pairs);

  double f1_sum = 0.0;
  int included = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t tp = m.confusion[c][c];
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t o = 0; o < 3; ++o) {
      if (o == c) continue;
      fp += m.confusion[o][c];
      fn += m.confusion[c][o];
    }
    const std::size_t denom = 2 * tp + fp + fn;
    m.per_class_f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    m.class_in_gold[c] = tp + fn > 0;
    if (m.class_in_gold[c]) {
      f1_sum += m.per_class_f1[c];
      ++included;
    }
  }
  m.macro_f1 = included == 0 ? 0.0 : f1_sum / included;
  return m;
}

AcsaMetrics evaluate_acsa(std::span<const JointPrediction> predictions, const Dataset& gold) {
  check_aligned(predictions.size(), gold);
  std::vector<int> g;
  std::vector<int> p;
  for (std::size_t r = 0; r < gold.size(); ++r) {
    const auto& review = gold[r];
    for (int i = 0; i < static_cast<int>(review.labels.size()); ++i) {
      if (!review.mentioned(i)) continue;
      g.push_back(polarity_class(*review.labels[static_cast<std::size_t>(i)]));
      p.push_back(predictions[r].predicted_class(i));
    }
  }
  return acsa_metrics_from_pairs(g, p);
}

std::vector<AcsaMetrics> evaluate_acsa_per_aspect(std::span<const JointPrediction> predictions,
                                                  const Dataset& gold) {
  check_aligned(predictions.size(), gold);
  const auto n = static_cast<std::size_t>(gold.taxonomy().size());
  std::vector<std::vector<int>> g(n);
  std::vector<std::vector<int>> p(n);
  for (std::size_t r = 0; r < gold.size(); ++r) {
    const auto& review = gold[r];
    for (std::size_t i = 0; i < n; ++i) {
      if (!review.labels[i]) continue;
      g[i].push_back(polarity_class(*review.labels[i]));
      p[i].push_back(predictions[r].predicted_class(static_cast<int>(i)));
    }
  }
  std::vector<AcsaMetrics> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(acsa_metrics_from_pairs(g[i], p[i]));
  return out;
}

RpMetrics rp_metrics(std::span<const double> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorKind::LengthMismatch, "predicted and gold rating counts differ");
  }
  RpMetrics m;
  m.count = gold.size();
  if (m.count == 0) return m;
  double abs_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    abs_sum += std::fabs(predicted[i] - gold[i]);
    if (map_to_star(predicted[i]) == gold[i]) ++hits;
  }
  m.mae = abs_sum / static_cast<double>(m.count);
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.count);
  return m;
}

RpMetrics evaluate_rp(std::span<const JointPrediction> predictions, const Dataset& gold) {
  check_aligned(predictions.size(), gold);
  std::vector<double> p;
  std::vector<int> g;
  p.reserve(gold.size());
  g.reserve(gold.size());
  for (std::size_t r = 0; r < gold.size(); ++r) {
    p.push_back(predictions[r].rating);
    g.push_back(gold[r].rating);
  }
  return rp_metrics(p, g);
}

int map_to_star(double predicted) {
  if (!std::isfinite(predicted)) {
    throw Error(ErrorKind::NonFiniteInput, "rating prediction is not finite");
  }
  // std::round rounds halfway cases away from zero.
  const double star = std::clamp(std::round(predicted), 1.0, 5.0);
  return static_cast<int>(star);
}

Reliability detect_unreliable(const Review& review, double predicted, double threshold) {
  if (!std::isfinite(predicted) || !std::isfinite(threshold)) {
    throw Error(ErrorKind::NonFiniteInput, "prediction and threshold must be finite");
  }
  if (threshold <= 0.0) throw Error(ErrorKind::InvalidArgument, "threshold must be positive");
  Reliability r;
  r.margin = std::fabs(predicted - review.rating);
  r.flagged = r.margin >= threshold;
  return r;
}

// ---- attention export -----------------------------------------------------

AttentionTrace build_attention_trace(const Review& review, const TokenSequence& tokens,
                                     const JointPrediction& prediction,
                                     const AspectTaxonomy& taxonomy) {
  if (prediction.attention.size() != static_cast<std::size_t>(taxonomy.size())) {
    throw Error(ErrorKind::MissingTrace, "prediction for " + review.id + " has no attention");
  }
  AttentionTrace trace;
  trace.review_id = review.id;
  trace.tokens = tokens.pieces;
  for (const auto& aspect : taxonomy.entries()) {
    if (!review.mentioned(aspect.index)) continue;
    const Vector& alpha = prediction.attention[static_cast<std::size_t>(aspect.index)].alpha;
    if (alpha.size() != tokens.length()) {
      throw Error(ErrorKind::ShapeMismatch, "attention length does not match tokens");
    }
    trace.aspects.push_back(aspect.name());
    trace.weights.emplace_back(alpha.data(), alpha.data() + alpha.size());
  }
  return trace;
}

void write_attention_jsonl(std::ostream& out, const AttentionTrace& trace) {
  for (std::size_t a = 0; a < trace.aspects.size(); ++a) {
    nlohmann::ordered_json j;
    j["review_id"] = trace.review_id;
    j["aspect"] = trace.aspects[a];
    j["tokens"] = trace.tokens;
    j["weights"] = trace.weights[a];
    out << j.dump() << '\n';
  }
}

void write_attention_html(std::ostream& out, std::span<const AttentionTrace> traces) {
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attention weights</title>\n"
         "<style>body{font-family:sans-serif;margin:2em}"
         ".row{line-height:2em;margin-bottom:1.5em}"
         ".tok{padding:2px 1px;border-radius:2px}"
         "h2{font-size:1.1em}h3{font-size:1em;margin:.3em 0}</style></head><body>\n";
  for (const auto& trace : traces) {
    out << "<h2>Review " << html_escape(trace.review_id) << "</h2>\n";
    for (std::size_t a = 0; a < trace.aspects.size(); ++a) {
      const auto& w = trace.weights[a];
      const double peak = w.empty() ? 1.0 : *std::max_element(w.begin(), w.end());
      out << "<h3>" << html_escape(trace.aspects[a]) << "</h3>\n<div class=\"row\">";
      for (std::size_t z = 0; z < trace.tokens.size() && z < w.size(); ++z) {
        const double intensity = peak > 0.0 ? w[z] / peak : 0.0;
        out << "<span class=\"tok\" title=\"" << std::setprecision(4) << w[z]
            << "\" style=\"background:rgba(220,40,40," << std::fixed << std::setprecision(3)
            << intensity << ")\">" << html_escape(trace.tokens[z]) << "</span>";
        out.unsetf(std::ios::fixed);
      }
      out << "</div>\n";
    }
  }
  out << "</body></html>\n";
}

void export_attention(std::span<const AttentionTrace> traces, const std::string& jsonl_path,
                      const std::optional<std::string>& html_path) {
  std::ofstream jsonl(jsonl_path, std::ios::binary);
  if (!jsonl) throw Error(ErrorKind::Io, "cannot write " + jsonl_path);
  for (const auto& t : traces) write_attention_jsonl(jsonl, t);
  if (!jsonl) throw Error(ErrorKind::Io, "write failed for " + jsonl_path);
  if (html_path) {
    std::ofstream html(*html_path, std::ios::binary);
    if (!html) throw Error(ErrorKind::Io, "cannot write " + *html_path);
    write_attention_html(html, traces);
    if (!html) throw Error(ErrorKind::Io, "write failed for " + *html_path);
  }
}

// ---- prediction records ---------------------------------------------------

void write_predictions_jsonl(std::ostream& out, std::span<const PredictionRecord> records,
                             const AspectTaxonomy& taxonomy) {
  for (const auto& rec : records) {
    if (rec.prediction.class_probs.rows() != taxonomy.size()) {
      throw Error(ErrorKind::ShapeMismatch, "prediction width does not match taxonomy");
    }
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["rating"] = rec.prediction.rating;
    nlohmann::ordered_json probs;
    for (const auto& aspect : taxonomy.entries()) {
      const auto row = rec.prediction.class_probs.row(aspect.index);
      probs[aspect.name()] = {row(0), row(1), row(2)};
    }
    j["probs"] = probs;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions_jsonl(std::istream& in,
                                                     const AspectTaxonomy& taxonomy) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.prediction.rating = j.at("rating").get<double>();
      rec.prediction.class_probs.resize(taxonomy.size(), kNumPolarityClasses);
      const auto& probs = j.at("probs");
      for (const auto& aspect : taxonomy.entries()) {
        const auto row = probs.at(aspect.name()).get<std::vector<double>>();
        if (row.size() != kNumPolarityClasses) {
          throw Error(ErrorKind::MalformedRecord, aspect.name() + " needs 3 probabilities");
        }
        for (int c = 0; c < kNumPolarityClasses; ++c) {
          rec.prediction.class_probs(aspect.index, c) = row[static_cast<std::size_t>(c)];
        }
      }
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedRecord,
                  "predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<JointPrediction> align_predictions(std::vector<PredictionRecord> records,
                                               const Dataset& gold) {
  check_aligned(records.size(), gold);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!by_id.emplace(records[i].id, i).second) {
      throw Error(ErrorKind::DuplicateId, "prediction id " + records[i].id);
    }
  }
  std::vector<JointPrediction> out;
  out.reserve(gold.size());
  for (const auto& review : gold.reviews()) {
    auto it = by_id.find(review.id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::LengthMismatch, "no prediction for review " + review.id);
    }
    out.push_back(std::move(records[it->second].prediction));
  }
  return out;
}

// ---- reports --------------------------------------------------------------

std::string metrics_json(const AcsaMetrics& acsa, const RpMetrics& rp) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json a;
  a["macro_f1"] = acsa.macro_f1;
  a["accuracy"] = acsa.accuracy;
  a["pairs"] = acsa.pairs;
  nlohmann::ordered_json per_class;
  for (int c = 0; c < 3; ++c) {
    per_class[std::string(polarity_name(polarity_from_class(c)))] = {
        {"f1", acsa.per_class_f1[static_cast<std::size_t>(c)]},
        {"in_gold", acsa.class_in_gold[static_cast<std::size_t>(c)]}};
  }
  a["per_class"] = per_class;
  a["confusion_gold_by_pred"] = acsa.confusion;
  a["f1_convention"] = "classes absent from gold are excluded from macro_f1";
  j["acsa"] = a;
  j["rp"] = {{"mae", rp.mae}, {"accuracy", rp.accuracy}, {"count", rp.count}};
  return j.dump(2);
}

std::string metrics_table(const AcsaMetrics& acsa, const RpMetrics& rp, std::string_view label) {
  std::ostringstream out;
  out << std::fixed;
  out << std::left << std::setw(16) << "ACSA" << std::right << std::setw(10) << "Macro-F1"
      << std::setw(10) << "Acc." << '\n';
  out << std::left << std::setw(16) << label << std::right << std::setprecision(2)
      << std::setw(9) << acsa.macro_f1 * 100 << '%' << std::setw(9) << acsa.accuracy * 100
      << "%\n\n";
  out << std::left << std::setw(16) << "RP" << std::right << std::setw(10) << "MAE"
      << std::setw(10) << "Acc." << '\n';
  out << std::left << std::setw(16) << label << std::right << std::setprecision(4)
      << std::setw(10) << rp.mae << std::setprecision(2) << std::setw(9) << rp.accuracy * 100
      << "%\n";
  return out.str();
}

}  // namespace asap
