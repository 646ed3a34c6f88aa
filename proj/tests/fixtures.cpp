#include "fixtures.hpp"

#include <algorithm>
#include <array>

#include "asap/taxonomy.hpp"
#include "asap/utf8.hpp"

namespace fixtures {

using namespace asap;

std::string chinese(std::size_t n, std::uint64_t seed) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    utf8::append(out, static_cast<char32_t>(0x4E00 + (seed * 7919 + i * 31) % 20000));
  }
  return out;
}

std::string latin(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>('a' + i % 26));
  return out;
}

Review review(std::string id, std::string text, int rating,
              std::vector<std::pair<int, Polarity>> labels, int aspects) {
  Review r;
  r.id = std::move(id);
  r.text = std::move(text);
  r.rating = rating;
  r.labels.assign(static_cast<std::size_t>(aspects), std::nullopt);
  for (auto [i, p] : labels) r.labels[static_cast<std::size_t>(i)] = p;
  return r;
}

EncoderOutput random_encoder_output(Rng& rng, int hidden, int length, int padding) {
  EncoderOutput out;
  out.hidden.resize(hidden, length);
  for (Eigen::Index k = 0; k < out.hidden.size(); ++k) out.hidden.data()[k] = rng.normal();
  out.pooled = out.hidden.col(0);
  out.valid.assign(static_cast<std::size_t>(length), 1);
  for (int z = length - padding; z < length; ++z) out.valid[static_cast<std::size_t>(z)] = 0;
  return out;
}

HeadParameters random_heads(Rng& rng, int aspects, int hidden, double scale) {
  HeadParameters p = HeadParameters::zeros(aspects, hidden);
  for (auto& t : p.tensors()) {
    for (Eigen::Index k = 0; k < t.tensor->size(); ++k) t.tensor->data()[k] = rng.normal() * scale;
  }
  return p;
}

void random_labels(Rng& rng, int aspects, std::vector<std::optional<Polarity>>& labels,
                   std::vector<std::uint8_t>& mask) {
  labels.assign(static_cast<std::size_t>(aspects), std::nullopt);
  mask.assign(static_cast<std::size_t>(aspects), 0);
  const auto forced = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(aspects)));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i == forced || rng.uniform() < 0.4) {
      labels[i] = polarity_from_class(static_cast<int>(rng.below(3)));
      mask[i] = 1;
    }
  }
}

std::vector<TrainingExample> random_examples(Rng& rng, int count, int aspects, int vocab_size,
                                             int min_len, int max_len) {
  std::vector<TrainingExample> out;
  for (int n = 0; n < count; ++n) {
    TrainingExample ex;
    ex.id = "r" + std::to_string(n);
    const int len = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
    ex.tokens.ids.push_back(Vocabulary::kStart);
    ex.tokens.pieces.push_back("<s>");
    for (int z = 1; z < len; ++z) {
      const auto id = static_cast<std::int32_t>(
          Vocabulary::kUnknown + 1 + rng.below(static_cast<std::uint64_t>(vocab_size - Vocabulary::kUnknown - 1)));
      ex.tokens.ids.push_back(id);
      ex.tokens.pieces.push_back("t" + std::to_string(id));
    }
    ex.rating = 1 + static_cast<int>(rng.below(5));
    random_labels(rng, aspects, ex.labels, ex.mask);
    out.push_back(std::move(ex));
  }
  return out;
}

ModelParameters random_parameters(Rng& rng, const EncoderConfig& config, int aspects, double scale) {
  ModelParameters p = ModelParameters::zeros(config, aspects);
  for (auto& t : p.tensors()) {
    for (Eigen::Index k = 0; k < t.tensor->size(); ++k) t.tensor->data()[k] = rng.normal() * scale;
  }
  for (auto& layer : p.encoder.layers) {
    layer.ln1_gain.array() += 1.0;
    layer.ln2_gain.array() += 1.0;
  }
  p.encoder.final_ln_gain.array() += 1.0;
  return p;
}

Dataset synthetic_corpus(std::uint64_t seed, std::size_t count) {
  struct Topic {
    int aspect;
    const char* noun;
    std::array<const char*, 3> words;  // by class: negative, neutral, positive
  };
  const std::array<Topic, 4> topics{{
      {15, "味道", {"难吃", "一般", "好吃"}},
      {4, "服务", {"冷漠", "普通", "热情"}},
      {7, "价格", {"太贵", "适中", "便宜"}},
      {0, "交通", {"不便", "还行", "方便"}},
  }};
  const AspectTaxonomy taxonomy = AspectTaxonomy::restaurant18();
  Rng rng(seed);
  std::vector<Review> reviews;
  for (std::size_t n = 0; n < count; ++n) {
    std::array<std::size_t, 4> order{0, 1, 2, 3};
    rng.shuffle(order);
    const std::size_t mentioned = 2 + static_cast<std::size_t>(rng.below(3));
    std::string text;
    std::vector<std::pair<int, Polarity>> labels;
    int sum = 0;
    for (std::size_t k = 0; k < mentioned; ++k) {
      const Topic& t = topics[order[k]];
      const int cls = static_cast<int>(rng.below(3));
      if (!text.empty()) text += "，";
      text += t.noun;
      text += t.words[static_cast<std::size_t>(cls)];
      labels.emplace_back(t.aspect, polarity_from_class(cls));
      sum += cls - 1;
    }
    text += "。";
    const int rating = std::clamp(3 + sum, 1, 5);
    reviews.push_back(review("s" + std::to_string(n), text, rating, labels, taxonomy.size()));
  }
  return Dataset(taxonomy, std::move(reviews));
}

}  // namespace fixtures
