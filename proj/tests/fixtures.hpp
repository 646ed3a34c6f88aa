#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asap/corpus.hpp"
#include "asap/encoder.hpp"
#include "asap/joint_model.hpp"
#include "asap/kernels.hpp"
#include "asap/rng.hpp"

namespace fixtures {

// `n` distinct-looking CJK ideographs.
std::string chinese(std::size_t n, std::uint64_t seed = 1);
// `n` ASCII letters.
std::string latin(std::size_t n);

asap::Review review(std::string id, std::string text, int rating,
                    std::vector<std::pair<int, asap::Polarity>> labels, int aspects = 18);

// Random encoder output with `padding` trailing invalid columns.
asap::EncoderOutput random_encoder_output(asap::Rng& rng, int hidden, int length, int padding);

// Heads with every tensor, biases included, drawn from N(0, scale^2).
asap::HeadParameters random_heads(asap::Rng& rng, int aspects, int hidden, double scale = 0.5);

// Labels with at least one mentioned aspect.
void random_labels(asap::Rng& rng, int aspects, std::vector<std::optional<asap::Polarity>>& labels,
                   std::vector<std::uint8_t>& mask);

// Random tokenized examples for a model with the given vocabulary size.
std::vector<asap::TrainingExample> random_examples(asap::Rng& rng, int count, int aspects,
                                                   int vocab_size, int min_len, int max_len);

// Model parameters with every tensor randomized, including biases and
// layer-norm gains, so no gradient is structurally zero by accident.
asap::ModelParameters random_parameters(asap::Rng& rng, const asap::EncoderConfig& config,
                                        int aspects, double scale = 0.3);

// The 32-review corpus used by the overfit smoke test. Four aspects, each
// with its own polarity words; rating = clamp(3 + sum of polarity codes).
asap::Dataset synthetic_corpus(std::uint64_t seed, std::size_t count = 32);

}  // namespace fixtures
