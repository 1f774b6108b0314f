#pragma once

#include <functional>
#include <vector>

#include "mmm/cli/run_config.hpp"

namespace mmm::cli {

/// Tokens and prompt word ids of the listed dataset items.
std::vector<tf::TokenItem> token_items(const vq::Tokenizer& tok, const tf::Transformer& model,
                                       const data::Dataset& ds, const std::vector<int>& rows);

/// Stage 1: a fresh tokenizer trained on the dataset's train split.
vq::Tokenizer train_vq(const data::Dataset& ds, const RunConfig& cfg, std::uint64_t seed,
                       std::vector<vq::VqEpochMetrics>* curve = nullptr);

/// Stage 2: a fresh transformer trained on the tokenized train split, with
/// the validation split for reports.
tf::Transformer train_mmm(const data::Dataset& ds, const vq::Tokenizer& tok, const RunConfig& cfg, std::uint64_t seed,
                          std::vector<tf::MaskedEval>* curve = nullptr);

/// Generates one motion per test prompt (the first eval.n_samples, each at
/// its reference token length) and scores them against the real test
/// motions. AITS is the mean wall-clock time of one text_to_motion call.
eval::EvalReport evaluate_model(const data::Dataset& ds, const vq::Tokenizer& tok, const tf::Transformer& model,
                                const eval::FeatureExtractor& fx, const RunConfig& cfg, std::uint64_t seed);

}  // namespace mmm::cli
