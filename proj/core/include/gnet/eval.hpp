// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Single-query retrieval evaluation: flip-averaged features, cosine
// ranking with junk removal, CMC and mAP.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gnet/data.hpp"
#include "gnet/model.hpp"

namespace gnet {

struct RetrievalEntry {
  std::vector<float> feature;
  int person_id = 0;  // -1: distractor
  int camera_id = 1;
  bool distractor = false;

  bool is_junk_for(int query_id, int query_camera) const {
    return distractor || person_id == -1 || (person_id == query_id && camera_id == query_camera);
  }
};

struct RankingResult {
  std::size_t query_index = 0;
  std::vector<std::size_t> order;   // gallery indices, most similar first
  std::vector<double> similarity;   // per gallery index
  std::vector<std::uint8_t> valid;  // per gallery index: not junk for this query
  std::vector<std::uint8_t> match;  // per gallery index: valid and same identity

  std::size_t positives() const;
  // 1-based position of the first match among valid entries; 0 if none.
  std::size_t first_match_rank() const;
  // Mean over matches of precision at each match's valid position.
  double average_precision() const;
};

// Descending cosine similarity; equal similarities keep ascending gallery
// index. Throws on zero-norm or mismatched-width vectors.
RankingResult cosine_rank(const RetrievalEntry& query, const std::vector<RetrievalEntry>& gallery,
                          std::size_t query_index = 0);

struct MetricSummary {
  std::vector<std::size_t> ranks{1, 5, 10, 20};
  std::vector<double> cmc;  // one value per entry of `ranks`
  double mean_ap = 0.0;
  std::size_t evaluated = 0;  // queries with at least one valid positive
  std::size_t excluded = 0;   // queries without one
};

// Queries with no valid positive are excluded from the averages.
std::vector<double> cmc(const std::vector<RankingResult>& results, const std::vector<std::size_t>& ranks);
double mean_ap(const std::vector<RankingResult>& results);
MetricSummary summarize(const std::vector<RankingResult>& results, std::vector<std::size_t> ranks = {1, 5, 10, 20});

// Sorts entries by (person id, camera, feature bytes) so results do not
// depend on the order in which a gallery was listed.
std::vector<std::size_t> canonical_order(const std::vector<RetrievalEntry>& entries);

// Ranks every query against the canonically ordered gallery. Gallery
// indices in the results refer to that canonical order.
std::vector<RankingResult> rank_all(const std::vector<RetrievalEntry>& queries, std::vector<RetrievalEntry> gallery);

// (f(I) + f(flip(I))) / 2 for a batch of preprocessed N×3×H×W images.
Tensor extract_features(GraftedNet<float>& net, const Tensor& images);

// Decodes, resizes and normalizes each sample, then extracts features in
// chunks of `batch` images.
std::vector<RetrievalEntry> extract_entries(GraftedNet<float>& net, const std::vector<ReidSample>& samples,
                                            const Normalization& norm, std::size_t batch = 16);

struct EvalReport {
  MetricSummary metrics;
  std::vector<std::string> query_names;
  std::vector<double> ap;                      // per query, NaN when excluded
  std::vector<std::size_t> first_match_rank;  // per query, 0 when excluded
};

EvalReport evaluate(GraftedNet<float>& net, const ReidDataset& data, const Normalization& norm,
                    std::size_t batch = 16);
EvalReport make_report(const std::vector<RankingResult>& results, const std::vector<std::string>& query_names);

// `metric=value` lines with four decimals (counts as integers).
std::string format_report(const EvalReport& report);
// query_id,AP,first_match_rank
std::string format_query_csv(const EvalReport& report);

}  // namespace gnet
