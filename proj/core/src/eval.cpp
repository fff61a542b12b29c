// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gnet {

namespace {

double norm_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace

std::size_t RankingResult::positives() const {
  return static_cast<std::size_t>(std::count(match.begin(), match.end(), std::uint8_t{1}));
}

std::size_t RankingResult::first_match_rank() const {
  std::size_t pos = 0;
  for (std::size_t g : order) {
    if (!valid[g]) continue;
    ++pos;
    if (match[g]) return pos;
  }
  return 0;
}

double RankingResult::average_precision() const {
  std::size_t pos = 0, hits = 0;
  double sum = 0.0;
  for (std::size_t g : order) {
    if (!valid[g]) continue;
    ++pos;
    if (match[g]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(pos);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

RankingResult cosine_rank(const RetrievalEntry& query, const std::vector<RetrievalEntry>& gallery,
                          std::size_t query_index) {
  const double qn = norm_of(query.feature);
  if (qn == 0.0) throw std::invalid_argument("query feature has zero norm");
  RankingResult r;
  r.query_index = query_index;
  const std::size_t n = gallery.size();
  r.similarity.resize(n);
  r.valid.resize(n);
  r.match.resize(n);
  for (std::size_t g = 0; g < n; ++g) {
    const auto& e = gallery[g];
    if (e.feature.size() != query.feature.size()) {
      throw DimensionError("cosine_rank", "feature", "gallery entry " + std::to_string(g) + " has width " +
                                                         std::to_string(e.feature.size()) + ", query has " +
                                                         std::to_string(query.feature.size()));
    }
    const double gn = norm_of(e.feature);
    if (gn == 0.0) throw std::invalid_argument("gallery feature " + std::to_string(g) + " has zero norm");
    double dot = 0.0;
    for (std::size_t k = 0; k < e.feature.size(); ++k) dot += static_cast<double>(query.feature[k]) * e.feature[k];
    r.similarity[g] = dot / (qn * gn);
    const bool junk = e.is_junk_for(query.person_id, query.camera_id);
    r.valid[g] = junk ? 0 : 1;
    r.match[g] = (!junk && e.person_id == query.person_id) ? 1 : 0;
  }
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.similarity[a] > r.similarity[b]; });
  return r;
}

std::vector<double> cmc(const std::vector<RankingResult>& results, const std::vector<std::size_t>& ranks) {
  std::vector<double> out(ranks.size(), 0.0);
  std::size_t evaluated = 0;
  for (const auto& r : results) {
    const std::size_t first = r.first_match_rank();
    if (first == 0) continue;
    ++evaluated;
    for (std::size_t i = 0; i < ranks.size(); ++i)
      if (first <= ranks[i]) out[i] += 1.0;
  }
  if (evaluated == 0) throw std::invalid_argument("no query has a valid positive");
  for (double& v : out) v /= static_cast<double>(evaluated);
  return out;
}

double mean_ap(const std::vector<RankingResult>& results) {
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (const auto& r : results) {
    if (r.positives() == 0) continue;
    ++evaluated;
    sum += r.average_precision();
  }
  if (evaluated == 0) throw std::invalid_argument("no query has a valid positive");
  return sum / static_cast<double>(evaluated);
}

MetricSummary summarize(const std::vector<RankingResult>& results, std::vector<std::size_t> ranks) {
  MetricSummary m;
  m.ranks = std::move(ranks);
  for (const auto& r : results) (r.positives() == 0 ? m.excluded : m.evaluated) += 1;
  m.cmc = cmc(results, m.ranks);
  m.mean_ap = mean_ap(results);
  return m;
}

std::vector<std::size_t> canonical_order(const std::vector<RetrievalEntry>& entries) {
  std::vector<std::size_t> idx(entries.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = entries[a];
    const auto& y = entries[b];
    if (x.person_id != y.person_id) return x.person_id < y.person_id;
    if (x.camera_id != y.camera_id) return x.camera_id < y.camera_id;
    if (x.distractor != y.distractor) return x.distractor < y.distractor;
    const std::size_t n = std::min(x.feature.size(), y.feature.size());
    const int c = std::memcmp(x.feature.data(), y.feature.data(), n * sizeof(float));
    if (c != 0) return c < 0;
    return x.feature.size() < y.feature.size();
  });
  return idx;
}

std::vector<RankingResult> rank_all(const std::vector<RetrievalEntry>& queries, std::vector<RetrievalEntry> gallery) {
  const auto order = canonical_order(gallery);
  std::vector<RetrievalEntry> sorted;
  sorted.reserve(gallery.size());
  for (std::size_t i : order) sorted.push_back(std::move(gallery[i]));
  std::vector<RankingResult> out;
  out.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) out.push_back(cosine_rank(queries[q], sorted, q));
  return out;
}

Tensor extract_features(GraftedNet<float>& net, const Tensor& images) {
  Tensor a = net.embed(images);
  const Tensor b = net.embed(ops::flip_horizontal(images));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] + b[i]) * 0.5f;
  return a;
}

std::vector<RetrievalEntry> extract_entries(GraftedNet<float>& net, const std::vector<ReidSample>& samples,
                                            const Normalization& norm, std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("extraction batch must be positive");
  const GraftedNetConfig& c = net.config();
  std::vector<RetrievalEntry> out;
  out.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); b += batch) {
    const std::size_t e = std::min(samples.size(), b + batch);
    std::vector<Tensor> imgs;
    for (std::size_t i = b; i < e; ++i) {
      Tensor img = load_sample(samples[i], c.input_height, c.input_width);
      normalize_inplace(img, norm);
      imgs.push_back(std::move(img));
    }
    const Tensor f = extract_features(net, stack_images(imgs));
    const std::size_t d = f.dim(1);
    for (std::size_t i = b; i < e; ++i) {
      RetrievalEntry r;
      r.feature.assign(f.data() + (i - b) * d, f.data() + (i - b + 1) * d);
      r.person_id = samples[i].person_id;
      r.camera_id = samples[i].camera_id;
      r.distractor = samples[i].distractor();
      out.push_back(std::move(r));
    }
  }
  return out;
}

EvalReport make_report(const std::vector<RankingResult>& results, const std::vector<std::string>& query_names) {
  if (results.size() != query_names.size()) throw std::invalid_argument("one name per query required");
  EvalReport rep;
  rep.metrics = summarize(results);
  rep.query_names = query_names;
  for (const auto& r : results) {
    const bool has = r.positives() > 0;
    rep.ap.push_back(has ? r.average_precision() : std::numeric_limits<double>::quiet_NaN());
    rep.first_match_rank.push_back(has ? r.first_match_rank() : 0);
  }
  return rep;
}

EvalReport evaluate(GraftedNet<float>& net, const ReidDataset& data, const Normalization& norm, std::size_t batch) {
  if (data.query.empty() || data.gallery.empty()) throw std::invalid_argument("evaluation needs queries and a gallery");
  const auto queries = extract_entries(net, data.query, norm, batch);
  auto gallery = extract_entries(net, data.gallery, norm, batch);
  std::vector<std::string> names;
  for (const auto& s : data.query) names.push_back(s.name);
  return make_report(rank_all(queries, std::move(gallery)), names);
}

std::string format_report(const EvalReport& report) {
  const MetricSummary& m = report.metrics;
  std::string out;
  char line[96];
  std::snprintf(line, sizeof line, "mAP=%.4f\n", m.mean_ap);
  out += line;
  for (std::size_t i = 0; i < m.ranks.size(); ++i) {
    std::snprintf(line, sizeof line, "rank%zu=%.4f\n", m.ranks[i], m.cmc[i]);
    out += line;
  }
  out += "queries=" + std::to_string(m.evaluated) + "\n";
  out += "excluded_queries=" + std::to_string(m.excluded) + "\n";
  return out;
}

std::string format_query_csv(const EvalReport& report) {
  std::string out = "query_id,AP,first_match_rank\n";
  char line[512];
  for (std::size_t i = 0; i < report.query_names.size(); ++i) {
    if (std::isnan(report.ap[i])) {
      std::snprintf(line, sizeof line, "%s,,\n", report.query_names[i].c_str());
    } else {
      std::snprintf(line, sizeof line, "%s,%.6f,%zu\n", report.query_names[i].c_str(), report.ap[i],
                    report.first_match_rank[i]);
    }
    out += line;
  }
  return out;
}

}  // namespace gnet
