#pragma once

// Contamination analysis: TF-IDF vectors over prompt+response texts and
// maximum cosine similarity against a reference corpus.
//
// Declared conventions (echoed in the report header for reproducibility):
//   tokens    maximal runs of ASCII alphanumerics or bytes >= 0x80, after
//             ASCII lowercasing
//   tf        raw term count
//   idf(t)    ln((1+N)/(1+df(t))) + 1
//   vectors   tf*idf, L2-normalized; empty documents map to the zero vector

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vlrm/errors.hpp"
#include "vlrm/records.hpp"

namespace vlrm {

inline std::vector<std::string> tfidf_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    bool token_char = std::isalnum(c) || c >= 0x80;
    if (token_char) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Sparse unit vector: (term index, weight) sorted by term index.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

inline double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (a[i].first > b[j].first) {
      ++j;
    } else {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    }
  }
  return dot;
}

class TfidfModel {
 public:
  /// Builds vocabulary, document frequencies and normalized document
  /// vectors from the reference corpus.
  static TfidfModel build(const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw ValidationError("reference corpus must be non-empty");
    TfidfModel model;
    std::vector<std::map<std::string, std::uint32_t>> counts;
    counts.reserve(corpus.size());
    bool any_tokens = false;
    for (const auto& text : corpus) {
      std::map<std::string, std::uint32_t> tf;
      for (auto& tok : tfidf_tokenize(text)) ++tf[tok];
      if (!tf.empty()) any_tokens = true;
      counts.push_back(std::move(tf));
    }
    if (!any_tokens) throw ValidationError("reference corpus contains no tokens");

    std::map<std::string, std::uint32_t> df;
    for (const auto& tf : counts) {
      for (const auto& [term, _] : tf) ++df[term];
    }
    const double n_docs = static_cast<double>(corpus.size());
    for (const auto& [term, freq] : df) {
      std::uint32_t index = static_cast<std::uint32_t>(model.vocabulary_.size());
      model.vocabulary_.emplace(term, index);
      model.idf_.push_back(std::log((1.0 + n_docs) / (1.0 + freq)) + 1.0);
    }
    for (const auto& tf : counts) {
      model.documents_.push_back(model.weigh(tf));
    }
    return model;
  }

  /// The sample's vector against every reference document; returns the
  /// maximum cosine. Out-of-vocabulary terms are dropped; a sample with no
  /// in-vocabulary terms scores 0.
  double max_similarity(const std::string& text) const {
    SparseVector vec = vectorize(text);
    if (vec.empty()) return 0.0;
    double best = 0.0;
    for (const auto& doc : documents_) {
      double cos = sparse_dot(vec, doc);
      if (cos > best) best = cos;
    }
    return best;
  }

  SparseVector vectorize(const std::string& text) const {
    std::map<std::string, std::uint32_t> tf;
    for (auto& tok : tfidf_tokenize(text)) ++tf[tok];
    return weigh(tf);
  }

  double idf(const std::string& term) const {
    auto it = vocabulary_.find(term);
    if (it == vocabulary_.end()) throw ValidationError("term not in vocabulary: " + term);
    return idf_[it->second];
  }

  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  const std::vector<SparseVector>& documents() const { return documents_; }

  static std::string convention() {
    return "tokens: ascii alnum runs, lowercased; tf: raw count; "
           "idf: ln((1+N)/(1+df))+1; vectors: L2-normalized tf*idf";
  }

 private:
  SparseVector weigh(const std::map<std::string, std::uint32_t>& tf) const {
    SparseVector vec;
    double norm_sq = 0.0;
    for (const auto& [term, count] : tf) {
      auto it = vocabulary_.find(term);
      if (it == vocabulary_.end()) continue;
      double w = static_cast<double>(count) * idf_[it->second];
      vec.emplace_back(it->second, w);
      norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
      double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& [_, w] : vec) w *= inv;
    }
    // std::map iteration is ordered by term, not index; restore index order.
    std::sort(vec.begin(), vec.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return vec;
  }

  std::map<std::string, std::uint32_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<SparseVector> documents_;
};

// ---------------------------------------------------------------------------
// Distribution over a dataset

struct SimilarityReport {
  static constexpr double kBinWidth = 0.05;
  static constexpr int kBins = 20;

  std::vector<long> histogram = std::vector<long>(kBins, 0);
  std::vector<double> scores;  // per sample, input order

  static int bin_of(double score) {
    int bin = static_cast<int>(score / kBinWidth);
    if (bin >= kBins) bin = kBins - 1;
    if (bin < 0) bin = 0;
    return bin;
  }

  json to_json() const {
    json bins = json::array();
    for (int i = 0; i < kBins; ++i) {
      bins.push_back(json{{"lo", i * kBinWidth}, {"hi", (i + 1) * kBinWidth}, {"count", histogram[i]}});
    }
    return json{{"convention", TfidfModel::convention()},
                {"sample_count", scores.size()},
                {"bin_width", kBinWidth},
                {"bins", std::move(bins)}};
  }

  std::string to_csv() const {
    std::string csv = "bin_lo,bin_hi,count\n";
    for (int i = 0; i < kBins; ++i) {
      csv += json(i * kBinWidth).dump() + "," + json((i + 1) * kBinWidth).dump() + "," +
             std::to_string(histogram[i]) + "\n";
    }
    return csv;
  }
};

/// Scores every dataset text against the model and bins the results.
/// Histogram mass equals the number of samples; score order is input order.
inline SimilarityReport similarity_distribution(const std::vector<std::string>& dataset,
                                                const TfidfModel& model) {
  SimilarityReport report;
  report.scores.reserve(dataset.size());
  for (const auto& text : dataset) {
    double score = model.max_similarity(text);
    report.scores.push_back(score);
    ++report.histogram[SimilarityReport::bin_of(score)];
  }
  return report;
}

/// The study concatenates each sample's prompt and response into one text.
/// Accepts the pipeline's own record shapes as well as loose {prompt,
/// response} / {text} objects so third-party reference corpora load as-is.
inline std::string contamination_text(const json& record) {
  if (record.contains("text") && record["text"].is_string()) return record["text"].get<std::string>();
  std::string prompt;
  if (record.contains("query") && record["query"].is_string()) {
    prompt = record["query"].get<std::string>();
  } else if (record.contains("prompt") && record["prompt"].is_string()) {
    prompt = record["prompt"].get<std::string>();
  }
  std::string response;
  if (record.contains("chosen") && record["chosen"].is_string()) {
    response = record["chosen"].get<std::string>();
  } else if (record.contains("response") && record["response"].is_string()) {
    response = record["response"].get<std::string>();
  }
  if (prompt.empty() && response.empty()) throw SchemaError("text");
  if (prompt.empty()) return response;
  if (response.empty()) return prompt;
  return prompt + " " + response;
}

}  // namespace vlrm
