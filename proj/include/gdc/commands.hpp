#pragma once

// Pipeline operations behind the gdc command-line tool: prediction records,
// evaluation, regularization and reference-count ablations, and the scoring
// benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gdc/archive.hpp"
#include "gdc/error.hpp"
#include "gdc/gaussian.hpp"
#include "gdc/gmm.hpp"
#include "gdc/linalg.hpp"
#include "gdc/normality.hpp"
#include "gdc/random.hpp"

namespace gdc {

// ---------------------------------------------------------------------------
// Prediction records (one JSON object per line)

struct PredictionRecord {
  std::size_t row = 0;
  std::string true_label;
  std::string predicted;
  std::vector<std::pair<std::string, double>> top;  // descending probability
  double other_prob = 0.0;                          // mass of classes not listed in `top`
};

inline nlohmann::json to_json(const PredictionRecord& r) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& [label, p] : r.top) top.push_back({{"label", label}, {"prob", p}});
  return {{"row", r.row}, {"true", r.true_label}, {"pred", r.predicted}, {"top_k", top}, {"other_prob", r.other_prob}};
}

inline PredictionRecord from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.row = j.at("row").get<std::size_t>();
  r.true_label = j.at("true").get<std::string>();
  r.predicted = j.at("pred").get<std::string>();
  for (const auto& t : j.at("top_k")) r.top.emplace_back(t.at("label").get<std::string>(), t.at("prob").get<double>());
  r.other_prob = j.value("other_prob", 0.0);
  return r;
}

inline PredictionRecord make_record(const GdcModel& model, const Posterior& post, std::size_t row,
                                    std::string true_label) {
  PredictionRecord r;
  r.row = row;
  r.true_label = std::move(true_label);
  r.predicted = model[post.predicted].label();
  std::vector<bool> listed(model.size(), false);
  for (const auto& t : post.top) {
    r.top.emplace_back(model[t.index].label(), t.prob);
    listed[t.index] = true;
  }
  for (std::size_t i = 0; i < model.size(); ++i)
    if (!listed[i]) r.other_prob += post.probs[i];
  return r;
}

/// Scores every row of `archive`, calling `sink` with records in input order.
template <class Sink>
void classify_archive(const GdcModel& model, const EmbeddingArchive& archive, std::size_t top_k, Sink&& sink) {
  if (archive.dim() != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "archive dimension " + std::to_string(archive.dim()) +
                                                  " does not match model dimension " + std::to_string(model.dim()));
  std::size_t row = 0;
  for (const auto& cls : archive.classes()) {
    const auto posts = classify_batch(model, cls.block, top_k);
    for (const auto& p : posts) sink(make_record(model, p, row++, cls.label));
  }
}

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, "prediction line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ClassAccuracy {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct ConfusedPair {
  std::string true_label;
  std::string predicted;
  std::size_t count = 0;
};

struct EvalReport {
  std::size_t total = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::map<std::string, ClassAccuracy> per_class;
  std::vector<ConfusedPair> most_confused;  // at most 10, by count
};

inline constexpr std::size_t kConfusedPairsShown = 10;

inline EvalReport evaluate(const std::vector<PredictionRecord>& records) {
  EvalReport rep;
  rep.total = records.size();
  std::size_t top1 = 0, top5 = 0;
  std::map<std::pair<std::string, std::string>, std::size_t> confusion;
  for (const auto& r : records) {
    auto& pc = rep.per_class[r.true_label];
    ++pc.count;
    if (r.predicted == r.true_label) {
      ++top1;
      ++pc.correct;
    } else {
      ++confusion[{r.true_label, r.predicted}];
    }
    const std::size_t shown = std::min<std::size_t>(5, r.top.size());
    bool hit = r.predicted == r.true_label;
    for (std::size_t i = 0; i < shown && !hit; ++i) hit = r.top[i].first == r.true_label;
    if (hit) ++top5;
  }
  if (rep.total) {
    rep.top1 = static_cast<double>(top1) / static_cast<double>(rep.total);
    rep.top5 = static_cast<double>(top5) / static_cast<double>(rep.total);
  }
  for (const auto& [pair, count] : confusion) rep.most_confused.push_back({pair.first, pair.second, count});
  std::stable_sort(rep.most_confused.begin(), rep.most_confused.end(),
                   [](const ConfusedPair& a, const ConfusedPair& b) { return a.count > b.count; });
  if (rep.most_confused.size() > kConfusedPairsShown) rep.most_confused.resize(kConfusedPairsShown);
  return rep;
}

inline void render(const EvalReport& rep, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "total " << rep.total << "\n";
  out << "top1 " << rep.top1 << "\n";
  out << "top5 " << rep.top5 << "\n";
  out << "\nclass\tcount\tcorrect\taccuracy\n";
  for (const auto& [label, pc] : rep.per_class)
    out << label << '\t' << pc.count << '\t' << pc.correct << '\t' << pc.accuracy() << "\n";
  if (!rep.most_confused.empty()) {
    out << "\ntrue\tpredicted\tcount\n";
    for (const auto& c : rep.most_confused) out << c.true_label << '\t' << c.predicted << '\t' << c.count << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

/// Top-1 accuracy of `model` on a held-out archive whose labels the model knows.
inline double held_out_accuracy(const GdcModel& model, const EmbeddingArchive& held_out) {
  for (const auto& c : held_out.classes())
    if (!model.find(c.label)) throw Error(ErrorKind::LabelMismatch, "held-out class '" + c.label + "' not in model");
  std::size_t correct = 0, total = 0;
  classify_archive(model, held_out, 1, [&](const PredictionRecord& r) {
    ++total;
    if (r.predicted == r.true_label) ++correct;
  });
  if (total == 0) throw Error(ErrorKind::EmptyInput, "held-out archive has no rows");
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
  double eps = 0.0;
  std::size_t n = 0;
  bool ok = false;
  double accuracy = 0.0;
  std::string failure;  // error kind name when !ok
};

/// Refits at each eps; a factorization failure is recorded as a failed row
/// rather than aborting the sweep.
inline std::vector<AblationRow> ablate_eps(const EmbeddingArchive& references, const EmbeddingArchive& held_out,
                                           const std::vector<double>& eps_values) {
  if (eps_values.empty()) throw Error(ErrorKind::EmptyInput, "no eps values");
  std::vector<AblationRow> rows;
  for (double eps : eps_values) {
    AblationRow row;
    row.eps = eps;
    try {
      const GdcModel model = fit_model(references, eps);
      row.accuracy = held_out_accuracy(model, held_out);
      row.ok = true;
    } catch (const Error& e) {
      if (exit_code(e.kind()) != 3) throw;
      row.failure = std::string(kind_name(e.kind()));
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<AblationRow> ablate_n(const EmbeddingArchive& references, const EmbeddingArchive& held_out,
                                         const std::vector<std::size_t>& n_values, std::uint64_t seed, double eps) {
  if (n_values.empty()) throw Error(ErrorKind::EmptyInput, "no N values");
  std::vector<AblationRow> rows;
  for (std::size_t n : n_values) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "N must be >= 1");
    AblationRow row;
    row.eps = eps;
    row.n = n;
    const EmbeddingArchive sub = subsample(references, n, seed);
    try {
      row.accuracy = held_out_accuracy(fit_model(sub, eps), held_out);
      row.ok = true;
    } catch (const Error& e) {
      if (exit_code(e.kind()) != 3) throw;
      row.failure = std::string(kind_name(e.kind()));
    }
    rows.push_back(row);
  }
  return rows;
}

inline void render_ablation(const std::vector<AblationRow>& rows, bool by_n, std::ostream& out) {
  out << (by_n ? "n\t" : "") << "eps\taccuracy\n";
  for (const auto& r : rows) {
    if (by_n) out << r.n << '\t';
    out << std::setprecision(3) << std::scientific << r.eps << '\t';
    out.unsetf(std::ios::floatfield);
    if (r.ok)
      out << std::fixed << std::setprecision(4) << r.accuracy << "\n";
    else
      out << "FAILED(" << r.failure << ")\n";
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
  }
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchReport {
  std::size_t k = 0;
  std::size_t d = 0;
  std::size_t batch_size = 1;
  std::size_t samples = 0;
  double mean_s = 0.0;
  double p50_s = 0.0;
  double p99_s = 0.0;
  double throughput = 0.0;  // embeddings per second
};

/// Nearest-rank percentile of an ascending sequence.
inline double percentile(const std::vector<double>& sorted, double pct) {
  if (sorted.empty()) return 0.0;
  const double rank = std::ceil(pct / 100.0 * static_cast<double>(sorted.size()));
  const std::size_t idx = rank < 1.0 ? 0 : std::min(sorted.size() - 1, static_cast<std::size_t>(rank) - 1);
  return sorted[idx];
}

/// Times posterior computation (everything after the encoder) over all rows,
/// `repetitions` times, in batches of `batch_size`. Each latency sample is one
/// batch's wall time divided by its row count.
template <class T>
BenchReport bench(const GdcModel& model, const Block<T>& rows, std::size_t repetitions, std::size_t batch_size = 1) {
  if (repetitions == 0) throw Error(ErrorKind::InvalidArgument, "repetitions must be >= 1");
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
  if (rows.rows() == 0) throw Error(ErrorKind::EmptyInput, "no embeddings to score");
  if (rows.cols() != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "embedding dimension does not match model");

  using clock = std::chrono::steady_clock;
  std::vector<double> latencies;
  double total = 0.0;
  std::size_t scored = 0;
  std::size_t sink = 0;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    for (std::size_t start = 0; start < rows.rows(); start += batch_size) {
      const std::size_t count = std::min(batch_size, rows.rows() - start);
      Block<T> batch(0, rows.cols());
      for (std::size_t r = start; r < start + count; ++r) batch.append_row(rows.row(r));
      const auto t0 = clock::now();
      const auto posts = classify_batch(model, batch, kDefaultTopK);
      const auto t1 = clock::now();
      for (const auto& p : posts) sink += p.predicted;
      const double secs = std::chrono::duration<double>(t1 - t0).count();
      total += secs;
      scored += count;
      latencies.push_back(secs / static_cast<double>(count));
    }
  }
  static_cast<void>(sink);
  std::sort(latencies.begin(), latencies.end());
  BenchReport rep;
  rep.k = model.size();
  rep.d = model.dim();
  rep.batch_size = batch_size;
  rep.samples = latencies.size();
  rep.mean_s = total / static_cast<double>(scored);
  rep.p50_s = percentile(latencies, 50.0);
  rep.p99_s = percentile(latencies, 99.0);
  rep.throughput = static_cast<double>(scored) / total;
  return rep;
}

inline void render(const BenchReport& rep, std::ostream& out) {
  out << "k " << rep.k << "\n"
      << "d " << rep.d << "\n"
      << "batch_size " << rep.batch_size << "\n"
      << "samples " << rep.samples << "\n"
      << std::scientific << std::setprecision(4) << "latency_mean_s " << rep.mean_s << "\n"
      << "latency_p50_s " << rep.p50_s << "\n"
      << "latency_p99_s " << rep.p99_s << "\n"
      << std::fixed << std::setprecision(2) << "throughput_per_s " << rep.throughput << "\n"
      << "note: scoring only; image encoder time is excluded\n";
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

/// Random well-conditioned k-class model for benchmarking. Components draw
/// their inverse factors from a pool of `distinct_factors` matrices (copies
/// share storage), which keeps k = 1000, d = 1536 within a few hundred MB;
/// scoring cost is unaffected because every component is evaluated in full.
inline GdcModel synthetic_model(std::size_t k, std::size_t d, std::uint64_t seed, std::size_t distinct_factors = 32) {
  if (k == 0 || d == 0) throw Error(ErrorKind::InvalidArgument, "synthetic model needs k, d >= 1");
  distinct_factors = std::max<std::size_t>(1, std::min(distinct_factors, k));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  const double off_scale = 0.1 / std::sqrt(static_cast<double>(d));

  std::vector<linalg::LowerTriangular> factors;
  std::vector<double> log_dets;
  for (std::size_t f = 0; f < distinct_factors; ++f) {
    std::vector<double> w(linalg::packed_size(d));
    double log_det = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) w[linalg::packed_index(i, j)] = off_scale * normal(rng.engine());
      const double diag = unit(rng.engine());
      w[linalg::packed_index(i, i)] = diag;
      log_det -= 2.0 * std::log(diag);
    }
    factors.emplace_back(d, std::move(w));
    log_dets.push_back(log_det);
  }
  std::vector<ClassGaussian> components;
  components.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> mean(d);
    for (double& m : mean) m = normal(rng.engine());
    const std::size_t f = c % distinct_factors;
    components.emplace_back(c, "class_" + std::to_string(c), std::move(mean), factors[f], log_dets[f], 1, kDefaultEps);
  }
  return assemble(std::move(components));
}

// ---------------------------------------------------------------------------
// Audit rendering

inline void render(const NormalityReport& rep, std::ostream& out) {
  out << "alpha " << rep.alpha << "\n"
      << "components_per_class " << rep.components_per_class << "\n\n"
      << "class\tn\tpassed\tpass_fraction\tmin_p\tmedian_W\n";
  for (const auto& c : rep.classes) {
    std::vector<double> ws;
    double min_p = 1.0;
    for (const auto& sw : c.components) {
      ws.push_back(sw.w);
      min_p = std::min(min_p, sw.p_value);
    }
    std::sort(ws.begin(), ws.end());
    out << c.label << '\t' << c.n << '\t' << c.passed << '/' << c.components.size() << '\t' << std::fixed
        << std::setprecision(4) << c.pass_fraction << '\t' << std::scientific << std::setprecision(3) << min_p << '\t'
        << std::fixed << std::setprecision(4) << ws[ws.size() / 2] << "\n";
    out.unsetf(std::ios::floatfield);
  }
  out << "\npooled " << rep.passed << '/' << rep.tested << " pass_fraction " << std::fixed << std::setprecision(4)
      << rep.pass_fraction << "\n";
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

}  // namespace gdc
