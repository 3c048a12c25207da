#pragma once

// End-to-end classification and the precision/recall harness. The positive
// class is "outlier".

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "loopvet/cycles.hpp"
#include "loopvet/em.hpp"
#include "loopvet/graph.hpp"
#include "loopvet/graph_io.hpp"
#include "loopvet/model.hpp"

namespace loopvet {

struct InferenceOptions {
  BpOptions bp{};
  AdmmOptions admm{};
  std::size_t cap = kDefaultCycleCap;
};

struct EdgeClassification {
  EdgeId id = 0;
  double inlier_probability = 0.0;
  bool predicted_outlier = false;
  std::optional<Truth> truth;
  bool covered = true;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::optional<double> precision() const {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  std::optional<double> recall() const {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  std::optional<double> f1() const {
    const std::size_t d = 2 * tp + fp + fn;
    if (d == 0) return std::nullopt;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(d);
  }
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct ClassificationResult {
  std::vector<EdgeClassification> edges;  // loop closures, by edge id
  Confusion confusion;
  InferenceMethod method = InferenceMethod::BP;
  bool converged = true;
  std::size_t iterations = 0;
  double runtime_ms = 0.0;
};

/// Outlier iff the inlier probability is below the threshold; a threshold of
/// 1 or more marks every loop closure as an outlier.
inline bool is_predicted_outlier(double inlier_probability, double threshold) {
  return threshold >= 1.0 || inlier_probability < threshold;
}

inline Marginals infer(const FactorGraph& fg, const ModelParams& p, InferenceMethod method,
                       const InferenceOptions& opts = {}) {
  AdmmOptions admm = opts.admm;
  admm.cap = opts.cap;
  return e_step(fg, p, method, opts.bp, admm);
}

inline ClassificationResult classify_marginals(const PoseGraph& g, const FactorGraph& fg, const Marginals& m,
                                               double threshold) {
  ClassificationResult res;
  res.converged = m.converged;
  res.iterations = m.iterations;
  for (std::size_t v = 0; v < fg.num_variables(); ++v) {
    const Edge& e = g.edge(fg.variables[v]);
    EdgeClassification ec{e.id, m.inlier[v], is_predicted_outlier(m.inlier[v], threshold), e.truth, fg.is_covered(v)};
    if (ec.truth) {
      const bool out = *ec.truth == Truth::Outlier;
      if (out && ec.predicted_outlier) ++res.confusion.tp;
      if (!out && ec.predicted_outlier) ++res.confusion.fp;
      if (out && !ec.predicted_outlier) ++res.confusion.fn;
      if (!out && !ec.predicted_outlier) ++res.confusion.tn;
    }
    res.edges.push_back(ec);
  }
  return res;
}

inline ClassificationResult classify(const PoseGraph& g, const ModelParams& p, InferenceMethod method,
                                     double threshold = 0.5, const InferenceOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const FactorGraph fg = build_factor_graph(g, opts.cap);
  const Marginals m = infer(fg, p, method, opts);
  ClassificationResult res = classify_marginals(g, fg, m, threshold);
  res.method = method;
  res.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Estimates the parameters by EM with the same back-end, then classifies.
inline ClassificationResult classify_em(const PoseGraph& g, const ModelParams& init, InferenceMethod method,
                                        EmConfig cfg, double threshold = 0.5, const InferenceOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const FactorGraph fg = build_factor_graph(g, opts.cap);
  cfg.inference = method;
  cfg.bp = opts.bp;
  cfg.admm = opts.admm;
  cfg.admm.cap = opts.cap;
  const EmResult em = run_em(fg, init, cfg);
  ClassificationResult res = classify_marginals(g, fg, em.marginals, threshold);
  res.method = method;
  res.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline void write_classification_tsv(const ClassificationResult& r, std::ostream& out) {
  out << "edge_id\tinlier_prob\tlabel\ttruth\tcovered\n";
  char buf[64];
  for (const auto& e : r.edges) {
    std::snprintf(buf, sizeof buf, "%.9f", e.inlier_probability);
    out << e.id << '\t' << buf << '\t' << (e.predicted_outlier ? "outlier" : "inlier") << '\t'
        << (e.truth ? (*e.truth == Truth::Outlier ? "outlier" : "inlier") : "NA") << '\t'
        << (e.covered ? "covered" : "uncovered") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Benchmark over a suite of graphs.

struct BenchGraph {
  std::string graph_id;
  std::filesystem::path path;  // loaded lazily by the worker
  std::optional<PoseGraph> graph;
};

struct BenchConfig {
  std::vector<InferenceMethod> methods{InferenceMethod::BP, InferenceMethod::ADMM};
  ModelParams params{};
  bool use_em = false;
  EmConfig em{};
  double threshold = 0.5;
  InferenceOptions inference{};
  std::size_t threads = 1;
  bool timing = true;
};

struct BenchRow {
  std::string graph_id;
  std::size_t m = 0;
  std::size_t outliers = 0;
  InferenceMethod method = InferenceMethod::BP;
  Confusion confusion;
  bool converged = false;
  std::size_t iterations = 0;
  double ms = 0.0;
  std::string error;  // non-empty when this graph failed
};

/// Suite directory: every *.graph file, ordered by file name.
inline std::vector<BenchGraph> load_suite_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<BenchGraph> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".graph") {
      out.push_back({entry.path().stem().string(), entry.path(), std::nullopt});
    }
  }
  std::sort(out.begin(), out.end(), [](const BenchGraph& a, const BenchGraph& b) { return a.graph_id < b.graph_id; });
  return out;
}

inline std::vector<BenchRow> run_benchmark(const std::vector<BenchGraph>& suite, const BenchConfig& cfg) {
  const std::size_t nm = cfg.methods.size();
  std::vector<BenchRow> rows(suite.size() * nm);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < suite.size(); i = next++) {
      const BenchGraph& item = suite[i];
      std::optional<PoseGraph> loaded;
      std::string load_error;
      try {
        loaded = item.graph ? *item.graph : read_graph_file(item.path);
      } catch (const std::exception& ex) {
        load_error = ex.what();
      }
      for (std::size_t k = 0; k < nm; ++k) {
        BenchRow& row = rows[i * nm + k];
        row.graph_id = item.graph_id;
        row.method = cfg.methods[k];
        if (!loaded) {
          row.error = load_error;
          continue;
        }
        for (const auto& e : loaded->edges()) {
          if (!e.is_loop_closure()) continue;
          ++row.m;
          if (e.truth == Truth::Outlier) ++row.outliers;
        }
        try {
          const ModelParams p = [&] {
            ModelParams q = ModelParams::from_graph(*loaded, cfg.params.sigma, cfg.params.sigma_bar);
            for (const auto& [id, pi] : cfg.params.priors) q.priors[id] = pi;
            return q;
          }();
          const ClassificationResult r =
              cfg.use_em ? classify_em(*loaded, p, row.method, cfg.em, cfg.threshold, cfg.inference)
                         : classify(*loaded, p, row.method, cfg.threshold, cfg.inference);
          row.confusion = r.confusion;
          row.converged = r.converged;
          row.iterations = r.iterations;
          row.ms = cfg.timing ? r.runtime_ms : 0.0;
        } catch (const std::exception& ex) {
          row.error = ex.what();
        }
      }
    }
  };

  const std::size_t nt = std::max<std::size_t>(1, std::min(cfg.threads, suite.size()));
  if (nt == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  // Suite order is already sorted by id and methods keep their requested
  // order, so the row order does not depend on scheduling.
  return rows;
}

namespace detail {

inline std::string fmt_opt(std::optional<double> v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kBenchCsvHeader =
    "graph_id,m,outliers,method,tp,fp,fn,tn,precision,recall,f1,converged,iters,ms";

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << kBenchCsvHeader << '\n';
  char ms[32];
  for (const auto& r : rows) {
    out << r.graph_id << ',' << r.m << ',' << r.outliers << ',' << to_string(r.method) << ',';
    if (!r.error.empty()) {
      out << "NA,NA,NA,NA,NA,NA,NA,error,0,0\n";
      continue;
    }
    std::snprintf(ms, sizeof ms, "%.3f", r.ms);
    const auto& c = r.confusion;
    out << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ',' << detail::fmt_opt(c.precision()) << ','
        << detail::fmt_opt(c.recall()) << ',' << detail::fmt_opt(c.f1()) << ',' << (r.converged ? 1 : 0) << ','
        << r.iterations << ',' << ms << '\n';
  }
}

/// Per method and outlier-ratio bin (width 0.1, centred on multiples of 0.1):
/// means over graphs where the metric is defined.
struct CurvePoint {
  InferenceMethod method = InferenceMethod::BP;
  double ratio_center = 0.0;
  std::size_t graphs = 0;
  std::optional<double> mean_precision, mean_recall, mean_f1;
};

inline std::size_t ratio_bin(std::size_t outliers, std::size_t m) {
  return static_cast<std::size_t>(std::floor(10.0 * static_cast<double>(outliers) / static_cast<double>(m) + 0.5));
}

inline std::vector<CurvePoint> outlier_ratio_curve(const std::vector<BenchRow>& rows,
                                                   const std::vector<InferenceMethod>& methods) {
  struct Acc {
    std::size_t graphs = 0;
    double sp = 0, sr = 0, sf = 0;
    std::size_t np = 0, nr = 0, nf = 0;
  };
  std::vector<CurvePoint> out;
  for (auto method : methods) {
    std::map<std::size_t, Acc> bins;
    for (const auto& r : rows) {
      if (r.method != method || !r.error.empty() || r.m == 0) continue;
      Acc& a = bins[ratio_bin(r.outliers, r.m)];
      ++a.graphs;
      if (auto v = r.confusion.precision()) { a.sp += *v; ++a.np; }
      if (auto v = r.confusion.recall()) { a.sr += *v; ++a.nr; }
      if (auto v = r.confusion.f1()) { a.sf += *v; ++a.nf; }
    }
    for (const auto& [bin, a] : bins) {
      CurvePoint c;
      c.method = method;
      c.ratio_center = static_cast<double>(bin) / 10.0;
      c.graphs = a.graphs;
      if (a.np) c.mean_precision = a.sp / static_cast<double>(a.np);
      if (a.nr) c.mean_recall = a.sr / static_cast<double>(a.nr);
      if (a.nf) c.mean_f1 = a.sf / static_cast<double>(a.nf);
      out.push_back(c);
    }
  }
  return out;
}

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "method,outlier_ratio,graphs,mean_precision,mean_recall,mean_f1\n";
  char ratio[16];
  for (const auto& c : curve) {
    std::snprintf(ratio, sizeof ratio, "%.1f", c.ratio_center);
    out << to_string(c.method) << ',' << ratio << ',' << c.graphs << ',' << detail::fmt_opt(c.mean_precision) << ','
        << detail::fmt_opt(c.mean_recall) << ',' << detail::fmt_opt(c.mean_f1) << '\n';
  }
}

/// Mean F1 of one method over graphs where it is defined.
inline std::optional<double> mean_f1(const std::vector<BenchRow>& rows, InferenceMethod method) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.method != method || !r.error.empty()) continue;
    if (auto v = r.confusion.f1()) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace loopvet
